"""Propositional MDP representation.

Domains are described STRIPS-style: every action is a list of independent
aspects, each aspect a list of ``(discriminant, probabilistic effect)`` cases.
:func:`ground` turns a :class:`DomainSpec` into an explicit :class:`FlatMDP`
whose states are indexed by their bit pattern (first proposition is the most
significant bit, so index order is lexicographic order).
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

PROB_TOL = 1e-9
NOOP = "noop"
DEFAULT_STATE_CAP = 2**20
STATE_CAP_ENV = "PLANNER_STATE_CAP"

# Policies and value functions are plain arrays indexed by state.
Policy = np.ndarray
ValueFunction = np.ndarray


class DomainError(ValueError):
    """A domain is malformed or an operation referenced something undeclared."""


class GroundingSizeError(DomainError):
    pass


def parse_literal(text: str) -> tuple[str, bool]:
    text = text.strip()
    if text[:1] in ("!", "¬", "~"):
        return text[1:].strip(), False
    return text, True


@dataclass(frozen=True)
class PartialAssignment:
    """A conjunction of literals, used for effects, discriminants and conditions."""

    literals: frozenset[tuple[str, bool]] = frozenset()

    @classmethod
    def of(cls, *literals: str) -> PartialAssignment:
        """Build from strings such as ``"Office"`` or ``"!Wet"``."""
        return cls(frozenset(parse_literal(lit) for lit in literals))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, bool]]) -> PartialAssignment:
        return cls(frozenset((name, bool(pol)) for name, pol in pairs))

    def props(self) -> frozenset[str]:
        return frozenset(name for name, _ in self.literals)

    def is_consistent(self) -> bool:
        return len(self.props()) == len(self.literals)

    def restrict(self, keep: Iterable[str]) -> PartialAssignment:
        keep = set(keep)
        return PartialAssignment(frozenset(lit for lit in self.literals if lit[0] in keep))

    def __len__(self) -> int:
        return len(self.literals)

    def __iter__(self) -> Iterator[tuple[str, bool]]:
        return iter(sorted(self.literals))

    def __str__(self) -> str:
        body = ", ".join(name if pol else f"!{name}" for name, pol in self)
        return "{ " + body + " }" if body else "{}"


@dataclass(frozen=True)
class State:
    """A total truth assignment over ``propositions``.

    ``code`` packs the bits with proposition 0 as the most significant bit, so
    it doubles as the state's index in a grounded MDP.
    """

    propositions: tuple[str, ...]
    code: int

    @classmethod
    def from_literals(
        cls, propositions: Sequence[str], literals: Iterable[str] | PartialAssignment
    ) -> State:
        """Build a state from literals that must assign every proposition exactly once."""
        pa = literals if isinstance(literals, PartialAssignment) else PartialAssignment.of(*literals)
        props = tuple(propositions)
        unknown = pa.props() - set(props)
        if unknown:
            raise DomainError(f"unknown proposition(s): {', '.join(sorted(unknown))}")
        if not pa.is_consistent():
            raise DomainError(f"contradictory literals in {pa}")
        missing = [p for p in props if p not in pa.props()]
        if missing:
            raise DomainError(f"literals do not determine a unique state; unassigned: {', '.join(missing)}")
        values = dict(pa.literals)
        return cls.from_bits(props, [values[p] for p in props])

    @classmethod
    def from_bits(cls, propositions: Sequence[str], bits: Sequence[bool]) -> State:
        props = tuple(propositions)
        if len(bits) != len(props):
            raise DomainError(f"expected {len(props)} bits, got {len(bits)}")
        code = 0
        for b in bits:
            code = (code << 1) | int(bool(b))
        return cls(props, code)

    @property
    def index(self) -> int:
        return self.code

    @property
    def width(self) -> int:
        return len(self.propositions)

    def bits(self) -> tuple[bool, ...]:
        n = self.width
        return tuple(bool((self.code >> (n - 1 - i)) & 1) for i in range(n))

    def __getitem__(self, prop: str | int) -> bool:
        i = prop if isinstance(prop, int) else self._position(prop)
        return bool((self.code >> (self.width - 1 - i)) & 1)

    def _position(self, name: str) -> int:
        try:
            return self.propositions.index(name)
        except ValueError:
            raise DomainError(f"unknown proposition {name!r}") from None

    def satisfies(self, condition: PartialAssignment) -> bool:
        return all(self[name] == pol for name, pol in condition.literals)

    def literals(self) -> list[str]:
        return [p if b else f"!{p}" for p, b in zip(self.propositions, self.bits())]

    def __str__(self) -> str:
        return "{ " + ", ".join(self.literals()) + " }"


def apply_effect(s: State, e: PartialAssignment) -> State:
    """Force ``e``'s literals in ``s``; every other proposition keeps its value."""
    code = s.code
    for name, pol in e.literals:
        bit = 1 << (s.width - 1 - s._position(name))
        code = (code | bit) if pol else (code & ~bit)
    return State(s.propositions, code)


@dataclass(frozen=True)
class ProbabilisticEffect:
    branches: tuple[tuple[PartialAssignment, float], ...]

    @classmethod
    def of(cls, *branches: tuple[PartialAssignment, float]) -> ProbabilisticEffect:
        return cls(tuple((e, float(p)) for e, p in branches))

    def total(self) -> float:
        return math.fsum(p for _, p in self.branches)

    def is_trivial(self) -> bool:
        return all(len(e) == 0 for e, _ in self.branches)

    def props(self) -> frozenset[str]:
        return frozenset().union(*(e.props() for e, _ in self.branches))


@dataclass(frozen=True)
class Case:
    """One row of an aspect. ``discriminant is None`` marks the ``default`` case."""

    discriminant: PartialAssignment | None
    effect: ProbabilisticEffect

    @property
    def is_default(self) -> bool:
        return self.discriminant is None


@dataclass(frozen=True)
class ActionAspect:
    cases: tuple[Case, ...]

    def condition_props(self, case_index: int) -> frozenset[str]:
        """Propositions the given case's condition depends on.

        A default case is the complement of all earlier discriminants, so it
        depends on every proposition they mention.
        """
        case = self.cases[case_index]
        if case.discriminant is not None:
            return case.discriminant.props()
        return frozenset().union(
            *(c.discriminant.props() for c in self.cases[:case_index] if c.discriminant is not None)
        )


@dataclass(frozen=True)
class ActionSchema:
    name: str
    aspects: tuple[ActionAspect, ...]


@dataclass(frozen=True)
class RewardRule:
    condition: PartialAssignment
    value: float


def noop_action(name: str = NOOP) -> ActionSchema:
    return ActionSchema(
        name,
        (ActionAspect((Case(None, ProbabilisticEffect(((PartialAssignment(), 1.0),))),)),),
    )


@dataclass(frozen=True)
class DomainSpec:
    propositions: tuple[str, ...]
    actions: tuple[ActionSchema, ...]
    rewards: tuple[RewardRule, ...]
    discount: float
    initial: State | None = None
    goals: tuple[PartialAssignment, ...] = ()

    def all_actions(self) -> tuple[ActionSchema, ...]:
        """Declared actions plus the implicit ``noop`` (appended last) unless one is declared."""
        if any(a.name == NOOP for a in self.actions):
            return self.actions
        return self.actions + (noop_action(),)

    def action(self, name: str) -> ActionSchema:
        for a in self.all_actions():
            if a.name == name:
                return a
        raise DomainError(f"unknown action {name!r}")

    def state(self, *literals: str) -> State:
        return State.from_literals(self.propositions, literals)

    def is_goal(self, s: State) -> bool:
        return any(s.satisfies(g) for g in self.goals)

    @cached_property
    def compiled(self) -> _Compiled:
        return _Compiled(self)


def _masks(index: Mapping[str, int], n: int, pa: PartialAssignment) -> tuple[int, int]:
    care = value = 0
    for name, pol in pa.literals:
        if name not in index:
            raise DomainError(f"unknown proposition {name!r}")
        bit = 1 << (n - 1 - index[name])
        care |= bit
        if pol:
            value |= bit
    return care, value


class _Compiled:
    """Bit-mask form of a domain for fast matching and effect application."""

    def __init__(self, d: DomainSpec):
        self.n = len(d.propositions)
        self.index = {p: i for i, p in enumerate(d.propositions)}
        self.action_names = tuple(a.name for a in d.all_actions())
        self.actions = []
        for a in d.all_actions():
            aspects = []
            for aspect in a.aspects:
                cases = []
                for case in aspect.cases:
                    cond = None if case.discriminant is None else self.mask(case.discriminant)
                    branches = tuple((*self.mask(e), p) for e, p in case.effect.branches)
                    cases.append((cond, branches))
                aspects.append(cases)
            self.actions.append(aspects)
        self.rewards = [(*self.mask(r.condition), r.value) for r in d.rewards]
        self.goals = [self.mask(g) for g in d.goals]

    def mask(self, pa: PartialAssignment) -> tuple[int, int]:
        return _masks(self.index, self.n, pa)

    def select(self, code: int, aspect) -> tuple:
        default = None
        for cond, branches in aspect:
            if cond is None:
                default = branches
            elif code & cond[0] == cond[1]:
                return branches
        if default is None:
            raise DomainError(f"no discriminant matches state code {code}")
        return default

    def joint(self, code: int, ai: int) -> list[tuple[int, float]]:
        """Unmerged cross product of aspect branches as ``(next code, prob)``."""
        chosen = [self.select(code, aspect) for aspect in self.actions[ai]]
        out = []
        for combo in itertools.product(*chosen):
            written = 0
            nxt = code
            prob = 1.0
            for care, value, p in combo:
                if care & written:
                    raise DomainError(
                        f"aspects of {self.action_names[ai]!r} write the same proposition"
                    )
                written |= care
                nxt = (nxt & ~care) | value
                prob *= p
            out.append((nxt, prob))
        return out

    def successors(self, code: int, ai: int) -> tuple[tuple[int, float], ...]:
        merged: dict[int, float] = {}
        for nxt, p in self.joint(code, ai):
            if p > 0.0:
                merged[nxt] = merged.get(nxt, 0.0) + p
        return tuple(sorted(merged.items()))

    def reward(self, code: int) -> float:
        return math.fsum(r for care, value, r in self.rewards if code & care == value)

    def is_goal(self, code: int) -> bool:
        return any(code & care == value for care, value in self.goals)


def _action_index(d: DomainSpec, action: ActionSchema | str) -> int:
    name = action if isinstance(action, str) else action.name
    try:
        return d.compiled.action_names.index(name)
    except ValueError:
        raise DomainError(f"unknown action {name!r}") from None


def _check_state(d: DomainSpec, s: State) -> None:
    if s.propositions != d.propositions:
        raise DomainError("state does not belong to this domain")


@dataclass(frozen=True)
class Distribution:
    outcomes: tuple[tuple[State, float], ...]

    def probability(self, s: State) -> float:
        return sum(p for t, p in self.outcomes if t == s)

    def total(self) -> float:
        return math.fsum(p for _, p in self.outcomes)

    def __len__(self) -> int:
        return len(self.outcomes)


def joint_outcomes(d: DomainSpec, s: State, action: ActionSchema | str) -> list[tuple[State, float]]:
    """Every joint branch choice across aspects, before identical states are merged."""
    _check_state(d, s)
    return [
        (State(d.propositions, c), p)
        for c, p in d.compiled.joint(s.code, _action_index(d, action))
    ]


def transition_distribution(d: DomainSpec, s: State, action: ActionSchema | str) -> Distribution:
    _check_state(d, s)
    succ = d.compiled.successors(s.code, _action_index(d, action))
    return Distribution(tuple((State(d.propositions, c), p) for c, p in succ))


def reward(d: DomainSpec, s: State) -> float:
    _check_state(d, s)
    return d.compiled.reward(s.code)


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    # Location inside the domain, e.g. ("action", "Move", 1, 0) for aspect 1 case 0.
    where: tuple = ()

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


def _literal_sets(d: DomainSpec):
    for i, r in enumerate(d.rewards):
        yield ("reward", i), r.condition
    for a in d.actions:
        for ai, aspect in enumerate(a.aspects):
            for ci, case in enumerate(aspect.cases):
                where = ("action", a.name, ai, ci)
                if case.discriminant is not None:
                    yield where, case.discriminant
                for e, _ in case.effect.branches:
                    yield where, e
    for i, g in enumerate(d.goals):
        yield ("goal", i), g


def _witness(d: DomainSpec, props: Sequence[str], bits: Sequence[bool]) -> State:
    values = dict(zip(props, bits))
    return State.from_bits(d.propositions, [values.get(p, False) for p in d.propositions])


def _case_matches(aspect: ActionAspect, assignment: Mapping[str, bool]) -> list[int]:
    hits = []
    for ci, case in enumerate(aspect.cases):
        if case.discriminant is None:
            continue
        if all(assignment[n] == pol for n, pol in case.discriminant.literals):
            hits.append(ci)
    if not hits:
        hits = [ci for ci, case in enumerate(aspect.cases) if case.discriminant is None][:1]
    return hits


def validate(d: DomainSpec) -> list[Violation]:
    """Return every problem found in ``d``; an empty list means the domain is well formed."""
    out: list[Violation] = []
    if not (0.0 < d.discount < 1.0):
        out.append(Violation("discount", f"discount {d.discount} must lie strictly inside (0, 1)", ("discount",)))

    declared = set(d.propositions)
    if len(declared) != len(d.propositions):
        out.append(Violation("duplicate-name", "proposition declared twice", ("props",)))
    names = [a.name for a in d.actions]
    for name in sorted({n for n in names if names.count(n) > 1}):
        out.append(Violation("duplicate-name", f"action {name!r} declared twice", ("action", name)))

    for where, pa in _literal_sets(d):
        unknown = pa.props() - declared
        if unknown:
            out.append(Violation("unknown-proposition", f"undeclared proposition(s) {', '.join(sorted(unknown))}", where))
        if not pa.is_consistent():
            out.append(Violation("inconsistent-literals", f"{pa} contains a proposition with both polarities", where))

    if d.initial is not None and d.initial.propositions != d.propositions:
        out.append(Violation("initial", "initial state does not match the declared propositions", ("init",)))

    for a in d.actions:
        if not a.aspects:
            out.append(Violation("empty-action", f"action {a.name!r} has no aspects", ("action", a.name)))
        for ai, aspect in enumerate(a.aspects):
            out.extend(_check_aspect(d, a, ai, aspect, declared))
        out.extend(_check_conflicts(d, a, declared))
    return out


def _check_aspect(d, a, ai, aspect, declared) -> list[Violation]:
    out = []
    if not aspect.cases:
        return [Violation("empty-aspect", f"action {a.name!r} aspect {ai} has no cases", ("action", a.name, ai))]
    for ci, case in enumerate(aspect.cases):
        where = ("action", a.name, ai, ci)
        if case.is_default and ci != len(aspect.cases) - 1:
            out.append(Violation("default-position", f"action {a.name!r}: 'default' must be the last case", where))
        branches = case.effect.branches
        if not branches:
            out.append(Violation("probability", f"action {a.name!r}: case has no branches", where))
            continue
        if any(p < 0.0 or p > 1.0 for _, p in branches):
            out.append(Violation("probability", f"action {a.name!r}: branch probability outside [0, 1]", where))
        total = case.effect.total()
        if abs(total - 1.0) > PROB_TOL:
            out.append(Violation("probability", f"action {a.name!r}: branch probabilities sum to {total:.9g}, not 1", where))

    props = sorted(
        {p for c in aspect.cases if c.discriminant is not None for p in c.discriminant.props()} & declared,
        key=d.propositions.index,
    )
    if any(c.discriminant is not None and not c.discriminant.props() <= declared for c in aspect.cases):
        return out
    overlap = gap = None
    for bits in itertools.product((False, True), repeat=len(props)):
        hits = _case_matches(aspect, dict(zip(props, bits)))
        if len(hits) > 1 and overlap is None:
            overlap = (bits, hits)
        elif not hits and gap is None:
            gap = bits
    where = ("action", a.name, ai)
    if overlap is not None:
        w = _witness(d, props, overlap[0])
        out.append(Violation(
            "exclusivity",
            f"action {a.name!r} aspect {ai}: cases {overlap[1]} all match state {w}",
            where + (overlap[1][1],),
        ))
    if gap is not None:
        w = _witness(d, props, gap)
        out.append(Violation("exhaustiveness", f"action {a.name!r} aspect {ai}: no case matches state {w}", where))
    return out


def _check_conflicts(d, a, declared) -> list[Violation]:
    out = []
    for i, j in itertools.combinations(range(len(a.aspects)), 2):
        ai, aj = a.aspects[i], a.aspects[j]
        props = set()
        for asp in (ai, aj):
            for c in asp.cases:
                if c.discriminant is not None:
                    props |= c.discriminant.props()
        if not props <= declared:
            continue
        props = sorted(props, key=d.propositions.index)
        for bits in itertools.product((False, True), repeat=len(props)):
            assignment = dict(zip(props, bits))
            hi, hj = _case_matches(ai, assignment), _case_matches(aj, assignment)
            if not hi or not hj:
                continue
            wi = {p for e, pr in ai.cases[hi[0]].effect.branches if pr > 0 for p in e.props()}
            wj = {p for e, pr in aj.cases[hj[0]].effect.branches if pr > 0 for p in e.props()}
            clash = wi & wj
            if clash:
                w = _witness(d, props, bits)
                out.append(Violation(
                    "conflict",
                    f"action {a.name!r}: aspects {i} and {j} both write {', '.join(sorted(clash))} in state {w}",
                    ("action", a.name, j),
                ))
                break
    return out


def state_cap() -> int:
    raw = os.environ.get(STATE_CAP_ENV)
    return int(raw) if raw else DEFAULT_STATE_CAP


@dataclass(frozen=True, eq=False)
class FlatMDP:
    """An explicit MDP: per-action, per-state successor lists, state rewards, discount.

    ``outcomes[a][s]`` is a tuple of ``(next_state, probability)`` sorted by
    next-state index. ``propositions`` is empty for hand-built models that do
    not come from a domain.
    """

    action_names: tuple[str, ...]
    outcomes: tuple[tuple[tuple[tuple[int, float], ...], ...], ...]
    rewards: np.ndarray
    discount: float
    propositions: tuple[str, ...] = ()
    goal_mask: np.ndarray | None = None

    @classmethod
    def from_explicit(
        cls,
        n_states: int,
        action_names: Sequence[str],
        transitions: Mapping[tuple[int, str], Sequence[tuple[int, float]]],
        rewards: Sequence[float],
        discount: float,
    ) -> FlatMDP:
        """Build a model from an explicit ``(state, action) -> [(next, prob)]`` table.

        Missing pairs become deterministic self-loops.
        """
        table = []
        for a in action_names:
            row = []
            for s in range(n_states):
                merged: dict[int, float] = {}
                for t, p in transitions.get((s, a), [(s, 1.0)]):
                    merged[t] = merged.get(t, 0.0) + float(p)
                row.append(tuple(sorted(merged.items())))
            table.append(tuple(row))
        return cls(tuple(action_names), tuple(table), np.asarray(rewards, dtype=float), float(discount))

    def __post_init__(self):
        self.rewards.setflags(write=False)

    @property
    def n_states(self) -> int:
        return len(self.rewards)

    @property
    def n_actions(self) -> int:
        return len(self.action_names)

    def action_index(self, name: str) -> int:
        try:
            return self.action_names.index(name)
        except ValueError:
            raise DomainError(f"unknown action {name!r}") from None

    def state(self, index: int) -> State:
        return State(self.propositions, index)

    def index(self, s: State | int) -> int:
        if isinstance(s, State):
            if s.propositions != self.propositions:
                raise DomainError("state does not belong to this MDP")
            return s.code
        return int(s)

    def is_goal(self, s: int) -> bool:
        return self.goal_mask is not None and bool(self.goal_mask[s])

    @cached_property
    def max_branching(self) -> int:
        return max(len(o) for row in self.outcomes for o in row)

    @cached_property
    def search_order(self) -> tuple[tuple[tuple[tuple[int, float], ...], ...], ...]:
        """Outcomes re-sorted by descending probability (ties by state index)."""
        return tuple(
            tuple(tuple(sorted(o, key=lambda tp: (-tp[1], tp[0]))) for o in row)
            for row in self.outcomes
        )

    @cached_property
    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded ``(next_states, probs)`` arrays of shape ``(m, n, b_max)``."""
        m, n, b = self.n_actions, self.n_states, self.max_branching
        idx = np.zeros((m, n, b), dtype=np.int64)
        prob = np.zeros((m, n, b))
        for a, row in enumerate(self.outcomes):
            for s, o in enumerate(row):
                idx[a, s, :] = s
                for k, (t, p) in enumerate(o):
                    idx[a, s, k] = t
                    prob[a, s, k] = p
        idx.setflags(write=False)
        prob.setflags(write=False)
        return idx, prob

    def expected(self, v: np.ndarray) -> np.ndarray:
        """``E[v(t)]`` for every (action, state): array of shape ``(m, n)``."""
        idx, prob = self.dense
        return (prob * v[idx]).sum(axis=-1)

    def reward_bounds(self) -> tuple[float, float]:
        return float(self.rewards.min()), float(self.rewards.max())

    def value_bounds(self) -> tuple[float, float]:
        lo, hi = self.reward_bounds()
        return lo / (1.0 - self.discount), hi / (1.0 - self.discount)


def ground(d: DomainSpec, max_states: int | None = None) -> FlatMDP:
    """Enumerate every state of ``d`` and materialize its transitions and rewards."""
    cap = state_cap() if max_states is None else max_states
    n_states = 2 ** len(d.propositions)
    if n_states > cap:
        raise GroundingSizeError(
            f"{len(d.propositions)} propositions give {n_states} states, above the cap of {cap}"
        )
    problems = validate(d)
    if problems:
        raise DomainError("domain failed validation:\n  " + "\n  ".join(map(str, problems)))
    c = d.compiled
    outcomes = tuple(
        tuple(c.successors(s, ai) for s in range(n_states)) for ai in range(len(c.action_names))
    )
    rewards = np.array([c.reward(s) for s in range(n_states)], dtype=float)
    goal_mask = None
    if d.goals:
        goal_mask = np.array([c.is_goal(s) for s in range(n_states)], dtype=bool)
        goal_mask.setflags(write=False)
    return FlatMDP(c.action_names, outcomes, rewards, d.discount, d.propositions, goal_mask)
