"""Heuristics from abstract MDPs that ignore irrelevant propositions.

Starting from a caller-chosen set of immediately relevant propositions, the
relevant set is closed under "if an effect touches a relevant proposition, the
propositions of that case's discriminant are relevant too". States agreeing on
the relevant propositions form a cluster. The projected domain is solved
exactly, and its cluster values serve as the search heuristic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .core import (
    ActionAspect,
    ActionSchema,
    Case,
    DomainError,
    DomainSpec,
    FlatMDP,
    PartialAssignment,
    ProbabilisticEffect,
    RewardRule,
    State,
    GroundingSizeError,
    ground,
    state_cap,
)
from .solvers import policy_iteration


class ClosureViolation(RuntimeError):
    """A kept discriminant mentions a proposition outside the relevant set."""


@dataclass(frozen=True)
class RelevantSet:
    immediately_relevant: frozenset[str]
    closure: tuple[str, ...]  # declaration order
    # (proposition, action that pulled it in, that case's discriminant); None for IR members
    trace: tuple[tuple[str, str | None, str | None], ...] = ()


def relevant_closure(d: DomainSpec, ir: Iterable[str]) -> RelevantSet:
    ir = frozenset(ir)
    if not ir:
        raise DomainError("the immediately relevant set must not be empty")
    unknown = ir - set(d.propositions)
    if unknown:
        raise DomainError(f"unknown proposition(s): {', '.join(sorted(unknown))}")
    relevant = set(ir)
    trace = [(p, None, None) for p in d.propositions if p in ir]
    changed = True
    while changed:
        changed = False
        for a in d.all_actions():
            for aspect in a.aspects:
                for ci, case in enumerate(aspect.cases):
                    if not case.effect.props() & relevant:
                        continue
                    cond = "default" if case.discriminant is None else str(case.discriminant)
                    for p in sorted(aspect.condition_props(ci) - relevant, key=d.propositions.index):
                        relevant.add(p)
                        trace.append((p, a.name, cond))
                        changed = True
    closure = tuple(p for p in d.propositions if p in relevant)
    return RelevantSet(ir, closure, tuple(trace))


def _cluster_codes(n: int, positions: Sequence[int]) -> np.ndarray:
    """Map every concrete state code over ``n`` propositions to its cluster code."""
    codes = np.arange(2**n, dtype=np.int64)
    k = len(positions)
    out = np.zeros_like(codes)
    for j, i in enumerate(positions):
        out |= ((codes >> (n - 1 - i)) & 1) << (k - 1 - j)
    return out


def _concrete_rewards(d: DomainSpec) -> np.ndarray:
    n_states = 2 ** len(d.propositions)
    if n_states > state_cap():
        raise GroundingSizeError(f"{n_states} concrete states exceed the cap of {state_cap()}")
    c = d.compiled
    return np.array([c.reward(s) for s in range(n_states)], dtype=float)


def _cluster_reward_spans(d: DomainSpec, closure: Sequence[str]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    positions = [d.propositions.index(p) for p in closure]
    cluster_of = _cluster_codes(len(d.propositions), positions)
    r = _concrete_rewards(d)
    k = 2 ** len(closure)
    lo = np.full(k, np.inf)
    hi = np.full(k, -np.inf)
    np.minimum.at(lo, cluster_of, r)
    np.maximum.at(hi, cluster_of, r)
    return cluster_of, r, lo, hi


def _project_aspect(aspect: ActionAspect, keep: frozenset[str]) -> ActionAspect | None:
    cases = [
        Case(c.discriminant, ProbabilisticEffect(tuple((e.restrict(keep), p) for e, p in c.effect.branches)))
        for c in aspect.cases
    ]
    if all(c.effect.is_trivial() for c in cases):
        return None
    kept: list[Case] = []
    dropped = False
    for ci, case in enumerate(cases):
        cond_props = aspect.condition_props(ci)
        if cond_props <= keep:
            kept.append(case)
        elif case.effect.is_trivial():
            # Only reachable for cases that never touch relevant propositions;
            # a trailing default recovers exactly the states they covered.
            dropped = True
        else:
            raise ClosureViolation(
                f"discriminant mentions {', '.join(sorted(cond_props - keep))} outside the relevant set"
            )
    if dropped:
        if kept and kept[-1].is_default:
            raise ClosureViolation("cannot merge dropped cases into an existing default")
        kept.append(Case(None, ProbabilisticEffect(((PartialAssignment(), 1.0),))))
    return ActionAspect(tuple(kept))


def project_domain(d: DomainSpec, r: RelevantSet) -> DomainSpec:
    """The abstract domain over ``r.closure``.

    Effects on other propositions are dropped, as are aspects left with no
    effect at all. Cluster rewards are the midpoint of their member states'
    rewards, which leaves the reward rules untouched when they only mention
    relevant propositions.
    """
    keep = frozenset(r.closure)
    actions = []
    for a in d.actions:
        aspects = tuple(p for p in (_project_aspect(asp, keep) for asp in a.aspects) if p is not None)
        if not aspects:
            aspects = (ActionAspect((Case(None, ProbabilisticEffect(((PartialAssignment(), 1.0),))),)),)
        actions.append(ActionSchema(a.name, aspects))

    if all(rule.condition.props() <= keep for rule in d.rewards):
        rewards = tuple(d.rewards)
    else:
        _, _, lo, hi = _cluster_reward_spans(d, r.closure)
        rewards = []
        for code in range(2 ** len(r.closure)):
            bits = State(r.closure, code).bits()
            cond = PartialAssignment.from_pairs(zip(r.closure, bits))
            rewards.append(RewardRule(cond, float((lo[code] + hi[code]) / 2.0)))
        rewards = tuple(rewards)

    initial = None
    if d.initial is not None:
        initial = State.from_bits(r.closure, [d.initial[p] for p in r.closure])
    return DomainSpec(r.closure, tuple(actions), rewards, d.discount, initial, ())


@dataclass(frozen=True, eq=False)
class HeuristicTable:
    """Per-cluster values and default actions plus value bounds and the error bound.

    ``cluster_of[s]`` is the cluster of concrete state index ``s``.
    """

    cluster_of: np.ndarray
    values: np.ndarray
    default_actions: tuple[str, ...]
    vmax: float
    vmin: float
    epsilon: float
    closure: tuple[str, ...] = ()
    relevant: RelevantSet | None = field(default=None, repr=False)
    abstract_mdp: FlatMDP | None = field(default=None, repr=False)

    @classmethod
    def from_state_values(
        cls,
        values: Sequence[float],
        default_actions: Sequence[str],
        vmax: float,
        vmin: float,
        epsilon: float = 0.0,
    ) -> HeuristicTable:
        """A table with one cluster per state, for hand-built models."""
        values = np.asarray(values, dtype=float)
        return cls(np.arange(len(values)), values, tuple(default_actions), float(vmax), float(vmin), float(epsilon))

    @property
    def n_clusters(self) -> int:
        return len(self.values)

    @cached_property
    def state_values(self) -> np.ndarray:
        """Heuristic value of every concrete state."""
        out = self.values[self.cluster_of]
        out.setflags(write=False)
        return out

    def _index(self, s: State | int) -> int:
        return s.code if isinstance(s, State) else int(s)

    def value(self, s: State | int) -> float:
        return float(self.values[self.cluster_of[self._index(s)]])

    def default_action(self, s: State | int) -> str:
        return self.default_actions[int(self.cluster_of[self._index(s)])]

    def to_dict(self) -> dict:
        clusters = []
        for c in range(self.n_clusters):
            entry = {"cluster": c, "value": float(self.values[c]), "default_action": self.default_actions[c]}
            if self.closure:
                entry["mask"] = format(c, f"0{len(self.closure)}b")
                entry["assignment"] = dict(zip(self.closure, State(self.closure, c).bits()))
            clusters.append(entry)
        out = {
            "closure": list(self.closure),
            "n_clusters": self.n_clusters,
            "vmax": self.vmax,
            "vmin": self.vmin,
            "epsilon": self.epsilon,
            "clusters": clusters,
        }
        if self.relevant is not None:
            out["immediately_relevant"] = sorted(self.relevant.immediately_relevant)
            out["trace"] = [
                {"proposition": p, "action": a, "discriminant": disc} for p, a, disc in self.relevant.trace
            ]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def build_heuristic(d: DomainSpec, ir: Iterable[str]) -> HeuristicTable:
    r = relevant_closure(d, ir)
    cluster_of, rewards, lo, hi = _cluster_reward_spans(d, r.closure)
    abstract = ground(project_domain(d, r))
    policy, values, _ = policy_iteration(abstract)
    beta = d.discount
    values.setflags(write=False)
    cluster_of.setflags(write=False)
    return HeuristicTable(
        cluster_of=cluster_of,
        values=values,
        default_actions=tuple(abstract.action_names[a] for a in policy),
        vmax=float(rewards.max()) / (1.0 - beta),
        vmin=float(rewards.min()) / (1.0 - beta),
        epsilon=float(np.max((hi - lo) / 2.0)) / (1.0 - beta),
        closure=r.closure,
        relevant=r,
        abstract_mdp=abstract,
    )


def heuristic_value(h: HeuristicTable, s: State | int) -> float:
    return h.value(s)


def default_action(h: HeuristicTable, s: State | int) -> str:
    return h.default_action(s)


def reward_influence(d: DomainSpec) -> list[tuple[str, float]]:
    """Propositions ranked by the largest reward change flipping them alone can cause.

    A selection aid for the immediately relevant set; only propositions that
    appear in reward rules are listed.
    """
    r = _concrete_rewards(d)
    n = len(d.propositions)
    mentioned = set().union(*(rule.condition.props() for rule in d.rewards)) if d.rewards else set()
    codes = np.arange(2**n)
    out = []
    for i, p in enumerate(d.propositions):
        if p not in mentioned:
            continue
        bit = 1 << (n - 1 - i)
        out.append((p, float(np.max(np.abs(r[codes ^ bit] - r)))))
    return sorted(out, key=lambda item: (-item[1], d.propositions.index(item[0])))
