"""Depth-bounded expectimax with heuristic leaves.

A ply is a MAX step over actions followed by an AVERAGE step over each
action's outcomes. Two prunings are available:

* utility cuts abandon an AVERAGE step once the evaluated outcomes plus the
  remaining probability mass at ``vmax`` cannot beat the best action so far;
* expectation cuts skip an action whose one-step heuristic estimate, even
  allowing for the heuristic's error bound, cannot beat the best action so far.

Outcomes are expanded in decreasing probability so cuts come early.
"""

from __future__ import annotations

import math
import time
import weakref
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

from .abstraction import HeuristicTable
from .core import FlatMDP, State

NEG_INF = -math.inf


@dataclass(frozen=True)
class SearchConfig:
    depth: int = 2
    # When set, expand until the path probability drops below it (capped at max_depth).
    threshold: float | None = None
    utility_pruning: bool = True
    expectation_pruning: bool = True
    memoize: bool = False
    max_depth: int = 12

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be non-negative")
        if self.threshold is not None and not (0.0 < self.threshold <= 1.0):
            raise ValueError("threshold must lie in (0, 1]")
        if self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")

    @property
    def expansion(self) -> str:
        return "fixed-depth" if self.threshold is None else "probability-threshold"

    @property
    def horizon(self) -> int:
        """Remaining-depth budget at the root."""
        return self.depth if self.threshold is None else self.max_depth

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SearchStats:
    """Work done by one search.

    ``nodes_expanded`` counts every state placed in the tree, interior or
    leaf, so cuts on the last ply show up in it; ``leaves_evaluated`` is the
    leaf share of that count. Memo hits add nothing.
    """

    nodes_expanded: int = 0
    leaves_evaluated: int = 0
    utility_cuts: int = 0
    expectation_cuts: int = 0
    gate_evaluations: int = 0
    max_branching: int = 0
    action_count: int = 0
    elapsed: float = field(default=0.0, compare=False)

    def to_dict(self, timing: bool = False) -> dict:
        out = asdict(self)
        if not timing:
            out.pop("elapsed")
        return out

    def add(self, other: SearchStats) -> None:
        self.nodes_expanded += other.nodes_expanded
        self.leaves_evaluated += other.leaves_evaluated
        self.utility_cuts += other.utility_cuts
        self.expectation_cuts += other.expectation_cuts
        self.gate_evaluations += other.gate_evaluations
        self.max_branching = max(self.max_branching, other.max_branching)
        self.action_count = max(self.action_count, other.action_count)
        self.elapsed += other.elapsed


@dataclass(frozen=True)
class SearchResult:
    action: str
    action_index: int
    value: float
    stats: SearchStats


class ActionValue(NamedTuple):
    """Result of an AVERAGE step.

    When ``pruned`` is set, ``value`` is the optimistic bound that triggered
    the cut rather than the utility itself. ``lower`` is the matching
    pessimistic bound (equal to ``value`` for a completed step).
    """

    value: float
    pruned: bool
    lower: float


class GateResult(NamedTuple):
    expand: bool
    estimate: float


# Per-model outcome lists in expansion order: [a][s] -> ((t, p, mass_left_before_t), ...)
_PLANS: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()


def _plan(mdp: FlatMDP):
    plan = _PLANS.get(mdp)
    if plan is None:
        plan = []
        for row in mdp.search_order:
            prow = []
            for outcomes in row:
                left = [0.0] * len(outcomes)
                acc = 0.0
                for k in range(len(outcomes) - 1, -1, -1):
                    acc += outcomes[k][1]
                    left[k] = acc
                prow.append(tuple((t, p, left[k]) for k, (t, p) in enumerate(outcomes)))
            plan.append(tuple(prow))
        plan = tuple(plan)
        _PLANS[mdp] = plan
    return plan


class Searcher:
    """Expectimax over one model and heuristic.

    The public step methods mirror the recursion so that single plies can be
    inspected; :meth:`best_action` resets statistics and the memo table.
    """

    def __init__(self, mdp: FlatMDP, h: HeuristicTable, cfg: SearchConfig, trace: bool = False):
        if len(h.state_values) != mdp.n_states:
            raise ValueError("heuristic table and model disagree on the number of states")
        self.mdp = mdp
        self.h = h
        self.cfg = cfg
        self.stats = SearchStats(action_count=mdp.n_actions)
        self.trace: list[tuple[int, int]] | None = [] if trace else None
        self._plan = _plan(mdp)
        self._rewards = mdp.rewards.tolist()
        self._hv = h.state_values.tolist()
        self._beta = mdp.discount
        self._m = mdp.n_actions
        self._theta = cfg.threshold
        self._cut = cfg.utility_pruning
        self._gate = cfg.expectation_pruning and math.isfinite(h.epsilon)
        self._memo: dict | None = {} if cfg.memoize else None

    def reset(self) -> None:
        self.stats = SearchStats(action_count=self.mdp.n_actions)
        if self.trace is not None:
            self.trace = []
        if self._memo is not None:
            self._memo = {}

    def evaluate_state(self, s: int, remaining: int, mass: float = 1.0) -> float:
        """Heuristic value at a leaf, otherwise ``R(s) + beta * max_a U(a|s)``."""
        if remaining <= 0 or (self._theta is not None and mass < self._theta):
            self.stats.nodes_expanded += 1
            self.stats.leaves_evaluated += 1
            return self._hv[s]
        memo = self._memo
        if memo is not None:
            key = (s, remaining) if self._theta is None else (s, remaining, mass)
            hit = memo.get(key)
            if hit is not None:
                return hit
        u, _ = self.max_step(s, remaining, mass)
        v = self._rewards[s] + self._beta * u
        if memo is not None:
            memo[key] = v
        return v

    def max_step(self, s: int, remaining: int, mass: float = 1.0) -> tuple[float, int]:
        """Best action utility at ``s`` and its index (lowest index wins ties)."""
        self.stats.nodes_expanded += 1
        if self.trace is not None:
            self.trace.append((s, remaining))
        incumbent = NEG_INF
        best = -1
        for a in range(self._m):
            if self._gate and incumbent != NEG_INF:
                if not self.expectation_gate(s, a, incumbent).expand:
                    continue
            u = self.action_utility(s, a, remaining, incumbent, mass)
            if not u.pruned and u.value > incumbent:
                incumbent, best = u.value, a
        return incumbent, best

    def action_utility(
        self, s: int, a: int, remaining: int, incumbent: float = NEG_INF, mass: float = 1.0
    ) -> ActionValue:
        """``sum_t Pr(s, a, t) V(t)`` with children at ``remaining - 1``, or a utility cut."""
        outcomes = self._plan[a][s]
        stats = self.stats
        if len(outcomes) > stats.max_branching:
            stats.max_branching = len(outcomes)
        cut = self._cut and incumbent != NEG_INF
        vmax, vmin = self.h.vmax, self.h.vmin
        total = 0.0
        for t, p, left in outcomes:
            if cut and total + left * vmax <= incumbent:
                stats.utility_cuts += 1
                return ActionValue(total + left * vmax, True, total + left * vmin)
            total += p * self.evaluate_state(t, remaining - 1, mass * p)
        return ActionValue(total, False, total)

    def expectation_gate(self, s: int, a: int, incumbent: float) -> GateResult:
        """Skip ``a`` when its heuristic estimate plus the error bound stays below ``incumbent`` minus the bound."""
        hv = self._hv
        outcomes = self._plan[a][s]
        estimate = 0.0
        for t, p, _ in outcomes:
            estimate += p * hv[t]
        self.stats.gate_evaluations += len(outcomes)
        eps = self.h.epsilon
        if estimate + eps < incumbent - eps:
            self.stats.expectation_cuts += 1
            return GateResult(False, estimate)
        return GateResult(True, estimate)

    def best_action(self, s: State | int) -> SearchResult:
        s = self.mdp.index(s)
        self.reset()
        start = time.perf_counter()
        if self.cfg.horizon == 0:
            name = self.h.default_action(s)
            result_a, value = self.mdp.action_index(name), self._hv[s]
        else:
            u, result_a = self.max_step(s, self.cfg.horizon, 1.0)
            value = self._rewards[s] + self._beta * u
        self.stats.elapsed = time.perf_counter() - start
        return SearchResult(self.mdp.action_names[result_a], result_a, value, self.stats)


def best_action(mdp: FlatMDP, h: HeuristicTable, s: State | int, cfg: SearchConfig) -> SearchResult:
    return Searcher(mdp, h, cfg).best_action(s)


def node_envelope(mdp: FlatMDP, depth: int) -> int:
    """Upper bound on the nodes of a depth-``depth`` tree: ``sum_{k<=d} (m b_max)^k``."""
    mb = mdp.n_actions * mdp.max_branching
    return sum(mb**k for k in range(depth + 1))
