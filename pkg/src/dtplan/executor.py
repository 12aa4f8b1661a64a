"""The plan / execute / observe loop, whole-policy induction and benchmarks."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .abstraction import HeuristicTable
from .core import FlatMDP, State
from .search import SearchConfig, Searcher, SearchStats
from .solvers import policy_evaluation


class WorldSimulator:
    """Samples action outcomes from a model with a seeded PCG64 generator.

    Each draw takes one uniform double from the generator and inverts the
    cumulative distribution of the outcomes in state-index order.
    """

    def __init__(self, mdp: FlatMDP, seed: int):
        self.mdp = mdp
        self.seed = int(seed)
        self.rng = np.random.Generator(np.random.PCG64(self.seed))

    def spawn(self, n: int) -> list[WorldSimulator]:
        """Independent child simulators derived from this one's seed."""
        children = np.random.SeedSequence(self.seed).spawn(n)
        out = []
        for child in children:
            sim = WorldSimulator(self.mdp, self.seed)
            sim.rng = np.random.Generator(np.random.PCG64(child))
            out.append(sim)
        return out

    def step(self, s: int, a: int) -> int:
        outcomes = self.mdp.outcomes[a][s]
        u = self.rng.random()
        acc = 0.0
        for t, p in outcomes:
            acc += p
            if u < acc:
                return t
        return outcomes[-1][0]


@dataclass(frozen=True)
class CacheEntry:
    action: int
    value: float
    depth: int


class ActionCache(dict):
    """``state index -> CacheEntry``; a hit needs an entry computed at least as deep as requested."""

    def lookup(self, s: int, depth: int) -> CacheEntry | None:
        entry = self.get(s)
        if entry is not None and entry.depth >= depth:
            return entry
        return None


@dataclass(frozen=True)
class Step:
    state: int
    action: str
    next_state: int
    reward: float
    cache_hit: bool
    stats: SearchStats | None = field(default=None, compare=False)

    def to_dict(self, mdp: FlatMDP) -> dict:
        out = {
            "state": self.state,
            "action": self.action,
            "next_state": self.next_state,
            "reward": self.reward,
            "cache_hit": self.cache_hit,
            "stats": None if self.stats is None else self.stats.to_dict(),
        }
        if mdp.propositions:
            out["state_literals"] = mdp.state(self.state).literals()
            out["next_literals"] = mdp.state(self.next_state).literals()
        return out


@dataclass(frozen=True)
class Trajectory:
    start: int
    steps: tuple[Step, ...]
    discounted_return: float
    termination: str  # "goal" or "step-limit"

    @property
    def final_state(self) -> int:
        return self.steps[-1].next_state if self.steps else self.start

    def nodes_expanded(self) -> int:
        return sum(s.stats.nodes_expanded for s in self.steps if s.stats is not None)

    def searches(self) -> int:
        return sum(1 for s in self.steps if not s.cache_hit)


def discounted_return(rewards: Iterable[float], discount: float) -> float:
    return math.fsum(r * discount**k for k, r in enumerate(rewards))


def run_episode(
    mdp: FlatMDP,
    start: State | int,
    cfg: SearchConfig,
    h: HeuristicTable,
    max_steps: int,
    seed: int,
    caching: bool = True,
    cache: ActionCache | None = None,
) -> Trajectory:
    """Search, execute against the simulator, observe, repeat.

    Stops early in a goal state when the model declares goals. The return
    sums ``beta**k * R(s_k)`` over the states in which an action was taken.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    s = mdp.index(start)
    world = WorldSimulator(mdp, seed)
    searcher = Searcher(mdp, h, cfg)
    if cache is None:
        cache = ActionCache()
    steps = []
    termination = "step-limit"
    for _ in range(max_steps):
        if mdp.is_goal(s):
            termination = "goal"
            break
        hit = cache.lookup(s, cfg.horizon) if caching else None
        if hit is not None:
            a, stats = hit.action, None
        else:
            result = searcher.best_action(s)
            a, stats = result.action_index, result.stats
            if caching:
                cache[s] = CacheEntry(a, result.value, cfg.horizon)
        t = world.step(s, a)
        steps.append(Step(s, mdp.action_names[a], t, float(mdp.rewards[s]), hit is not None, stats))
        s = t
    else:
        if mdp.is_goal(s):
            termination = "goal"
    ret = discounted_return((st.reward for st in steps), mdp.discount)
    return Trajectory(mdp.index(start), tuple(steps), ret, termination)


def simulate_policy(mdp: FlatMDP, policy: np.ndarray, start: State | int, max_steps: int, seed: int) -> Trajectory:
    """Follow a fixed policy under the same sampling rules as :func:`run_episode`."""
    s = mdp.index(start)
    world = WorldSimulator(mdp, seed)
    steps = []
    termination = "step-limit"
    for _ in range(max_steps):
        if mdp.is_goal(s):
            termination = "goal"
            break
        a = int(policy[s])
        t = world.step(s, a)
        steps.append(Step(s, mdp.action_names[a], t, float(mdp.rewards[s]), False))
        s = t
    ret = discounted_return((st.reward for st in steps), mdp.discount)
    return Trajectory(mdp.index(start), tuple(steps), ret, termination)


def induced_policy(mdp: FlatMDP, cfg: SearchConfig, h: HeuristicTable) -> np.ndarray:
    """Run a fresh search from every state."""
    searcher = Searcher(mdp, h, cfg)
    return np.array([searcher.best_action(s).action_index for s in range(mdp.n_states)], dtype=np.int64)


@dataclass(frozen=True)
class PolicyComparison:
    num_errors: int
    total_error: float
    max_error: float
    avg_error: float

    CSV_HEADER = ("depth", "num_errors", "total_error", "max_error", "avg_error")

    def csv_row(self, depth: int) -> list:
        return [depth, self.num_errors, f"{self.total_error:.6f}", f"{self.max_error:.6f}", f"{self.avg_error:.6f}"]


def compare_policies(mdp: FlatMDP, candidate: np.ndarray, reference_values: np.ndarray, tol: float = 1e-6) -> PolicyComparison:
    """Value lost at each state by following ``candidate`` instead of an optimal policy."""
    v = policy_evaluation(mdp, candidate)
    err = np.maximum(0.0, np.asarray(reference_values) - v)
    total = float(err.sum())
    return PolicyComparison(
        num_errors=int((err > tol).sum()),
        total_error=total,
        max_error=float(err.max()),
        avg_error=total / mdp.n_states,
    )


# Benchmarks.

BENCH_MODES = ("search-only+cache", "search-only+nocache", "search+execute+cache", "search+execute+nocache")
PRUNING_VARIANTS = {
    "single:none": (False, False),
    "single:utility": (True, False),
    "single:expectation": (False, True),
    "single:both": (True, True),
}
BENCH_HEADER = (
    "depth", "mode", "elapsed", "nodes_expanded", "utility_cuts",
    "expectation_cuts", "searches", "cache_hits", "percent_states_searched",
)


@dataclass
class BenchRow:
    depth: int
    mode: str
    elapsed: float | None
    nodes_expanded: int
    utility_cuts: int
    expectation_cuts: int
    searches: int
    cache_hits: int = 0
    percent_states_searched: float | None = None

    def csv_row(self) -> list:
        return [
            self.depth,
            self.mode,
            "" if self.elapsed is None else f"{self.elapsed:.6f}",
            self.nodes_expanded,
            self.utility_cuts,
            self.expectation_cuts,
            self.searches,
            self.cache_hits,
            "" if self.percent_states_searched is None else f"{self.percent_states_searched:.2f}",
        ]


def search_only(
    mdp: FlatMDP,
    start: State | int,
    cfg: SearchConfig,
    h: HeuristicTable,
    horizon: int = 10,
    caching: bool = True,
    literal_budget: int = 5000,
) -> BenchRow:
    """Plan ``horizon`` actions ahead without executing anything.

    Every outcome of every chosen action must be planned for, giving a tree of
    searches of size up to ``b**horizon``. With caching each distinct state is
    searched once and every later visit to it is a cache hit costing one node,
    the same price :func:`search_execute` charges for a hit. Without caching
    each tree node is searched again; since a search is a pure function of its
    state, the node total is computed exactly per state, and the tree is only
    searched literally (so that a time can be reported) when it holds at most
    ``literal_budget`` searches.
    """
    s0 = mdp.index(start)
    searcher = Searcher(mdp, h, cfg)
    per_state: dict[int, SearchStats] = {}
    chosen: dict[int, int] = {}
    elapsed = 0.0

    def search(s: int) -> int:
        nonlocal elapsed
        if s not in chosen:
            t0 = time.perf_counter()
            r = searcher.best_action(s)
            elapsed += time.perf_counter() - t0
            chosen[s], per_state[s] = r.action_index, r.stats
        return chosen[s]

    # States needing a search, with how many times each is reached in the tree.
    counts: dict[int, int] = {s0: 1}
    layer = {s0: 1}
    for level in range(horizon):
        nxt: dict[int, int] = {}
        for s, mult in layer.items():
            a = search(s)
            if level + 1 < horizon:
                for t, _ in mdp.outcomes[a][s]:
                    nxt[t] = nxt.get(t, 0) + mult
        for t, mult in nxt.items():
            counts[t] = counts.get(t, 0) + mult
        layer = nxt

    mult = {s: (1 if caching else c) for s, c in counts.items()}
    total_searches = sum(mult.values())
    hits = sum(counts.values()) - total_searches
    if caching:
        time_taken: float | None = elapsed
    elif total_searches <= literal_budget:
        t0 = time.perf_counter()
        for s, c in counts.items():
            for _ in range(c):
                searcher.best_action(s)
        time_taken = time.perf_counter() - t0
    else:
        time_taken = None
    def agg(f: str) -> int:
        return sum(getattr(per_state[s], f) * k for s, k in mult.items())

    mode = "search-only+cache" if caching else "search-only+nocache"
    return BenchRow(
        cfg.horizon, mode, time_taken, agg("nodes_expanded") + hits, agg("utility_cuts"),
        agg("expectation_cuts"), total_searches, hits,
    )


def search_execute(
    mdp: FlatMDP,
    start: State | int,
    cfg: SearchConfig,
    h: HeuristicTable,
    steps: int = 10,
    seed: int = 0,
    caching: bool = True,
) -> BenchRow:
    """One ``steps``-long episode; a cache hit costs one node."""
    t0 = time.perf_counter()
    traj = run_episode(mdp, start, cfg, h, steps, seed, caching=caching)
    elapsed = time.perf_counter() - t0
    stats = [st.stats for st in traj.steps if st.stats is not None]
    hits = sum(1 for st in traj.steps if st.cache_hit)
    return BenchRow(
        cfg.horizon,
        "search+execute+cache" if caching else "search+execute+nocache",
        elapsed,
        sum(s.nodes_expanded for s in stats) + hits,
        sum(s.utility_cuts for s in stats),
        sum(s.expectation_cuts for s in stats),
        len(stats),
        hits,
    )


def bench_suite(
    mdp: FlatMDP,
    h: HeuristicTable,
    start: State | int,
    depths: Sequence[int],
    cfg: SearchConfig,
    seed: int = 0,
    modes: Sequence[str] = BENCH_MODES,
    steps: int = 10,
    pruning_variants: bool = True,
) -> list[BenchRow]:
    """Cost of single-state search per pruning variant, then the plan-ahead modes.

    ``percent_states_searched`` is reported for the single-state rows, relative
    to the unpruned search at the same depth.
    """
    rows = []
    for depth in depths:
        base = SearchConfig(
            depth=depth, threshold=cfg.threshold, utility_pruning=cfg.utility_pruning,
            expectation_pruning=cfg.expectation_pruning, memoize=cfg.memoize, max_depth=cfg.max_depth,
        )
        if pruning_variants:
            single = {}
            for name, (up, ep) in PRUNING_VARIANTS.items():
                vcfg = SearchConfig(depth=depth, threshold=cfg.threshold, utility_pruning=up,
                                    expectation_pruning=ep, memoize=cfg.memoize, max_depth=cfg.max_depth)
                r = Searcher(mdp, h, vcfg).best_action(start)
                single[name] = BenchRow(depth, name, r.stats.elapsed, r.stats.nodes_expanded,
                                        r.stats.utility_cuts, r.stats.expectation_cuts, 1)
            ref = single["single:none"].nodes_expanded
            for row in single.values():
                row.percent_states_searched = 100.0 * row.nodes_expanded / ref if ref else 100.0
                rows.append(row)
        for mode in modes:
            if mode not in BENCH_MODES:
                raise ValueError(f"unknown bench mode {mode!r}")
            caching = mode.endswith("+cache")
            if mode.startswith("search-only"):
                rows.append(search_only(mdp, start, base, h, horizon=steps, caching=caching))
            else:
                rows.append(search_execute(mdp, start, base, h, steps=steps, seed=seed, caching=caching))
    return rows
