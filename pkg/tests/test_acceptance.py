"""Acceptance suite: eleven end-to-end criteria, each with its own tolerance and time budget.

Run with pytest (a PASS/FAIL line per criterion is printed in the terminal
summary) or directly with ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import contextlib
import io
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import trees  # noqa: E402
from dtplan.abstraction import HeuristicTable, build_heuristic, relevant_closure  # noqa: E402
from dtplan.cli import main as cli_main  # noqa: E402
from dtplan.core import NOOP, PartialAssignment, State, apply_effect, ground  # noqa: E402
from dtplan.executor import (  # noqa: E402
    WorldSimulator,
    run_episode,
    search_execute,
    search_only,
)
from dtplan.lang import load_domain  # noqa: E402
from dtplan.search import SearchConfig, Searcher, best_action, node_envelope  # noqa: E402
from dtplan.solvers import greedy_policy, improving_swaps, policy_iteration, q_values, value_iteration  # noqa: E402

HARDEST = ("Office", "Rain", "!Umbrella", "!Wet", "!HRC", "!HUC", "!HRS", "!HUS")
COFFEE = ("coffee-base", "coffee-extended")


@dataclass
class Outcome:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float
    budget: float

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] {self.number:2d} {self.title}: {self.detail} ({self.seconds:.3f}s / {self.budget:g}s)"


RESULTS: dict[int, Outcome] = {}


def criterion(number: int, title: str, budget: float):
    """Time a check function returning ``(passed, detail)`` and record the outcome."""

    def wrap(fn):
        def run() -> Outcome:
            t0 = time.perf_counter()
            ok, detail = fn()
            elapsed = time.perf_counter() - t0
            if elapsed > budget:
                ok, detail = False, f"{detail}; over time budget"
            out = Outcome(number, title, bool(ok), detail, elapsed, budget)
            RESULTS[number] = out
            return out

        run.number = number
        return run

    return wrap


def _exact(a: float, b: float, tol: float = 1e-12) -> bool:
    return abs(a - b) <= tol


# Shared setup, outside the timed sections where a criterion times only its own computation.
_CACHE: dict = {}


def bundle(name: str):
    if name not in _CACHE:
        d = load_domain(name)
        m = ground(d)
        policy, v, _ = policy_iteration(m)
        _CACHE[name] = (d, m, v)
    return _CACHE[name]


def heuristic(name: str):
    key = ("h", name)
    if key not in _CACHE:
        _CACHE[key] = build_heuristic(bundle(name)[0], ["HUC"])
    return _CACHE[key]


# 1


_TWO_LEVEL = trees.two_level()


@criterion(1, "two-level worked example", budget=0.001)
def c1():
    m, h, root = _TWO_LEVEL
    s = Searcher(m, h, SearchConfig(depth=2, utility_pruning=False, expectation_pruning=False))
    u_at = s.action_utility(trees.T, 0, 1).value
    u_bt = s.action_utility(trees.T, 1, 1).value
    v_t = s.evaluate_state(trees.T, 1)
    u_as = s.action_utility(root, 0, 2).value
    choice = s.best_action(root).action
    ok = (_exact(u_at, 2.1) and _exact(u_bt, 0.3) and _exact(v_t, 2.39) and _exact(u_as, 2.23)
          and choice == "B")
    return ok, f"U(A|t)={u_at:.12g} U(B|t)={u_bt:.12g} V(t)={v_t:.12g} U(A|s)={u_as:.12g} choice={choice}"


# 2


_CUT, _GATE = trees.utility_cut(), trees.expectation_gate()


@criterion(2, "pruning examples", budget=0.001)
def c2():
    m, h, root = _CUT
    s = Searcher(m, h, SearchConfig(depth=2, expectation_pruning=False), trace=True)
    r = s.best_action(root)
    cuts = r.stats.utility_cuts
    skipped = not {st for st, _ in s.trace} & {trees.RU, trees.RV}
    s.reset()
    bound = s.action_utility(root, 1, 2, incumbent=7.0)
    ok_cut = cuts == 1 and skipped and bound.pruned and _exact(bound.value, 6.5)

    m, h, root = _GATE
    g = Searcher(m, h, SearchConfig(depth=2), trace=True)
    rg = g.best_action(root)
    gate_cuts = rg.stats.expectation_cuts
    gate_skipped = not {st for st, _ in g.trace} & {trees.GT, trees.GU}
    gate = g.expectation_gate(root, 1, 7.0)
    ok_gate = gate_cuts == 1 and gate_skipped and not gate.expand and gate.estimate <= 4.0
    return ok_cut and ok_gate, (
        f"bound={bound.value:.12g} utility_cuts={cuts} U,V skipped={skipped}; "
        f"estimate={gate.estimate:g} expectation_cuts={gate_cuts} T,U skipped={gate_skipped}"
    )


# 3


@criterion(3, "exact solvers agree", budget=5.0)
def c3():
    parts, ok = [], True
    for name in COFFEE:
        m = ground(load_domain(name))
        _, v_pi, _ = policy_iteration(m)
        v_vi, _ = value_iteration(m, tol=1e-6)
        gap = float(np.max(np.abs(v_pi - v_vi)))
        swaps = improving_swaps(m, greedy_policy(m, v_pi))
        ok &= gap <= 1e-6 and not swaps
        parts.append(f"{name}: n={m.n_states} max|PI-VI|={gap:.2e} swaps={len(swaps)}")
    return ok, "; ".join(parts)


# 4


@criterion(4, "relevant closure on the snack domain", budget=1.0)
def c4():
    d = load_domain("coffee-extended")
    closure = set(relevant_closure(d, ["HUC"]).closure)
    h = build_heuristic(d, ["HUC"])
    ok = closure == {"HUC", "Office", "HRC", "HRS"} and h.n_clusters == 16
    return ok, f"closure={sorted(closure)} clusters={h.n_clusters}"


# 5


@criterion(5, "heuristic error bound", budget=2.0)
def c5():
    parts, ok = [], True
    for name in COFFEE:
        d, m, v = bundle(name)
        h = build_heuristic(d, ["HUC"])
        hv = h.state_values
        err = float(np.max(np.abs(hv - v)))
        in_range = bool(np.all(hv >= h.vmin) and np.all(hv <= h.vmax))
        ok &= in_range and err <= h.epsilon
        if name == "coffee-base":
            ok &= abs(h.epsilon - 1.0) <= 1e-9
        parts.append(f"{name}: eps={h.epsilon:.12g} max|Vh-V*|={err:.12g} in[vmin,vmax]={in_range}")
    return ok, "; ".join(parts)


# 6


def _sample_states():
    rng = np.random.default_rng(0)
    return {
        "coffee-base": list(range(64)),
        "coffee-extended": [int(s) for s in rng.choice(256, 200, replace=False)],
    }


@criterion(6, "utility pruning is exact", budget=60.0)
def c6():
    ok, totals = True, {}
    for name, states in _sample_states().items():
        _, m, _ = bundle(name)
        h = heuristic(name)
        for depth in (1, 2, 3, 4):
            on_total = off_total = 0
            for s in states:
                off = best_action(m, h, s, SearchConfig(depth=depth, utility_pruning=False, expectation_pruning=False))
                on = best_action(m, h, s, SearchConfig(depth=depth, utility_pruning=True, expectation_pruning=False))
                ok &= on.action == off.action and abs(on.value - off.value) <= 1e-12
                ok &= on.stats.nodes_expanded <= off.stats.nodes_expanded
                on_total += on.stats.nodes_expanded
                off_total += off.stats.nodes_expanded
            totals[(name, depth)] = (on_total, off_total)
            if depth >= 3:
                ok &= on_total < off_total
    detail = ", ".join(f"{n.split('-')[1]} d{d}: {a}/{b}" for (n, d), (a, b) in totals.items() if d >= 3)
    return ok, "identical actions and values; nodes on/off " + detail


# 7


@criterion(7, "expectation gate with an exact heuristic", budget=10.0)
def c7():
    ok, parts = True, []
    for name in COFFEE:
        d, m, v = bundle(name)
        h = build_heuristic(d, d.propositions)
        q = q_values(m, v)
        searcher = Searcher(m, h, SearchConfig(depth=1, utility_pruning=False, expectation_pruning=True))
        cuts = 0
        worst = 0.0
        for s in range(m.n_states):
            r = searcher.best_action(s)
            cuts += r.stats.expectation_cuts
            worst = max(worst, float(q[:, s].max() - q[r.action_index, s]))
        ok &= h.epsilon == 0.0 and worst <= 1e-9
        parts.append(f"{name}: eps={h.epsilon:g} worst Q gap={worst:.1e} gate cuts={cuts}")
    return ok, "; ".join(parts)


# 8


def _sweep(name: str) -> list[int]:
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = cli_main(["sweep", "--domain", name, "--ir", "HUC", "--depths", "0-5"])
    if code != 0:
        raise RuntimeError(f"sweep failed with exit code {code}")
    rows = [line.split(",") for line in buf.getvalue().splitlines() if line and not line.startswith("#")]
    return [int(r[1]) for r in rows[1:]]


@criterion(8, "policy quality improves with depth", budget=300.0)
def c8():
    base = _sweep("coffee-base")
    ext = _sweep("coffee-extended")
    base_ok = all(a >= b for a, b in zip(base, base[1:])) and base[-1] == 0
    limit = 0.05 * 256
    ext_ok = ext[-1] <= limit
    return base_ok and ext_ok, (
        f"coffee-base errors d0-5={base} (monotone, 0 at d5: {base_ok}); "
        f"coffee-extended errors d0-5={ext}, d5 {ext[-1]} vs limit {limit:g}: {ext_ok}"
    )


# 9


@criterion(9, "interleaving beats planning ahead", budget=120.0)
def c9():
    d, m, _ = bundle("coffee-extended")
    h = heuristic("coffee-extended")
    s0 = State.from_literals(d.propositions, HARDEST)
    ok, parts = True, []
    for caching in (True, False):
        for depth in (1, 2, 3):
            cfg = SearchConfig(depth=depth)
            ahead = search_only(m, s0, cfg, h, caching=caching).nodes_expanded
            done = search_execute(m, s0, cfg, h, seed=0, caching=caching).nodes_expanded
            ok &= 2 * done <= ahead
            parts.append(f"{'cache' if caching else 'nocache'} d{depth}: {done} vs {ahead}")
    # Revisits under caching: no search, and the entry is reused.
    t = run_episode(m, d.initial, SearchConfig(depth=2), h, 40, seed=0, caching=True)
    seen, revisit_ok, revisits = set(), True, 0
    for st in t.steps:
        if st.state in seen:
            revisits += 1
            revisit_ok &= st.cache_hit and st.stats is None
        seen.add(st.state)
    ok &= revisit_ok and revisits > 0
    return ok, "; ".join(parts) + f"; {revisits} revisits, all without search: {revisit_ok}"


# 10


@criterion(10, "determinism and sampling", budget=30.0)
def c10():
    d, m, _ = bundle("coffee-base")
    h = heuristic("coffee-base")

    def dump(seed):
        t = run_episode(m, d.initial, SearchConfig(depth=2), h, 50, seed=seed)
        return json.dumps({"steps": [st.to_dict(m) for st in t.steps], "return": t.discounted_return}).encode()

    same = dump(17) == dump(17) and dump(17) != dump(18)
    s = State.from_literals(d.propositions, ["Office", "Rain", "!Umbrella", "!Wet", "!HRC", "!HUC"])
    target = apply_effect(s, PartialAssignment.of("!Office", "Wet")).code
    sim = WorldSimulator(m, seed=0)
    move = m.action_index("Move")
    n = 100_000
    hits = sum(sim.step(s.code, move) == target for _ in range(n))
    freq = hits / n
    ok = same and abs(freq - 0.81) <= 0.01
    return ok, f"byte-identical replays: {same}; P(!Office, Wet)={freq:.4f}"


# 11


@criterion(11, "complexity envelope and linear growth", budget=120.0)
def c11():
    ok, worst = True, 0.0
    for name in ("coffee-base", "coffee-extended", "coffee-goal", "chain-2", "single-state"):
        d = load_domain(name)
        m = ground(d)
        if d.propositions:
            h = build_heuristic(d, ["HUC"] if "coffee" in name else d.propositions)
        else:
            lo, hi = m.value_bounds()
            h = HeuristicTable.from_state_values([lo], [NOOP], hi, lo)
        states = range(m.n_states) if m.n_states <= 64 else range(0, m.n_states, 5)
        for depth in (1, 2, 3):
            cap = node_envelope(m, depth)
            for s in states:
                n = best_action(m, h, s, SearchConfig(depth=depth)).stats.nodes_expanded
                ok &= n <= cap
                worst = max(worst, n / cap)
    d, m, _ = bundle("coffee-extended")
    h = heuristic("coffee-extended")
    steps = np.arange(10, 101, 10)
    nodes = np.array([
        run_episode(m, d.initial, SearchConfig(depth=2), h, int(k), seed=0, caching=False).nodes_expanded()
        for k in steps
    ], dtype=float)
    slope, icept = np.polyfit(steps, nodes, 1)
    resid = nodes - (slope * steps + icept)
    r2 = 1.0 - float(resid @ resid) / float(((nodes - nodes.mean()) ** 2).sum())
    ok &= r2 >= 0.99
    return ok, f"max nodes/envelope={worst:.3f}; nodes per step ~{slope:.1f}, R^2={r2:.5f}"


CRITERIA = [c1, c2, c3, c4, c5, c6, c7, c8, c9, c10, c11]


@pytest.mark.parametrize("check", CRITERIA, ids=[f"criterion_{c.number:02d}" for c in CRITERIA])
def test_criterion(check):
    out = check()
    print(out.line())
    assert out.passed, out.line()


if __name__ == "__main__":
    failed = 0
    for check in CRITERIA:
        out = check()
        print(out.line(), flush=True)
        failed += not out.passed
    sys.exit(1 if failed else 0)
