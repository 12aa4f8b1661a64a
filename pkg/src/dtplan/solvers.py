"""Exact dynamic programming over a :class:`~dtplan.core.FlatMDP`.

These are the ground-truth oracles for the search and abstraction code.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import FlatMDP

# Actions whose backed-up value is within this of the best count as tied.
TIE_TOL = 1e-12


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float  # max-norm Bellman residual of the returned values
    elapsed: float = field(compare=False)
    history: tuple[float, ...] = field(default=(), compare=False)


def q_values(m: FlatMDP, v: np.ndarray) -> np.ndarray:
    """``R(s) + beta * E[v(t) | s, a]`` for every action and state, shape ``(m, n)``."""
    return m.rewards[None, :] + m.discount * m.expected(v)


def bellman_residual(m: FlatMDP, v: np.ndarray) -> float:
    return float(np.max(np.abs(q_values(m, v).max(axis=0) - v)))


def _lowest_best(scores: np.ndarray) -> np.ndarray:
    best = scores.max(axis=0)
    tied = scores >= best - TIE_TOL * np.maximum(1.0, np.abs(best))
    return np.argmax(tied, axis=0)


def policy_evaluation(m: FlatMDP, policy: np.ndarray, tol: float = 1e-9, max_iter: int = 1_000_000) -> np.ndarray:
    """Value of a fixed policy by successive substitution.

    Iterates ``V <- R + beta P_pi V`` until the fixed-point residual is at most ``tol``.
    """
    policy = np.asarray(policy, dtype=np.int64)
    if policy.shape != (m.n_states,):
        raise ValueError(f"policy must assign one action to each of {m.n_states} states")
    if policy.min(initial=0) < 0 or policy.max(initial=0) >= m.n_actions:
        raise ValueError("policy refers to an action outside the MDP")
    idx, prob = m.dense
    states = np.arange(m.n_states)
    nxt, p = idx[policy, states], prob[policy, states]
    beta = m.discount
    v = np.zeros(m.n_states)
    for _ in range(max_iter):
        new = m.rewards + beta * (p * v[nxt]).sum(axis=1)
        delta = float(np.max(np.abs(new - v))) if m.n_states else 0.0
        v = new
        # residual of the new iterate is at most beta * delta
        if beta * delta <= 0.5 * tol:
            break
    return v


def policy_iteration(m: FlatMDP, max_rounds: int = 10_000) -> tuple[np.ndarray, np.ndarray, SolveReport]:
    """Howard's policy iteration, starting from action 0 everywhere.

    A state's action only changes when another action is strictly better, so
    the loop cannot cycle between tied policies.
    """
    start = time.perf_counter()
    policy = np.zeros(m.n_states, dtype=np.int64)
    v = policy_evaluation(m, policy, tol=1e-11)
    rounds = 0
    while rounds < max_rounds:
        rounds += 1
        q = m.expected(v)
        best = q.max(axis=0)
        current = q[policy, np.arange(m.n_states)]
        improve = current < best - TIE_TOL * np.maximum(1.0, np.abs(best)) - 1e-10
        if not improve.any():
            break
        policy = np.where(improve, _lowest_best(q), policy)
        v = policy_evaluation(m, policy, tol=1e-11)
    report = SolveReport(rounds, bellman_residual(m, v), time.perf_counter() - start)
    return policy, v, report


def value_iteration(m: FlatMDP, tol: float = 1e-6, max_iter: int = 1_000_000) -> tuple[np.ndarray, SolveReport]:
    """Bellman backups from zero until the sweep change is at most ``tol (1 - beta) / (2 beta)``.

    With that stopping rule the returned values are within ``tol`` of optimal.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    start = time.perf_counter()
    beta = m.discount
    threshold = tol * (1.0 - beta) / (2.0 * beta)
    v = np.zeros(m.n_states)
    history = []
    for it in range(1, max_iter + 1):
        new = q_values(m, v).max(axis=0)
        delta = float(np.max(np.abs(new - v)))
        history.append(delta)
        v = new
        if delta <= threshold:
            break
    report = SolveReport(it, bellman_residual(m, v), time.perf_counter() - start, tuple(history))
    return v, report


def greedy_policy(m: FlatMDP, v: np.ndarray) -> np.ndarray:
    """Per state, the action maximizing ``E[v(t)]``; ties go to the lowest action index."""
    return _lowest_best(m.expected(np.asarray(v, dtype=float)))


def improving_swaps(m: FlatMDP, policy: np.ndarray, tol: float = 1e-9) -> list[tuple[int, int]]:
    """``(state, action)`` pairs where switching that one state's action raises its value by more than ``tol``."""
    v = policy_evaluation(m, policy, tol=1e-11)
    q = q_values(m, v)
    better = q > v[None, :] + tol
    return [(int(s), int(a)) for a, s in zip(*np.nonzero(better))]
