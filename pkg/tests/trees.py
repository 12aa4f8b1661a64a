"""Small hand-built search trees with known values.

Each builder returns ``(mdp, heuristic, root)``. Leaf states carry their
heuristic value; interior states have heuristic 0 so a wrongly truncated
search shows up in the numbers.
"""

from dtplan.abstraction import HeuristicTable
from dtplan.core import FlatMDP


def _table(n, values, vmax, vmin=0.0, epsilon=0.0):
    hv = [0.0] * n
    for s, v in values.items():
        hv[s] = v
    return HeuristicTable.from_state_values(hv, ["A"] * n, vmax, vmin, epsilon)


# two_level: s --A--> t 0.8 | u 0.2 ; s --B--> v 0.6 | w 0.4
S, T, U, V, W, X, Y, Z, UA, UB, LV, LW = range(12)
TWO_LEVEL_NAMES = dict(s=S, t=T, u=U, v=V, w=W, x=X, y=Y)


def two_level():
    trans = {
        (S, "A"): [(T, 0.8), (U, 0.2)],
        (S, "B"): [(V, 0.6), (W, 0.4)],
        (T, "A"): [(X, 0.5), (Y, 0.5)],
        (T, "B"): [(Z, 1.0)],
        (U, "A"): [(UA, 1.0)],
        (U, "B"): [(UB, 1.0)],
        (V, "A"): [(LV, 1.0)],
        (W, "A"): [(LW, 1.0)],
    }
    rewards = [0.0] * 12
    rewards[T], rewards[U], rewards[V], rewards[W] = 0.5, 0.6, 1.0, 1.0
    mdp = FlatMDP.from_explicit(12, ["A", "B"], trans, rewards, 0.9)
    h = _table(12, {X: 3.0, Y: 1.2, Z: 0.3, UA: 1.1, UB: 0.5, LV: 2.0, LW: 2.0}, vmax=10.0)
    return mdp, h, S


# utility_cut: root --a--> X ; root --b--> T 0.7 | U 0.1 | V 0.2
R0, RX, RT, RU, RV, LX, LT, LU, LVV = range(9)


def utility_cut():
    trans = {
        (R0, "a"): [(RX, 1.0)],
        (R0, "b"): [(RT, 0.7), (RU, 0.1), (RV, 0.2)],
        # "a" is a self-loop elsewhere, so the interesting child comes second
        (RX, "b"): [(LX, 1.0)],
        (RT, "b"): [(LT, 1.0)],
        (RU, "b"): [(LU, 1.0)],
        (RV, "b"): [(LVV, 1.0)],
    }
    rewards = [0.0] * 9
    rewards[RX], rewards[RT] = 2.0, 1.0
    mdp = FlatMDP.from_explicit(9, ["a", "b"], trans, rewards, 0.5)
    h = _table(9, {LX: 10.0, LT: 8.0, LU: 10.0, LVV: 10.0}, vmax=10.0)
    return mdp, h, R0


# expectation_gate: root --a--> X (worth 7) ; root --b--> T 0.5 | U 0.5 with estimates 5 and 3
G0, GX, GT, GU, GLX, GLT, GLU = range(7)


def expectation_gate():
    trans = {
        (G0, "a"): [(GX, 1.0)],
        (G0, "b"): [(GT, 0.5), (GU, 0.5)],
        (GX, "b"): [(GLX, 1.0)],
        (GT, "b"): [(GLT, 1.0)],
        (GU, "b"): [(GLU, 1.0)],
    }
    rewards = [0.0] * 7
    rewards[GX] = 2.0
    mdp = FlatMDP.from_explicit(7, ["a", "b"], trans, rewards, 0.5)
    h = _table(7, {GT: 5.0, GU: 3.0, GLX: 10.0, GLT: 10.0, GLU: 10.0}, vmax=10.0, epsilon=1.0)
    return mdp, h, G0
