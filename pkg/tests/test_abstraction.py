import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtplan.abstraction import (
    HeuristicTable,
    build_heuristic,
    project_domain,
    relevant_closure,
    reward_influence,
)
from dtplan.core import DomainError, validate
from dtplan.lang import load_domain

EXT_PROPS = ("Office", "Rain", "Umbrella", "Wet", "HRC", "HUC", "HRS", "HUS")


def test_closure_on_base(base):
    r = relevant_closure(base.domain, ["HUC"])
    assert r.closure == ("Office", "HRC", "HUC")
    pulled = {p: (a, disc) for p, a, disc in r.trace}
    assert pulled["HUC"] == (None, None)
    assert pulled["Office"][0] == "DelCoffee"


def test_closure_on_extended(extended):
    assert set(relevant_closure(extended.domain, ["HUC"]).closure) == {"HUC", "Office", "HRC", "HRS"}


def test_closure_rejects_bad_input(base):
    with pytest.raises(DomainError):
        relevant_closure(base.domain, [])
    with pytest.raises(DomainError, match="Nope"):
        relevant_closure(base.domain, ["Nope"])


@settings(max_examples=40, deadline=None)
@given(st.sets(st.sampled_from(EXT_PROPS), min_size=1), st.sets(st.sampled_from(EXT_PROPS)))
def test_closure_is_a_monotone_fixpoint(ir, extra):
    d = load_domain("coffee-extended")
    c = set(relevant_closure(d, ir).closure)
    assert ir <= c
    assert set(relevant_closure(d, c).closure) == c
    assert c <= set(relevant_closure(d, ir | extra).closure)


def test_projection_of_extended(extended):
    r = relevant_closure(extended.domain, ["HUC"])
    p = project_domain(extended.domain, r)
    assert validate(p) == []
    move = p.action("Move")
    assert len(move.aspects) == 1  # the Rain/Wet aspect is gone
    (umbrella,) = p.action("GetUmbrella").aspects
    assert all(c.effect.is_trivial() for c in umbrella.cases)
    # reward rules mention Wet and HUS, so clusters get midpoint rules instead
    assert len(p.rewards) == 16


def test_base_projection_keeps_structure(base):
    p = project_domain(base.domain, relevant_closure(base.domain, ["HUC"]))
    assert p.propositions == ("Office", "HRC", "HUC")
    assert p.initial is not None and p.initial.literals() == ["Office", "!HRC", "!HUC"]


def test_base_heuristic(base):
    h = base.h
    assert h.n_clusters == 8
    assert h.epsilon == pytest.approx(1.0, abs=1e-9)
    assert (h.vmin, h.vmax) == pytest.approx((0.0, 10.0))
    assert len(h.state_values) == 64


def test_extended_heuristic(extended):
    h = extended.h
    assert h.n_clusters == 16
    assert h.vmax == pytest.approx(15.0)
    assert h.epsilon == pytest.approx(3.5)


@pytest.mark.parametrize("which", ["base", "extended"])
def test_error_bound_holds(which, request):
    b = request.getfixturevalue(which)
    hv = b.h.state_values
    assert np.all(hv >= b.h.vmin - 1e-9) and np.all(hv <= b.h.vmax + 1e-9)
    assert np.max(np.abs(hv - b.values)) <= b.h.epsilon + 1e-9


def test_identity_abstraction_is_exact(base):
    h = build_heuristic(base.domain, base.domain.propositions)
    assert h.epsilon == 0.0
    assert h.n_clusters == 64
    assert np.max(np.abs(h.state_values - base.values)) < 1e-8


def test_export(base):
    data = json.loads(base.h.to_json())
    assert data["closure"] == ["Office", "HRC", "HUC"]
    assert data["clusters"][5]["mask"] == "101"
    assert data["clusters"][5]["assignment"] == {"Office": True, "HRC": False, "HUC": True}
    assert data["immediately_relevant"] == ["HUC"]
    assert {t["proposition"] for t in data["trace"]} == {"Office", "HRC", "HUC"}


def test_default_action_lookup(base):
    h = base.h
    s = base.domain.initial
    assert h.default_action(s) == h.default_actions[h.cluster_of[s.code]]
    assert h.value(s) == h.values[h.cluster_of[s.code]]


def test_table_from_state_values():
    h = HeuristicTable.from_state_values([1.0, 2.0], ["a", "b"], vmax=5, vmin=0)
    assert h.value(1) == 2.0 and h.default_action(0) == "a" and h.epsilon == 0.0


def test_reward_influence(base):
    ranked = reward_influence(base.domain)
    assert ranked[0] == ("HUC", pytest.approx(0.8))
    assert [p for p, _ in ranked] == ["HUC", "Wet"]
