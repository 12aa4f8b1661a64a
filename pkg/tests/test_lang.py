import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtplan.core import (
    ActionAspect,
    ActionSchema,
    Case,
    DomainSpec,
    PartialAssignment,
    ProbabilisticEffect,
    RewardRule,
    State,
)
from dtplan.lang import (
    BUNDLED,
    DomainSyntaxError,
    load_domain,
    parse_domain,
    parse_domain_with_source,
    resolve_domain_path,
    serialize_domain,
)

MINI = """\
discount 0.5
props A B   # trailing comment
reward { A } 1
action Flip
  case { A }  => { !A } 0.75 | {} 0.25
  case { !A } => { A } 1.0
init { !A, B }
"""


def errors_of(text):
    with pytest.raises(DomainSyntaxError) as info:
        parse_domain(text)
    return info.value.errors


def test_minimal_domain():
    d = parse_domain(MINI)
    assert d.propositions == ("A", "B")
    assert d.discount == 0.5
    assert d.rewards == (RewardRule(PartialAssignment.of("A"), 1.0),)
    (flip,) = d.actions
    assert flip.name == "Flip"
    assert flip.aspects[0].cases[0].effect.branches[0] == (PartialAssignment.of("!A"), 0.75)
    assert d.initial == State.from_literals(("A", "B"), ["!A", "B"])


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_round_trip(name):
    d = load_domain(name)
    assert parse_domain(serialize_domain(d)) == d


def test_multi_aspect_actions_keep_their_aspects():
    d = load_domain("coffee-base")
    move = d.action("Move")
    assert len(move.aspects) == 2
    assert move.aspects[1].cases[1].discriminant is None
    assert "  aspect" in serialize_domain(d)


def test_bundled_lookup_prefers_existing_paths(tmp_path, monkeypatch):
    assert resolve_domain_path("coffee-base").name == "coffee-base.dom"
    monkeypatch.chdir(tmp_path)
    (tmp_path / "coffee-base").write_text(MINI)
    assert resolve_domain_path("coffee-base").resolve() == tmp_path / "coffee-base"


def test_spans_point_at_cases():
    d, spans = parse_domain_with_source(MINI)
    span = spans[("action", "Flip", 0, 1)]
    assert (span.line, span.column) == (6, 3)
    assert MINI.encode()[span.start:span.end] == b"case"
    assert spans[("reward", 0)].line == 3
    assert d.actions[0].name == "Flip"


def test_undeclared_proposition():
    (err,) = errors_of("discount 0.9\nprops A\nreward { Z } 1\n")
    assert err.kind == "unknown-proposition"
    assert (err.span.line, err.span.column) == (3, 10)


@pytest.mark.parametrize("prob", ["1.5", "0.1234567891", "-0.5"])
def test_bad_probability(prob):
    text = f"discount 0.9\nprops A\naction Go\n  case default => {{ A }} {prob}\n"
    kinds = {e.kind for e in errors_of(text)}
    assert kinds & {"bad-probability", "syntax"}
    if prob != "-0.5":
        assert "bad-probability" in kinds


def test_every_bad_line_is_reported():
    text = "discount 0.9\nprops A\nreward { A }\nfrobnicate\naction\n"
    lines = [e.span.line for e in errors_of(text)]
    assert lines == [3, 4, 5]


def test_missing_discount():
    (err,) = errors_of("props A\n")
    assert "discount" in err.message


def test_init_must_be_total():
    (err,) = errors_of("discount 0.9\nprops A B\ninit { A }\n")
    assert "missing B" in err.message


def test_duplicate_names():
    kinds = [e.kind for e in errors_of("discount 0.9\nprops A A\n")]
    assert kinds == ["duplicate-name"]
    text = "discount 0.9\nprops A\naction Go\n  case default => {} 1\naction Go\n  case default => {} 1\n"
    assert [e.kind for e in errors_of(text)] == ["duplicate-name"]


def test_probability_sums_are_left_to_validation():
    d = parse_domain("discount 0.9\nprops A\naction Go\n  case default => { A } 0.5\n")
    assert d.actions[0].aspects[0].cases[0].effect.total() == 0.5


# Random well-formed domains survive a print/parse cycle unchanged.

NAMES = ["P", "Q", "R", "S"]


@st.composite
def effects(draw, props):
    k = draw(st.integers(1, 3))
    weights = draw(st.lists(st.integers(1, 5), min_size=k, max_size=k))
    total = sum(weights)
    branches = []
    for w in weights:
        lits = draw(st.dictionaries(st.sampled_from(props), st.booleans(), max_size=2))
        branches.append((PartialAssignment.from_pairs(lits.items()), round(w / total, 9)))
    return ProbabilisticEffect(tuple(branches))


@st.composite
def aspects(draw, props):
    p = draw(st.sampled_from(props))
    if draw(st.booleans()):
        cases = (Case(PartialAssignment.of(p), draw(effects(props))), Case(None, draw(effects(props))))
    else:
        cases = (
            Case(PartialAssignment.of(p), draw(effects(props))),
            Case(PartialAssignment.of("!" + p), draw(effects(props))),
        )
    return ActionAspect(cases)


@st.composite
def domains(draw):
    props = tuple(NAMES[: draw(st.integers(1, len(NAMES)))])
    n_actions = draw(st.integers(0, 3))
    actions = tuple(
        ActionSchema(f"act{i}", tuple(draw(st.lists(aspects(props), min_size=1, max_size=2))))
        for i in range(n_actions)
    )
    rewards = tuple(
        RewardRule(PartialAssignment.from_pairs(lits.items()), float(v))
        for lits, v in draw(st.lists(
            st.tuples(st.dictionaries(st.sampled_from(props), st.booleans(), max_size=2), st.integers(-3, 3)),
            max_size=3,
        ))
    )
    discount = draw(st.sampled_from([0.5, 0.9, 0.95]))
    initial = State(props, draw(st.integers(0, 2 ** len(props) - 1))) if draw(st.booleans()) else None
    return DomainSpec(props, actions, rewards, discount, initial)


@settings(max_examples=150, deadline=None)
@given(domains())
def test_round_trip(d):
    assert parse_domain(serialize_domain(d)) == d
