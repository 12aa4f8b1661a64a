"""Line-oriented text format for domains.

Example::

    discount 0.9
    props Office Rain Umbrella Wet HRC HUC
    reward { HUC, !Wet } 1.0
    action Move
      aspect
        case { Office }  => { !Office } 0.9 | {} 0.1
        case { !Office } => { Office } 0.9 | {} 0.1
      aspect
        case { Rain, !Umbrella } => { Wet } 0.9 | {} 0.1
        case default             => {} 1.0
    init { Office, Rain, !Umbrella, !Wet, !HRC, !HUC }
    goal { HUC }

``#`` starts a comment. Cases written before any ``aspect`` line open an
implicit single aspect. ``case default`` matches whatever no earlier case of
the same aspect matches and must come last.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .core import (
    ActionAspect,
    ActionSchema,
    Case,
    DomainSpec,
    PartialAssignment,
    ProbabilisticEffect,
    RewardRule,
    State,
)

KEYWORDS = frozenset({"discount", "props", "reward", "action", "aspect", "case", "default", "init", "goal"})
PROB_RE = re.compile(r"^\d+(\.\d{1,9})?$")
_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<arrow>=>)
  | (?P<punct>[{},|])
  | (?P<neg>[!¬~])
  | (?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class SourceSpan:
    line: int  # 1-based
    column: int  # 1-based, in characters
    start: int  # byte offsets into the UTF-8 source
    end: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


@dataclass(frozen=True)
class ParseError:
    span: SourceSpan
    message: str
    kind: str  # syntax | unknown-proposition | bad-probability | duplicate-name

    def __str__(self) -> str:
        return f"{self.span}: {self.kind}: {self.message}"


class DomainSyntaxError(ValueError):
    """Raised by :func:`parse_domain`; ``errors`` holds every problem found."""

    def __init__(self, errors: list[ParseError]):
        self.errors = errors
        super().__init__("\n".join(map(str, errors)))


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    span: SourceSpan


class _LineError(Exception):
    def __init__(self, error: ParseError):
        self.error = error


def _tokenize(line: str, lineno: int, line_byte: int) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(line):
        m = _TOKEN_RE.match(line, pos)
        start_b = line_byte + len(line[:pos].encode())
        if m is None:
            span = SourceSpan(lineno, pos + 1, start_b, start_b + len(line[pos].encode()))
            raise _LineError(ParseError(span, f"unexpected character {line[pos]!r}", "syntax"))
        kind = m.lastgroup
        if kind != "ws":
            text = m.group()
            toks.append(_Tok(kind, text, SourceSpan(lineno, pos + 1, start_b, start_b + len(text.encode()))))
        pos = m.end()
    return toks


class _Cursor:
    def __init__(self, toks: list[_Tok], eol: SourceSpan):
        self.toks = toks
        self.i = 0
        self.eol = eol

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self, what: str) -> _Tok:
        tok = self.peek()
        if tok is None:
            raise _LineError(ParseError(self.eol, f"expected {what} before end of line", "syntax"))
        self.i += 1
        return tok

    def expect(self, kind: str, text: str | None = None, what: str | None = None) -> _Tok:
        tok = self.next(what or text or kind)
        if tok.kind != kind or (text is not None and tok.text != text):
            raise _LineError(ParseError(tok.span, f"expected {what or text or kind}, found {tok.text!r}", "syntax"))
        return tok

    def done(self) -> None:
        tok = self.peek()
        if tok is not None:
            raise _LineError(ParseError(tok.span, f"unexpected {tok.text!r}", "syntax"))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.errors: list[ParseError] = []
        self.spans: dict[tuple, SourceSpan] = {}
        self.props: list[str] = []
        self.declared: set[str] = set()
        self.discount: float | None = None
        self.rewards: list[RewardRule] = []
        self.actions: list[tuple[str, list[list[Case]], SourceSpan]] = []
        self.action_names: set[str] = set()
        self.initial: State | None = None
        self.goals: list[PartialAssignment] = []
        self.current: tuple[str, list[list[Case]], SourceSpan] | None = None

    def error(self, span: SourceSpan, message: str, kind: str = "syntax") -> None:
        self.errors.append(ParseError(span, message, kind))

    def lines(self):
        byte = 0
        for lineno, raw in enumerate(self.text.splitlines(keepends=True), start=1):
            line = raw.rstrip("\r\n")
            cut = line.find("#")
            if cut >= 0:
                line = line[:cut]
            end_b = byte + len(line.encode())
            eol = SourceSpan(lineno, len(line) + 1, end_b, end_b)
            try:
                toks = _tokenize(line, lineno, byte)
            except _LineError as exc:
                self.errors.append(exc.error)
                toks = None
            yield lineno, toks, eol
            byte += len(raw.encode())

    def run(self) -> DomainSpec:
        lines = list(self.lines())
        # Propositions may be used before their declaration line.
        for _, toks, eol in lines:
            if toks and toks[0].kind == "ident" and toks[0].text == "props":
                self._props(_Cursor(toks[1:], eol))
        for _, toks, eol in lines:
            if not toks:
                continue
            head = toks[0]
            cur = _Cursor(toks[1:], eol)
            try:
                if head.kind != "ident" or head.text not in KEYWORDS - {"default"}:
                    raise _LineError(ParseError(head.span, f"expected a keyword, found {head.text!r}", "syntax"))
                if head.text != "props":
                    getattr(self, "_" + head.text)(cur, head)
            except _LineError as exc:
                self.errors.append(exc.error)
        self._close_action()
        if self.discount is None:
            first = next((t[0].span for _, t, _ in lines if t), SourceSpan(1, 1, 0, 0))
            self.error(first, "missing 'discount' declaration")
        if self.errors:
            raise DomainSyntaxError(sorted(self.errors, key=lambda e: (e.span.start, e.message)))
        actions = tuple(
            ActionSchema(name, tuple(ActionAspect(tuple(cases)) for cases in aspects))
            for name, aspects, _ in self.actions
        )
        return DomainSpec(
            tuple(self.props), actions, tuple(self.rewards), self.discount,
            self.initial, tuple(self.goals),
        )

    def _props(self, cur: _Cursor) -> None:
        self.spans.setdefault(("props",), cur.eol)
        while (tok := cur.peek()) is not None:
            cur.i += 1
            if tok.kind != "ident" or tok.text in KEYWORDS:
                self.error(tok.span, f"{tok.text!r} is not a valid proposition name")
            elif tok.text in self.declared:
                self.error(tok.span, f"proposition {tok.text!r} declared twice", "duplicate-name")
            else:
                self.props.append(tok.text)
                self.declared.add(tok.text)

    def _discount(self, cur: _Cursor, head: _Tok) -> None:
        tok = cur.expect("number", what="a number")
        cur.done()
        if self.discount is not None:
            raise _LineError(ParseError(head.span, "discount declared twice", "duplicate-name"))
        self.discount = float(tok.text)
        self.spans[("discount",)] = tok.span

    def _set(self, cur: _Cursor) -> PartialAssignment:
        cur.expect("punct", "{")
        lits: list[tuple[str, bool]] = []
        if (tok := cur.peek()) is not None and tok.text == "}":
            cur.i += 1
            return PartialAssignment()
        while True:
            pol = True
            tok = cur.next("a literal")
            if tok.kind == "neg":
                pol = False
                tok = cur.next("a proposition")
            if tok.kind != "ident":
                raise _LineError(ParseError(tok.span, f"expected a proposition, found {tok.text!r}", "syntax"))
            if tok.text not in self.declared:
                self.error(tok.span, f"undeclared proposition {tok.text!r}", "unknown-proposition")
            elif (tok.text, not pol) in lits:
                self.error(tok.span, f"{tok.text!r} appears with both polarities", "syntax")
            else:
                lits.append((tok.text, pol))
            sep = cur.expect("punct", what="',' or '}'")
            if sep.text == "}":
                return PartialAssignment.from_pairs(lits)
            if sep.text != ",":
                raise _LineError(ParseError(sep.span, f"expected ',' or '}}', found {sep.text!r}", "syntax"))

    def _reward(self, cur: _Cursor, head: _Tok) -> None:
        cond = self._set(cur)
        tok = cur.expect("number", what="a reward value")
        cur.done()
        self.spans[("reward", len(self.rewards))] = head.span
        self.rewards.append(RewardRule(cond, float(tok.text)))

    def _close_action(self) -> None:
        if self.current is None:
            return
        name, aspects, span = self.current
        if not aspects or any(not cases for cases in aspects):
            self.error(span, f"action {name!r} has an aspect without cases")
        self.current = None

    def _action(self, cur: _Cursor, head: _Tok) -> None:
        self._close_action()
        tok = cur.expect("ident", what="an action name")
        cur.done()
        if tok.text in KEYWORDS:
            raise _LineError(ParseError(tok.span, f"{tok.text!r} is a keyword", "syntax"))
        if tok.text in self.action_names:
            self.error(tok.span, f"action {tok.text!r} declared twice", "duplicate-name")
        self.action_names.add(tok.text)
        self.current = (tok.text, [], tok.span)
        self.actions.append(self.current)
        self.spans[("action", tok.text)] = tok.span

    def _aspect(self, cur: _Cursor, head: _Tok) -> None:
        cur.done()
        if self.current is None:
            raise _LineError(ParseError(head.span, "'aspect' outside an action", "syntax"))
        name, aspects, _ = self.current
        if aspects and not aspects[-1]:
            self.error(head.span, f"action {name!r} has an aspect without cases")
        self.spans[("action", name, len(aspects))] = head.span
        aspects.append([])

    def _probability(self, tok: _Tok) -> float:
        if tok.kind != "number":
            raise _LineError(ParseError(tok.span, f"expected a probability, found {tok.text!r}", "syntax"))
        if not PROB_RE.match(tok.text) or float(tok.text) > 1.0:
            self.error(tok.span, f"{tok.text} is not a probability in [0, 1] with at most 9 decimals", "bad-probability")
        return float(tok.text)

    def _case(self, cur: _Cursor, head: _Tok) -> None:
        if self.current is None:
            raise _LineError(ParseError(head.span, "'case' outside an action", "syntax"))
        name, aspects, _ = self.current
        if not aspects:
            self.spans[("action", name, 0)] = head.span
            aspects.append([])
        tok = cur.peek()
        if tok is not None and tok.kind == "ident" and tok.text == "default":
            cur.i += 1
            disc = None
        else:
            disc = self._set(cur)
        cur.expect("arrow", what="'=>'")
        branches = []
        while True:
            eff = self._set(cur)
            branches.append((eff, self._probability(cur.next("a probability"))))
            sep = cur.peek()
            if sep is None:
                break
            cur.expect("punct", "|", what="'|'")
        cases = aspects[-1]
        if cases and cases[-1].is_default:
            self.error(head.span, "'default' must be the last case of its aspect")
        self.spans[("action", name, len(aspects) - 1, len(cases))] = head.span
        cases.append(Case(disc, ProbabilisticEffect(tuple(branches))))

    def _init(self, cur: _Cursor, head: _Tok) -> None:
        pa = self._set(cur)
        cur.done()
        if self.initial is not None:
            raise _LineError(ParseError(head.span, "init declared twice", "duplicate-name"))
        if pa.props() <= self.declared:
            missing = [p for p in self.props if p not in pa.props()]
            if missing:
                raise _LineError(ParseError(head.span, f"init must assign every proposition; missing {', '.join(missing)}", "syntax"))
            self.initial = State.from_literals(self.props, pa)
        self.spans[("init",)] = head.span

    def _goal(self, cur: _Cursor, head: _Tok) -> None:
        pa = self._set(cur)
        cur.done()
        self.spans[("goal", len(self.goals))] = head.span
        self.goals.append(pa)


def parse_domain_with_source(text: str) -> tuple[DomainSpec, dict[tuple, SourceSpan]]:
    """Parse ``text`` and also return spans keyed like :attr:`Violation.where`."""
    p = _Parser(text)
    d = p.run()
    return d, p.spans


def parse_domain(text: str) -> DomainSpec:
    return parse_domain_with_source(text)[0]


def _fmt_prob(p: float) -> str:
    s = repr(p)
    if "e" in s or ("." in s and len(s.split(".")[1]) > 9):
        s = f"{p:.9f}".rstrip("0").rstrip(".")
    return s


def _fmt_set(d: DomainSpec, pa: PartialAssignment) -> str:
    order = {p: i for i, p in enumerate(d.propositions)}
    lits = sorted(pa.literals, key=lambda lit: (order.get(lit[0], len(order)), lit[0]))
    body = ", ".join(n if pol else f"!{n}" for n, pol in lits)
    return "{ " + body + " }" if body else "{}"


def serialize_domain(d: DomainSpec) -> str:
    out = [f"discount {d.discount!r}", "props " + " ".join(d.propositions)]
    out += [f"reward {_fmt_set(d, r.condition)} {r.value!r}" for r in d.rewards]
    for a in d.actions:
        out.append(f"action {a.name}")
        many = len(a.aspects) > 1
        for aspect in a.aspects:
            if many:
                out.append("  aspect")
            indent = "    " if many else "  "
            for case in aspect.cases:
                cond = "default" if case.discriminant is None else _fmt_set(d, case.discriminant)
                branches = " | ".join(f"{_fmt_set(d, e)} {_fmt_prob(p)}" for e, p in case.effect.branches)
                out.append(f"{indent}case {cond} => {branches}")
    if d.initial is not None:
        out.append("init " + "{ " + ", ".join(d.initial.literals()) + " }")
    out += [f"goal {_fmt_set(d, g)}" for g in d.goals]
    return "\n".join(out) + "\n"


BUNDLED = ("coffee-base", "coffee-extended", "coffee-goal", "chain-2", "single-state")


def bundled_domain_path(name: str) -> Path:
    if name not in BUNDLED:
        raise FileNotFoundError(f"no bundled domain named {name!r}")
    return Path(str(resources.files("dtplan") / "domains" / f"{name}.dom"))


def resolve_domain_path(ref: str | Path) -> Path:
    """A filesystem path, or the name of a bundled domain such as ``coffee-base``."""
    path = Path(ref)
    if path.exists() or str(ref) not in BUNDLED:
        return path
    return bundled_domain_path(str(ref))


def load_domain(ref: str | Path) -> DomainSpec:
    return parse_domain(resolve_domain_path(ref).read_text(encoding="utf-8"))
