"""Finite-trace LTL over protocol class traces, and the stop conditions.

A class trace records the class suggested after each administered test.
Three conditions end a protocol: the session budget is exhausted, the
suggestions oscillate between two classes four times, or the last three
suggestions agree. Formulas use strong next ``X`` (fails at the last
position) and weak next ``WX`` (holds there).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

from .classes import CLASS_ORDER, PatientClass

#: A protocol trace: one suggested class per completed test.
ClassTrace = tuple[PatientClass, ...]


class TraceError(ValueError):
    pass


class PositionError(TraceError):
    def __init__(self, position: int, length: int):
        super().__init__(f"position {position} outside trace of length {length}")


def make_trace(entries: Iterable[PatientClass | str]) -> ClassTrace:
    out = []
    for entry in entries:
        out.append(entry if isinstance(entry, PatientClass) else PatientClass.from_code(entry))
    return tuple(out)


def trace_string(trace: ClassTrace) -> str:
    return "".join(c.code for c in trace)


def parse_trace_lines(lines: Iterable[str]) -> ClassTrace:
    """One class letter per line; blank lines and ``#`` comments ignored."""
    entries = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line not in ("h", "m", "M"):
            raise TraceError(f"line {lineno}: expected h, m or M, got {line!r}")
        entries.append(PatientClass.from_code(line))
    return tuple(entries)


def load_trace(path: str | Path) -> ClassTrace:
    return parse_trace_lines(Path(path).read_text().splitlines())


# ---------------------------------------------------------------------------
# LTL over finite traces


class LtlfFormula:
    __slots__ = ()


@dataclass(frozen=True)
class Atom(LtlfFormula):
    name: str


@dataclass(frozen=True)
class TrueFormula(LtlfFormula):
    pass


@dataclass(frozen=True)
class FalseFormula(LtlfFormula):
    pass


@dataclass(frozen=True)
class Not(LtlfFormula):
    arg: LtlfFormula


@dataclass(frozen=True)
class And(LtlfFormula):
    left: LtlfFormula
    right: LtlfFormula


@dataclass(frozen=True)
class Or(LtlfFormula):
    left: LtlfFormula
    right: LtlfFormula


@dataclass(frozen=True)
class Implies(LtlfFormula):
    left: LtlfFormula
    right: LtlfFormula


@dataclass(frozen=True)
class Next(LtlfFormula):
    """Strong next: requires a successor position."""

    arg: LtlfFormula


@dataclass(frozen=True)
class WeakNext(LtlfFormula):
    """Weak next: vacuously true at the last position."""

    arg: LtlfFormula


@dataclass(frozen=True)
class Future(LtlfFormula):
    arg: LtlfFormula


@dataclass(frozen=True)
class Globally(LtlfFormula):
    arg: LtlfFormula


@dataclass(frozen=True)
class Until(LtlfFormula):
    left: LtlfFormula
    right: LtlfFormula


def eval_ltlf(trace: ClassTrace, formula: LtlfFormula, position: int = 0) -> bool:
    """Standard finite-trace semantics; atoms name class codes (h/m/M)."""
    n = len(trace)
    if not 0 <= position < n:
        raise PositionError(position, n)

    def ev(node: LtlfFormula, i: int) -> bool:
        if isinstance(node, Atom):
            return trace[i].code == node.name
        if isinstance(node, TrueFormula):
            return True
        if isinstance(node, FalseFormula):
            return False
        if isinstance(node, Not):
            return not ev(node.arg, i)
        if isinstance(node, And):
            return ev(node.left, i) and ev(node.right, i)
        if isinstance(node, Or):
            return ev(node.left, i) or ev(node.right, i)
        if isinstance(node, Implies):
            return not ev(node.left, i) or ev(node.right, i)
        if isinstance(node, Next):
            return i + 1 < n and ev(node.arg, i + 1)
        if isinstance(node, WeakNext):
            return i + 1 >= n or ev(node.arg, i + 1)
        if isinstance(node, Future):
            return any(ev(node.arg, j) for j in range(i, n))
        if isinstance(node, Globally):
            return all(ev(node.arg, j) for j in range(i, n))
        if isinstance(node, Until):
            for j in range(i, n):
                if ev(node.right, j):
                    return True
                if not ev(node.left, j):
                    return False
            return False
        raise TraceError(f"unknown formula node {node!r}")

    return ev(formula, position)


_LTLF_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>->|[()])"
)


def parse_ltlf(text: str) -> LtlfFormula:
    """Parse a finite-trace formula: atoms, not/and/or/->, X, WX, F, G, U."""
    tokens: list[tuple[str, int]] = []
    pos = 0
    while pos < len(text):
        m = _LTLF_TOKEN_RE.match(text, pos)
        if m is None:
            raise TraceError(f"position {pos}: unexpected character {text[pos]!r}")
        if m.lastgroup != "ws":
            tokens.append((m.group(), pos))
        pos = m.end()
    tokens.append(("", len(text)))
    i = 0

    def peek() -> str:
        return tokens[i][0]

    def advance() -> str:
        nonlocal i
        tok = tokens[i][0]
        i += 1
        return tok

    def fail(message: str):
        raise TraceError(f"position {tokens[i][1]}: {message}")

    def parse_implies() -> LtlfFormula:
        left = parse_until()
        if peek() == "->":
            advance()
            return Implies(left, parse_implies())
        return left

    def parse_until() -> LtlfFormula:
        left = parse_or()
        if peek() == "U":
            advance()
            return Until(left, parse_until())
        return left

    def parse_or() -> LtlfFormula:
        node = parse_and()
        while peek() == "or":
            advance()
            node = Or(node, parse_and())
        return node

    def parse_and() -> LtlfFormula:
        node = parse_unary()
        while peek() == "and":
            advance()
            node = And(node, parse_unary())
        return node

    def parse_unary() -> LtlfFormula:
        tok = peek()
        if tok == "not":
            advance()
            return Not(parse_unary())
        if tok == "X":
            advance()
            return Next(parse_unary())
        if tok == "WX":
            advance()
            return WeakNext(parse_unary())
        if tok == "F":
            advance()
            return Future(parse_unary())
        if tok == "G":
            advance()
            return Globally(parse_unary())
        if tok == "true":
            advance()
            return TrueFormula()
        if tok == "false":
            advance()
            return FalseFormula()
        if tok == "(":
            advance()
            node = parse_implies()
            if peek() != ")":
                fail("expected ')'")
            advance()
            return node
        if tok and tok not in ("U", ")", "->"):
            advance()
            return Atom(tok)
        fail("expected a formula")

    node = parse_implies()
    if peek() != "":
        fail(f"trailing input {peek()!r}")
    return node


# ---------------------------------------------------------------------------
# Stop conditions


class StopReason(Enum):
    NONE = "none"
    OSCILLATION = "oscillation"
    MAX_TESTS = "max_tests"
    STEADY_STATE = "steady_state"


@dataclass(frozen=True)
class StopDecision:
    """Whether the protocol must stop, why, and the witnessing positions."""

    stopped: bool
    reason: StopReason
    detail: tuple[int, ...] = ()

    def __post_init__(self):
        if self.stopped != (self.reason is not StopReason.NONE):
            raise TraceError("stopped flag inconsistent with reason")

    def to_dict(self) -> dict:
        return {
            "stopped": self.stopped,
            "reason": self.reason.value,
            "detail": list(self.detail),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StopDecision":
        return cls(
            stopped=bool(data["stopped"]),
            reason=StopReason(data["reason"]),
            detail=tuple(int(x) for x in data["detail"]),
        )


NO_STOP = StopDecision(False, StopReason.NONE)


def oscillation_formula(first: PatientClass, second: PatientClass, cycles: int = 4) -> LtlfFormula:
    """Nested-eventually form of the oscillation pattern for one pair.

    Note: this formula is slightly more permissive than the regex used by
    :func:`detect_oscillation` (it also tolerates gaps between cycles, not
    only inside them); every regex match satisfies the formula.
    """
    symbols = [first.code, second.code] * cycles
    node: LtlfFormula = Atom(symbols[-1])
    for code in reversed(symbols[:-1]):
        node = And(Atom(code), Future(node))
    return node


def _scan_alternation(trace: ClassTrace, first: PatientClass, second: PatientClass,
                      cycles: int, anchored: bool) -> tuple[int, ...] | None:
    """Match ``(first .* second)`` repeated ``cycles`` times, with exact
    regular-expression concatenation semantics: a gap may sit inside a
    cycle, but each following cycle starts right after the previous one.
    Greedy earliest valid cycle ends are complete here (any later end can
    be widened into an earlier one without breaking the continuation).
    """
    n = len(trace)
    if anchored:
        if not trace or trace[0] is not first:
            return None
        start = 0
    else:
        start = next((i for i, c in enumerate(trace) if c is first), n)
        if start >= n:
            return None
    positions: list[int] = []
    for k in range(cycles):
        last_cycle = k == cycles - 1
        end = start + 1
        while end < n:
            if trace[end] is second and (last_cycle or (end + 1 < n and trace[end + 1] is first)):
                break
            end += 1
        if end >= n:
            return None
        positions.extend((start, end))
        start = end + 1
    return tuple(positions)


def detect_oscillation(trace: ClassTrace, cycles: int = 4, anchored: bool = True) -> StopDecision:
    """Detect ``cycles`` alternations between any two distinct classes.

    Anchored matching requires the pattern to begin at position 0; the
    sliding variant allows any starting point. Both orientations of every
    class pair are tried.
    """
    for first in CLASS_ORDER:
        for second in CLASS_ORDER:
            if first is second:
                continue
            witness = _scan_alternation(trace, first, second, cycles, anchored)
            if witness is not None:
                return StopDecision(True, StopReason.OSCILLATION, witness)
    return NO_STOP


def detect_max_tests(trace: ClassTrace, max_tests: int = 10) -> StopDecision:
    """Stop once the session budget is reached."""
    if len(trace) >= max_tests:
        return StopDecision(True, StopReason.MAX_TESTS, (max_tests - 1,))
    return NO_STOP


def detect_steady_state(trace: ClassTrace, repeats: int = 3) -> StopDecision:
    """Stop when the last ``repeats`` suggestions name the same class."""
    if len(trace) >= repeats and len({c for c in trace[-repeats:]}) == 1:
        return StopDecision(
            True, StopReason.STEADY_STATE, tuple(range(len(trace) - repeats, len(trace)))
        )
    return NO_STOP


@dataclass(frozen=True)
class StopConfig:
    """Thresholds and evaluation order for the three stop conditions.

    The budget check runs first by default: it is the hard safety bound.
    """

    max_tests: int = 10
    steady_repeats: int = 3
    oscillation_cycles: int = 4
    oscillation_anchored: bool = True
    priority: tuple[StopReason, ...] = (
        StopReason.MAX_TESTS,
        StopReason.OSCILLATION,
        StopReason.STEADY_STATE,
    )


DEFAULT_STOP_CONFIG = StopConfig()


def check_stop(trace: ClassTrace, config: StopConfig = DEFAULT_STOP_CONFIG) -> StopDecision:
    """First firing condition in the configured priority order."""
    for reason in config.priority:
        if reason is StopReason.MAX_TESTS:
            decision = detect_max_tests(trace, config.max_tests)
        elif reason is StopReason.OSCILLATION:
            decision = detect_oscillation(
                trace, config.oscillation_cycles, config.oscillation_anchored
            )
        elif reason is StopReason.STEADY_STATE:
            decision = detect_steady_state(trace, config.steady_repeats)
        else:
            continue
        if decision.stopped:
            return decision
    return NO_STOP
