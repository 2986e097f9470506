"""PCTL parsing and exact model checking over labelled Markov-chain PDFAs.

Unbounded until is computed the standard way: identify the prob-0 and
prob-1 state sets by backward graph fixpoints, then solve the linear
system for the remaining states (dense LU below ``DENSE_STATE_LIMIT``
states, Gauss-Seidel sweeps above). ``F phi`` is ``true U phi`` and
``G phi`` is the dual of ``F (not phi)``.

One step beyond plain PCTL: ``F``/``G`` operands may mention ``X`` over a
state formula (e.g. ``G (b -> X g)``), interpreted as a predicate over
the traversed edges. Such properties reduce to the probability of ever
crossing a predicate-satisfying edge, computed with the same
qualitative-sets-plus-linear-system scheme on edges.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from .game import Pdfa, UnknownAtomError

#: Models at least this large use iterative sweeps instead of dense LU.
DENSE_STATE_LIMIT = 2000

#: Tolerance when comparing a computed probability against a bound.
BOUND_TOL = 1e-9

GS_TOL = 1e-10
GS_MAX_SWEEPS = 10**6


class PctlError(ValueError):
    """Base class for property-language errors."""


class PctlParseError(PctlError):
    def __init__(self, message: str, position: int, expected: tuple[str, ...] = ()):
        detail = f"at position {position}: {message}"
        if expected:
            detail += f" (expected {', '.join(expected)})"
        super().__init__(detail)
        self.position = position
        self.expected = expected


class CheckError(PctlError):
    """Structurally valid formula that the checker cannot evaluate."""


class InternalSolverError(RuntimeError):
    """Linear solve failed after qualitative preprocessing; internal fault."""


# ---------------------------------------------------------------------------
# Formula AST


class Formula:
    __slots__ = ()


@dataclass(frozen=True)
class Atom(Formula):
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class TrueFormula(Formula):
    def __str__(self) -> str:
        return "true"


@dataclass(frozen=True)
class FalseFormula(Formula):
    def __str__(self) -> str:
        return "false"


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula

    def __str__(self) -> str:
        return f"not ({self.arg})"


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"({self.left} and {self.right})"


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"({self.left} or {self.right})"


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"({self.left} -> {self.right})"


@dataclass(frozen=True)
class Next(Formula):
    arg: Formula

    def __str__(self) -> str:
        return f"X {self.arg}"


@dataclass(frozen=True)
class Future(Formula):
    arg: Formula

    def __str__(self) -> str:
        return f"F {self.arg}"


@dataclass(frozen=True)
class Globally(Formula):
    arg: Formula

    def __str__(self) -> str:
        return f"G {self.arg}"


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"({self.left} U {self.right})"


#: Probability bound operators; "=?" queries the value instead of bounding it.
BOUND_OPS = ("=?", "=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Prob(Formula):
    op: str
    bound: float | None
    path: Formula

    def __str__(self) -> str:
        bound = "=?" if self.op == "=?" else f"{self.op}{self.bound}"
        return f"P {bound} [{self.path}]"


PctlFormula = Formula


# ---------------------------------------------------------------------------
# Parser

_KEYWORDS = {"P", "X", "F", "G", "U", "not", "and", "or", "true", "false"}

_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<number>\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>=\?|<=|>=|->|[=<>\[\]()])"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "number", "name", the operator text itself, or "end"
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PctlParseError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup == "number":
            tokens.append(_Token("number", m.group(), pos))
        elif m.lastgroup == "name":
            tokens.append(_Token("name", m.group(), pos))
        elif m.lastgroup == "op":
            tokens.append(_Token(m.group(), m.group(), pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def match(self, text: str) -> bool:
        if self.peek().text == text and self.peek().kind != "end":
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Token:
        tok = self.peek()
        if tok.text != text or tok.kind == "end":
            self.fail(f"unexpected {self._describe(tok)}", (text,))
        return self.advance()

    @staticmethod
    def _describe(tok: _Token) -> str:
        return "end of input" if tok.kind == "end" else repr(tok.text)

    def fail(self, message: str, expected: tuple[str, ...] = ()):
        raise PctlParseError(message, self.peek().pos, expected)

    # -- state formulas ----------------------------------------------------

    def parse_formula(self) -> Formula:
        node = self.parse_state()
        tok = self.peek()
        if tok.kind != "end":
            self.fail(f"trailing input {self._describe(tok)}")
        return node

    def parse_state(self) -> Formula:
        left = self.parse_or()
        if self.match("->"):
            return Implies(left, self.parse_state())
        return left

    def parse_or(self) -> Formula:
        node = self.parse_and()
        while self.peek().text == "or" and self.peek().kind == "name":
            self.advance()
            node = Or(node, self.parse_and())
        return node

    def parse_and(self) -> Formula:
        node = self.parse_unary()
        while self.peek().text == "and" and self.peek().kind == "name":
            self.advance()
            node = And(node, self.parse_unary())
        return node

    def parse_unary(self) -> Formula:
        tok = self.peek()
        if tok.kind == "name":
            if tok.text == "not":
                self.advance()
                return Not(self.parse_unary())
            if tok.text == "true":
                self.advance()
                return TrueFormula()
            if tok.text == "false":
                self.advance()
                return FalseFormula()
            if tok.text == "P":
                return self.parse_prob()
            if tok.text in ("X", "F", "G", "U"):
                self.fail(f"temporal operator {tok.text!r} outside P[...]")
            self.advance()
            return Atom(tok.text)
        if tok.text == "(":
            self.advance()
            node = self.parse_state()
            self.expect(")")
            return node
        self.fail(
            f"unexpected {self._describe(tok)}",
            ("atom", "not", "true", "false", "P", "("),
        )

    def parse_prob(self) -> Formula:
        self.expect("P")
        op, bound = self.parse_bound()
        self.expect("[")
        path = self.parse_path()
        self.expect("]")
        return Prob(op, bound, path)

    def parse_bound(self) -> tuple[str, float | None]:
        tok = self.peek()
        if tok.text == "=?":
            self.advance()
            return "=?", None
        if tok.text in ("=", "<", "<=", ">", ">="):
            op = self.advance().text
            num = self.peek()
            if num.kind != "number":
                self.fail(f"unexpected {self._describe(num)}", ("probability bound",))
            value = float(self.advance().text)
            if not 0.0 <= value <= 1.0:
                raise PctlParseError(f"probability bound {value} outside [0,1]", num.pos)
            return op, value
        self.fail(f"unexpected {self._describe(tok)}", BOUND_OPS)

    # -- path formulas -----------------------------------------------------

    def parse_path(self) -> Formula:
        tok = self.peek()
        if tok.kind == "name" and tok.text in ("F", "G"):
            self.advance()
            arg = self.parse_step_unary()
            return Future(arg) if tok.text == "F" else Globally(arg)
        if tok.kind == "name" and tok.text == "X":
            self.advance()
            node = Next(self.parse_unary())
            if self.peek().text == "U":
                self.fail("'U' cannot follow an X path formula")
            return node
        left = self.parse_step()
        utok = self.peek()
        if not (utok.kind == "name" and utok.text == "U"):
            self.fail(f"unexpected {self._describe(utok)}", ("U",))
        if _contains_next(left):
            raise PctlParseError("X is not supported in U operands", utok.pos)
        self.advance()
        right = self.parse_step()
        if _contains_next(right):
            raise PctlParseError("X is not supported in U operands", utok.pos)
        return Until(left, right)

    # step formulas: boolean layer that may mention one level of X
    def parse_step(self) -> Formula:
        left = self.parse_step_or()
        if self.match("->"):
            return Implies(left, self.parse_step())
        return left

    def parse_step_or(self) -> Formula:
        node = self.parse_step_and()
        while self.peek().text == "or" and self.peek().kind == "name":
            self.advance()
            node = Or(node, self.parse_step_and())
        return node

    def parse_step_and(self) -> Formula:
        node = self.parse_step_unary()
        while self.peek().text == "and" and self.peek().kind == "name":
            self.advance()
            node = And(node, self.parse_step_unary())
        return node

    def parse_step_unary(self) -> Formula:
        tok = self.peek()
        if tok.kind == "name":
            if tok.text == "not":
                self.advance()
                return Not(self.parse_step_unary())
            if tok.text == "X":
                self.advance()
                return Next(self.parse_unary())
            if tok.text == "true":
                self.advance()
                return TrueFormula()
            if tok.text == "false":
                self.advance()
                return FalseFormula()
            if tok.text == "P":
                return self.parse_prob()
            if tok.text in ("F", "G", "U"):
                self.fail(f"nested temporal operator {tok.text!r} in a path formula")
            self.advance()
            return Atom(tok.text)
        if tok.text == "(":
            self.advance()
            node = self.parse_step()
            self.expect(")")
            return node
        self.fail(
            f"unexpected {self._describe(tok)}",
            ("atom", "not", "true", "false", "X", "("),
        )


def parse_pctl(text: str) -> Formula:
    """Parse a PCTL property; raises :class:`PctlParseError` with position."""
    return _Parser(text).parse_formula()


def _contains_next(node: Formula) -> bool:
    if isinstance(node, Next):
        return True
    if isinstance(node, Not):
        return _contains_next(node.arg)
    if isinstance(node, (And, Or, Implies)):
        return _contains_next(node.left) or _contains_next(node.right)
    return False


def _collect_atoms(node: Formula, out: set[str]) -> None:
    if isinstance(node, Atom):
        out.add(node.name)
    elif isinstance(node, Not):
        _collect_atoms(node.arg, out)
    elif isinstance(node, (And, Or, Implies, Until)):
        _collect_atoms(node.left, out)
        _collect_atoms(node.right, out)
    elif isinstance(node, (Next, Future, Globally)):
        _collect_atoms(node.arg, out)
    elif isinstance(node, Prob):
        _collect_atoms(node.path, out)


# ---------------------------------------------------------------------------
# Checker


class _Dtmc:
    """Indexed Markov-chain view of a PDFA (edges with actions summed out)."""

    def __init__(self, model: Pdfa):
        self.model = model
        self.n = len(model.states)
        index = model.state_index
        src, dst, p = [], [], []
        for state in model.states:
            si = index[state]
            for successor, mass in model.markov_rows[state]:
                src.append(si)
                dst.append(index[successor])
                p.append(mass)
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.p = np.asarray(p, dtype=np.float64)
        pred_edges: list[list[int]] = [[] for _ in range(self.n)]
        for ei in range(len(self.src)):
            pred_edges[self.dst[ei]].append(ei)
        self.pred_edges = pred_edges

    def label_vector(self, atom: str) -> np.ndarray:
        out = np.zeros(self.n, dtype=bool)
        for state, atoms in self.model.labels.items():
            if atom in atoms:
                out[self.model.state_index[state]] = True
        return out

    def backward_reach(self, start: np.ndarray, edge_ok: np.ndarray | None,
                       src_ok: np.ndarray | None = None) -> np.ndarray:
        """States that can reach ``start`` via edges allowed by the masks."""
        mark = start.copy()
        stack = list(np.flatnonzero(start))
        while stack:
            t = stack.pop()
            for ei in self.pred_edges[t]:
                if edge_ok is not None and not edge_ok[ei]:
                    continue
                s = self.src[ei]
                if mark[s] or (src_ok is not None and not src_ok[s]):
                    continue
                mark[s] = True
                stack.append(s)
        return mark


@lru_cache(maxsize=None)
def _dtmc(model: Pdfa) -> _Dtmc:
    return _Dtmc(model)


def _solve_system(d: _Dtmc, maybe: np.ndarray, allowed: np.ndarray,
                  decided: np.ndarray, extra: np.ndarray) -> np.ndarray:
    """Solve x = A x + b on the ``maybe`` states.

    ``decided`` holds fixed values outside ``maybe``; ``allowed`` masks the
    edges that continue the system (excluded edges contribute via
    ``extra``, the per-state constant term).
    """
    idx = np.flatnonzero(maybe)
    k = len(idx)
    pos = np.full(d.n, -1, dtype=np.int64)
    pos[idx] = np.arange(k)

    from_maybe = allowed & maybe[d.src]
    const_sel = from_maybe & ~maybe[d.dst]
    b = extra[idx].copy()
    np.add.at(b, pos[d.src[const_sel]], d.p[const_sel] * decided[d.dst[const_sel]])

    mat_sel = from_maybe & maybe[d.dst]
    rows = pos[d.src[mat_sel]]
    cols = pos[d.dst[mat_sel]]
    vals = d.p[mat_sel]

    if d.n < DENSE_STATE_LIMIT:
        a = np.zeros((k, k))
        np.add.at(a, (rows, cols), vals)
        try:
            x = np.linalg.solve(np.eye(k) - a, b)
        except np.linalg.LinAlgError as exc:
            raise InternalSolverError(f"dense solve failed: {exc}") from exc
        return x

    # Gauss-Seidel: split I - A into lower (with diagonal) and strict upper
    m = sp.coo_matrix((-vals, (rows, cols)), shape=(k, k)).tocsr()
    m = m + sp.eye(k, format="csr")
    lower = sp.tril(m, k=0, format="csr")
    upper = sp.triu(m, k=1, format="csr")
    x = np.zeros(k)
    for _ in range(GS_MAX_SWEEPS):
        x_next = spsolve_triangular(lower, b - upper @ x, lower=True)
        delta = float(np.max(np.abs(x_next - x))) if k else 0.0
        x = x_next
        if delta < GS_TOL:
            return x
    raise InternalSolverError(
        f"Gauss-Seidel did not converge within {GS_MAX_SWEEPS} sweeps"
    )


def _until_sets(d: _Dtmc, phi1: np.ndarray, phi2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Prob-1 and prob-0 state sets for ``phi1 U phi2``."""
    reach = d.backward_reach(phi2, edge_ok=None, src_ok=phi1)
    no = ~reach
    bad = d.backward_reach(no, edge_ok=None, src_ok=phi1 & ~phi2)
    yes = ~bad
    return yes, no


def _until_vector(d: _Dtmc, phi1: np.ndarray, phi2: np.ndarray) -> np.ndarray:
    yes, no = _until_sets(d, phi1, phi2)
    x = np.zeros(d.n)
    x[yes] = 1.0
    maybe = ~(yes | no)
    if maybe.any():
        allowed = phi1[d.src] & ~phi2[d.src]
        x[maybe] = _solve_system(d, maybe, allowed, x, np.zeros(d.n))
    return np.clip(x, 0.0, 1.0)


def _edge_reach_vector(d: _Dtmc, hit: np.ndarray) -> np.ndarray:
    """Probability of ever traversing an edge in the ``hit`` set."""
    hit_mass = np.zeros(d.n)
    np.add.at(hit_mass, d.src[hit], d.p[hit])

    starts = hit_mass > 0.0
    can = d.backward_reach(starts, edge_ok=None)
    # safe core: largest set whose full outgoing non-hit mass stays inside
    in_core = np.ones(d.n, dtype=bool)
    while True:
        mass = np.zeros(d.n)
        sel = ~hit & in_core[d.dst]
        np.add.at(mass, d.src[sel], d.p[sel])
        drop = in_core & (mass < 1.0 - 1e-12)
        if not drop.any():
            break
        in_core &= ~drop
    survive = d.backward_reach(in_core, edge_ok=~hit)

    x = np.zeros(d.n)
    yes = ~survive
    x[yes] = 1.0
    maybe = can & survive
    if maybe.any():
        x[maybe] = _solve_system(d, maybe, ~hit, x, hit_mass)
    return np.clip(x, 0.0, 1.0)


def _eval_state(d: _Dtmc, node: Formula) -> np.ndarray:
    if isinstance(node, Atom):
        return d.label_vector(node.name)
    if isinstance(node, TrueFormula):
        return np.ones(d.n, dtype=bool)
    if isinstance(node, FalseFormula):
        return np.zeros(d.n, dtype=bool)
    if isinstance(node, Not):
        return ~_eval_state(d, node.arg)
    if isinstance(node, And):
        return _eval_state(d, node.left) & _eval_state(d, node.right)
    if isinstance(node, Or):
        return _eval_state(d, node.left) | _eval_state(d, node.right)
    if isinstance(node, Implies):
        return ~_eval_state(d, node.left) | _eval_state(d, node.right)
    if isinstance(node, Prob):
        if node.op == "=?":
            raise CheckError("'=?' can only appear at the top level of a property")
        p = _path_probabilities(d, node.path)
        return _compare(p, node.op, node.bound)
    raise CheckError(f"not a state formula: {node}")


def _compare(p: np.ndarray, op: str, bound: float) -> np.ndarray:
    if op == "=":
        return np.abs(p - bound) <= BOUND_TOL
    if op == "<=":
        return p <= bound + BOUND_TOL
    if op == ">=":
        return p >= bound - BOUND_TOL
    if op == "<":
        return p < bound - BOUND_TOL
    if op == ">":
        return p > bound + BOUND_TOL
    raise CheckError(f"unknown bound operator {op!r}")


def _step_edge_mask(d: _Dtmc, node: Formula) -> np.ndarray:
    """Evaluate a step predicate over every edge (src side unless under X)."""
    if isinstance(node, Next):
        return _eval_state(d, node.arg)[d.dst]
    if isinstance(node, Not):
        return ~_step_edge_mask(d, node.arg)
    if isinstance(node, And):
        return _step_edge_mask(d, node.left) & _step_edge_mask(d, node.right)
    if isinstance(node, Or):
        return _step_edge_mask(d, node.left) | _step_edge_mask(d, node.right)
    if isinstance(node, Implies):
        return ~_step_edge_mask(d, node.left) | _step_edge_mask(d, node.right)
    return _eval_state(d, node)[d.src]


def _path_probabilities(d: _Dtmc, path: Formula) -> np.ndarray:
    if isinstance(path, Next):
        sat = _eval_state(d, path.arg)
        out = np.zeros(d.n)
        np.add.at(out, d.src, d.p * sat[d.dst])
        return np.clip(out, 0.0, 1.0)
    if isinstance(path, Until):
        return _until_vector(d, _eval_state(d, path.left), _eval_state(d, path.right))
    if isinstance(path, Future):
        if _contains_next(path.arg):
            return _edge_reach_vector(d, _step_edge_mask(d, path.arg))
        return _until_vector(d, np.ones(d.n, dtype=bool), _eval_state(d, path.arg))
    if isinstance(path, Globally):
        negated = Not(path.arg)
        if _contains_next(path.arg):
            return np.clip(1.0 - _edge_reach_vector(d, _step_edge_mask(d, negated)), 0.0, 1.0)
        inner = _until_vector(d, np.ones(d.n, dtype=bool), _eval_state(d, negated))
        return np.clip(1.0 - inner, 0.0, 1.0)
    raise CheckError(f"not a path formula: {path}")


def _state_set_vector(d: _Dtmc, states: Iterable[str]) -> np.ndarray:
    out = np.zeros(d.n, dtype=bool)
    for s in states:
        if s not in d.model.state_index:
            raise PctlError(f"unknown state {s!r}")
        out[d.model.state_index[s]] = True
    return out


@dataclass(frozen=True)
class PctlResult:
    """Either a truth verdict (bounded/boolean form) or a queried probability."""

    verdict: bool | None = None
    probability: float | None = None

    @property
    def is_query(self) -> bool:
        return self.probability is not None

    def __str__(self) -> str:
        if self.is_query:
            return f"{self.probability:.9f}"
        return "true" if self.verdict else "false"


def _validate_atoms(model: Pdfa, formula: Formula) -> None:
    atoms: set[str] = set()
    _collect_atoms(formula, atoms)
    for atom in sorted(atoms):
        if atom not in model.atom_universe:
            raise UnknownAtomError(atom)


def prob_next(model: Pdfa, phi_states: Iterable[str], state: str) -> float:
    """Probability that the next state lies in ``phi_states``."""
    d = _dtmc(model)
    sat = _state_set_vector(d, phi_states)
    if state not in model.state_index:
        raise PctlError(f"unknown state {state!r}")
    si = model.state_index[state]
    sel = d.src == si
    return float(np.clip(np.sum(d.p[sel] * sat[d.dst[sel]]), 0.0, 1.0))


def prob_until(model: Pdfa, phi1_states: Iterable[str], phi2_states: Iterable[str]) -> dict[str, float]:
    """Exact ``phi1 U phi2`` probability for every state."""
    d = _dtmc(model)
    x = _until_vector(d, _state_set_vector(d, phi1_states), _state_set_vector(d, phi2_states))
    return {s: float(x[i]) for i, s in enumerate(model.states)}


def check(model: Pdfa, formula: Union[Formula, str], state: str | None = None) -> PctlResult:
    """Evaluate a property at ``state`` (the initial state by default)."""
    if isinstance(formula, str):
        formula = parse_pctl(formula)
    _validate_atoms(model, formula)
    d = _dtmc(model)
    state = model.initial if state is None else state
    if state not in model.state_index:
        raise PctlError(f"unknown state {state!r}")
    si = model.state_index[state]
    if isinstance(formula, Prob) and formula.op == "=?":
        p = _path_probabilities(d, formula.path)
        return PctlResult(probability=float(p[si]))
    return PctlResult(verdict=bool(_eval_state(d, formula)[si]))


# ---------------------------------------------------------------------------
# Property corpus files: one `name: formula` per line


@dataclass(frozen=True)
class NamedProperty:
    name: str
    text: str
    formula: Formula


def parse_property_lines(lines: Iterable[str]) -> list[NamedProperty]:
    out = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        name, sep, text = line.partition(":")
        if not sep or not name.strip():
            raise PctlError(f"line {lineno}: expected 'name: formula'")
        try:
            formula = parse_pctl(text.strip())
        except PctlParseError as exc:
            raise PctlError(f"line {lineno} ({name.strip()}): {exc}") from None
        out.append(NamedProperty(name.strip(), text.strip(), formula))
    return out


def load_properties(path: str | Path) -> list[NamedProperty]:
    return parse_property_lines(Path(path).read_text().splitlines())
