"""Probabilistic deterministic finite automata for the Match Items game.

A game session is a word over four actions (right pick, wrong pick,
inactivity, quitting). Each patient class gets one PDFA whose states track
the session progress and whose transition probabilities come from the
per-class action probabilities elicited from clinicians. Because every
playing state carries the same outgoing distribution, the automata are
Markov chains and can be checked with the PCTL machinery in
:mod:`cogproto.pctl`.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping

from .classes import PatientClass

#: Tolerance for stochasticity checks (outgoing probability mass vs 1).
PROB_TOL = 1e-9


class GameModelError(ValueError):
    """Base class for model construction and word errors."""


class WordError(GameModelError):
    """A sequence of actions violating the word invariants."""


class UndefinedTransitionError(GameModelError):
    """A word left the transition table; reports the first bad prefix."""

    def __init__(self, state: str, action: "Action", prefix: "Word"):
        super().__init__(
            f"no transition from state {state!r} on action "
            f"{action.name.lower()!r} (after prefix {format_word(prefix)!r})"
        )
        self.state = state
        self.action = action
        self.prefix = prefix


class UnknownAtomError(GameModelError):
    def __init__(self, atom: str):
        super().__init__(f"atom {atom!r} does not label any state of the model")
        self.atom = atom


class Action(Enum):
    """One in-game action; the value is the letter code used in words/atoms.

    ALPHA: picked the right picture. BETA: picked a wrong picture.
    GAMMA: stayed inactive. THETA: left the game zone (ends the session).
    """

    ALPHA = "a"
    BETA = "b"
    GAMMA = "g"
    THETA = "t"

    @property
    def code(self) -> str:
        return self.value


ALPHABET = (Action.ALPHA, Action.BETA, Action.GAMMA, Action.THETA)

_ACTION_BY_NAME = {a.name.lower(): a for a in ALPHABET}
_ACTION_BY_CODE = {a.value: a for a in ALPHABET}

#: A game word: the ordered actions of one session.
Word = tuple[Action, ...]


def make_word(actions: Iterable[Action]) -> Word:
    """Build a word, enforcing that quitting can only be the last action."""
    word = tuple(actions)
    if Action.THETA in word[:-1]:
        raise WordError("quit action must be the last symbol of a word")
    return word


def parse_word(text: str) -> Word:
    """Parse ``'abg'`` letter strings or whitespace-separated action names."""
    text = text.strip()
    if not text:
        return ()
    tokens = text.split() if any(ch.isspace() for ch in text) else list(text)
    actions = []
    for tok in tokens:
        action = _ACTION_BY_NAME.get(tok.lower()) or _ACTION_BY_CODE.get(tok)
        if action is None:
            raise WordError(f"unknown action token {tok!r} (expected a/b/g/t or alpha/beta/gamma/theta)")
        actions.append(action)
    return make_word(actions)


def format_word(word: Word) -> str:
    return "".join(a.value for a in word)


@dataclass(frozen=True)
class ClassParams:
    """Per-class action probabilities (one table column per patient class)."""

    p_alpha: float
    p_beta: float
    p_gamma: float
    p_theta: float

    def __post_init__(self):
        for name, p in self.as_mapping().items():
            if not 0.0 <= p <= 1.0:
                raise GameModelError(f"probability of {name.name.lower()} out of [0,1]: {p}")
        if abs(self.total() - 1.0) > PROB_TOL:
            raise GameModelError(f"action probabilities sum to {self.total()!r}, expected 1")

    def total(self) -> float:
        return math.fsum((self.p_alpha, self.p_beta, self.p_gamma, self.p_theta))

    def as_mapping(self) -> dict[Action, float]:
        return {
            Action.ALPHA: self.p_alpha,
            Action.BETA: self.p_beta,
            Action.GAMMA: self.p_gamma,
            Action.THETA: self.p_theta,
        }


#: Clinician-elicited action probabilities per class (the shipped defaults).
DEFAULT_CLASS_PARAMS: Mapping[PatientClass, ClassParams] = {
    PatientClass.HEALTHY: ClassParams(0.84, 0.11, 0.0499, 0.0001),
    PatientClass.MILD: ClassParams(0.5, 0.30, 0.1999, 0.0001),
    PatientClass.MAJOR: ClassParams(0.17, 0.58, 0.24, 0.01),
}

#: Alternate round-number variant of the healthy column (coarser elicitation).
ALT_HEALTHY_PARAMS = ClassParams(0.8, 0.1, 0.05, 0.05)


@dataclass(frozen=True)
class GameShape:
    """Session geometry: pictures to match and the hard cap on actions.

    ``step_cap`` models the five-minute limit: once that many actions have
    been played the game ends normally even if fewer than ``rounds``
    pictures were matched.
    """

    rounds: int = 10
    step_cap: int = 60

    def __post_init__(self):
        if self.rounds < 1:
            raise GameModelError(f"rounds must be >= 1, got {self.rounds}")
        if self.step_cap < self.rounds:
            raise GameModelError(
                f"step_cap ({self.step_cap}) must be >= rounds ({self.rounds})"
            )


DEFAULT_SHAPE = GameShape()

INITIAL_STATE = "q0"
NORMAL_END = "f1"
ABANDONED_END = "f2"

#: Atoms labelling the two absorbing ends.
NORMAL_END_ATOM = "a1"
ABANDONED_END_ATOM = "a2"


@dataclass(frozen=True, eq=False)
class Pdfa:
    """A probabilistic deterministic finite automaton with labelled states.

    ``transition`` is a partial function on (state, action); ``prob`` puts
    mass only on transition edges and rows sum to 1. Values are treated as
    immutable after construction, so all operations on them are pure.
    """

    states: tuple[str, ...]
    alphabet: tuple[Action, ...]
    transition: Mapping[tuple[str, Action], str]
    prob: Mapping[tuple[str, Action, str], float]
    initial: str
    finals: frozenset[str]
    labels: Mapping[str, frozenset[str]]

    @cached_property
    def state_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.states)}

    @cached_property
    def atom_universe(self) -> frozenset[str]:
        atoms: set[str] = set()
        for labelled in self.labels.values():
            atoms |= labelled
        return frozenset(atoms)

    @cached_property
    def markov_rows(self) -> dict[str, tuple[tuple[str, float], ...]]:
        """Outgoing distribution per state with action identity summed out."""
        rows: dict[str, dict[str, float]] = {s: {} for s in self.states}
        for (src, _action, dst), p in self.prob.items():
            if p != 0.0:
                rows[src][dst] = rows[src].get(dst, 0.0) + p
        return {s: tuple(sorted(row.items())) for s, row in rows.items()}

    @cached_property
    def walk_rows(self) -> dict[str, tuple[tuple[float, ...], tuple[Action, ...], tuple[str, ...]]]:
        """Per-state cumulative distribution over (action, successor) pairs."""
        rows = {}
        for state in self.states:
            entries = []
            for action in self.alphabet:
                dst = self.transition.get((state, action))
                if dst is None:
                    continue
                p = self.prob.get((state, action, dst), 0.0)
                if p > 0.0:
                    entries.append((action, dst, p))
            cum: list[float] = []
            total = 0.0
            for _, _, p in entries:
                total += p
                cum.append(total)
            rows[state] = (
                tuple(cum),
                tuple(a for a, _, _ in entries),
                tuple(d for _, d, _ in entries),
            )
        return rows

    def atom_states(self, atom: str) -> frozenset[str]:
        """States carrying ``atom``; unknown atoms are an error, not empty."""
        if atom not in self.atom_universe:
            raise UnknownAtomError(atom)
        return frozenset(s for s in self.states if atom in self.labels.get(s, frozenset()))


@dataclass(frozen=True)
class Violation:
    code: str
    state: str | None = None
    action: Action | None = None
    message: str = ""

    def __str__(self) -> str:
        where = self.state or "-"
        if self.action is not None:
            where += f"/{self.action.name.lower()}"
        return f"{self.code} at {where}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def lines(self) -> list[str]:
        return [str(v) for v in self.violations]


def validate_pdfa(model: Pdfa) -> ValidationReport:
    """Check all PDFA invariants; violations are data, not exceptions."""
    out: list[Violation] = []
    known = set(model.states)

    if model.initial not in known:
        out.append(Violation("unknown_initial", model.initial, None, "initial state not in state set"))
    for f in model.finals:
        if f not in known:
            out.append(Violation("unknown_final", f, None, "final state not in state set"))
    for s in model.labels:
        if s not in known:
            out.append(Violation("unknown_labelled_state", s, None, "label on unknown state"))

    for (src, action, dst), p in model.prob.items():
        if src not in known or dst not in known:
            out.append(Violation("unknown_prob_state", src, action, f"probability entry references unknown state(s): {src}->{dst}"))
            continue
        if action not in model.alphabet:
            out.append(Violation("unknown_action", src, action, "probability entry uses an action outside the alphabet"))
        if not 0.0 <= p <= 1.0:
            out.append(Violation("prob_out_of_range", src, action, f"probability {p!r} outside [0,1]"))
        # constraint (1): mass only on transition edges, exactly
        if p != 0.0 and model.transition.get((src, action)) != dst:
            out.append(Violation("mass_off_edge", src, action, f"probability {p!r} on non-edge {src}->{dst}"))

    for (src, action), dst in model.transition.items():
        if src not in known or dst not in known:
            out.append(Violation("unknown_transition_state", src, action, f"transition references unknown state(s): {src}->{dst}"))
        if action not in model.alphabet:
            out.append(Violation("unknown_action", src, action, "transition uses an action outside the alphabet"))

    row_mass: dict[str, list[float]] = {s: [] for s in model.states}
    for (src, _action, _dst), p in model.prob.items():
        if src in row_mass:
            row_mass[src].append(p)

    for state in model.states:
        total = math.fsum(row_mass[state])
        if state in model.finals:
            # finals must be absorbing: self-loops only, total mass 1
            for action in model.alphabet:
                dst = model.transition.get((state, action))
                if dst is not None and dst != state:
                    out.append(Violation("final_not_absorbing", state, action, f"final state has an outgoing edge to {dst}"))
            if abs(total - 1.0) > PROB_TOL:
                out.append(Violation("final_mass", state, None, f"self-loop mass {total!r}, expected 1"))
        else:
            # constraint (2): non-absorbing rows sum to 1
            if abs(total - 1.0) > PROB_TOL:
                out.append(Violation("row_sum", state, None, f"outgoing mass {total!r}, expected 1"))

    return ValidationReport(tuple(out))


def _playing_state(rounds_done: int, steps_taken: int, action: Action) -> str:
    return f"p{rounds_done}.{steps_taken}.{action.value}"


def build_match_items(params: ClassParams, shape: GameShape = DEFAULT_SHAPE) -> Pdfa:
    """Build the Match Items PDFA for one class of patients.

    The initial state is the game launch; right picks advance the round
    counter, wrong picks and inactivity keep the current round in distinct
    states (so the action sequence is recoverable from the states
    traversed), quitting goes to the abandoned end from anywhere.
    Completing all rounds or exhausting the step cap is a normal end.
    Every playing state entered by action ``x`` carries atom ``x``; the
    ends carry ``a1``/``a2``. All playing states share the distribution
    given by ``params``; final self-loop mass is split uniformly across
    the alphabet.
    """
    dist = params.as_mapping()
    transition: dict[tuple[str, Action], str] = {}
    prob: dict[tuple[str, Action, str], float] = {}
    labels: dict[str, frozenset[str]] = {
        INITIAL_STATE: frozenset(),
        NORMAL_END: frozenset({NORMAL_END_ATOM}),
        ABANDONED_END: frozenset({ABANDONED_END_ATOM}),
    }

    def successor(state_key: tuple[int, int] | None, action: Action) -> str:
        # state_key is (rounds_done, steps_taken); None once absorbed
        assert state_key is not None
        rounds_done, steps_taken = state_key
        if action is Action.THETA:
            return ABANDONED_END
        steps = steps_taken + 1
        rounds = rounds_done + (1 if action is Action.ALPHA else 0)
        if rounds >= shape.rounds or steps >= shape.step_cap:
            return NORMAL_END
        return _playing_state(rounds, steps, action)

    key_of: dict[str, tuple[int, int]] = {INITIAL_STATE: (0, 0)}
    order: list[str] = [INITIAL_STATE]
    queue: deque[str] = deque([INITIAL_STATE])
    seen = {INITIAL_STATE, NORMAL_END, ABANDONED_END}

    while queue:
        state = queue.popleft()
        for action in ALPHABET:
            dst = successor(key_of[state], action)
            transition[(state, action)] = dst
            prob[(state, action, dst)] = dist[action]
            if dst not in seen:
                seen.add(dst)
                key_of[dst] = (
                    key_of[state][0] + (1 if action is Action.ALPHA else 0),
                    key_of[state][1] + 1,
                )
                labels[dst] = frozenset({action.value})
                order.append(dst)
                queue.append(dst)

    for final in (NORMAL_END, ABANDONED_END):
        for action in ALPHABET:
            transition[(final, action)] = final
            prob[(final, action, final)] = 1.0 / len(ALPHABET)

    return Pdfa(
        states=tuple(order) + (NORMAL_END, ABANDONED_END),
        alphabet=ALPHABET,
        transition=transition,
        prob=prob,
        initial=INITIAL_STATE,
        finals=frozenset({NORMAL_END, ABANDONED_END}),
        labels=labels,
    )


def default_class_models(shape: GameShape = DEFAULT_SHAPE) -> dict[PatientClass, Pdfa]:
    """The three shipped class models built from the default parameters."""
    return {cls: build_match_items(p, shape) for cls, p in DEFAULT_CLASS_PARAMS.items()}


def run_word(model: Pdfa, word: Word) -> str:
    """Run the word from the initial state; error on the first bad prefix."""
    state = model.initial
    for i, action in enumerate(word):
        nxt = model.transition.get((state, action))
        if nxt is None:
            raise UndefinedTransitionError(state, action, word[: i + 1])
        state = nxt
    return state


def accepts(model: Pdfa, word: Word) -> bool:
    """True iff the word's run is defined and ends in a final state."""
    try:
        return run_word(model, word) in model.finals
    except UndefinedTransitionError:
        return False


def word_probability(model: Pdfa, word: Word) -> float:
    """Product of the step probabilities along the word's run."""
    state = model.initial
    result = 1.0
    for i, action in enumerate(word):
        nxt = model.transition.get((state, action))
        if nxt is None:
            raise UndefinedTransitionError(state, action, word[: i + 1])
        result *= model.prob.get((state, action, nxt), 0.0)
        state = nxt
    return result
