"""The adaptive test protocol: confidence scoring and belief-driven stepping.

Each game word gets a mistake score on the [0, 10] scale; per-test belief
curves (piecewise logistics, saturated below a threshold) turn that score
into a distribution over the three classes; the argmax picks the next
test. Sessions are immutable values: stepping returns a new session, so
replaying a log reproduces a session exactly.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .classes import CLASS_ORDER, PatientClass
from .game import (
    Action,
    DEFAULT_SHAPE,
    GameShape,
    Pdfa,
    Word,
    WordError,
    accepts,
    default_class_models,
    format_word,
    run_word,
)
from .tracelogic import (
    ClassTrace,
    DEFAULT_STOP_CONFIG,
    NO_STOP,
    StopConfig,
    StopDecision,
    check_stop,
)

log = logging.getLogger(__name__)


class ProtocolError(ValueError):
    pass


class EmptyWordError(ProtocolError):
    """The score is a ratio of action counts; an empty word has none."""


class ScoreRangeError(ProtocolError):
    pass


class ProfileError(ProtocolError):
    """A belief profile failing its load-time validation."""


class SessionStoppedError(ProtocolError):
    def __init__(self, stop: StopDecision):
        super().__init__(f"session already stopped ({stop.reason.value})")
        self.stop = stop


class WordNotAcceptedError(ProtocolError):
    pass


@dataclass(frozen=True)
class DeltaWeights:
    """Per-action weights of the mistake score and the scale maximum.

    Inactivity counts a fifth of a mistake; quitting carries enough weight
    to force the maximum score on its own.
    """

    k_alpha: float = 1.0
    k_beta: float = 1.0
    k_gamma: float = 0.2
    k_theta: float = 1e9
    m: float = 10.0

    def __post_init__(self):
        for name in ("k_alpha", "k_beta", "k_gamma", "k_theta"):
            if getattr(self, name) < 0:
                raise ProtocolError(f"{name} must be >= 0")
        if self.m <= 0:
            raise ProtocolError("max score m must be > 0")


DEFAULT_WEIGHTS = DeltaWeights()


def delta_score(word: Word, weights: DeltaWeights = DEFAULT_WEIGHTS) -> float:
    """Weighted mistake ratio of a word, in [0, m]; quitting pegs it at m."""
    if not word:
        raise EmptyWordError("cannot score an empty word")
    if Action.THETA in word:
        return weights.m
    n_alpha = sum(1 for a in word if a is Action.ALPHA)
    n_beta = sum(1 for a in word if a is Action.BETA)
    n_gamma = sum(1 for a in word if a is Action.GAMMA)
    mistakes = weights.k_beta * n_beta + weights.k_gamma * n_gamma
    total = weights.k_alpha * n_alpha + mistakes
    # ratio first: an all-mistake word must score exactly m
    return weights.m * (mistakes / total)


@dataclass(frozen=True)
class BeliefCurve:
    """One logistic belief curve with below-threshold saturation."""

    threshold: float
    a: float
    b: float
    c: float
    d: float
    v: float
    z: float
    saturation: float

    def raw(self, delta: float) -> float:
        """Curve value at ``delta``; may leave [0,1] near the threshold."""
        if delta < self.threshold:
            return self.saturation
        if self.c == 0.0:
            denominator = self.b
        else:
            exponent = self.d * delta + self.z
            # saturate rather than overflow for extreme custom factors
            grown = math.exp(exponent) if exponent < 700.0 else math.inf
            denominator = self.b + self.c * grown
        if denominator == 0.0:
            raise ProfileError(
                f"belief curve denominator vanishes at delta={delta!r}"
            )
        return self.v + self.a / denominator


@dataclass(frozen=True)
class CurvePair:
    """The two stored curves of one test; the mild belief is the residual."""

    healthy: BeliefCurve
    major: BeliefCurve


@dataclass(frozen=True)
class BeliefProfile:
    """Belief curves for each test plus the score weights."""

    curves: Mapping[PatientClass, CurvePair]
    weights: DeltaWeights = DEFAULT_WEIGHTS


def _curve_h(threshold, a, b, c, d, v, z) -> BeliefCurve:
    return BeliefCurve(threshold, a, b, c, d, v, z, saturation=1.0)


def _curve_m(threshold, a, b, c, d, v, z) -> BeliefCurve:
    return BeliefCurve(threshold, a, b, c, d, v, z, saturation=0.0)


#: The shipped curve factors (threshold, a, b, c, d, v, z per curve).
DEFAULT_PROFILE = BeliefProfile(
    curves={
        PatientClass.HEALTHY: CurvePair(
            healthy=_curve_h(2.016, 0.5, -3.6, 1.0, 0.7, 0.0, 0.0),
            major=_curve_m(6.256, 2.4, 2.1, -1.0, 0.24, 1.0, 0.0),
        ),
        PatientClass.MILD: CurvePair(
            healthy=_curve_h(0.0, 1.0, 1.2, 0.3, 2.2, 0.0, -1.0),
            major=_curve_m(0.0, -1.0, 1.0, 1.4, 0.8, 1.0, -6.3),
        ),
        PatientClass.MAJOR: CurvePair(
            healthy=_curve_h(0.0, -0.1, 0.1, 0.1, -2.4, 1.0, 1.1),
            major=_curve_m(3.769, -6.6, 0.4, 0.01, 1.6, 1.0, 0.4),
        ),
    },
)


def belief_raw(profile: BeliefProfile, test: PatientClass, target: PatientClass,
               delta: float) -> float:
    """Unclamped belief that the patient belongs to ``target`` after ``test``."""
    if not 0.0 <= delta <= profile.weights.m:
        raise ScoreRangeError(f"delta {delta!r} outside [0, {profile.weights.m}]")
    pair = profile.curves[test]
    if target is PatientClass.HEALTHY:
        return pair.healthy.raw(delta)
    if target is PatientClass.MAJOR:
        return pair.major.raw(delta)
    return 1.0 - pair.healthy.raw(delta) - pair.major.raw(delta)


@dataclass(frozen=True)
class BeliefDistribution:
    """Clamped, normalized beliefs over the three classes."""

    healthy: float
    mild: float
    major: float
    clamped: bool = False

    def value(self, cls: PatientClass) -> float:
        return {
            PatientClass.HEALTHY: self.healthy,
            PatientClass.MILD: self.mild,
            PatientClass.MAJOR: self.major,
        }[cls]

    def as_dict(self) -> dict:
        return {
            "h": self.healthy,
            "m": self.mild,
            "M": self.major,
            "clamped": self.clamped,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "BeliefDistribution":
        return cls(
            healthy=float(data["h"]),
            mild=float(data["m"]),
            major=float(data["M"]),
            clamped=bool(data.get("clamped", False)),
        )


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def belief_distribution_from_delta(profile: BeliefProfile, test: PatientClass,
                                   delta: float) -> BeliefDistribution:
    """Evaluate both curves, clamp to [0,1], give the residual to mild,
    and renormalize so the three beliefs sum to exactly 1."""
    raw_h = belief_raw(profile, test, PatientClass.HEALTHY, delta)
    raw_major = belief_raw(profile, test, PatientClass.MAJOR, delta)
    h = _clamp01(raw_h)
    major = _clamp01(raw_major)
    residual = 1.0 - h - major
    mild = _clamp01(residual)
    clamped = (h != raw_h) or (major != raw_major) or (mild != residual)
    if clamped:
        log.debug(
            "belief clamping at test %s, delta %.6f: raw h=%r M=%r residual=%r",
            test.test_name, delta, raw_h, raw_major, residual,
        )
    total = h + mild + major
    return BeliefDistribution(h / total, mild / total, major / total, clamped)


def belief_distribution(profile: BeliefProfile, test: PatientClass,
                        word: Word) -> BeliefDistribution:
    return belief_distribution_from_delta(profile, test, delta_score(word, profile.weights))


def next_test(dist: BeliefDistribution, current: PatientClass) -> PatientClass:
    """Class with maximal belief; ties prefer the current test, then the
    milder class."""
    best = max(dist.value(c) for c in CLASS_ORDER)
    candidates = [c for c in CLASS_ORDER if dist.value(c) == best]
    if current in candidates:
        return current
    return min(candidates, key=lambda c: c.severity)


@dataclass(frozen=True)
class CurveSample:
    delta: float
    healthy: float
    mild: float
    major: float


def sample_belief_curves(profile: BeliefProfile, test: PatientClass,
                         step: float = 0.01) -> list[CurveSample]:
    """Dense post-clamping sampling of the three curves over [0, m]."""
    if step <= 0:
        raise ProtocolError("step must be > 0")
    m = profile.weights.m
    count = int(round(m / step))
    deltas = [min(i * step, m) for i in range(count + 1)]
    if deltas[-1] < m:
        deltas.append(m)
    rows = []
    for delta in deltas:
        dist = belief_distribution_from_delta(profile, test, delta)
        rows.append(CurveSample(delta, dist.healthy, dist.mild, dist.major))
    return rows


def curves_to_csv(rows: list[CurveSample]) -> str:
    lines = ["delta,h,m,M"]
    for r in rows:
        lines.append(f"{r.delta:.9g},{r.healthy:.9f},{r.mild:.9f},{r.major:.9f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Session engine


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything a session needs: profile, per-class game models, stop
    thresholds, and whether words must land in a final state."""

    profile: BeliefProfile
    models: Mapping[PatientClass, Pdfa]
    stop: StopConfig = DEFAULT_STOP_CONFIG
    require_accepting: bool = False


def default_protocol_config(shape: GameShape = DEFAULT_SHAPE,
                            profile: BeliefProfile = DEFAULT_PROFILE,
                            stop: StopConfig = DEFAULT_STOP_CONFIG) -> ProtocolConfig:
    return ProtocolConfig(profile=profile, models=default_class_models(shape), stop=stop)


@dataclass(frozen=True)
class ProtocolStep:
    """One administered test: the word observed and what it led to."""

    meta_state: PatientClass
    word: Word
    delta: float
    beliefs: BeliefDistribution
    chosen: PatientClass


@dataclass(frozen=True)
class ProtocolSession:
    """Immutable protocol state; ``protocol_step`` returns a new session."""

    hypothesis: PatientClass
    steps: tuple[ProtocolStep, ...] = ()
    stop: StopDecision = NO_STOP

    @property
    def current_test(self) -> PatientClass:
        """The test the next word will be scored against."""
        return self.steps[-1].chosen if self.steps else self.hypothesis

    @property
    def class_trace(self) -> ClassTrace:
        return tuple(step.chosen for step in self.steps)


def start_session(hypothesis: PatientClass, config: ProtocolConfig | None = None) -> ProtocolSession:
    """Fresh session positioned at the test matching the initial hypothesis."""
    if config is not None and hypothesis not in config.models:
        raise ProtocolError(f"no game model configured for class {hypothesis.code!r}")
    return ProtocolSession(hypothesis=hypothesis)


def protocol_step(session: ProtocolSession, word: Word,
                  config: ProtocolConfig) -> ProtocolSession:
    """Score one game word, update beliefs, pick the next test, check stop."""
    if session.stop.stopped:
        raise SessionStoppedError(session.stop)
    if not word:
        raise EmptyWordError("cannot step a session with an empty word")
    if Action.THETA in word[:-1]:
        raise WordError("quit action must be the last symbol of a word")
    test = session.current_test
    model = config.models[test]
    if config.require_accepting:
        if not accepts(model, word):
            raise WordNotAcceptedError(
                f"word {format_word(word)!r} does not reach a final state of {test.test_name}"
            )
    else:
        run_word(model, word)  # raises UndefinedTransitionError on a bad prefix
    delta = delta_score(word, config.profile.weights)
    beliefs = belief_distribution_from_delta(config.profile, test, delta)
    chosen = next_test(beliefs, test)
    steps = session.steps + (ProtocolStep(test, word, delta, beliefs, chosen),)
    trace = tuple(s.chosen for s in steps)
    stop = check_stop(trace, config.stop)
    return ProtocolSession(session.hypothesis, steps, stop)


# ---------------------------------------------------------------------------
# Profile files


_FACTOR_FIELDS = ("threshold", "a", "b", "c", "d", "v", "z")


def _curve_to_dict(curve: BeliefCurve) -> dict:
    return {name: getattr(curve, name) for name in _FACTOR_FIELDS}


def profile_to_dict(profile: BeliefProfile) -> dict:
    return {
        "weights": {
            "k_alpha": profile.weights.k_alpha,
            "k_beta": profile.weights.k_beta,
            "k_gamma": profile.weights.k_gamma,
            "k_theta": profile.weights.k_theta,
            "m": profile.weights.m,
        },
        "tests": {
            cls.test_name: {
                "healthy": _curve_to_dict(pair.healthy),
                "major": _curve_to_dict(pair.major),
            }
            for cls, pair in profile.curves.items()
        },
    }


def _curve_from_dict(data: Mapping, saturation: float, where: str) -> BeliefCurve:
    try:
        factors = {name: float(data[name]) for name in _FACTOR_FIELDS}
    except (TypeError, KeyError) as exc:
        raise ProfileError(f"{where}: missing factor {exc}") from None
    return BeliefCurve(saturation=saturation, **factors)


def profile_from_dict(data: Mapping, validate: bool = True) -> BeliefProfile:
    try:
        w = data["weights"]
        weights = DeltaWeights(
            k_alpha=float(w["k_alpha"]),
            k_beta=float(w["k_beta"]),
            k_gamma=float(w["k_gamma"]),
            k_theta=float(w["k_theta"]),
            m=float(w["m"]),
        )
        tests = data["tests"]
    except (TypeError, KeyError) as exc:
        raise ProfileError(f"profile document missing field {exc}") from None
    curves = {}
    for cls in CLASS_ORDER:
        name = cls.test_name
        if name not in tests:
            raise ProfileError(f"profile document missing test {name!r}")
        entry = tests[name]
        curves[cls] = CurvePair(
            healthy=_curve_from_dict(entry.get("healthy"), 1.0, f"{name}.healthy"),
            major=_curve_from_dict(entry.get("major"), 0.0, f"{name}.major"),
        )
    profile = BeliefProfile(curves=curves, weights=weights)
    if validate:
        validate_profile(profile)
    return profile


def validate_profile(profile: BeliefProfile, sampling_step: float = 1e-3) -> None:
    """Load-time checks: denominators must not vanish on the evaluated
    branch of any curve, and the three reference classifications must hold
    (a maximal score at the healthy test escalates to major, a zero score
    at the major test de-escalates to healthy, a mid score at the mild
    test stays mild)."""
    m = profile.weights.m
    for cls, pair in profile.curves.items():
        for kind, curve in (("healthy", pair.healthy), ("major", pair.major)):
            if curve.c == 0.0:
                if curve.b == 0.0:
                    raise ProfileError(
                        f"{cls.test_name}.{kind}: constant zero denominator"
                    )
                continue
            previous = None
            delta = curve.threshold
            while delta <= m:
                exponent = curve.d * delta + curve.z
                value = curve.b + curve.c * (math.exp(exponent) if exponent < 700.0 else math.inf)
                if value == 0.0 or (previous is not None and (value < 0) != (previous < 0)):
                    raise ProfileError(
                        f"{cls.test_name}.{kind}: denominator vanishes near delta={delta:.3f}"
                    )
                previous = value
                delta += sampling_step
    scenarios = (
        (PatientClass.HEALTHY, m, PatientClass.MAJOR),
        (PatientClass.MAJOR, 0.0, PatientClass.HEALTHY),
        (PatientClass.MILD, m / 2.0, PatientClass.MILD),
    )
    for test, delta, expected in scenarios:
        dist = belief_distribution_from_delta(profile, test, delta)
        got = next_test(dist, test)
        if got is not expected:
            raise ProfileError(
                f"reference classification failed: delta={delta} at {test.test_name} "
                f"suggests {got.test_name}, expected {expected.test_name}"
            )


def save_profile(profile: BeliefProfile, path: str | Path) -> None:
    Path(path).write_text(json.dumps(profile_to_dict(profile), indent=2) + "\n")


def load_profile(path: str | Path, validate: bool = True) -> BeliefProfile:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ProfileError(f"{path}: not valid JSON: {exc}") from None
    return profile_from_dict(data, validate=validate)
