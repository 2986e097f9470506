"""Monte Carlo sampling of game words and whole protocol runs.

Randomness is numpy PCG64. Protocol simulations draw one child stream per
run index via ``SeedSequence(seed).spawn`` so runs are independent and the
aggregate does not depend on execution order; the reachability estimators
use a single stream consumed in step-major order over the surviving
walkers. Both schemes are recorded in the report for reproducibility.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np

from .classes import CLASS_ORDER, PatientClass
from .game import DEFAULT_SHAPE, GameShape, Pdfa, Word
from .protocol import (
    ProtocolConfig,
    default_protocol_config,
    protocol_step,
    start_session,
)
from .tracelogic import DEFAULT_STOP_CONFIG, StopConfig

RNG_PROTOCOL = "numpy-pcg64; one SeedSequence(seed).spawn child per run index"
RNG_WALKERS = "numpy-pcg64; single stream, step-major over surviving walkers"

#: Hard cap on walk length for models that fail to absorb.
MAX_WALK_STEPS = 100_000


class SimulationError(RuntimeError):
    pass


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_word(model: Pdfa, seed) -> Word:
    """Random walk from the initial state until absorption; the emitted
    action sequence is the word. ``seed`` may be an int or a Generator."""
    rng = _as_rng(seed)
    rows = model.walk_rows
    finals = model.finals
    state = model.initial
    actions = []
    for _ in range(MAX_WALK_STEPS):
        if state in finals:
            return tuple(actions)
        cum, acts, succs = rows[state]
        if not acts:
            raise SimulationError(f"state {state!r} has no outgoing probability mass")
        u = rng.random() * cum[-1]
        i = min(bisect_right(cum, u), len(acts) - 1)
        actions.append(acts[i])
        state = succs[i]
    raise SimulationError(f"no absorption within {MAX_WALK_STEPS} steps")


@dataclass(frozen=True)
class ReachEstimate:
    estimate: float
    std_error: float
    runs: int
    hits: int


class _WalkTables:
    """Padded successor/cumulative arrays for lock-step vectorized walks."""

    def __init__(self, model: Pdfa):
        n = len(model.states)
        index = model.state_index
        width = max((len(row) for row in model.markov_rows.values()), default=1) or 1
        self.succ = np.zeros((n, width), dtype=np.int64)
        self.cum = np.ones((n, width))
        self.absorbing = np.zeros(n, dtype=bool)
        for state in model.states:
            si = index[state]
            row = model.markov_rows[state]
            if not row:
                raise SimulationError(f"state {state!r} has no outgoing probability mass")
            total = 0.0
            for j, (dst, p) in enumerate(row):
                total += p
                self.succ[si, j] = index[dst]
                self.cum[si, j] = total
            # pad with copies of the last entry so clamped draws stay valid
            self.succ[si, len(row):] = self.succ[si, len(row) - 1]
            self.cum[si, len(row):] = max(total, 1.0)
            self.absorbing[si] = state in model.finals


@lru_cache(maxsize=None)
def _walk_tables(model: Pdfa) -> _WalkTables:
    return _WalkTables(model)


def _atom_mask(model: Pdfa, atoms: str | Iterable[str]) -> np.ndarray:
    if isinstance(atoms, str):
        atoms = (atoms,)
    mask = np.zeros(len(model.states), dtype=bool)
    for atom in atoms:
        for state in model.atom_states(atom):
            mask[model.state_index[state]] = True
    return mask


def _state_mask(model: Pdfa, states: Iterable[str]) -> np.ndarray:
    mask = np.zeros(len(model.states), dtype=bool)
    for s in states:
        if s not in model.state_index:
            raise SimulationError(f"unknown state {s!r}")
        mask[model.state_index[s]] = True
    return mask


def estimate_until(model: Pdfa, hold_states: Iterable[str] | None,
                   target_states: Iterable[str], runs: int, seed) -> ReachEstimate:
    """Monte Carlo estimate of P(hold U target) from the initial state.

    A walker succeeds on entering a target state, fails on leaving the
    hold set or absorbing outside the targets. ``hold_states=None`` means
    no constraint (plain reachability).
    """
    if runs < 1:
        raise SimulationError(f"runs must be >= 1, got {runs}")
    tables = _walk_tables(model)
    n = len(model.states)
    target = _state_mask(model, target_states)
    hold = np.ones(n, dtype=bool) if hold_states is None else _state_mask(model, hold_states)

    rng = _as_rng(seed)
    state = np.full(runs, model.state_index[model.initial], dtype=np.int64)
    hits = 0

    def settle(states: np.ndarray) -> np.ndarray:
        """Mark walkers decided at their current state; returns still-live mask."""
        nonlocal hits
        won = target[states]
        hits += int(won.sum())
        lost = ~won & (~hold[states] | tables.absorbing[states])
        return ~(won | lost)

    live = settle(state)
    state = state[live]
    for _ in range(MAX_WALK_STEPS):
        if state.size == 0:
            break
        u = rng.random(state.size)
        rows_cum = tables.cum[state]
        idx = (u[:, None] > rows_cum).sum(axis=1)
        idx = np.minimum(idx, rows_cum.shape[1] - 1)
        state = tables.succ[state, idx]
        live = settle(state)
        state = state[live]
    else:
        raise SimulationError(f"walkers not absorbed within {MAX_WALK_STEPS} steps")

    p = hits / runs
    return ReachEstimate(p, math.sqrt(p * (1.0 - p) / runs), runs, hits)


def estimate_reachability(model: Pdfa, target_atoms: str | Iterable[str],
                          runs: int, seed) -> ReachEstimate:
    """Fraction of sampled runs that hit a state labelled by the target
    atom(s), with the binomial standard error."""
    if runs < 1:
        raise SimulationError(f"runs must be >= 1, got {runs}")
    targets = np.flatnonzero(_atom_mask(model, target_atoms))
    return estimate_until(model, None, [model.states[i] for i in targets], runs, seed)


# ---------------------------------------------------------------------------
# Whole-protocol simulation


@dataclass(frozen=True)
class SimulationConfig:
    true_class: PatientClass
    hypothesis: PatientClass
    runs: int
    seed: int
    shape: GameShape = DEFAULT_SHAPE
    stop: StopConfig = DEFAULT_STOP_CONFIG

    def __post_init__(self):
        if self.runs < 1:
            raise SimulationError(f"runs must be >= 1, got {self.runs}")


@dataclass
class SimulationReport:
    """Aggregates over simulated protocols for one (true, hypothesis) pair."""

    config: SimulationConfig
    classification_matrix: np.ndarray  # 3x3 counts, true class x final class
    sessions_histogram: dict[int, int]
    stop_reasons: dict[str, int]
    delta_count: list[int]
    delta_mean: list[float]
    delta_std: list[float]
    rng_algorithm: str = RNG_PROTOCOL

    def to_dict(self) -> dict:
        return {
            "config": {
                "true_class": self.config.true_class.code,
                "hypothesis": self.config.hypothesis.code,
                "runs": self.config.runs,
                "seed": self.config.seed,
                "rounds": self.config.shape.rounds,
                "step_cap": self.config.shape.step_cap,
            },
            "rng": self.rng_algorithm,
            "classification_matrix": {
                true.code: {
                    final.code: int(self.classification_matrix[i, j])
                    for j, final in enumerate(CLASS_ORDER)
                }
                for i, true in enumerate(CLASS_ORDER)
            },
            "sessions_histogram": {str(k): v for k, v in sorted(self.sessions_histogram.items())},
            "stop_reasons": dict(sorted(self.stop_reasons.items())),
            "delta_by_test": [
                {"test_index": i, "count": c, "mean": m, "stddev": s}
                for i, (c, m, s) in enumerate(zip(self.delta_count, self.delta_mean, self.delta_std))
            ],
        }

    def matrix_csv(self) -> str:
        lines = ["true_class," + ",".join(f"final_{c.code}" for c in CLASS_ORDER)]
        for i, true in enumerate(CLASS_ORDER):
            row = ",".join(str(int(self.classification_matrix[i, j])) for j in range(3))
            lines.append(f"{true.code},{row}")
        return "\n".join(lines) + "\n"

    def histogram_csv(self) -> str:
        lines = ["tests,count"]
        for k, v in sorted(self.sessions_histogram.items()):
            lines.append(f"{k},{v}")
        return "\n".join(lines) + "\n"

    def stop_reasons_csv(self) -> str:
        lines = ["reason,count"]
        for k, v in sorted(self.stop_reasons.items()):
            lines.append(f"{k},{v}")
        return "\n".join(lines) + "\n"

    def delta_stats_csv(self) -> str:
        lines = ["test_index,count,mean,stddev"]
        for i, (c, m, s) in enumerate(zip(self.delta_count, self.delta_mean, self.delta_std)):
            lines.append(f"{i},{c},{m:.9f},{s:.9f}")
        return "\n".join(lines) + "\n"


BehaviorHook = Callable[[PatientClass, PatientClass], Pdfa]


def simulate_protocol(config: SimulationConfig,
                      protocol_config: ProtocolConfig | None = None,
                      behavior: BehaviorHook | None = None) -> SimulationReport:
    """Run ``config.runs`` independent protocols against a synthetic patient.

    The patient's actions follow the model of the true class regardless of
    the test being administered; pass ``behavior`` to make the sampled
    model depend on the current test (defaults to that identity rule).
    """
    pconfig = protocol_config or default_protocol_config(shape=config.shape, stop=config.stop)
    if behavior is None:
        behavior = lambda test, true: pconfig.models[true]

    matrix = np.zeros((3, 3), dtype=np.int64)
    histogram: dict[int, int] = {}
    reasons: dict[str, int] = {}
    delta_sums: list[float] = []
    delta_sq_sums: list[float] = []
    delta_counts: list[int] = []

    true_index = {cls: i for i, cls in enumerate(CLASS_ORDER)}
    children = np.random.SeedSequence(config.seed).spawn(config.runs)

    for child in children:
        rng = np.random.default_rng(child)
        session = start_session(config.hypothesis, pconfig)
        while not session.stop.stopped:
            model = behavior(session.current_test, config.true_class)
            word = sample_word(model, rng)
            session = protocol_step(session, word, pconfig)

        final = session.steps[-1].chosen
        matrix[true_index[config.true_class], true_index[final]] += 1
        tests = len(session.steps)
        histogram[tests] = histogram.get(tests, 0) + 1
        reason = session.stop.reason.value
        reasons[reason] = reasons.get(reason, 0) + 1
        for i, step in enumerate(session.steps):
            if i >= len(delta_sums):
                delta_sums.append(0.0)
                delta_sq_sums.append(0.0)
                delta_counts.append(0)
            delta_sums[i] += step.delta
            delta_sq_sums[i] += step.delta * step.delta
            delta_counts[i] += 1

    means, stds = [], []
    for total, sq, count in zip(delta_sums, delta_sq_sums, delta_counts):
        mean = total / count
        variance = max(sq / count - mean * mean, 0.0)
        means.append(mean)
        stds.append(math.sqrt(variance))

    return SimulationReport(
        config=config,
        classification_matrix=matrix,
        sessions_histogram=histogram,
        stop_reasons=reasons,
        delta_count=delta_counts,
        delta_mean=means,
        delta_std=stds,
    )
