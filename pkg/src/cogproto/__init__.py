"""Serious-game cognitive assessment toolkit.

Models patient gameplay as probabilistic automata, checks them with a
quantitative PCTL checker, and drives an adaptive test protocol that
scores each session, updates class beliefs, suggests the next test and
detects stop conditions — in batch simulation and behind a live HTTP
service.
"""

__version__ = "0.1.0"

from .classes import CLASS_ORDER, PatientClass
from .game import (
    Action,
    ClassParams,
    GameShape,
    Pdfa,
    ValidationReport,
    Word,
    accepts,
    build_match_items,
    default_class_models,
    format_word,
    parse_word,
    run_word,
    validate_pdfa,
    word_probability,
    DEFAULT_CLASS_PARAMS,
    DEFAULT_SHAPE,
)
from .pctl import PctlResult, check, parse_pctl, prob_next, prob_until
from .protocol import (
    BeliefDistribution,
    BeliefProfile,
    DEFAULT_PROFILE,
    DEFAULT_WEIGHTS,
    DeltaWeights,
    ProtocolConfig,
    ProtocolSession,
    belief_distribution,
    belief_raw,
    default_protocol_config,
    delta_score,
    next_test,
    protocol_step,
    sample_belief_curves,
    start_session,
)
from .simulate import (
    SimulationConfig,
    SimulationReport,
    estimate_reachability,
    estimate_until,
    sample_word,
    simulate_protocol,
)
from .tracelogic import (
    DEFAULT_STOP_CONFIG,
    StopConfig,
    StopDecision,
    StopReason,
    check_stop,
    detect_max_tests,
    detect_oscillation,
    detect_steady_state,
    eval_ltlf,
    parse_ltlf,
)

__all__ = [name for name in dir() if not name.startswith("_")]
