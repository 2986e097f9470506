import json
import math

import pytest
from hypothesis import given, strategies as st

from cogproto.classes import PatientClass
from cogproto.game import GameShape, parse_word
from cogproto.protocol import (
    DEFAULT_PROFILE,
    DEFAULT_WEIGHTS,
    BeliefDistribution,
    DeltaWeights,
    EmptyWordError,
    ProfileError,
    ProtocolError,
    ScoreRangeError,
    SessionStoppedError,
    belief_distribution,
    belief_distribution_from_delta,
    belief_raw,
    curves_to_csv,
    default_protocol_config,
    delta_score,
    load_profile,
    next_test,
    profile_from_dict,
    profile_to_dict,
    protocol_step,
    sample_belief_curves,
    save_profile,
    start_session,
    validate_profile,
)
from cogproto.tracelogic import StopReason

from oracles import belief_by_direct_eval, delta_by_direct_count

H, M, BIG = PatientClass.HEALTHY, PatientClass.MILD, PatientClass.MAJOR

words = st.text(alphabet="abg", min_size=1, max_size=30)


# -- delta score ---------------------------------------------------------------

def test_delta_reference_values():
    assert delta_score(parse_word("a" * 10)) == 0.0
    assert delta_score(parse_word("ab" * 5)) == 5.0
    assert delta_score(parse_word("bggbbbgbbbbbgb")) == 10.0  # no right pick
    assert delta_score(parse_word("a" * 3 + "t")) == 10.0
    assert delta_score(parse_word("a" * 8 + "g" * 5 + "b")) == 2.0


def test_delta_rejects_empty_word():
    with pytest.raises(EmptyWordError):
        delta_score(())


@given(words)
def test_delta_matches_direct_count(letters):
    assert delta_score(parse_word(letters)) == pytest.approx(
        delta_by_direct_count(letters), abs=1e-12
    )


@given(words)
def test_delta_range_and_extremes(letters):
    value = delta_score(parse_word(letters))
    assert 0.0 <= value <= 10.0
    assert (value == 0.0) == (set(letters) == {"a"})
    assert (value == 10.0) == ("a" not in letters)


@given(words)
def test_delta_monotone_in_appended_actions(letters):
    base = delta_score(parse_word(letters))
    assert delta_score(parse_word(letters + "b")) >= base
    assert delta_score(parse_word(letters + "a")) <= base


def test_custom_weights_guard():
    with pytest.raises(ProtocolError):
        DeltaWeights(k_beta=-1)
    with pytest.raises(ProtocolError):
        DeltaWeights(m=0)


# -- belief curves ---------------------------------------------------------------

def test_belief_reference_values():
    assert belief_raw(DEFAULT_PROFILE, BIG, H, 0.0) == pytest.approx(0.75, abs=0.005)
    assert belief_raw(DEFAULT_PROFILE, M, M, 5.0) == pytest.approx(0.8765, abs=0.002)
    assert belief_raw(DEFAULT_PROFILE, H, BIG, 10.0) == pytest.approx(0.72, abs=0.02)
    assert belief_raw(DEFAULT_PROFILE, H, M, 10.0) == pytest.approx(0.28, abs=0.02)
    assert belief_raw(DEFAULT_PROFILE, H, H, 1.0) == 1.0  # below the 2.016 threshold


def test_belief_matches_independent_evaluator():
    targets = {"h": H, "m": M, "M": BIG}
    for test_cls in (H, M, BIG):
        for code, target in targets.items():
            for i in range(0, 101):
                delta = i / 10.0
                expected = belief_by_direct_eval(test_cls.test_name, code, delta)
                assert belief_raw(DEFAULT_PROFILE, test_cls, target, delta) == pytest.approx(
                    expected, abs=1e-9
                )


def test_belief_rejects_out_of_range_delta():
    with pytest.raises(ScoreRangeError):
        belief_raw(DEFAULT_PROFILE, H, H, -0.1)
    with pytest.raises(ScoreRangeError):
        belief_raw(DEFAULT_PROFILE, H, H, 10.1)


def test_distribution_normalized_and_clamped_near_threshold():
    # the major curve of the healthy test dips below zero on [6.256, ~6.267)
    assert belief_raw(DEFAULT_PROFILE, H, BIG, 6.26) < 0.0
    dist = belief_distribution_from_delta(DEFAULT_PROFILE, H, 6.26)
    assert dist.clamped
    assert dist.major == 0.0
    assert dist.healthy + dist.mild + dist.major == pytest.approx(1.0, abs=1e-9)


@given(st.floats(min_value=0.0, max_value=10.0, allow_nan=False))
def test_distribution_always_normalized(delta):
    for test_cls in (H, M, BIG):
        dist = belief_distribution_from_delta(DEFAULT_PROFILE, test_cls, delta)
        total = dist.healthy + dist.mild + dist.major
        assert total == pytest.approx(1.0, abs=1e-9)
        for v in (dist.healthy, dist.mild, dist.major):
            assert 0.0 <= v <= 1.0


def test_distribution_round_trip():
    dist = belief_distribution_from_delta(DEFAULT_PROFILE, M, 5.0)
    assert BeliefDistribution.from_dict(dist.as_dict()) == dist


def test_determinism():
    word = parse_word("abgab")
    first = belief_distribution(DEFAULT_PROFILE, M, word)
    second = belief_distribution(DEFAULT_PROFILE, M, word)
    assert first == second


# -- transition choice -------------------------------------------------------------

def test_next_test_reference_scenarios():
    poor = belief_distribution(DEFAULT_PROFILE, H, parse_word("bggbbbgbbbbbgb"))
    assert next_test(poor, H) is BIG
    assert poor.major == pytest.approx(0.73, abs=0.02)
    assert poor.mild == pytest.approx(0.27, abs=0.02)

    perfect = belief_distribution(DEFAULT_PROFILE, BIG, parse_word("a" * 10))
    assert next_test(perfect, BIG) is H

    medium = belief_distribution(DEFAULT_PROFILE, M, parse_word("ab" * 5))
    assert next_test(medium, M) is M


def test_next_test_tie_breaks():
    assert next_test(BeliefDistribution(0.5, 0.5, 0.0), M) is M   # tie -> current
    assert next_test(BeliefDistribution(0.5, 0.0, 0.5), M) is H   # tie -> milder


# -- session engine -----------------------------------------------------------------

def test_start_session_positions(protocol_config):
    for cls in (H, M, BIG):
        session = start_session(cls, protocol_config)
        assert session.current_test is cls
        assert session.class_trace == ()
        assert not session.stop.stopped


def test_protocol_step_reference_transitions(protocol_config):
    session = start_session(H, protocol_config)
    session = protocol_step(session, parse_word("bggbbbgbbbbbgb"), protocol_config)
    assert session.current_test is BIG

    session = start_session(BIG, protocol_config)
    session = protocol_step(session, parse_word("a" * 10), protocol_config)
    assert session.current_test is H

    session = start_session(M, protocol_config)
    session = protocol_step(session, parse_word("ab" * 5), protocol_config)
    assert session.current_test is M


def test_protocol_step_is_pure(protocol_config):
    session = start_session(H, protocol_config)
    stepped = protocol_step(session, parse_word("a" * 10), protocol_config)
    assert session.steps == ()
    assert len(stepped.steps) == 1
    assert stepped.steps[0].meta_state is H


def test_meta_state_advances_to_chosen_class(protocol_config):
    session = start_session(H, protocol_config)
    for letters in ("bbbbb", "ab" * 5, "a" * 10):
        session = protocol_step(session, parse_word(letters), protocol_config)
    for before, after in zip(session.steps, session.steps[1:]):
        assert after.meta_state is before.chosen


def test_steady_state_stops_session(protocol_config):
    session = start_session(H, protocol_config)
    for _ in range(3):
        session = protocol_step(session, parse_word("a" * 10), protocol_config)
    assert session.stop.stopped
    assert session.stop.reason is StopReason.STEADY_STATE
    with pytest.raises(SessionStoppedError):
        protocol_step(session, parse_word("a"), protocol_config)


def test_step_rejects_malformed_words(protocol_config):
    session = start_session(H, protocol_config)
    with pytest.raises(EmptyWordError):
        protocol_step(session, (), protocol_config)
    from cogproto.game import WordError
    with pytest.raises(WordError):
        protocol_step(session, parse_word("a") + parse_word("t") + parse_word("a"),
                      protocol_config)


def test_require_accepting_mode():
    config = default_protocol_config()
    strict = default_protocol_config()
    strict = type(strict)(profile=strict.profile, models=strict.models,
                          stop=strict.stop, require_accepting=True)
    session = start_session(M, strict)
    from cogproto.protocol import WordNotAcceptedError
    with pytest.raises(WordNotAcceptedError):
        protocol_step(session, parse_word("ab" * 5), strict)  # 5 rounds of 10
    # a completed game is fine in strict mode
    protocol_step(session, parse_word("a" * 10), strict)
    # and the default mode scores partial plays
    protocol_step(start_session(M, config), parse_word("ab" * 5), config)


def test_argmax_consistency_invariant(protocol_config):
    session = start_session(M, protocol_config)
    for letters in ("ab" * 5, "aabb", "a" * 10, "bbbb"):
        session = protocol_step(session, parse_word(letters), protocol_config)
    for step in session.steps:
        assert step.chosen is next_test(step.beliefs, step.meta_state)


# -- curve sampling -----------------------------------------------------------------

def test_sample_belief_curves_rows():
    rows = sample_belief_curves(DEFAULT_PROFILE, BIG, step=0.5)
    assert rows[0].delta == 0.0 and rows[-1].delta == 10.0
    assert rows[0].healthy == pytest.approx(0.75, abs=0.005)
    for row in rows:
        assert row.healthy + row.mild + row.major == pytest.approx(1.0, abs=1e-9)


def test_mild_argmax_region_upper_boundary():
    rows = sample_belief_curves(DEFAULT_PROFILE, M, step=1e-3)
    last_mild = max(r.delta for r in rows if r.mild >= max(r.healthy, r.major))
    assert last_mild == pytest.approx(7.454, abs=0.01)


def test_curves_csv_shape():
    rows = sample_belief_curves(DEFAULT_PROFILE, M, step=2.5)
    text = curves_to_csv(rows)
    lines = text.strip().splitlines()
    assert lines[0] == "delta,h,m,M"
    assert len(lines) == 1 + len(rows)


def test_sample_belief_curves_rejects_bad_step():
    with pytest.raises(ProtocolError):
        sample_belief_curves(DEFAULT_PROFILE, M, step=0.0)


# -- profiles ------------------------------------------------------------------------

def test_default_profile_passes_validation():
    validate_profile(DEFAULT_PROFILE)


def test_profile_file_round_trip(tmp_path):
    path = tmp_path / "profile.json"
    save_profile(DEFAULT_PROFILE, path)
    assert load_profile(path) == DEFAULT_PROFILE


def test_profile_rejects_vanishing_denominator():
    data = profile_to_dict(DEFAULT_PROFILE)
    # pull the healthy-test threshold below the curve's pole at ~1.83
    data["tests"]["A_h"]["healthy"]["threshold"] = 0.0
    with pytest.raises(ProfileError):
        profile_from_dict(data)


def test_profile_rejects_broken_classifications():
    data = profile_to_dict(DEFAULT_PROFILE)
    # flatten the healthy curve of the major test to 0: a perfect score
    # there would no longer de-escalate to the healthy test
    data["tests"]["A_M"]["healthy"] = {
        "threshold": 0.0, "a": 0.0, "b": 1.0, "c": 0.0, "d": 0.0, "v": 0.0, "z": 0.0,
    }
    with pytest.raises(ProfileError):
        profile_from_dict(data)


def test_profile_rejects_missing_fields():
    data = profile_to_dict(DEFAULT_PROFILE)
    del data["tests"]["A_m"]
    with pytest.raises(ProfileError):
        profile_from_dict(data)
