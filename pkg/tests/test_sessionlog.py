import json

import numpy as np
import pytest

from cogproto.classes import PatientClass
from cogproto.game import parse_word
from cogproto.protocol import protocol_step, start_session
from cogproto.sessionlog import (
    ReplayMismatchError,
    SessionLogError,
    append_step,
    dump_record,
    read_records,
    replay_records,
    replay_session_log,
    session_records,
    step_record,
    write_session,
)
from cogproto.simulate import sample_word

H, M, BIG = PatientClass.HEALTHY, PatientClass.MILD, PatientClass.MAJOR


def _run_session(config, hypothesis, letter_words):
    session = start_session(hypothesis, config)
    for letters in letter_words:
        session = protocol_step(session, parse_word(letters), config)
    return session


def test_write_read_round_trip_is_bit_exact(tmp_path, protocol_config):
    session = _run_session(protocol_config, M, ["ab" * 5, "a" * 10, "bbbb"])
    path = tmp_path / "session.jsonl"
    write_session(path, session, protocol_config)
    records = read_records(path)
    assert records == session_records(session, protocol_config)


def test_replay_reproduces_session(tmp_path, protocol_config):
    session = _run_session(protocol_config, H, ["a" * 10, "a" * 10, "a" * 10])
    path = tmp_path / "session.jsonl"
    write_session(path, session, protocol_config)
    replayed = replay_session_log(path, protocol_config)
    assert replayed == session  # frozen dataclasses compare field by field
    assert replayed.class_trace == session.class_trace
    assert replayed.stop == session.stop


def test_replay_of_sampled_sessions(protocol_config):
    rng = np.random.default_rng(7)
    for hypothesis in (H, M, BIG):
        session = start_session(hypothesis, protocol_config)
        while not session.stop.stopped:
            word = sample_word(protocol_config.models[BIG], rng)
            session = protocol_step(session, word, protocol_config)
        records = session_records(session, protocol_config)
        assert replay_records(records, protocol_config) == session


def test_append_step_matches_write(tmp_path, protocol_config):
    session = start_session(M, protocol_config)
    appended = tmp_path / "appended.jsonl"
    for letters in ("ab" * 5, "abab"):
        session = protocol_step(session, parse_word(letters), protocol_config)
        append_step(appended, session.steps[-1], session.stop)
    whole = tmp_path / "whole.jsonl"
    write_session(whole, session, protocol_config)
    assert appended.read_text() == whole.read_text()


def test_replay_detects_tampering(tmp_path, protocol_config):
    session = _run_session(protocol_config, M, ["ab" * 5, "abab"])
    records = session_records(session, protocol_config)
    records[1] = dict(records[1], delta=records[1]["delta"] + 1e-9)
    with pytest.raises(ReplayMismatchError):
        replay_records(records, protocol_config)


def test_replay_ignores_extra_fields(protocol_config):
    session = _run_session(protocol_config, M, ["ab" * 5])
    records = [dict(r, at="2024-01-01T00:00:00+00:00")
               for r in session_records(session, protocol_config)]
    assert replay_records(records, protocol_config) == session


def test_replay_rejects_empty_and_malformed(tmp_path, protocol_config):
    with pytest.raises(SessionLogError):
        replay_records([], protocol_config)
    with pytest.raises(SessionLogError):
        replay_records([{"word": "aa"}], protocol_config)
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{broken\n")
    with pytest.raises(SessionLogError):
        read_records(bad)


def test_record_floats_survive_json(protocol_config):
    session = _run_session(protocol_config, M, ["abgab"])
    record = step_record(session.steps[-1], session.stop)
    assert json.loads(dump_record(record)) == record
