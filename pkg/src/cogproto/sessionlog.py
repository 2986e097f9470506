"""Append-only session logs and bit-exact replay.

Each line is one self-contained step record; replaying the words of a log
through a fresh engine must reproduce the recorded scores, beliefs,
transitions and stop decision exactly, which doubles as the persistence
format of the HTTP service.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Mapping

from .classes import PatientClass
from .protocol import (
    ProtocolConfig,
    ProtocolSession,
    ProtocolStep,
    protocol_step,
    start_session,
)
from .game import format_word, parse_word
from .tracelogic import StopDecision, check_stop


class SessionLogError(ValueError):
    pass


class ReplayMismatchError(SessionLogError):
    """A recorded step disagrees with its recomputation."""


def step_record(step: ProtocolStep, stop: StopDecision) -> dict[str, Any]:
    """The self-contained JSON record of one step (stop status after it)."""
    return {
        "meta_state": step.meta_state.test_name,
        "word": format_word(step.word),
        "delta": step.delta,
        "beliefs": step.beliefs.as_dict(),
        "chosen": step.chosen.code,
        "stop": stop.to_dict(),
    }


def session_records(session: ProtocolSession, config: ProtocolConfig) -> list[dict[str, Any]]:
    """All step records of a session, with per-step stop status rebuilt."""
    records = []
    for i, step in enumerate(session.steps):
        trace = tuple(s.chosen for s in session.steps[: i + 1])
        records.append(step_record(step, check_stop(trace, config.stop)))
    return records


def dump_record(record: Mapping[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def append_step(path: str | Path, step: ProtocolStep, stop: StopDecision) -> None:
    with open(path, "a") as fh:
        fh.write(dump_record(step_record(step, stop)) + "\n")


def write_session(path: str | Path, session: ProtocolSession, config: ProtocolConfig) -> None:
    lines = [dump_record(r) for r in session_records(session, config)]
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_records(path: str | Path) -> list[dict[str, Any]]:
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise SessionLogError(f"{path}:{lineno}: not valid JSON: {exc}") from None
    return records


def _require(record: Mapping[str, Any], key: str, index: int) -> Any:
    if key not in record:
        raise SessionLogError(f"step {index}: record missing field {key!r}")
    return record[key]


def replay_records(records: Iterable[Mapping[str, Any]], config: ProtocolConfig,
                   verify: bool = True) -> ProtocolSession:
    """Rebuild a session by re-stepping every recorded word.

    With ``verify`` set, any drift between a recorded step and its
    recomputation (score, beliefs, chosen class or stop status) raises
    :class:`ReplayMismatchError`.
    """
    records = list(records)
    if not records:
        raise SessionLogError("empty session log")
    first_state = _require(records[0], "meta_state", 0)
    session = start_session(PatientClass.from_test_name(first_state))
    for i, record in enumerate(records):
        word = parse_word(str(_require(record, "word", i)))
        session = protocol_step(session, word, config)
        if not verify:
            continue
        step = session.steps[-1]
        recomputed = step_record(step, session.stop)
        recorded = {
            "meta_state": record.get("meta_state"),
            "word": record.get("word"),
            "delta": record.get("delta"),
            "beliefs": record.get("beliefs"),
            "chosen": record.get("chosen"),
            "stop": record.get("stop"),
        }
        if recorded != recomputed:
            raise ReplayMismatchError(
                f"step {i}: recorded {dump_record(recorded)} != "
                f"recomputed {dump_record(recomputed)}"
            )
    return session


def replay_session_log(path: str | Path, config: ProtocolConfig,
                       verify: bool = True) -> ProtocolSession:
    return replay_records(read_records(path), config, verify=verify)
