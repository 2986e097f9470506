import json
from pathlib import Path

import pytest
from click.testing import CliRunner

import cogproto.data
from cogproto.cli import main
from cogproto.modelio import model_to_dict, save_model

DATA = Path(cogproto.data.__path__[0])
CORPUS = DATA / "properties.pctl"


@pytest.fixture
def runner():
    return CliRunner()


def test_version_everywhere(runner):
    assert runner.invoke(main, ["--version"]).exit_code == 0
    for sub in ("validate", "check", "monitor", "protocol", "simulate", "curves", "serve"):
        result = runner.invoke(main, [sub, "--version"])
        assert result.exit_code == 0, sub
        assert "cogproto" in result.output


# -- validate ---------------------------------------------------------------

def test_validate_builtin_model(runner):
    result = runner.invoke(main, ["validate", "builtin:h"])
    assert result.exit_code == 0
    assert "ok" in result.output


def test_validate_reports_violations(runner, tmp_path, h_model):
    doc = model_to_dict(h_model)
    doc["transitions"][0]["prob"] = 0.123  # break the first row sum
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(doc))
    result = runner.invoke(main, ["validate", str(path)])
    assert result.exit_code == 1
    assert "row_sum" in result.output


def test_validate_missing_file(runner):
    result = runner.invoke(main, ["validate", "nowhere.json"])
    assert result.exit_code == 2


# -- check ------------------------------------------------------------------

def test_check_shipped_corpus_on_healthy(runner):
    result = runner.invoke(main, ["check", "builtin:h", str(CORPUS)])
    assert result.exit_code == 0
    lines = result.output.strip().splitlines()
    assert lines[0] == "name,state,result"
    table = {row.split(",")[0]: row.split(",")[2] for row in lines[1:]}
    assert table["final_reach"] == "true"
    assert table["wrong_then_idle"] == "true"
    float(table["leave_game"])  # probability rows carry 9-decimal numbers
    assert len(table["leave_game"].split(".")[1]) == 9


def test_check_failing_bound_exits_one(runner, tmp_path):
    props = tmp_path / "p.pctl"
    props.write_text("impossible: P >=0.5 [F a2]\n")
    result = runner.invoke(main, ["check", "builtin:h", str(props)])
    assert result.exit_code == 1
    assert "impossible" in result.output


def test_check_malformed_property_exits_two(runner, tmp_path):
    props = tmp_path / "p.pctl"
    props.write_text("broken: P =1 [F (a1\n")
    result = runner.invoke(main, ["check", "builtin:h", str(props)])
    assert result.exit_code == 2
    assert "position" in result.output


# -- monitor ------------------------------------------------------------------

def test_monitor_oscillating_trace(runner, tmp_path):
    trace = tmp_path / "trace.txt"
    trace.write_text("".join(f"{c}\n" for c in "mMmMmMmM"))
    result = runner.invoke(main, ["monitor", str(trace)])
    assert result.exit_code == 0
    decision = json.loads(result.output)
    assert decision == {
        "stopped": True,
        "reason": "oscillation",
        "detail": [0, 1, 2, 3, 4, 5, 6, 7],
    }


def test_monitor_bad_trace_exits_two(runner, tmp_path):
    trace = tmp_path / "trace.txt"
    trace.write_text("h\nq\n")
    assert runner.invoke(main, ["monitor", str(trace)]).exit_code == 2


# -- protocol ------------------------------------------------------------------

def test_protocol_interactive_reference_session(runner, tmp_path):
    log = tmp_path / "log.jsonl"
    result = runner.invoke(
        main,
        ["protocol", "-y", "M", "--log", str(log)],
        input="aaaaaaaaaa\n",
    )
    assert result.exit_code == 0
    assert "h=0.750260" in result.output
    assert "next=A_h" in result.output
    assert log.exists() and len(log.read_text().splitlines()) == 1


def test_protocol_medium_word_stays_mild(runner, tmp_path):
    result = runner.invoke(
        main,
        ["protocol", "-y", "m", "--log", str(tmp_path / "log.jsonl")],
        input="ababababab\n",
    )
    assert result.exit_code == 0
    assert "next=A_m" in result.output


def test_protocol_steady_state_locks_input(runner, tmp_path):
    words = "aaaaaaaaaa\n" * 4
    result = runner.invoke(
        main,
        ["protocol", "-y", "h", "--log", str(tmp_path / "log.jsonl")],
        input=words,
    )
    assert result.exit_code == 0
    assert '"reason": "steady_state"' in result.output
    assert "ignoring further input" in result.output


def test_protocol_interactive_recovers_from_bad_word(runner, tmp_path):
    result = runner.invoke(
        main,
        ["protocol", "-y", "h", "--log", str(tmp_path / "log.jsonl")],
        input="axq\naaaaaaaaaa\n",
    )
    assert result.exit_code == 0
    assert "error:" in result.output
    assert "next=A_h" in result.output


def test_protocol_batch_mode(runner, tmp_path):
    words = tmp_path / "words.txt"
    words.write_text("ababababab\nababab\n")
    log = tmp_path / "log.jsonl"
    result = runner.invoke(main, ["protocol", "-y", "m", "--words", str(words),
                                  "--log", str(log)])
    assert result.exit_code == 0
    assert len(log.read_text().splitlines()) == 2


def test_protocol_batch_mode_bad_word_exits_two(runner, tmp_path):
    words = tmp_path / "words.txt"
    words.write_text("zz\n")
    result = runner.invoke(main, ["protocol", "-y", "m", "--words", str(words),
                                  "--log", str(tmp_path / "log.jsonl")])
    assert result.exit_code == 2


# -- simulate -------------------------------------------------------------------

def test_simulate_writes_report(runner, tmp_path):
    out = tmp_path / "report"
    result = runner.invoke(main, [
        "simulate", "--true-class", "h", "-y", "h",
        "--runs", "50", "--seed", "4", "--out", str(out),
    ])
    assert result.exit_code == 0
    for name in ("report.json", "matrix.csv", "histogram.csv",
                 "stop_reasons.csv", "delta_stats.csv"):
        assert (out / name).exists()
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["seed"] == 4
    assert sum(report["classification_matrix"]["h"].values()) == 50


def test_simulate_deterministic_output(runner):
    args = ["simulate", "--true-class", "m", "-y", "M", "--runs", "30", "--seed", "9"]
    first = runner.invoke(main, args)
    second = runner.invoke(main, args)
    assert first.output == second.output


# -- curves ---------------------------------------------------------------------

def test_curves_csv_value(runner):
    result = runner.invoke(main, ["curves", "-q", "A_m", "--step", "0.5"])
    assert result.exit_code == 0
    row = [r for r in result.output.splitlines() if r.startswith("5,")][0]
    assert row.split(",")[2].startswith("0.876762")


def test_curves_out_file(runner, tmp_path):
    out = tmp_path / "curves.csv"
    result = runner.invoke(main, ["curves", "-q", "A_M", "--out", str(out)])
    assert result.exit_code == 0
    assert out.read_text().splitlines()[0] == "delta,h,m,M"


# -- serve guard ------------------------------------------------------------------

def test_serve_requires_flag_for_external_bind(runner):
    result = runner.invoke(main, ["serve", "--host", "0.0.0.0"])
    assert result.exit_code == 2
    assert "--allow-external" in result.output
