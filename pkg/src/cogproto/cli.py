"""Command-line entry point.

Exit codes are uniform across subcommands: 0 success (model valid, all
bounded properties hold, session ran), 1 domain-level failure
(violations, a bounded property false), 2 usage, parse or I/O errors.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .classes import PatientClass, UnknownClassError
from .game import (
    GameShape,
    GameModelError,
    WordError,
    format_word,
    parse_word,
    validate_pdfa,
)
from .modelio import ModelFormatError, resolve_model
from .pctl import PctlError, check as pctl_check, load_properties
from .protocol import (
    DEFAULT_PROFILE,
    ProfileError,
    ProtocolError,
    default_protocol_config,
    load_profile,
    protocol_step,
    sample_belief_curves,
    curves_to_csv,
    start_session,
)
from .sessionlog import append_step
from .simulate import SimulationConfig, SimulationError, simulate_protocol
from .tracelogic import StopConfig, TraceError, check_stop, load_trace

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2

_INPUT_ERRORS = (
    GameModelError,
    ModelFormatError,
    PctlError,
    ProfileError,
    TraceError,
    UnknownClassError,
    SimulationError,
    ProtocolError,
    OSError,
)

_version = click.version_option(__version__, prog_name="cogproto")


def _usage_error(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(EXIT_USAGE)


@click.group()
@_version
def main():
    """Serious-game cognitive assessment toolkit."""


def _shape_options(fn):
    fn = click.option("--rounds", type=int, default=10, show_default=True,
                      help="pictures to match for a normal game end")(fn)
    fn = click.option("--step-cap", type=int, default=60, show_default=True,
                      help="maximum actions before the game ends")(fn)
    return fn


def _load_profile_arg(path: str | None):
    return load_profile(path) if path else DEFAULT_PROFILE


_profile_option = click.option(
    "--profile", "-p", "profile_path", envvar="COGPROTO_PROFILE", default=None,
    help="belief profile file (defaults to the built-in profile; "
    "COGPROTO_PROFILE overrides)",
)


@main.command()
@_version
@click.argument("model_spec")
@_shape_options
def validate(model_spec: str, rounds: int, step_cap: int):
    """Check MODEL_SPEC (a file or builtin:h|m|M) against the PDFA invariants."""
    try:
        model = resolve_model(model_spec, GameShape(rounds, step_cap))
    except _INPUT_ERRORS as exc:
        _usage_error(exc)
    report = validate_pdfa(model)
    if report.ok:
        click.echo("ok: model satisfies all invariants")
        sys.exit(EXIT_OK)
    for line in report.lines():
        click.echo(line)
    sys.exit(EXIT_DOMAIN)


@main.command("check")
@_version
@click.argument("model_spec")
@click.argument("properties_path", type=click.Path())
@click.option("--state", default=None, help="state to evaluate at (default: initial)")
@_shape_options
def check_cmd(model_spec: str, properties_path: str, state: str | None,
              rounds: int, step_cap: int):
    """Evaluate a property corpus on a model; prints name,state,result CSV."""
    try:
        model = resolve_model(model_spec, GameShape(rounds, step_cap))
        properties = load_properties(properties_path)
    except _INPUT_ERRORS as exc:
        _usage_error(exc)
    at_state = state or model.initial
    click.echo("name,state,result")
    all_hold = True
    for prop in properties:
        try:
            result = pctl_check(model, prop.formula, at_state)
        except _INPUT_ERRORS as exc:
            _usage_error(exc)
        if not result.is_query and not result.verdict:
            all_hold = False
        click.echo(f"{prop.name},{at_state},{result}")
    sys.exit(EXIT_OK if all_hold else EXIT_DOMAIN)


@main.command()
@_version
@click.argument("trace_path", type=click.Path())
@click.option("--max-tests", type=int, default=10, show_default=True)
@click.option("--steady-repeats", type=int, default=3, show_default=True)
@click.option("--cycles", type=int, default=4, show_default=True,
              help="alternations needed for the oscillation condition")
@click.option("--sliding", is_flag=True,
              help="match oscillation anywhere, not anchored at the start")
def monitor(trace_path: str, max_tests: int, steady_repeats: int,
            cycles: int, sliding: bool):
    """Evaluate the stop conditions on a trace file (one class per line)."""
    try:
        trace = load_trace(trace_path)
    except _INPUT_ERRORS as exc:
        _usage_error(exc)
    config = StopConfig(
        max_tests=max_tests,
        steady_repeats=steady_repeats,
        oscillation_cycles=cycles,
        oscillation_anchored=not sliding,
    )
    click.echo(json.dumps(check_stop(trace, config).to_dict()))
    sys.exit(EXIT_OK)


@main.command()
@_version
@click.option("--hypothesis", "-y", required=True, type=click.Choice(["h", "m", "M"]),
              help="initial hypothesis on the patient's class")
@_profile_option
@click.option("--words", "words_path", type=click.Path(), default=None,
              help="batch mode: read one word per line from this file")
@click.option("--log", "log_path", type=click.Path(), default="cogproto-session.jsonl",
              show_default=True, help="session log to append to")
@_shape_options
def protocol(hypothesis: str, profile_path: str | None, words_path: str | None,
             log_path: str, rounds: int, step_cap: int):
    """Run a protocol session, reading words (letters a/b/g/t) line by line.

    Without --words, reads from standard input; after each word prints the
    score, the beliefs, the suggested next test and the stop status.
    """
    interactive = words_path is None
    try:
        profile = _load_profile_arg(profile_path)
        config = default_protocol_config(GameShape(rounds, step_cap), profile)
        lines = (
            click.get_text_stream("stdin")
            if interactive
            else Path(words_path).read_text().splitlines()
        )
    except _INPUT_ERRORS as exc:
        _usage_error(exc)

    session = start_session(PatientClass.from_code(hypothesis), config)
    click.echo(f"# session at test {session.current_test.test_name}, log: {log_path}")
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if session.stop.stopped:
            click.echo("session stopped; ignoring further input", err=True)
            break
        try:
            word = parse_word(line)
            session = protocol_step(session, word, config)
        except (WordError, ProtocolError, GameModelError) as exc:
            if interactive:
                click.echo(f"error: {exc}", err=True)
                continue
            _usage_error(exc)
        step = session.steps[-1]
        append_step(log_path, step, session.stop)
        beliefs = step.beliefs
        click.echo(
            f"test={step.meta_state.test_name} word={format_word(step.word)} "
            f"delta={step.delta:.6f} h={beliefs.healthy:.6f} m={beliefs.mild:.6f} "
            f"M={beliefs.major:.6f} next={step.chosen.test_name}"
        )
        if session.stop.stopped:
            click.echo(f"stop: {json.dumps(session.stop.to_dict())}")
    sys.exit(EXIT_OK)


@main.command()
@_version
@click.option("--true-class", required=True, type=click.Choice(["h", "m", "M"]))
@click.option("--hypothesis", "-y", required=True, type=click.Choice(["h", "m", "M"]))
@click.option("--runs", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@_shape_options
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="directory for report.json and the CSV tables")
def simulate(true_class: str, hypothesis: str, runs: int, seed: int,
             rounds: int, step_cap: int, out_dir: str | None):
    """Simulate whole protocols against a synthetic patient and aggregate."""
    try:
        config = SimulationConfig(
            true_class=PatientClass.from_code(true_class),
            hypothesis=PatientClass.from_code(hypothesis),
            runs=runs,
            seed=seed,
            shape=GameShape(rounds, step_cap),
        )
    except _INPUT_ERRORS as exc:
        _usage_error(exc)
    report = simulate_protocol(config)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        (out / "matrix.csv").write_text(report.matrix_csv())
        (out / "histogram.csv").write_text(report.histogram_csv())
        (out / "stop_reasons.csv").write_text(report.stop_reasons_csv())
        (out / "delta_stats.csv").write_text(report.delta_stats_csv())
        click.echo(f"# report written to {out}")
    click.echo(report.matrix_csv(), nl=False)
    click.echo(report.stop_reasons_csv(), nl=False)
    sys.exit(EXIT_OK)


@main.command()
@_version
@click.option("--test", "-q", "test_name", required=True,
              type=click.Choice(["A_h", "A_m", "A_M"]))
@click.option("--step", type=float, default=0.01, show_default=True)
@_profile_option
@click.option("--out", "out_path", type=click.Path(), default=None)
def curves(test_name: str, step: float, profile_path: str | None, out_path: str | None):
    """Write the belief curves of one test as delta,h,m,M CSV."""
    try:
        profile = _load_profile_arg(profile_path)
        rows = sample_belief_curves(profile, PatientClass.from_test_name(test_name), step)
    except _INPUT_ERRORS as exc:
        _usage_error(exc)
    text = curves_to_csv(rows)
    if out_path is not None:
        Path(out_path).write_text(text)
        click.echo(f"# curves written to {out_path}")
    else:
        click.echo(text, nl=False)
    sys.exit(EXIT_OK)


_LOOPBACK_HOSTS = ("127.0.0.1", "localhost", "::1")


@main.command()
@_version
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True,
              help="0 picks a free port (printed at startup)")
@click.option("--data-dir", type=click.Path(), default="cogproto-sessions",
              show_default=True, help="directory for persisted session logs")
@click.option("--allow-external", is_flag=True,
              help="required to bind to a non-loopback host")
@click.option("--cors-origin", multiple=True, default=("*",), show_default=True)
@_profile_option
@_shape_options
def serve(host: str, port: int, data_dir: str, allow_external: bool,
          cors_origin: tuple[str, ...], profile_path: str | None,
          rounds: int, step_cap: int):
    """Serve the practitioner API over HTTP (loopback only by default)."""
    import asyncio
    import socket

    import uvicorn

    from .service import create_app

    if host not in _LOOPBACK_HOSTS and not allow_external:
        _usage_error(ValueError(f"binding to {host!r} requires --allow-external"))
    try:
        profile = _load_profile_arg(profile_path)
        app = create_app(
            data_dir=Path(data_dir),
            shape=GameShape(rounds, step_cap),
            profile=profile,
            cors_origins=cors_origin,
        )
        sock = socket.create_server((host, port))
    except _INPUT_ERRORS as exc:
        _usage_error(exc)
    click.echo(f"serving on http://{host}:{sock.getsockname()[1]}")
    server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
    asyncio.run(server.serve(sockets=[sock]))
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
