"""Operator entry points.

    abm-link wizard   write a coupling manifest (flags or prompts)
    abm-link run      serve a simulation (direct or through a broker)
    abm-link broker   run the multi-player session broker
    abm-link client   run a headless conformance script
    abm-link record   capture a session as an observer
    abm-link replay   verify a recording against a fresh run

Exit codes: 0 ok, 1 assertion or validation failure, 2 environment
failure (unreachable peer, port in use, unreadable file).
"""

from __future__ import annotations

import asyncio
import json
import logging
import signal
import sys

import click

from .broker import Broker, DEFAULT_CLIENT_PORT, DEFAULT_HTTP_PORT, DEFAULT_SIM_PORT
from .geometry import ParseError
from .headless import HeadlessClient, ScriptError, TransportError
from .manifest import ValidationError, load_manifest
from .recorder import RecordingError, record_session, replay as run_replay
from .scenarios import registry
from .server import DEFAULT_DIRECT_PORT, BrokerUnreachable, SimServer
from .wizard import build_manifest, interactive_manifest, summarize, write_manifest

EXIT_FAIL = 1
EXIT_ENV = 2


def _setup_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        datefmt="%H:%M:%S",
    )


@click.group()
@click.option("--verbose", is_flag=True, help="Debug-level logging.")
def main(verbose: bool):
    _setup_logging(verbose)


@main.command()
@click.option("--scenario", type=click.Choice(sorted(registry())), default=None)
@click.option("--mode", type=click.Choice(["bijection", "projection", "background"]), default=None)
@click.option("--min", "min_players", type=int, default=None, help="Players needed to start.")
@click.option("--max", "max_players", type=int, default=None, help="Player connection cap.")
@click.option("--sync", multiple=True, help="Species synced every step (repeatable).")
@click.option("--static", multiple=True, help="Species sent once at init (repeatable).")
@click.option("--step-period-ms", type=int, default=None)
@click.option("--scale", type=float, default=None, help="Client units per simulation meter.")
@click.option("--flip/--no-flip", "flip_vertical_axis", default=None)
@click.option("--interactive", is_flag=True, help="Prompt for every choice.")
@click.option("--out", "-o", type=click.Path(dir_okay=False), default="coupling.manifest.json")
def wizard(scenario, mode, min_players, max_players, sync, static, step_period_ms, scale, flip_vertical_axis, interactive, out):
    """Generate a coupling manifest for a scenario."""
    try:
        if interactive:
            manifest = interactive_manifest(scenario)
        else:
            if scenario is None:
                raise click.UsageError("--scenario is required (or use --interactive)")
            manifest = build_manifest(
                scenario,
                mode=mode,
                min_players=min_players,
                max_players=max_players,
                sync=sync or None,
                static=static or None,
                step_period_ms=step_period_ms,
                scale=scale,
                flip_vertical_axis=flip_vertical_axis,
            )
        write_manifest(manifest, out)
    except ValidationError as exc:
        click.echo(f"invalid manifest: {exc}", err=True)
        sys.exit(EXIT_FAIL)
    click.echo(summarize(manifest))
    click.echo(f"wrote {out}")


def _parse_params(params: tuple[str, ...]) -> dict:
    out = {}
    for item in params:
        key, sep, value = item.partition("=")
        if not sep:
            raise click.UsageError(f"--param expects key=value, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=False))
@click.option("--mode", type=click.Choice(["direct", "broker-sim"]), default="direct")
@click.option("--host", default="127.0.0.1", envvar="ABMLINK_HOST")
@click.option("--port", type=int, default=DEFAULT_DIRECT_PORT, help="Direct-mode listen port.")
@click.option("--broker-host", default="127.0.0.1", envvar="ABMLINK_BROKER_HOST")
@click.option("--broker-sim-port", type=int, default=DEFAULT_SIM_PORT, envvar="ABMLINK_SIM_PORT")
@click.option("--seed", type=int, default=0, help="World RNG seed.")
@click.option("--step-limit", type=int, default=None, help="Stop after this many steps.")
@click.option("--grace-s", type=float, default=10.0, help="Disconnect grace before player removal.")
@click.option("--max-queue", type=int, default=64)
@click.option("--param", multiple=True, help="Scenario parameter key=value (repeatable).")
def run(manifest_path, mode, host, port, broker_host, broker_sim_port, seed, step_limit, grace_s, max_queue, param):
    """Run a simulation serving the given manifest."""
    try:
        manifest = load_manifest(manifest_path)
    except ParseError as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_ENV)
    except ValidationError as exc:
        click.echo(f"invalid manifest: {exc}", err=True)
        sys.exit(EXIT_FAIL)

    async def amain():
        server = SimServer(
            manifest,
            seed=seed,
            mode=mode,
            host=host,
            port=port,
            broker_host=broker_host,
            broker_sim_port=broker_sim_port,
            step_limit=step_limit,
            disconnect_grace_s=grace_s,
            scenario_params=_parse_params(param),
            max_queue=max_queue,
        )
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, server.stop)
        await server.run()

    try:
        asyncio.run(amain())
    except BrokerUnreachable as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_ENV)
    except OSError as exc:
        click.echo(f"cannot serve: {exc}", err=True)
        sys.exit(EXIT_ENV)


@main.command()
@click.option("--host", default="127.0.0.1", envvar="ABMLINK_HOST")
@click.option("--client-port", type=int, default=DEFAULT_CLIENT_PORT, envvar="ABMLINK_CLIENT_PORT")
@click.option("--sim-port", type=int, default=DEFAULT_SIM_PORT, envvar="ABMLINK_SIM_PORT")
@click.option("--http-port", type=int, default=DEFAULT_HTTP_PORT, envvar="ABMLINK_HTTP_PORT")
@click.option("--max-queue", type=int, default=64)
@click.option("--grace-s", type=float, default=10.0)
def broker(host, client_port, sim_port, http_port, max_queue, grace_s):
    """Run the multi-player session broker."""

    async def amain():
        service = Broker(
            host=host,
            client_port=client_port,
            sim_port=sim_port,
            http_port=http_port,
            max_queue=max_queue,
            grace_s=grace_s,
        )
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, service.stop)
        await service.run()

    try:
        asyncio.run(amain())
    except OSError as exc:
        click.echo(f"cannot serve: {exc}", err=True)
        sys.exit(EXIT_ENV)


@main.command()
@click.argument("address")
@click.argument("script", type=click.Path(exists=True, dir_okay=False))
@click.option("--name", default="headless")
@click.option("--role", type=click.Choice(["player", "observer"]), default="player")
@click.option("--timeout", type=float, default=10.0, help="Per-directive timeout (s).")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
def client(address, script, name, role, timeout, report_path):
    """Run a headless conformance script against ADDRESS (host:port)."""
    uri = address if address.startswith("ws://") else f"ws://{address}"
    with open(script, "r", encoding="utf-8") as fh:
        text = fh.read()
    headless = HeadlessClient(uri, name=name, role=role, timeout_s=timeout)
    try:
        report = asyncio.run(headless.run(text))
    except TransportError as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_ENV)
    except ScriptError as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_FAIL)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
            fh.write("\n")
    for check in report.checks:
        status = "ok " if check.ok else "FAIL"
        detail = f" ({check.detail})" if check.detail else ""
        click.echo(f"[{status}] line {check.line_no}: {check.directive}{detail}")
    if not report.ok:
        sys.exit(EXIT_FAIL)


@main.command()
@click.argument("address")
@click.option("--out", "-o", required=True, type=click.Path(dir_okay=False))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(),
              help="Manifest the server was started with (embedded for replay).")
@click.option("--seed", type=int, required=True, help="Seed the server was started with.")
@click.option("--frames", type=int, default=None, help="Stop after this many frames.")
@click.option("--seconds", type=float, default=None, help="Stop after this long.")
@click.option("--name", default="recorder")
@click.option("--param", multiple=True, help="Scenario parameter the server was run with (key=value).")
def record(address, out, manifest_path, seed, frames, seconds, name, param):
    """Attach as an observer and record every received frame."""
    uri = address if address.startswith("ws://") else f"ws://{address}"
    try:
        manifest = load_manifest(manifest_path)
        written = asyncio.run(
            record_session(
                uri, out, manifest, seed,
                max_frames=frames, max_seconds=seconds, name=name,
                scenario_params=_parse_params(param),
            )
        )
    except (ParseError, ValidationError) as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_FAIL)
    except (RecordingError, OSError) as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_ENV)
    click.echo(f"recorded {written} frame(s) to {out}")


@main.command(name="replay")
@click.argument("recording", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override the recorded seed.")
def replay_cmd(recording, seed):
    """Re-run a recording and verify the deterministic stream."""
    try:
        result = run_replay(recording, seed_override=seed)
    except (RecordingError, OSError, ParseError) as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_ENV)
    if result.ok:
        click.echo(f"replay ok: {result.frames_compared} frame(s) match")
    else:
        step = f" (step {result.divergence_step})" if result.divergence_step is not None else ""
        click.echo(f"replay diverged at frame {result.divergence_index}{step}: {result.message}")
        sys.exit(EXIT_FAIL)


if __name__ == "__main__":
    main()
