"""CLI surface: wizard golden files, run/record/replay, script coverage."""

from __future__ import annotations

import asyncio
import json
import signal
import socket
import subprocess
import sys
import time

from click.testing import CliRunner

from abmlink.cli import main
from abmlink.headless import run_script
from abmlink.manifest import load_manifest, save_manifest
from support import all_kinds, free_port
from support_net import RawClient, direct_server

from conftest import SCRIPTS


def wait_for_port(port: int, timeout: float = 10.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        with socket.socket() as s:
            s.settimeout(0.2)
            try:
                s.connect(("127.0.0.1", port))
                return
            except OSError:
                time.sleep(0.05)
    raise TimeoutError(f"port {port} never opened")


def spawn_cli(*args: str) -> subprocess.Popen:
    return subprocess.Popen(
        [sys.executable, "-m", "abmlink.cli", *args],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        text=True,
    )


def make_manifest(base_path, tmp_path, **overrides):
    manifest = load_manifest(str(base_path))
    for key, value in overrides.items():
        setattr(manifest, key, value)
    out = tmp_path / "session.manifest.json"
    save_manifest(manifest, str(out))
    return out


class TestWizard:
    def test_flag_run_reproduces_shipped_district_manifest(self, district_manifest_path, tmp_path):
        out = tmp_path / "m.json"
        result = CliRunner().invoke(
            main,
            ["wizard", "--scenario", "district_traffic", "--mode", "bijection",
             "--min", "1", "--max", "4", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert out.read_bytes() == district_manifest_path.read_bytes()

    def test_interactive_defaults_match_shipped_manifest(self, district_manifest_path, tmp_path):
        out = tmp_path / "m.json"
        result = CliRunner().invoke(
            main,
            ["wizard", "--interactive", "--scenario", "district_traffic", "--out", str(out)],
            input="\n" * 200,
        )
        assert result.exit_code == 0, result.output
        assert out.read_bytes() == district_manifest_path.read_bytes()

    def test_village_defaults_match_shipped_manifest(self, village_manifest_path, tmp_path):
        out = tmp_path / "m.json"
        result = CliRunner().invoke(
            main, ["wizard", "--scenario", "village_indicators", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        assert out.read_bytes() == village_manifest_path.read_bytes()

    def test_background_with_sync_species_fails(self, tmp_path):
        result = CliRunner().invoke(
            main,
            ["wizard", "--scenario", "district_traffic", "--mode", "background",
             "--sync", "car", "--out", str(tmp_path / "m.json")],
        )
        assert result.exit_code == 1
        assert "per_step" in result.output

    def test_min_above_max_fails(self, tmp_path):
        result = CliRunner().invoke(
            main,
            ["wizard", "--scenario", "district_traffic", "--min", "3", "--max", "2",
             "--out", str(tmp_path / "m.json")],
        )
        assert result.exit_code == 1
        assert "max_players" in result.output

    def test_wizard_output_loads(self, tmp_path):
        out = tmp_path / "m.json"
        result = CliRunner().invoke(
            main,
            ["wizard", "--scenario", "district_traffic", "--mode", "projection",
             "--min", "0", "--max", "2", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        manifest = load_manifest(str(out))
        assert manifest.coupling_mode == "projection"


class TestRunCommand:
    def test_direct_serves_world_init_within_2s(self, district_manifest_path, tmp_path):
        manifest_path = make_manifest(district_manifest_path, tmp_path, min_players=1, step_period_ms=50)
        port = free_port()
        proc = spawn_cli("run", "--manifest", str(manifest_path), "--port", str(port),
                         "--seed", "5", "--param", "n_cars=5", "--param", "n_motorcycles=5")
        try:
            wait_for_port(port)
            report = run_script(f"ws://127.0.0.1:{port}", "expect world_init\n", timeout_s=2.0)
            assert report.ok, report.to_dict()
        finally:
            proc.send_signal(signal.SIGINT)
            proc.wait(timeout=10)

    def test_broker_mode_with_broker_down_exits_2(self, district_manifest_path, tmp_path):
        manifest_path = make_manifest(district_manifest_path, tmp_path)
        dead_port = free_port()
        proc = spawn_cli("run", "--manifest", str(manifest_path), "--mode", "broker-sim",
                         "--broker-sim-port", str(dead_port))
        out, _ = proc.communicate(timeout=20)
        assert proc.returncode == 2
        assert "unreachable" in out

    def test_interrupt_sends_bye_to_clients(self, district_manifest_path, tmp_path):
        manifest_path = make_manifest(district_manifest_path, tmp_path, min_players=1, step_period_ms=50)
        port = free_port()
        proc = spawn_cli("run", "--manifest", str(manifest_path), "--port", str(port),
                         "--param", "n_cars=0", "--param", "n_motorcycles=0")
        try:
            wait_for_port(port)

            async def body():
                client, ack = await RawClient.connect(port, "p1")
                await client.recv_kind("world_init")
                proc.send_signal(signal.SIGINT)
                bye = await client.recv_kind("bye", timeout=10)
                await client.close()
                return bye

            bye = asyncio.run(body())
            assert bye.kind == "bye"
        finally:
            if proc.poll() is None:
                proc.send_signal(signal.SIGINT)
            proc.wait(timeout=10)

    def test_missing_manifest_exits_2(self):
        result = CliRunner().invoke(main, ["run", "--manifest", "/nonexistent.json"])
        assert result.exit_code == 2


class TestHeadlessCli:
    def test_empty_script_connect_bye_only(self, district_manifest_path, tmp_path):
        async def body():
            manifest = load_manifest(str(district_manifest_path))
            manifest.min_players = 1
            manifest.step_period_ms = 25
            async with direct_server(manifest, scenario_params={"n_cars": 0, "n_motorcycles": 0}) as (server, port):
                script = tmp_path / "empty.txt"
                script.write_text("# nothing\n")
                proc = await asyncio.create_subprocess_exec(
                    sys.executable, "-m", "abmlink.cli", "client",
                    f"127.0.0.1:{port}", str(script),
                    stdout=asyncio.subprocess.PIPE, stderr=asyncio.subprocess.STDOUT,
                )
                out, _ = await proc.communicate()
                return proc.returncode, out.decode()

        code, out = asyncio.run(body())
        assert code == 0, out

    def test_failing_assertion_exits_1_with_report(self, district_manifest_path, tmp_path):
        async def body():
            manifest = load_manifest(str(district_manifest_path))
            manifest.min_players = 1
            manifest.step_period_ms = 25
            async with direct_server(manifest, scenario_params={"n_cars": 0, "n_motorcycles": 0}) as (server, port):
                script = tmp_path / "bad.txt"
                script.write_text("expect world_init\ninvoke toggle_road R999\nexpect action_result ok\n")
                report_path = tmp_path / "report.json"
                proc = await asyncio.create_subprocess_exec(
                    sys.executable, "-m", "abmlink.cli", "client",
                    f"127.0.0.1:{port}", str(script), "--report", str(report_path),
                    stdout=asyncio.subprocess.PIPE, stderr=asyncio.subprocess.STDOUT,
                )
                out, _ = await proc.communicate()
                return proc.returncode, out.decode(), report_path

        code, out, report_path = asyncio.run(body())
        assert code == 1, out
        report = json.loads(report_path.read_text())
        assert report["ok"] is False
        failing = [c for c in report["checks"] if not c["ok"]]
        assert any("status" in c["detail"] for c in failing)


class TestRecordReplay:
    def _record_session(self, district_manifest_path, tmp_path, seed=9, frames=40, steps=30):
        manifest_path = make_manifest(
            district_manifest_path, tmp_path, min_players=0, step_period_ms=10
        )
        recording = tmp_path / "session.jsonl"

        async def body():
            from abmlink.recorder import record_session

            manifest = load_manifest(str(manifest_path))
            client_port, sim_port, http_port = free_port(), free_port(), free_port()
            from abmlink.broker import Broker
            from abmlink.server import SimServer

            broker = Broker(client_port=client_port, sim_port=sim_port, http_port=http_port)
            await broker.start()
            params = {"n_cars": 5, "n_motorcycles": 5}
            record_task = asyncio.ensure_future(
                record_session(
                    f"ws://127.0.0.1:{client_port}", str(recording), manifest, seed,
                    max_frames=frames, scenario_params=params,
                )
            )
            await asyncio.sleep(0.3)  # recorder enters the lobby first
            server = SimServer(
                manifest, seed=seed, mode="broker-sim", broker_sim_port=sim_port,
                step_limit=steps, scenario_params={"n_cars": 5, "n_motorcycles": 5},
            )
            server_task = asyncio.ensure_future(server.run())
            written = await asyncio.wait_for(record_task, timeout=30)
            server.stop()
            await asyncio.wait_for(server_task, timeout=5)
            await broker.close()
            return written

        written = asyncio.run(body())
        return recording, written

    def test_record_captures_step_updates(self, district_manifest_path, tmp_path):
        recording, written = self._record_session(district_manifest_path, tmp_path, frames=25, steps=60)
        lines = recording.read_text().splitlines()
        header = json.loads(lines[0])
        assert header["type"] == "session" and header["seed"] == 9
        kinds = [json.loads(line)["frame"]["kind"] for line in lines[1:]]
        steps_in_file = [
            json.loads(line)["frame"]["payload"]["step"]
            for line in lines[1:]
            if json.loads(line)["frame"]["kind"] == "step_update"
        ]
        assert len(steps_in_file) >= 10
        assert steps_in_file[:10] == list(range(steps_in_file[0], steps_in_file[0] + 10))

    def test_replay_same_seed_matches(self, district_manifest_path, tmp_path):
        recording, _ = self._record_session(district_manifest_path, tmp_path)
        result = CliRunner().invoke(main, ["replay", str(recording)])
        assert result.exit_code == 0, result.output
        assert "replay ok" in result.output

    def test_replay_altered_seed_diverges_early(self, district_manifest_path, tmp_path):
        recording, _ = self._record_session(district_manifest_path, tmp_path)
        result = CliRunner().invoke(main, ["replay", str(recording), "--seed", "10"])
        assert result.exit_code == 1
        assert "diverged" in result.output


class TestScriptCoverage:
    def test_shipped_scripts_cover_every_message_kind(
        self, district_manifest_path, village_manifest_path
    ):
        async def body():
            seen: set[str] = set()

            def absorb(report):
                assert report.ok, json.dumps(report.to_dict(), indent=2)
                seen.update(report.kinds_seen)
                seen.update(report.kinds_sent)

            async def wait_for_free_slot(server):
                for _ in range(100):
                    if not any(c.role == "player" for c in server.clients.values()):
                        return
                    await asyncio.sleep(0.05)

            from abmlink.headless import HeadlessClient

            district = load_manifest(str(district_manifest_path))
            district.min_players = 1
            district.step_period_ms = 25
            async with direct_server(district, seed=4, scenario_params={"n_cars": 3, "n_motorcycles": 2}) as (server, port):
                uri = f"ws://127.0.0.1:{port}"
                absorb(await HeadlessClient(uri, name="cov1", timeout_s=8).run(
                    (SCRIPTS / "district_smoke.txt").read_text()
                ))

                # Reject path: direct mode allows a single player. Wait
                # for the previous client's slot to drain first.
                async def occupy_and_reject():
                    await wait_for_free_slot(server)
                    blocker = HeadlessClient(uri, name="cov2", timeout_s=8)
                    hold = asyncio.ensure_future(blocker.run("wait seconds 2\n"))
                    await asyncio.sleep(0.4)
                    rejected = HeadlessClient(uri, name="cov3", timeout_s=8)
                    report = await rejected.run("")
                    assert not report.ok and report.kinds_seen.get("reject") == 1
                    seen.update(report.kinds_seen)
                    absorb(await hold)

                await occupy_and_reject()
                absorb(await HeadlessClient(uri, name="cov4", role="observer", timeout_s=8).run(
                    (SCRIPTS / "observer_idle.txt").read_text()
                ))

            village = load_manifest(str(village_manifest_path))
            village.min_players = 1
            village.step_period_ms = 25
            async with direct_server(village, seed=4) as (server, port):
                uri = f"ws://127.0.0.1:{port}"
                absorb(await HeadlessClient(uri, name="cov5", timeout_s=8).run(
                    (SCRIPTS / "village_exploration.txt").read_text()
                ))
                await wait_for_free_slot(server)
                absorb(await HeadlessClient(uri, name="cov6", timeout_s=12).run(
                    (SCRIPTS / "village_timeout.txt").read_text()
                ))
            return seen

        seen = asyncio.run(body())
        assert seen == set(all_kinds())
