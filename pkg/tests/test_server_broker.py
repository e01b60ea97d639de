"""Live server and broker behavior over localhost websockets."""

from __future__ import annotations

import asyncio

import pytest

from abmlink.manifest import load_manifest
from abmlink.protocol import (
    ByePayload,
    ConnectPayload,
    EvalPayload,
    InvokeActionPayload,
    Message,
    encode_message,
)
from support_net import RawClient, broker_session, direct_server, http_get_json


def district_manifest(path, **overrides):
    manifest = load_manifest(str(path))
    manifest.step_period_ms = overrides.pop("step_period_ms", 25)
    for key, value in overrides.items():
        setattr(manifest, key, value)
    return manifest


def run(coro):
    return asyncio.run(coro)


class TestDirectMode:
    def test_connect_world_init_and_steps(self, district_manifest_path):
        async def body():
            manifest = district_manifest(district_manifest_path, min_players=1)
            async with direct_server(manifest, seed=3, scenario_params={"n_cars": 5, "n_motorcycles": 5}) as (server, port):
                client, ack = await RawClient.connect(port, "p1")
                assert ack.kind == "handshake_ack"
                init = await client.recv_kind("world_init")
                assert init.payload.player_id == "player-0"
                assert len(init.payload.static_features) == 97
                first = await client.recv_kind("step_update")
                second = await client.recv_kind("step_update")
                assert second.payload.step == first.payload.step + 1
                await client.close()

        run(body())

    def test_second_player_rejected_in_direct_mode(self, district_manifest_path):
        async def body():
            manifest = district_manifest(district_manifest_path, min_players=1)
            async with direct_server(manifest, seed=3, scenario_params={"n_cars": 0, "n_motorcycles": 0}) as (server, port):
                c1, ack1 = await RawClient.connect(port, "p1")
                assert ack1.kind == "handshake_ack"
                c2, reply2 = await RawClient.connect(port, "p2")
                assert reply2.kind == "reject"
                assert reply2.payload.reason == "session_full"
                c3, ack3 = await RawClient.connect(port, "watcher", role="observer")
                assert ack3.kind == "handshake_ack"
                await c1.close()
                await c3.close()

        run(body())

    def test_version_mismatch_rejected(self, district_manifest_path):
        async def body():
            manifest = district_manifest(district_manifest_path)
            async with direct_server(manifest, seed=3, scenario_params={"n_cars": 0, "n_motorcycles": 0}) as (server, port):
                import websockets

                ws = await websockets.connect(f"ws://127.0.0.1:{port}")
                bad = Message("connect", 0, ConnectPayload("p1", "player"), protocol_version=2)
                await ws.send(encode_message(bad))
                from abmlink.protocol import decode_message

                reply = decode_message(await asyncio.wait_for(ws.recv(), timeout=5))
                assert reply.kind == "reject" and reply.payload.reason == "version_mismatch"
                await ws.close()

        run(body())

    def test_malformed_connect_closes_without_reply(self, district_manifest_path):
        async def body():
            manifest = district_manifest(district_manifest_path)
            async with direct_server(manifest, seed=3, scenario_params={"n_cars": 0, "n_motorcycles": 0}) as (server, port):
                import websockets

                ws = await websockets.connect(f"ws://127.0.0.1:{port}")
                await ws.send(b"{this is not json")
                with pytest.raises((websockets.ConnectionClosed, asyncio.TimeoutError)):
                    await asyncio.wait_for(ws.recv(), timeout=5)
                assert server.clients == {}

        run(body())

    def test_eval_results_arrive_in_send_order(self, district_manifest_path):
        async def body():
            manifest = district_manifest(district_manifest_path, min_players=1)
            async with direct_server(manifest, seed=3, scenario_params={"n_cars": 0, "n_motorcycles": 0}) as (server, port):
                client, _ = await RawClient.connect(port, "p1")
                await client.recv_kind("world_init")
                for i in range(10):
                    await client.send("eval", EvalPayload(f"r{i}", f"set global x{i} = {i}"))
                got = []
                while len(got) < 10:
                    msg = await client.recv_kind("eval_result")
                    got.append(msg.payload.request_id)
                assert got == [f"r{i}" for i in range(10)]
                await client.close()

        run(body())

    def test_shutdown_sends_bye(self, district_manifest_path):
        async def body():
            manifest = district_manifest(district_manifest_path, min_players=1)
            async with direct_server(manifest, seed=3, scenario_params={"n_cars": 0, "n_motorcycles": 0}) as (server, port):
                client, _ = await RawClient.connect(port, "p1")
                await client.recv_kind("world_init")
                server.stop()
                bye = await client.recv_kind("bye")
                assert bye.kind == "bye"
                await client.close()

        run(body())


class TestBrokerGating:
    def test_lobby_then_start_at_min_players(self, district_manifest_path):
        async def body():
            manifest = district_manifest(district_manifest_path, min_players=2, step_period_ms=50)
            async with broker_session(manifest, seed=3, scenario_params={"n_cars": 2, "n_motorcycles": 2}) as (
                broker,
                server,
                client_port,
                http_port,
            ):
                c1, _ = await RawClient.connect(client_port, "p1")
                lobby = await c1.recv_kind("phase")
                assert lobby.payload.name == "lobby"
                await asyncio.sleep(0.5)
                assert broker.gate == "waiting"
                assert server.steps_done == 0
                assert all(m.kind != "step_update" for m in c1.frames)
                c2, _ = await RawClient.connect(client_port, "p2")
                init1 = await c1.recv_kind("world_init")
                init2 = await c2.recv_kind("world_init")
                assert init1.payload.player_id != init2.payload.player_id
                await c1.recv_kind("step_update")
                assert broker.gate == "started"
                await c1.close()
                await c2.close()

        run(body())

    def test_min_zero_starts_on_sim_connect(self, district_manifest_path):
        async def body():
            manifest = district_manifest(district_manifest_path, min_players=0, step_period_ms=25)
            async with broker_session(manifest, seed=3, scenario_params={"n_cars": 1, "n_motorcycles": 0}) as (
                broker,
                server,
                client_port,
                http_port,
            ):
                await asyncio.sleep(0.3)
                assert broker.gate == "started"
                assert server.steps_done > 0
                observer, _ = await RawClient.connect(client_port, "watch", role="observer")
                init = await observer.recv_kind("world_init")
                assert init.payload.player_id is None
                await observer.recv_kind("step_update")
                await observer.close()

        run(body())

    def test_fifth_player_rejected(self, district_manifest_path):
        async def body():
            manifest = district_manifest(
                district_manifest_path, min_players=2, max_players=4, step_period_ms=25
            )
            async with broker_session(manifest, seed=3, scenario_params={"n_cars": 0, "n_motorcycles": 0}) as (
                broker,
                server,
                client_port,
                http_port,
            ):
                players = []
                for i in range(4):
                    c, ack = await RawClient.connect(client_port, f"p{i}")
                    assert ack.kind == "handshake_ack"
                    players.append(c)
                c5, reply = await RawClient.connect(client_port, "p4")
                assert reply.kind == "reject" and reply.payload.reason == "session_full"
                obs, ack = await RawClient.connect(client_port, "watch", role="observer")
                assert ack.kind == "handshake_ack"
                for c in players:
                    await c.close()
                await obs.close()

        run(body())

    def test_status_endpoints(self, district_manifest_path):
        async def body():
            manifest = district_manifest(district_manifest_path, min_players=1, step_period_ms=25)
            async with broker_session(manifest, seed=3, scenario_params={"n_cars": 0, "n_motorcycles": 0}) as (
                broker,
                server,
                client_port,
                http_port,
            ):
                code, status = await http_get_json(http_port, "/status")
                assert code == 200
                assert status["sim_connected"] is True
                assert status["gate"] == "waiting"
                assert status["clients"] == []
                assert status["manifest_summary"]["scenario"] == "district_traffic"

                c1, _ = await RawClient.connect(client_port, "p1")
                c2, _ = await RawClient.connect(client_port, "watch", role="observer")
                await c1.recv_kind("world_init")
                code, clients = await http_get_json(http_port, "/clients")
                assert code == 200
                assert {c["client_name"] for c in clients} == {"p1", "watch"}
                roles = {c["client_name"]: c["role"] for c in clients}
                assert roles == {"p1": "player", "watch": "observer"}

                code, _ = await http_get_json(http_port, "/nope")
                assert code == 404
                await c1.close()
                await c2.close()

        run(body())

    def test_disconnected_client_kept_until_grace(self, district_manifest_path):
        async def body():
            manifest = district_manifest(district_manifest_path, min_players=1, step_period_ms=25)
            async with broker_session(
                manifest, seed=3, scenario_params={"n_cars": 0, "n_motorcycles": 0}
            ) as (broker, server, client_port, http_port):
                broker.grace_s = 0.4
                c1, _ = await RawClient.connect(client_port, "p1")
                await c1.recv_kind("world_init")
                await c1.send("bye", ByePayload())
                await c1.close()
                await asyncio.sleep(0.15)
                code, clients = await http_get_json(http_port, "/clients")
                assert len(clients) == 1 and clients[0]["connected"] is False
                await asyncio.sleep(0.5)
                code, clients = await http_get_json(http_port, "/clients")
                assert clients == []

        run(body())


class TestRouting:
    def test_action_results_are_private(self, district_manifest_path):
        async def body():
            manifest = district_manifest(district_manifest_path, min_players=2, step_period_ms=25)
            async with broker_session(manifest, seed=3, scenario_params={"n_cars": 0, "n_motorcycles": 0}) as (
                broker,
                server,
                client_port,
                http_port,
            ):
                c1, _ = await RawClient.connect(client_port, "p1")
                c2, _ = await RawClient.connect(client_port, "p2")
                await c1.recv_kind("world_init")
                await c2.recv_kind("world_init")
                await c1.send("invoke_action", InvokeActionPayload("c1-req", "toggle_road", ["R3"]))
                result = await c1.recv_kind("action_result")
                assert result.payload.request_id == "c1-req"
                # c2 keeps receiving snapshots but never c1's result
                await c2.recv_kind("step_update")
                await c2.recv_kind("step_update")
                assert all(m.kind != "action_result" for m in c2.frames)
                await c1.close()
                await c2.close()

        run(body())

    def test_per_client_fifo_through_broker(self, district_manifest_path):
        async def body():
            manifest = district_manifest(district_manifest_path, min_players=1, step_period_ms=25)
            async with broker_session(manifest, seed=3, scenario_params={"n_cars": 0, "n_motorcycles": 0}) as (
                broker,
                server,
                client_port,
                http_port,
            ):
                client, _ = await RawClient.connect(client_port, "p1")
                await client.recv_kind("world_init")
                for i in range(20):
                    await client.send("eval", EvalPayload(f"q{i}", f"set global v{i} = {i}"))
                got = []
                while len(got) < 20:
                    msg = await client.recv_kind("eval_result")
                    got.append(msg.payload.request_id)
                assert got == [f"q{i}" for i in range(20)]
                await client.close()

        run(body())

    def test_player_state_routes_to_sim(self, district_manifest_path):
        async def body():
            manifest = district_manifest(district_manifest_path, min_players=1, step_period_ms=25)
            async with broker_session(manifest, seed=3, scenario_params={"n_cars": 0, "n_motorcycles": 0}) as (
                broker,
                server,
                client_port,
                http_port,
            ):
                from abmlink.protocol import PlayerStatePayload

                c1, _ = await RawClient.connect(client_port, "p1")
                init = await c1.recv_kind("world_init")
                player_id = init.payload.player_id
                await c1.send("player_state", PlayerStatePayload((50.0, 0.0, 60.0), 90.0, 5.0))
                msg = await c1.recv_until(
                    lambda m: m.kind == "step_update"
                    and any(e.id == player_id and e.location[0] == 50.0 for e in m.payload.entities)
                )
                (player,) = [e for e in msg.payload.entities if e.id == player_id]
                assert player.attributes["pitch_deg"] == 5.0
                await c1.close()

        run(body())


class TestDirectBrokerEquivalence:
    SCRIPT_STEPS = 5

    async def _observe(self, port, kind_limit=None):
        client, ack = await RawClient.connect(port, "p1")
        frames = [ack]
        steps = 0
        while steps < self.SCRIPT_STEPS:
            msg = await client.recv(timeout=10)
            frames.append(msg)
            if msg.kind == "step_update":
                steps += 1
        await client.send("bye", ByePayload())
        await client.close()
        return frames

    def test_single_client_sees_identical_sequences(self, district_manifest_path):
        async def body():
            manifest = district_manifest(district_manifest_path, min_players=1, step_period_ms=25)
            params = {"n_cars": 4, "n_motorcycles": 3}
            async with direct_server(manifest, seed=42, scenario_params=params) as (server, port):
                direct_frames = await self._observe(port)
            manifest2 = district_manifest(district_manifest_path, min_players=1, step_period_ms=25)
            async with broker_session(manifest2, seed=42, scenario_params=params) as (
                broker,
                server,
                client_port,
                http_port,
            ):
                broker_frames = await self._observe(client_port)

            def normalize(msg):
                payload = msg.payload.to_dict()
                if msg.kind == "handshake_ack":
                    payload["client_id"] = "X"
                return (msg.seq, msg.kind, payload)

            direct_norm = [normalize(m) for m in direct_frames]
            broker_norm = [normalize(m) for m in broker_frames]
            assert direct_norm == broker_norm

        run(body())
