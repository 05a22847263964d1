"""Session service tests: REST lifecycle, plan gating, and frame streaming.

Everything runs against the bundled mock provider (fixture files on disk), so
no network or credentials are involved.  Episode runs use ``pace=0`` so the
runner thread never sleeps between ticks.
"""

from __future__ import annotations

import time

import pytest
from fastapi.testclient import TestClient
from starlette.websockets import WebSocketDisconnect

from phalanx.llm import ProviderConfig
from phalanx.scenario import load_replay
from phalanx.server import MAX_FRAMES_PER_SECOND, create_app, save_session_replay


@pytest.fixture()
def client():
    with TestClient(create_app()) as c:
        yield c


def create_session(client, scenario="coordinate", **extra) -> dict:
    body = {"scenario": scenario, "pace": 0, **extra}
    resp = client.post("/sessions", json=body)
    assert resp.status_code == 200, resp.text
    return resp.json()


def test_frame_rate_cap_constant():
    assert MAX_FRAMES_PER_SECOND == 20.0


def test_create_session_payload_coordinate(client):
    doc = create_session(client)
    assert doc["scenario"] == "coordinate"
    assert doc["title"] == "Coordinate"
    assert doc["phase"] == "planning"
    assert doc["markers"] == []
    assert doc["preset_markers"] == []
    assert doc["max_ticks"] == 300
    assert doc["objective"]["kind"] == "elimination"
    assert isinstance(doc["mission"], str) and doc["mission"]
    # Map geometry ships once at creation; frames never repeat it.
    assert doc["map"]["width"] > 0 and doc["map"]["height"] > 0
    assert sum(g["count"] for g in doc["rosters"]["ally"]) == 1000
    assert sum(g["count"] for g in doc["rosters"]["enemy"]) == 1000
    stats = doc["unit_types"]
    assert set(stats) == {"spearman", "archer", "cavalry"}
    assert stats["archer"] == {
        "glyph": stats["archer"]["glyph"],
        "speed": 2,
        "max_health": 2,
        "damage": 3,
        "attack_range": 15,
        "sight_range": 15,
    }


def test_create_session_payload_markers_terrain(client):
    doc = create_session(client, scenario="markers_terrain")
    assert doc["objective"]["kind"] == "reach_point"
    assert doc["objective"]["point"] == [61, 0]
    assert doc["objective"]["radius"] == 3.0
    preset = {m["label"]: (m["x"], m["y"]) for m in doc["preset_markers"]}
    assert preset == {"A": (193, 85), "B": (49, 136), "C": (9, 134), "D": (11, 9)}
    # Presets are live markers: the session starts with them and new ones
    # letter on from where they end.
    assert doc["markers"] == doc["preset_markers"]
    resp = client.post(f"/sessions/{doc['id']}/markers", json={"x": 100, "y": 100})
    labels = [m["label"] for m in resp.json()["markers"]]
    assert labels == ["A", "B", "C", "D", "E"]


def test_create_session_unknown_scenario_422(client):
    resp = client.post("/sessions", json={"scenario": "duel"})
    assert resp.status_code == 422
    assert "unknown scenario" in resp.json()["detail"]


def test_cross_origin_browser_clients_are_allowed(client):
    resp = client.options(
        "/sessions",
        headers={
            "origin": "http://localhost:8080",
            "access-control-request-method": "POST",
        },
    )
    assert resp.status_code == 200
    assert resp.headers["access-control-allow-origin"] == "*"


def test_unknown_session_404(client):
    assert client.post("/sessions/nope/markers", json={"x": 1, "y": 2}).status_code == 404
    assert client.post("/sessions/nope/prompt", json={"text": "hi"}).status_code == 404
    assert client.post("/sessions/nope/run").status_code == 404
    assert client.get("/sessions/nope/replay").status_code == 404


def test_markers_letter_in_placement_order(client):
    sid = create_session(client)["id"]
    resp = client.post(f"/sessions/{sid}/markers", json={"x": 30, "y": 40})
    assert resp.json()["markers"] == [{"label": "A", "x": 30, "y": 40}]
    resp = client.post(f"/sessions/{sid}/markers", json={"x": 50, "y": 60})
    assert resp.json()["markers"] == [
        {"label": "A", "x": 30, "y": 40},
        {"label": "B", "x": 50, "y": 60},
    ]


def test_marker_coordinates_must_be_integers(client):
    sid = create_session(client)["id"]
    resp = client.post(f"/sessions/{sid}/markers", json={"x": 1.5, "y": 2})
    assert resp.status_code == 422


def test_prompt_stores_valid_plan(client):
    sid = create_session(client)["id"]
    resp = client.post(f"/sessions/{sid}/prompt", json={"text": "win the battle"})
    assert resp.status_code == 200
    doc = resp.json()
    assert doc["phase"] == "planning"
    assert doc["has_plan"] is True
    assert "BEGIN PLAN" in doc["assistant"]
    plan = doc["plan"]
    assert plan["steps"] == len(plan["step_ids"]) >= 1
    assert plan["step_ids"] == sorted(plan["step_ids"])
    assert isinstance(plan["text"], str) and "Step" in plan["text"]
    assert isinstance(doc["diagnostics"], list)


def test_prompt_works_for_every_scenario(client):
    # Each builtin scenario has a same-named mock fixture, so a session on
    # any of them can reach a stored plan without a live provider.
    for name in ("exploit_weakness", "markers_terrain", "strategize_points"):
        sid = create_session(client, scenario=name)["id"]
        doc = client.post(f"/sessions/{sid}/prompt", json={"text": "go"}).json()
        assert doc["has_plan"] is True, (name, doc["diagnostics"])


def test_prompt_provider_failure_maps_to_502(tmp_path):
    provider = ProviderConfig(
        provider="mock", model="fixture", fixture_dir=str(tmp_path)
    )
    with TestClient(create_app(provider=provider)) as client:
        sid = create_session(client)["id"]
        resp = client.post(f"/sessions/{sid}/prompt", json={"text": "anything"})
        assert resp.status_code == 502
        assert "provider failure" in resp.json()["detail"]


def test_prompt_with_fatal_plan_is_not_stored(tmp_path):
    # Parses fine, but unit id 5000 is outside the 1000-strong roster: fatal.
    (tmp_path / "coordinate.txt").write_text(
        "BEGIN PLAN\n"
        "Step 0:\n"
        "prerequisites: []\n"
        "objective: elimination all\n"
        "units: [5000]\n"
        "- behavior: attack_in_close_range any\n"
        "END PLAN\n"
    )
    provider = ProviderConfig(
        provider="mock", model="fixture", fixture_dir=str(tmp_path)
    )
    with TestClient(create_app(provider=provider)) as client:
        sid = create_session(client)["id"]
        doc = client.post(f"/sessions/{sid}/prompt", json={"text": "x"}).json()
        assert doc["has_plan"] is False
        assert doc["plan"] is None
        assert doc["diagnostics"]  # the fatal violation is reported
        assert doc["phase"] == "planning"
        # No plan stored, so Run must refuse.
        assert client.post(f"/sessions/{sid}/run").status_code == 409


def test_run_without_plan_409_and_replay_409(client):
    sid = create_session(client)["id"]
    resp = client.post(f"/sessions/{sid}/run")
    assert resp.status_code == 409
    assert "no valid plan" in resp.json()["detail"]
    resp = client.get(f"/sessions/{sid}/replay")
    assert resp.status_code == 409
    assert "not finished" in resp.json()["detail"]


def test_stream_to_unknown_session_closes(client):
    with pytest.raises(WebSocketDisconnect) as err:
        with client.websocket_connect("/sessions/nope/stream") as ws:
            ws.receive_json()
    assert err.value.code == 4404


def test_full_lifecycle_with_stream(client, tmp_path):
    """One paid episode covers streaming, run gating, replay, and idempotence."""
    sid = create_session(client)["id"]
    assert client.post(f"/sessions/{sid}/prompt", json={"text": "attack"}).json()[
        "has_plan"
    ]

    with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
        hello = ws.receive_json()
        assert hello == {"type": "hello", "session": sid, "phase": "planning"}

        assert client.post(f"/sessions/{sid}/run").json() == {"phase": "running"}
        # A second Run while the episode is in flight is refused.
        again = client.post(f"/sessions/{sid}/run")
        assert again.status_code == 409
        assert "already running" in again.json()["detail"]

        frames = []
        outcome_msg = None
        last_tick = 0
        deadline = time.monotonic() + 120
        while time.monotonic() < deadline:
            msg = ws.receive_json()
            if msg["type"] == "frame":
                frames.append(msg)
                assert msg["tick"] > last_tick
                last_tick = msg["tick"]
                assert msg["units"], "frames carry at least the surviving units"
                for unit in msg["units"]:
                    assert set(unit) == {"id", "team", "type", "x", "y", "health"}
                    assert unit["team"] in ("ally", "enemy")
                    assert unit["type"] in ("spearman", "archer", "cavalry")
                    assert unit["health"] >= 1  # only live units are streamed
                    assert round(unit["x"], 2) == unit["x"]
                    assert round(unit["y"], 2) == unit["y"]
            elif msg["type"] == "outcome":
                outcome_msg = msg
                break
            else:
                assert msg["type"] == "phase"

    assert frames, "at least the first tick is always broadcast"
    assert outcome_msg is not None
    assert outcome_msg["outcome"] == "win"  # coordinate fixture at seed 1
    assert outcome_msg["ticks"] > 0
    assert outcome_msg["ally_survivors"] > outcome_msg["enemy_survivors"] == 0

    # Replay becomes queryable exactly at finish.
    replay = client.get(f"/sessions/{sid}/replay")
    assert replay.status_code == 200
    doc = replay.json()
    from phalanx import __version__

    assert doc["version"] == __version__
    assert doc["scenario"] == "coordinate"
    assert doc["outcome"] == "win"
    assert doc["fingerprint"]
    assert doc["metrics"]["ticks_elapsed"] == outcome_msg["ticks"]

    # Run is now idempotent and the planning endpoints are closed.
    assert client.post(f"/sessions/{sid}/run").json() == {
        "phase": "finished",
        "outcome": "win",
    }
    assert client.post(f"/sessions/{sid}/markers", json={"x": 1, "y": 1}).status_code == 409
    assert client.post(f"/sessions/{sid}/prompt", json={"text": "x"}).status_code == 409

    # The finished record can be exported and reloaded intact.
    session = client.app.state.sessions[sid]
    path = tmp_path / "session.replay.json"
    save_session_replay(session, path)
    assert load_replay(path).fingerprint == doc["fingerprint"]


def test_save_session_replay_requires_finished_episode(client, tmp_path):
    sid = create_session(client)["id"]
    session = client.app.state.sessions[sid]
    with pytest.raises(ValueError):
        save_session_replay(session, tmp_path / "never.json")
