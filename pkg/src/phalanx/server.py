"""Session service: the interactive command loop behind the UI.

One session = one scenario instance moving through three phases:

    planning  — the player chats (re-prompting allowed after a bad plan) and
                drops lettered markers; the current plan is stored when valid
    running   — the episode simulates at a configured tick rate and streams
                state frames over the session's WebSocket
    finished  — outcome fixed; the replay record is queryable; Run is idempotent

Provider configuration lives on the server, never inside session state, so no
credential material can leak through session or replay payloads.
"""

from __future__ import annotations

import asyncio
import logging
import queue as queue_mod
import threading
import time
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .llm import (
    ProviderConfig,
    ProviderError,
    Transcript,
    build_state_message,
    build_system_prompt,
    query_model,
)
from .plan import Plan, PlanError, fatal_violations, parse_plan, validate_plan
from .scenario import (
    Outcome,
    ReplayRecord,
    Scenario,
    SCENARIO_NAMES,
    load_scenario,
    run_episode,
    save_replay,
)
from .units import Team, UNIT_TYPES

logger = logging.getLogger(__name__)

MAX_FRAMES_PER_SECOND = 20.0


class CreateSession(BaseModel):
    scenario: str
    seed: int = 1
    pace: float | None = None  # ticks per second; 0 = unpaced


class PromptBody(BaseModel):
    text: str


class MarkerBody(BaseModel):
    x: int
    y: int


def _unit_type_table() -> dict:
    return {
        t.name: {
            "glyph": t.glyph,
            "speed": t.speed,
            "max_health": t.max_health,
            "damage": t.damage,
            "attack_range": t.attack_range,
            "sight_range": t.sight_range,
        }
        for t in UNIT_TYPES
    }


def _roster_doc(scenario: Scenario) -> dict:
    return {
        "ally": [
            {"type": g.type_name, "count": g.count} for g in scenario.ally_groups
        ],
        "enemy": [
            {"type": g.roster.type_name, "count": g.roster.count}
            for g in scenario.enemy_groups
        ],
    }


@dataclass
class Session:
    id: str
    scenario: Scenario
    seed: int
    pace: float
    phase: str = "planning"
    markers: list[tuple[str, tuple[int, int]]] = field(default_factory=list)
    transcript: Transcript | None = None
    plan: Plan | None = None
    plan_diagnostics: list[str] = field(default_factory=list)
    prompt_text: str = ""
    response_text: str = ""
    latency: float = 0.0
    record: ReplayRecord | None = None
    # Thread-safe fan-out: the runner thread publishes, WebSocket coroutines
    # drain their own queue, so no event loop is shared across threads.
    subscribers: list[queue_mod.Queue] = field(default_factory=list)
    _runner: threading.Thread | None = None

    def broadcast(self, message: dict) -> None:
        for queue in list(self.subscribers):
            queue.put(message)


def _frame(state, tick: int) -> dict:
    """One streaming frame: live units only, explicit field names."""
    units = []
    for team in (Team.ALLY, Team.ENEMY):
        ts = state.teams[team]
        for i in ts.alive.nonzero()[0]:
            units.append(
                {
                    "id": int(i),
                    "team": team.label,
                    "type": UNIT_TYPES[int(ts.type_idx[i])].name,
                    "x": round(float(ts.pos[i, 0]), 2),
                    "y": round(float(ts.pos[i, 1]), 2),
                    "health": int(ts.health[i]),
                }
            )
    return {"type": "frame", "tick": tick, "units": units}


def create_app(
    provider: ProviderConfig | None = None,
    default_pace: float = 10.0,
) -> FastAPI:
    from .bench import mock_config

    app = FastAPI(title="phalanx session service")
    # The browser UI is served as static files from another port, so the API
    # must answer cross-origin requests. Nothing here is credentialed.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.provider = provider or mock_config()
    app.state.default_pace = default_pace
    app.state.sessions: dict[str, Session] = {}

    def get_session(session_id: str) -> Session:
        try:
            return app.state.sessions[session_id]
        except KeyError:
            raise HTTPException(404, f"no session {session_id}") from None

    @app.post("/sessions")
    def create_session(body: CreateSession):
        if body.scenario not in SCENARIO_NAMES:
            raise HTTPException(
                422, f"unknown scenario {body.scenario!r}; choose from {SCENARIO_NAMES}"
            )
        scenario = load_scenario(body.scenario)
        session = Session(
            id=uuid.uuid4().hex[:12],
            scenario=scenario,
            seed=body.seed,
            pace=app.state.default_pace if body.pace is None else body.pace,
            # Preset markers are live session markers: the player can refer to
            # them in chat and new placements letter on from where they end.
            markers=[(lbl, (int(x), int(y))) for lbl, (x, y) in scenario.markers],
        )
        app.state.sessions[session.id] = session
        # Map geometry ships once, here; frames carry only unit state.
        return {
            "id": session.id,
            "scenario": scenario.name,
            "title": scenario.title,
            "phase": session.phase,
            "map": scenario.world.to_json(),
            "markers": [
                {"label": lbl, "x": x, "y": y} for lbl, (x, y) in session.markers
            ],
            "mission": scenario.mission,
            "objective": {
                "kind": scenario.objective.kind,
                "point": scenario.objective.point,
                "radius": scenario.objective.radius,
            },
            "max_ticks": scenario.max_ticks,
            "rosters": _roster_doc(scenario),
            "unit_types": _unit_type_table(),
            "preset_markers": [
                {"label": lbl, "x": x, "y": y} for lbl, (x, y) in scenario.markers
            ],
        }

    @app.post("/sessions/{session_id}/markers")
    def add_marker(session_id: str, body: MarkerBody):
        session = get_session(session_id)
        if session.phase != "planning":
            raise HTTPException(409, f"cannot place markers in phase {session.phase}")
        label = chr(ord("A") + len(session.markers))
        session.markers.append((label, (body.x, body.y)))
        return {
            "markers": [
                {"label": lbl, "x": x, "y": y} for lbl, (x, y) in session.markers
            ]
        }

    @app.post("/sessions/{session_id}/prompt")
    def prompt(session_id: str, body: PromptBody):
        session = get_session(session_id)
        if session.phase != "planning":
            raise HTTPException(409, f"cannot prompt in phase {session.phase}")
        scenario = session.scenario
        system = build_system_prompt(scenario, session.markers or None)
        if session.transcript is None:
            session.transcript = Transcript(tags={"fixture_key": scenario.name})
            session.transcript.add_system(system)
        else:
            # Markers placed since the last prompt must reach the model.
            session.transcript.messages[0]["content"] = system
        state_message = build_state_message(scenario.initial_state(session.seed))
        user = state_message + "\n\n# Player's Prompt\n\n" + body.text
        try:
            answer = query_model(app.state.provider, session.transcript, user)
        except ProviderError as err:
            raise HTTPException(502, f"provider failure: {err}") from None
        session.latency = session.transcript.exchanges[-1].latency
        diagnostics: list[str] = []
        plan_doc = None
        try:
            plan = parse_plan(answer)
        except PlanError as err:
            diagnostics.append(str(err))
        else:
            violations = validate_plan(
                plan, scenario.ally_count, scenario.enemy_count, scenario.world
            )
            diagnostics.extend(str(v) for v in violations)
            if not fatal_violations(violations):
                # The session keeps the latest valid plan; the player may
                # keep prompting to replace it until Run.
                session.plan = plan
                session.plan_diagnostics = diagnostics
                session.prompt_text = body.text
                session.response_text = answer
                plan_doc = {
                    "steps": len(plan.steps),
                    "step_ids": sorted(plan.steps),
                    "text": plan.raw_text,
                }
        return {
            "assistant": answer,
            "plan": plan_doc,
            "diagnostics": diagnostics,
            "phase": session.phase,
            "has_plan": session.plan is not None,
        }

    def _drive(session: Session) -> None:
        """Blocking episode runner; lives in a worker thread."""
        pace = session.pace
        min_gap = 1.0 / MAX_FRAMES_PER_SECOND
        last_sent = 0.0
        tick_counter = 0

        def on_tick(state):
            nonlocal last_sent, tick_counter
            tick_counter += 1
            now = time.monotonic()
            if now - last_sent >= min_gap:
                last_sent = now
                session.broadcast(_frame(state, tick_counter))
            if pace > 0:
                time.sleep(1.0 / pace)

        record = run_episode(
            session.scenario,
            session.plan,
            session.seed,
            prompt=session.prompt_text,
            response=session.response_text,
            model_latency=session.latency,
            on_tick=on_tick,
        )
        session.record = record
        session.phase = "finished"
        session.broadcast(
            {
                "type": "outcome",
                "outcome": record.outcome.value,
                "ticks": record.metrics.ticks_elapsed,
                "ally_survivors": record.metrics.ally_survivors,
                "enemy_survivors": record.metrics.enemy_survivors,
            }
        )

    @app.post("/sessions/{session_id}/run")
    async def run(session_id: str):
        session = get_session(session_id)
        if session.phase == "finished":
            return {"phase": "finished", "outcome": session.record.outcome.value}
        if session.phase == "running":
            raise HTTPException(409, "episode already running")
        if session.plan is None:
            raise HTTPException(409, "no valid plan stored; prompt first")
        session.phase = "running"
        session.broadcast({"type": "phase", "phase": "running"})
        session._runner = threading.Thread(
            target=_drive, args=(session,), daemon=True
        )
        session._runner.start()
        return {"phase": "running"}

    @app.get("/sessions/{session_id}/replay")
    def replay(session_id: str):
        session = get_session(session_id)
        if session.phase != "finished" or session.record is None:
            raise HTTPException(409, f"episode not finished (phase {session.phase})")
        import dataclasses

        doc = dataclasses.asdict(session.record)
        doc["outcome"] = session.record.outcome.value
        return doc

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str):
        session = app.state.sessions.get(session_id)
        if session is None:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        queue: queue_mod.Queue = queue_mod.Queue()
        session.subscribers.append(queue)
        loop = asyncio.get_running_loop()

        def next_message():
            while True:
                try:
                    return queue.get(timeout=0.25)
                except queue_mod.Empty:
                    if queue not in session.subscribers:
                        return None

        try:
            await websocket.send_json(
                {"type": "hello", "session": session.id, "phase": session.phase}
            )
            while True:
                message = await loop.run_in_executor(None, next_message)
                if message is None:
                    break
                await websocket.send_json(message)
                if message.get("type") == "outcome":
                    break
        except WebSocketDisconnect:
            pass
        finally:
            if queue in session.subscribers:
                session.subscribers.remove(queue)

    return app


def save_session_replay(session: Session, path) -> None:
    if session.record is None:
        raise ValueError("session has no finished episode")
    save_replay(session.record, path)
