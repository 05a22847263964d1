"""Shipped scenarios, the episode runner, adjudication, metrics, and replays.

A scenario bundles a map, both rosters, the opposing side's behavior wiring,
a global objective, and a tick budget.  Episodes consume a parsed plan (or a
plan error), simulate lockstep ticks, and produce a ReplayRecord that can be
persisted and re-executed bit-exactly on the same build.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, asdict
from enum import Enum
from functools import lru_cache
from importlib import resources

import numpy as np

from . import __version__
from .bt.library import library_tree
from .bt.vector import Perception, evaluate_groups
from .engine import (
    CONTACT_DISTANCE,
    PUSH_ITERATIONS,
    GameState,
    RosterGroup,
    TeamActions,
    spawn_roster,
    state_hash,
    step_game,
)
from .plan import (
    InvalidPlanError,
    NoPlanError,
    Plan,
    PlanError,
    PlanRuntime,
    fatal_violations,
    parse_plan,
    validate_plan,
)
from .terrain import Rect, WorldMap
from .units import Team, type_by_name

# Global objectives resolve at this range; a point is "reached" within it.
OBJECTIVE_RADIUS = 3.0

REPLAY_SCHEMA = 1

SCENARIO_NAMES = (
    "coordinate",
    "exploit_weakness",
    "markers_terrain",
    "strategize_points",
)


class Outcome(Enum):
    WIN = "win"
    LOSS = "loss"
    TIE = "tie"
    EARLY_COMPLETION = "early completion"
    INVALID_PLAN = "invalid plan"
    NO_PLAN = "no plan"


# Scoring order: winning beats stalling beats losing; plan failures rank last.
OUTCOME_RANK = {
    Outcome.WIN: 4,
    Outcome.TIE: 3,
    Outcome.EARLY_COMPLETION: 3,
    Outcome.LOSS: 2,
    Outcome.INVALID_PLAN: 1,
    Outcome.NO_PLAN: 1,
}


@dataclass(frozen=True)
class GlobalObjective:
    kind: str  # "elimination" | "defend_point" | "reach_point"
    point: tuple[float, float] | None = None
    radius: float = OBJECTIVE_RADIUS


@dataclass(frozen=True)
class EnemyGroup:
    roster: RosterGroup
    tree_name: str
    target: tuple[int, int] | None = None


@dataclass
class Scenario:
    name: str
    title: str
    world: WorldMap
    ally_groups: tuple[RosterGroup, ...]
    enemy_groups: tuple[EnemyGroup, ...]
    objective: GlobalObjective
    max_ticks: int
    position_radius: float
    markers: tuple[tuple[str, tuple[int, int]], ...] = ()
    mission: str = ""
    source: dict = field(default_factory=dict, repr=False)

    @property
    def ally_count(self) -> int:
        return sum(g.count for g in self.ally_groups)

    @property
    def enemy_count(self) -> int:
        return sum(g.roster.count for g in self.enemy_groups)

    def initial_state(self, seed: int) -> GameState:
        allies = spawn_roster(self.world, self.ally_groups, seed, Team.ALLY)
        enemies = spawn_roster(
            self.world, [g.roster for g in self.enemy_groups], seed, Team.ENEMY
        )
        return GameState(
            map=self.world, seed=seed, tick=0,
            teams={Team.ALLY: allies, Team.ENEMY: enemies},
        )

    def enemy_eval_groups(self):
        """Static (tree, field, ids) wiring for the opposing side."""
        targets = [g.target for g in self.enemy_groups if g.target is not None]
        if targets:
            self.world.distance_fields([tuple(map(float, t)) for t in targets])
        out = []
        start = 0
        for g in self.enemy_groups:
            ids = np.arange(start, start + g.roster.count, dtype=np.int64)
            start += g.roster.count
            dist = None
            if g.target is not None:
                dist = self.world.distance_field(tuple(map(float, g.target)))
            out.append((library_tree(g.tree_name), dist, ids))
        return out

    def scaled(self, total_units: int) -> "Scenario":
        """Same scenario with both rosters rescaled to `total_units` combined."""
        current = self.ally_count + self.enemy_count
        factor = total_units / current
        allies = tuple(
            RosterGroup(g.type_name, max(1, round(g.count * factor)), g.region)
            for g in self.ally_groups
        )
        enemies = tuple(
            EnemyGroup(
                RosterGroup(g.roster.type_name, max(1, round(g.roster.count * factor)),
                            g.roster.region),
                g.tree_name, g.target,
            )
            for g in self.enemy_groups
        )
        doc = dict(self.source)
        doc["scaled_total"] = total_units
        return Scenario(
            name=self.name, title=self.title, world=self.world,
            ally_groups=allies, enemy_groups=enemies, objective=self.objective,
            max_ticks=self.max_ticks, position_radius=self.position_radius,
            markers=self.markers, mission=self.mission, source=doc,
        )

    def fingerprint(self) -> str:
        """Digest of everything that affects episode results on this build."""
        knobs = {
            "scenario": self.source,
            "contact": CONTACT_DISTANCE,
            "push_iterations": PUSH_ITERATIONS,
            "objective_radius": self.objective.radius,
            "position_radius": self.position_radius,
        }
        blob = json.dumps(knobs, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_json(cls, doc: dict) -> "Scenario":
        world = WorldMap.from_json(doc["map"])
        allies = tuple(
            RosterGroup(type_by_name(g["type"]).name, g["count"], Rect(*g["box"]))
            for g in doc["allies"]
        )
        enemies = tuple(
            EnemyGroup(
                RosterGroup(type_by_name(g["type"]).name, g["count"], Rect(*g["box"])),
                g["tree"],
                tuple(g["target"]) if g.get("target") else None,
            )
            for g in doc["enemies"]
        )
        obj = doc["objective"]
        objective = GlobalObjective(
            kind=obj["kind"],
            point=tuple(obj["point"]) if obj.get("point") else None,
            radius=obj.get("radius", OBJECTIVE_RADIUS),
        )
        markers = tuple((m[0], tuple(m[1])) for m in doc.get("markers", ()))
        return cls(
            name=doc["name"], title=doc["title"], world=world,
            ally_groups=allies, enemy_groups=enemies, objective=objective,
            max_ticks=doc["max_ticks"], position_radius=doc["position_radius"],
            markers=markers, mission=doc.get("mission", ""), source=doc,
        )


@lru_cache(maxsize=None)
def _scenario_doc(name: str) -> str:
    return (
        resources.files("phalanx").joinpath(f"data/scenario_{name}.json").read_text()
    )


def load_scenario(name: str) -> Scenario:
    if name not in SCENARIO_NAMES:
        raise KeyError(f"unknown scenario {name!r}; choose from {SCENARIO_NAMES}")
    return Scenario.from_json(json.loads(_scenario_doc(name)))


def builtin_scenarios() -> list[Scenario]:
    return [load_scenario(n) for n in SCENARIO_NAMES]


# -- episode execution ---------------------------------------------------------------


@dataclass
class EpisodeMetrics:
    pct_enemies_eliminated: float
    min_ally_distance_to_objective: float | None
    ticks_elapsed: int
    ally_survivors: int
    enemy_survivors: int


@dataclass
class ReplayRecord:
    scenario: str
    prompt: str
    response: str
    plan_text: str
    seed: int
    outcome: Outcome
    metrics: EpisodeMetrics
    version: str
    fingerprint: str
    model_latency: float = 0.0
    sim_seconds: float = 0.0
    diagnostics: list[str] = field(default_factory=list)
    scaled_total: int | None = None


def adjudicate(scenario: Scenario, state: GameState, plan_complete: bool = False):
    """Win/Loss per the global objective (win checked first), else plan-complete."""
    allies = state.teams[Team.ALLY]
    enemies = state.teams[Team.ENEMY]
    obj = scenario.objective
    enemies_dead = not enemies.alive.any()
    allies_dead = not allies.alive.any()
    if obj.kind == "elimination":
        if enemies_dead:
            return Outcome.WIN
        if allies_dead:
            return Outcome.LOSS
    elif obj.kind == "reach_point":
        px, py = obj.point
        pos = allies.pos[allies.alive]
        if len(pos) and (np.hypot(pos[:, 0] - px, pos[:, 1] - py) <= obj.radius).any():
            return Outcome.WIN
        if allies_dead:
            return Outcome.LOSS
    elif obj.kind == "defend_point":
        if enemies_dead:
            return Outcome.WIN
        px, py = obj.point
        pos = enemies.pos[enemies.alive]
        if len(pos) and (np.hypot(pos[:, 0] - px, pos[:, 1] - py) <= obj.radius).any():
            return Outcome.LOSS
        if allies_dead:
            return Outcome.LOSS
    else:
        raise ValueError(f"unknown objective kind {obj.kind!r}")
    if plan_complete:
        return Outcome.EARLY_COMPLETION
    return None


def compute_metrics(
    scenario: Scenario, state: GameState, ticks: int, best_distance: float | None
) -> EpisodeMetrics:
    enemies = state.teams[Team.ENEMY]
    allies = state.teams[Team.ALLY]
    total = len(enemies)
    return EpisodeMetrics(
        pct_enemies_eliminated=float(1.0 - enemies.alive.sum() / total) if total else 1.0,
        min_ally_distance_to_objective=best_distance,
        ticks_elapsed=ticks,
        ally_survivors=int(allies.alive.sum()),
        enemy_survivors=int(enemies.alive.sum()),
    )


def _objective_distance(scenario: Scenario, state: GameState) -> float | None:
    if scenario.objective.point is None:
        return None
    px, py = scenario.objective.point
    pos = state.teams[Team.ALLY].pos[state.teams[Team.ALLY].alive]
    if not len(pos):
        return None
    return float(np.hypot(pos[:, 0] - px, pos[:, 1] - py).min())


def run_episode(
    scenario: Scenario,
    plan: Plan | PlanError | str,
    seed: int,
    *,
    prompt: str = "",
    response: str = "",
    model_latency: float = 0.0,
    overlap_fatal: bool = False,
    on_tick=None,
    collect_hashes: list[str] | None = None,
) -> ReplayRecord:
    """Simulate one episode; every failure mode is an Outcome, never a raise."""
    if isinstance(plan, str):
        try:
            plan = parse_plan(plan)
        except PlanError as err:
            plan = err

    def record(outcome, metrics, plan_text="", diagnostics=(), sim_seconds=0.0):
        return ReplayRecord(
            scenario=scenario.name, prompt=prompt, response=response,
            plan_text=plan_text, seed=seed, outcome=outcome, metrics=metrics,
            version=__version__, fingerprint=scenario.fingerprint(),
            model_latency=model_latency, sim_seconds=sim_seconds,
            diagnostics=list(diagnostics),
            scaled_total=scenario.source.get("scaled_total"),
        )

    def empty_metrics():
        return EpisodeMetrics(
            pct_enemies_eliminated=0.0,
            min_ally_distance_to_objective=None,
            ticks_elapsed=0,
            ally_survivors=scenario.ally_count,
            enemy_survivors=scenario.enemy_count,
        )

    if isinstance(plan, NoPlanError):
        return record(Outcome.NO_PLAN, empty_metrics(), diagnostics=[str(plan)])
    if isinstance(plan, PlanError):
        return record(Outcome.INVALID_PLAN, empty_metrics(), diagnostics=[str(plan)])

    violations = validate_plan(
        plan, scenario.ally_count, scenario.enemy_count, scenario.world,
        overlap_fatal=overlap_fatal,
    )
    fatal = fatal_violations(violations)
    if fatal:
        return record(
            Outcome.INVALID_PLAN, empty_metrics(), plan_text=plan.raw_text,
            diagnostics=[str(v) for v in violations],
        )

    started = time.perf_counter()
    state = scenario.initial_state(seed)
    runtime = PlanRuntime(
        plan, scenario.world, scenario.ally_count, scenario.enemy_count,
        position_radius=scenario.position_radius,
    )
    enemy_groups = scenario.enemy_eval_groups()
    best = _objective_distance(scenario, state)
    if collect_hashes is not None:
        collect_hashes.append(state_hash(state))
    outcome = None
    ticks = 0
    for _ in range(scenario.max_ticks):
        perception = Perception(state)
        actions = {
            Team.ALLY: evaluate_groups(
                state, Team.ALLY, runtime.behavior_groups(), perception
            ),
            Team.ENEMY: evaluate_groups(state, Team.ENEMY, enemy_groups, perception),
        }
        state = step_game(state, actions)
        ticks += 1
        runtime.advance(state)
        d = _objective_distance(scenario, state)
        if d is not None:
            best = d if best is None else min(best, d)
        if collect_hashes is not None:
            collect_hashes.append(state_hash(state))
        if on_tick is not None:
            on_tick(state)
        outcome = adjudicate(scenario, state, plan_complete=runtime.complete)
        if outcome is not None:
            break
    if outcome is None:
        outcome = Outcome.TIE
    return record(
        outcome,
        compute_metrics(scenario, state, ticks, best),
        plan_text=plan.raw_text,
        diagnostics=[str(v) for v in violations],
        sim_seconds=time.perf_counter() - started,
    )


# -- replay persistence -----------------------------------------------------------


class ReplayVersionError(RuntimeError):
    """Replay was produced by an incompatible build or configuration."""


def save_replay(record: ReplayRecord, path) -> None:
    doc = asdict(record)
    doc["outcome"] = record.outcome.value
    doc["schema"] = REPLAY_SCHEMA
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)


def load_replay(path) -> ReplayRecord:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != REPLAY_SCHEMA:
        raise ReplayVersionError(f"unsupported replay schema {doc.get('schema')!r}")
    doc.pop("schema")
    doc["outcome"] = Outcome(doc["outcome"])
    doc["metrics"] = EpisodeMetrics(**doc["metrics"])
    return ReplayRecord(**doc)


def replay_episode(record: ReplayRecord) -> ReplayRecord:
    """Re-execute a saved episode; raises if the build no longer matches."""
    scenario = load_scenario(record.scenario)
    if record.scaled_total:
        scenario = scenario.scaled(record.scaled_total)
    if scenario.fingerprint() != record.fingerprint:
        raise ReplayVersionError(
            f"replay fingerprint {record.fingerprint} does not match "
            f"current build {scenario.fingerprint()}"
        )
    plan: Plan | PlanError | str
    if record.outcome is Outcome.NO_PLAN:
        plan = NoPlanError("; ".join(record.diagnostics) or "no plan")
    elif record.outcome is Outcome.INVALID_PLAN and not record.plan_text:
        plan = InvalidPlanError("; ".join(record.diagnostics) or "invalid plan")
    else:
        plan = record.plan_text
    return run_episode(
        scenario, plan, record.seed,
        prompt=record.prompt, response=record.response,
        model_latency=record.model_latency,
    )
