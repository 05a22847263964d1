"""Model bridge: system-prompt assembly, chat transport, and plan extraction.

The bridge is deliberately thin.  Prompt text is assembled from live engine and
scenario configuration (never hard-coded numbers), providers sit behind a small
adapter table, and the mock provider replays canned response files so the whole
harness runs offline.  Querying is single-shot: one semantic attempt per prompt,
with transport-level retries only for connections that never got established.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

from .scenario import Scenario
from .engine import GameState
from .units import Team, UNIT_TYPES

logger = logging.getLogger(__name__)

# Stat lines and roster slices use the plan DSL's canonical filter tokens.
PROMPT_TYPE_TOKEN = {"spearman": "spearmen", "archer": "archer", "cavalry": "cavalry"}

DEAD_PLACEHOLDER = "∅"  # ∅ in health/position dumps


class ProviderError(RuntimeError):
    """Base class for everything that prevents getting an assistant message."""


class TransportError(ProviderError):
    """Network-level failure that survived the bounded connection retries."""


class ProviderTimeoutError(ProviderError):
    """The provider did not answer within the configured timeout."""


class AuthError(ProviderError):
    """Credentials missing, invalid, or rejected."""


class QuotaError(ProviderError):
    """Rate or usage limit hit."""


@dataclass
class ProviderConfig:
    """How to reach one chat model.

    ``credential_env`` is the *name* of an environment variable; the resolved
    value is read at request time and never stored on this object nor written
    into any artifact.
    """

    provider: str = "mock"
    model: str = "fixture"
    endpoint: str | None = None
    temperature: float = 0.0
    max_tokens: int = 4096
    credential_env: str | None = None
    timeout: float = 120.0
    fixture_dir: str | None = None  # mock provider only

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")

    def credential(self) -> str:
        if not self.credential_env:
            raise AuthError(f"provider {self.provider!r} needs credential_env set")
        value = os.environ.get(self.credential_env, "")
        if not value:
            raise AuthError(
                f"environment variable {self.credential_env} is empty or unset"
            )
        return value

    def to_json(self) -> dict:
        return {
            "provider": self.provider,
            "model": self.model,
            "endpoint": self.endpoint,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "credential_env": self.credential_env,
            "timeout": self.timeout,
            "fixture_dir": self.fixture_dir,
        }


@dataclass
class Exchange:
    latency: float
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


@dataclass
class Transcript:
    """Ordered chat history; the first message is always the system instruction."""

    messages: list[dict] = field(default_factory=list)
    exchanges: list[Exchange] = field(default_factory=list)
    tags: dict = field(default_factory=dict)  # e.g. fixture key / prompt index

    def add_system(self, content: str) -> None:
        if self.messages:
            raise ValueError("system message must come first")
        self.messages.append({"role": "system", "content": content})

    def add_user(self, content: str) -> None:
        if not self.messages:
            raise ValueError("transcript must start with a system message")
        self.messages.append({"role": "user", "content": content})

    def add_assistant(self, content: str, exchange: Exchange) -> None:
        if exchange.latency < 0:
            raise ValueError("latency must be >= 0")
        self.messages.append({"role": "assistant", "content": content})
        self.exchanges.append(exchange)

    @property
    def system(self) -> str:
        return self.messages[0]["content"] if self.messages else ""

    def to_json(self) -> dict:
        return {
            "messages": list(self.messages),
            "latencies": [e.latency for e in self.exchanges],
        }


# -- prompt assembly -------------------------------------------------------------------


def _terrain_section() -> str:
    return """\
# Map Instruction

You are a game assistant that helps the player in a strategy video game.
Your task is to discuss with the player to come up with a plan to win the game's scenario (which will be provided later). Work with the player by giving feedback about their propositions, asking questions to clarify, obtain more details, or decide between different propositions. The player can also ask you questions.

You will be given a textual description of each pertinent element of the map using their name, terrain type, and bounding boxes (bottom-left corner - top-right corner).
In the game, there are four types of terrain:
- Normal: units can cross and see through (by default, the whole map is normal).
- Buildings: units cannot cross or see through buildings.
- Water: units cannot cross over water but can see over it.
- Trees: units cannot see through trees but can move over them. In particular, once a unit is inside a tree area, it cannot see any other unit.

Also, for simplicity, bridges that allow crossing water terrain will be specified. They correspond to normal terrain.
You can assume that any part of the map that is not included in any of the pertinent elements has a normal type of terrain.
A common convention is that East = Right, North = Top, West = Left, and South = Bottom. So the point (0, 0) is the bottom-left corner of the map.
The x-axis increases from West to East = from Left to Right, and the y-axis increases from South to North = from Bottom to Top.

Format:
[Name]: [terrain type] at [circle or square coordinate], [circle or square coordinate], ..., [circle or square coordinate]
where [circle] = [(x, y) coordinates of center] with radius [R]
where [square coordinate] = [(x, y) coordinates of the bottom-left corner] - [(x, y) coordinates of the top-right corner]

### For example
East Forest: trees at (12, 63) with radius 20
North River: water at (0, 85) - (100, 90)
North River's Bridge: normal at (45, 85) - (55, 90)
West Forest: trees at (0, 23) with radius 6, (5, 33) with radius 7"""


def describe_map(scenario: Scenario) -> str:
    lines = [
        f"The map is {scenario.world.width} meters wide and "
        f"{scenario.world.height} meters tall."
    ]
    for f in scenario.world.features:
        shapes = ", ".join(s.describe() for s in f.shapes)
        lines.append(f"{f.name}: {f.kind.value} at {shapes}")
    return "\n".join(lines)


def _markers_section(markers) -> str:
    lines = "\n".join(f"{label} at ({x}, {y})" for label, (x, y) in markers)
    return f"""\
## Markers

Through the discussion, the player can define markers on the map, which will be provided to you using the following format:
Markers:
{lines}"""


def _stat_lines() -> str:
    out = []
    for t in UNIT_TYPES:
        out.append(
            f"{PROMPT_TYPE_TOKEN[t.name]}: Health={t.max_health}; "
            f"Sight range={t.sight_range:g}; Attack range={t.attack_range:g}; "
            f"Moving speed={t.speed:g}; Attack damage={t.damage}; "
            f"Attack cooldown={t.cooldown}"
        )
    return "\n".join(out)


def _composition_lines(scenario: Scenario) -> str:
    def side(groups) -> str:
        # Consecutive spawn groups of one type share a contiguous id range and
        # collapse into a single slice per type.
        runs: list[tuple[str, int]] = []
        for type_name, count in groups:
            if runs and runs[-1][0] == type_name:
                runs[-1] = (type_name, runs[-1][1] + count)
            else:
                runs.append((type_name, count))
        rows, start = [], 0
        for type_name, count in runs:
            rows.append(f"\t{PROMPT_TYPE_TOKEN[type_name]}: [{start}:{start + count}]")
            start += count
        return "\n".join(rows)

    allies = [(g.type_name, g.count) for g in scenario.ally_groups]
    enemies = [(g.roster.type_name, g.roster.count) for g in scenario.enemy_groups]
    return f"Allies:\n{side(allies)}\nEnemies:\n{side(enemies)}"


def _units_section(scenario: Scenario) -> str:
    return f"""\
# Information About the Units

Description of the unit types in the game:
{_stat_lines()}
Spearmen are strong against Cavalry because they have more health.
Cavalry are strong against Archers because they can quickly engage in close combat where Archers are weak.
Archers are strong against Spearmen because they can attack from a longer distance.

Here is the list of unit IDs (in the form of a Python slice a:b with a included and b not included) for each team and the type of units they are composed of:

Descriptions of each team's composition:
{_composition_lines(scenario)}

You will be provided with a list of all the units' current health and position.
Both teams are composed of many units. You should start by analyzing the positions of the units still alive to compose groups and compute their average position so that you can form the plan and send units to the appropriate positions."""


def _example_plan() -> str:
    return (
        resources.files("phalanx")
        .joinpath("data/fixtures/example_plan.txt")
        .read_text()
        .strip()
    )


def _plan_syntax_section() -> str:
    return f"""\
# How You Should Handle the Player's Prompt

The user will ask you to write one plan. If you already have a shared conversation and the user asks you to modify or add steps to the plan, take care to build upon the already selected plan.

# Syntax for a Detailed Plan

A detailed plan is a set of steps to achieve in a given order until all the steps are completed.
You must provide the steps of the plan between the two keywords "BEGIN PLAN" and "END PLAN".
As you only propose one plan, you should use these two keywords once.

One step comprises:
- A numeral ID
- A list of prerequisite steps that need to be completed before the step is rolled out
- An objective
A succession (at least one) of groups of units:
- The unit IDs of the group
- Target position on the map for the units to go to if there are no enemies in sight
- A behavior for the units if there are enemies in sight

# Syntax for a Detailed Plan (continued)

The list of prerequisites corresponds to the list of steps' IDs that must be completed before trying to achieve the objective.

There are two kinds of objectives:
- **Elimination objective:** where the objective is completed when all the targets are eliminated. In that case, you must provide a list of enemies' IDs or the keyword "all" if all enemies are targets.
- **Position objective:** where the objective is completed when all the concerned units are close to their target position.

Position objectives are a good way to move your units, but if the end objective is to eliminate enemies, it can be more straightforward to directly set an elimination objective and use the target position to move the units.
The concerned units are either the keyword "all" (if all the allies' units are concerned) or a list of integers corresponding to the unit IDs.

The behavior corresponds to a low-level and local behavior that the units will follow.
Here is the list of available behaviors:
- **attack_in_close_range:** the unit attacks the enemies in close range if there are enemies or moves toward the target position if there are no enemies.
- **attack_and_move:** the unit attacks the enemies without moving if there are enemies or moves toward the target position if there are no enemies.
- **attack_in_long_range:** the unit attacks the enemies in long range if there are enemies or moves toward the target position if there are no enemies.
- **follow_map:** ignore the enemies and simply move straight to the target objective. Only use it when the player asks you to ignore the enemies.

Apart from standing still, all these behaviors will only be active if an enemy is in sight. Otherwise, they will move to a target position if you set one in the plan or stand still if no target position is set.
Remember that units collide and push each other, so ignoring the enemies may not be the fastest way to reach a target position if there are enemies on the way who could block you.

The syntax format of a step is the following:
Step ID: (where you replace ID with the integer ID of the step)
prerequisites: [s_1, s_2, ..., s_n] (where the s_i correspond to the prerequisites' steps IDs. Note that the list can be empty. In that case, simply write [])
objective: position [or] elimination UNIT_LIST
(At least one list of units and their assigned behavior and target position, but there can be as many groups as there are units, as one unit can belong to two groups:)
UNIT_LIST:
- target position: (x, y) (The integer x and y coordinate on the map.)
- behavior: behavior_name target_1 target_2 ... target_n (where behavior_name is an available behavior and target_1 to target_n are the targeted unit types or just the keyword "any" if the behavior targets any unit_types)

A UNIT_LIST is the list of unit IDs, and it has the following format:
- Either it's the word "all" (without quotes), which means that all the units of the corresponding team are concerned.
- Or it's a list of IDs in the format "[X1, X2, ..., Xn]" where Xi can either be an integer or a slice "a:b" (with a and b as integers, b>a, a included and b not included like in Python's range function). If a is not specified (i.e., ":b") it is considered to be 0, and if b is not specified (i.e., "a:") it is considered to be the total number of agents in the considered team.

### IMPORTANT:
- All positions (x, y) must be integers. If you want to give float positions, convert them first into integers.
- Do not add comments to the plan specification, as it interferes with the parser. If you want to give comments, give them outside the "BEGIN PLAN" and "END PLAN".
- A unit can only belong to one group of units for the same step.

## Example of a Valid Detailed Plan:

{_example_plan()}

## List of Planning Mistakes You Should Avoid:

Avoid creating a series of position objectives with different groups of units waiting for each other (through a chain of prerequisites). Instead, regroup those positions into one step so that all units can move simultaneously.

Ensure all units have assigned behaviors at every step. If two or more steps can be active simultaneously (because they share the same prerequisites), each unit must belong to at least one group.

For elimination objectives, ensure the target position is close enough to the targeted enemy units for effective engagement.

Elimination objectives already have a default target position, so avoid unnecessary position objectives before them. Instead, set the target position of the elimination objective to the same location.

Ensure the units' IDs are enclosed in square brackets [ and ].

Use the correct type name for long-range units as "archer" (not "archers").

Verify the name of the unit behaviors (e.g., "attack_in_close_range") and ensure all units' target positions are integers.

Be sure to adapt this format and guidance as needed when responding to the player's requests."""


def build_system_prompt(scenario: Scenario, markers=None) -> str:
    """Assemble the full system instruction for one scenario.

    ``markers`` is an iterable of (label, (x, y)); pass None to omit the
    markers block entirely (the same scenario can be played with or without
    them).  Every number comes from the live scenario/unit configuration.
    """
    parts = [_terrain_section()]
    parts.append("## Map Description\n\n" + describe_map(scenario))
    if markers:
        parts.append(_markers_section(markers))
    parts.append(_units_section(scenario))
    parts.append(_plan_syntax_section())
    if scenario.mission:
        parts.append(scenario.mission)
    return "\n\n".join(parts) + "\n"


def _team_dump(label: str, team_state) -> str:
    health, xs, ys = [], [], []
    for alive, hp, (x, y) in zip(team_state.alive, team_state.health, team_state.pos):
        if alive:
            health.append(str(int(hp)))
            xs.append(str(int(round(x))))
            ys.append(str(int(round(y))))
        else:
            health.append(DEAD_PLACEHOLDER)
            xs.append(DEAD_PLACEHOLDER)
            ys.append(DEAD_PLACEHOLDER)
    return (
        f"{label}:\n"
        f"Health: [{', '.join(health)}]\n"
        f"X positions: [{', '.join(xs)}]\n"
        f"Y positions: [{', '.join(ys)}]"
    )


def build_state_message(state: GameState) -> str:
    """Render unit health and positions for both teams, dead units as ∅."""
    return (
        "Health and positions of all the units of each team "
        f"({DEAD_PLACEHOLDER} means that the unit is dead).\n"
        + _team_dump("Allies", state.teams[Team.ALLY])
        + "\n"
        + _team_dump("Enemies", state.teams[Team.ENEMY])
    )


# -- transport -------------------------------------------------------------------------


def _query_mock(config: ProviderConfig, transcript: Transcript) -> str:
    """Replay a canned response file.

    Lookup order inside ``fixture_dir`` for tags {fixture_key: K, prompt_index: i}:
    ``K_i.txt``, then ``K.txt``, then ``default.txt``.  A missing file is a
    transport error so suites exercise their failure path the same way a dead
    endpoint would.
    """
    if not config.fixture_dir:
        raise TransportError("mock provider needs fixture_dir")
    root = Path(config.fixture_dir)
    key = transcript.tags.get("fixture_key", "default")
    index = transcript.tags.get("prompt_index")
    names = []
    if index is not None:
        names.append(f"{key}_{index}.txt")
    names += [f"{key}.txt", "default.txt"]
    for name in names:
        path = root / name
        if path.is_file():
            return path.read_text()
    raise TransportError(f"no mock fixture for key {key!r} under {root}")


def _status_error(status: int, body: str) -> ProviderError:
    if status in (401, 403):
        return AuthError(f"provider rejected credentials (HTTP {status})")
    if status == 429:
        return QuotaError("provider rate/usage limit hit (HTTP 429)")
    return TransportError(f"provider HTTP {status}: {body[:200]}")


def _post_json(config: ProviderConfig, url: str, headers: dict, payload: dict) -> dict:
    import httpx

    attempts = 0
    while True:
        try:
            resp = httpx.post(url, headers=headers, json=payload, timeout=config.timeout)
        except httpx.TimeoutException as exc:
            raise ProviderTimeoutError(f"no answer within {config.timeout}s") from exc
        except httpx.ConnectError as exc:
            # Connection never established, so retrying cannot double-spend.
            attempts += 1
            if attempts > 2:
                raise TransportError(f"cannot reach {url}: {exc}") from exc
            continue
        if resp.status_code != 200:
            raise _status_error(resp.status_code, resp.text)
        return resp.json()


def _query_openai(config: ProviderConfig, transcript: Transcript) -> str:
    url = (config.endpoint or "https://api.openai.com/v1") + "/chat/completions"
    headers = {"Authorization": f"Bearer {config.credential()}"}
    payload = {
        "model": config.model,
        "messages": transcript.messages,
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }
    doc = _post_json(config, url, headers, payload)
    try:
        return doc["choices"][0]["message"]["content"]
    except (KeyError, IndexError) as exc:
        raise TransportError(f"malformed chat response: {doc}") from exc


def _query_anthropic(config: ProviderConfig, transcript: Transcript) -> str:
    url = (config.endpoint or "https://api.anthropic.com") + "/v1/messages"
    headers = {
        "x-api-key": config.credential(),
        "anthropic-version": "2023-06-01",
    }
    system = transcript.system
    chat = [m for m in transcript.messages if m["role"] != "system"]
    payload = {
        "model": config.model,
        "system": system,
        "messages": chat,
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }
    doc = _post_json(config, url, headers, payload)
    try:
        return "".join(part["text"] for part in doc["content"] if part["type"] == "text")
    except (KeyError, TypeError) as exc:
        raise TransportError(f"malformed messages response: {doc}") from exc


PROVIDERS: dict[str, Callable[[ProviderConfig, Transcript], str]] = {
    "mock": _query_mock,
    "openai": _query_openai,
    "anthropic": _query_anthropic,
}


def query_model(config: ProviderConfig, transcript: Transcript, user_message: str) -> str:
    """One user turn, one assistant answer.

    Appends both messages to the transcript and records wall-clock latency.
    There is exactly one semantic attempt: no automatic retry on a bad or
    unparsable answer, and no plan-repair loop.  Raises a ProviderError
    subclass on failure (callers score those as NoPlan).
    """
    try:
        adapter = PROVIDERS[config.provider]
    except KeyError:
        raise TransportError(
            f"unknown provider {config.provider!r}; known: {sorted(PROVIDERS)}"
        ) from None
    transcript.add_user(user_message)
    started = time.perf_counter()
    try:
        answer = adapter(config, transcript)
    except ProviderError:
        transcript.messages.pop()  # failed exchange leaves no dangling user turn
        raise
    latency = time.perf_counter() - started
    transcript.add_assistant(answer, Exchange(latency=latency))
    return answer


def extract_plan_text(message: str) -> str | None:
    """The body of the first well-delimited plan block, or None.

    Returns the text strictly between the first "BEGIN PLAN" and the first
    "END PLAN" after it.  A second block is ignored with a warning; markers
    that are missing or out of order yield None.
    """
    begin = message.find("BEGIN PLAN")
    if begin < 0:
        return None
    end = message.find("END PLAN", begin)
    if end < 0:
        return None
    if message.find("BEGIN PLAN", end) >= 0:
        logger.warning("assistant message contains more than one plan block; using the first")
    return message[begin + len("BEGIN PLAN"):end].strip("\n")
