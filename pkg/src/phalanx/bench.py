"""Benchmark harness: five ability suites, scaling and temperature studies, reports.

Each ability test pairs one scenario with ten paraphrased player prompts.  A run
queries the configured model once per prompt (single shot, no repair), simulates
the returned plan, and records an outcome row plus a replay file.  With the mock
provider and a fixed seed the emitted report artifacts are byte-identical across
runs: they contain no wall-clock values (latencies live only in replay files).
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .llm import (
    ProviderConfig,
    ProviderError,
    Transcript,
    build_state_message,
    build_system_prompt,
    query_model,
)
from .scenario import (
    EpisodeMetrics,
    Outcome,
    Scenario,
    load_scenario,
    run_episode,
    save_replay,
)

logger = logging.getLogger(__name__)

# Ability test -> scenario it runs on.  Two abilities share one map: the marker
# suite injects the preset markers into the system prompt, the terrain suite
# relies on the textual map description alone.
ABILITY_SCENARIO = {
    "coordinate": "coordinate",
    "exploit_weakness": "exploit_weakness",
    "follow_markers": "markers_terrain",
    "exploit_terrain": "markers_terrain",
    "strategize_points": "strategize_points",
}

ABILITY_TITLES = {
    "coordinate": "Coordinate",
    "exploit_weakness": "Exploit weakness",
    "follow_markers": "Follow markers",
    "exploit_terrain": "Exploit terrain",
    "strategize_points": "Strategize points",
}

ABILITIES = tuple(ABILITY_SCENARIO)

# Report buckets: the two plan-failure outcomes share one bar.
HISTOGRAM_BUCKETS = ("win", "loss", "tie", "early completion", "invalid/no plan")

DEFAULT_SCALE_COUNTS = (200, 500, 1000, 2000, 4000)
DEFAULT_TEMPERATURES = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


def bucket_of(outcome: Outcome) -> str:
    if outcome in (Outcome.INVALID_PLAN, Outcome.NO_PLAN):
        return "invalid/no plan"
    return outcome.value


@dataclass(frozen=True)
class PromptCorpus:
    """Ten paraphrased prompts per ability plus ten generic unassisted prompts."""

    abilities: dict[str, tuple[str, ...]]
    alone: tuple[str, ...]

    def prompts_for(self, ability: str, alone: bool = False) -> tuple[str, ...]:
        return self.alone if alone else self.abilities[ability]


def load_corpus() -> PromptCorpus:
    doc = json.loads(
        resources.files("phalanx").joinpath("data/prompts.json").read_text()
    )
    return PromptCorpus(
        abilities={a: tuple(doc[a]) for a in ABILITIES},
        alone=tuple(doc["alone"]),
    )


def default_fixture_dir() -> str:
    return str(resources.files("phalanx").joinpath("data/fixtures"))


def mock_config(fixture_dir: str | None = None) -> ProviderConfig:
    return ProviderConfig(
        provider="mock", model="fixture",
        fixture_dir=fixture_dir or default_fixture_dir(),
    )


@dataclass
class ResultRow:
    ability: str
    label: str  # grouping key in reports ("Coordinate", "Coordinate @ 200 units", ...)
    scenario: str
    model: str
    prompt_index: int
    seed: int
    outcome: Outcome
    metrics: EpisodeMetrics
    latency: float  # wall-clock; excluded from deterministic artifacts
    alone: bool = False
    scaled_total: int | None = None
    temperature: float | None = None
    diagnostics: list[str] = field(default_factory=list)
    replay: str | None = None

    @property
    def plan_valid(self) -> bool:
        return self.outcome not in (Outcome.INVALID_PLAN, Outcome.NO_PLAN)


def _run_one(
    ability: str,
    scenario: Scenario,
    prompt: str,
    prompt_index: int,
    config: ProviderConfig,
    seed: int,
    *,
    label: str,
    alone: bool,
    out_dir: Path | None,
    replay_name: str,
) -> ResultRow:
    markers = scenario.markers if ability == "follow_markers" else None
    transcript = Transcript(tags={"fixture_key": ability, "prompt_index": prompt_index})
    transcript.add_system(build_system_prompt(scenario, markers))
    user = (
        build_state_message(scenario.initial_state(seed))
        + "\n\n# Player's Prompt\n\n"
        + prompt
    )
    latency = 0.0
    try:
        response = query_model(config, transcript, user)
        latency = transcript.exchanges[-1].latency
        record = run_episode(
            scenario, response, seed,
            prompt=prompt, response=response, model_latency=latency,
        )
    except ProviderError as err:
        logger.warning("provider failure on %s[%d]: %s", ability, prompt_index, err)
        from .plan import NoPlanError

        record = run_episode(
            scenario, NoPlanError(str(err)), seed,
            prompt=prompt, model_latency=latency,
        )
    replay_path = None
    if out_dir is not None:
        replays = out_dir / "replays"
        replays.mkdir(parents=True, exist_ok=True)
        replay_path = f"replays/{replay_name}.json"
        save_replay(record, out_dir / replay_path)
    return ResultRow(
        ability=ability,
        label=label,
        scenario=scenario.name,
        model=config.model,
        prompt_index=prompt_index,
        seed=seed,
        outcome=record.outcome,
        metrics=record.metrics,
        latency=latency,
        alone=alone,
        scaled_total=scenario.source.get("scaled_total"),
        temperature=config.temperature,
        diagnostics=list(record.diagnostics),
        replay=replay_path,
    )


def _run_batch(jobs, parallelism: int) -> list[ResultRow]:
    if parallelism <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [f.result() for f in futures]


def run_ability_suite(
    config: ProviderConfig | None = None,
    seed: int = 1,
    *,
    abilities=ABILITIES,
    alone: bool = False,
    corpus: PromptCorpus | None = None,
    out_dir=None,
    parallelism: int = 1,
) -> list[ResultRow]:
    """Ten prompts per ability, one episode each, in a fixed order.

    ``alone`` swaps every ability's prompts for the generic unassisted corpus
    and flags the rows.  Provider failures score as NoPlan and the suite
    continues.
    """
    config = config or mock_config()
    corpus = corpus or load_corpus()
    out = Path(out_dir) if out_dir else None
    jobs = []
    for ability in abilities:
        scenario = load_scenario(ABILITY_SCENARIO[ability])
        prompts = corpus.prompts_for(ability, alone=alone)
        label = ABILITY_TITLES[ability] + (" (alone)" if alone else "")
        for i, prompt in enumerate(prompts):
            name = f"{ability}_{i}" + ("_alone" if alone else "")
            jobs.append(
                lambda a=ability, s=scenario, p=prompt, i=i, n=name, l=label: _run_one(
                    a, s, p, i, config, seed,
                    label=l, alone=alone, out_dir=out, replay_name=n,
                )
            )
    return _run_batch(jobs, parallelism)


def run_scaling_study(
    config: ProviderConfig | None = None,
    counts=DEFAULT_SCALE_COUNTS,
    seed: int = 1,
    *,
    ability: str = "coordinate",
    corpus: PromptCorpus | None = None,
    out_dir=None,
    parallelism: int = 1,
) -> list[ResultRow]:
    """The same ten prompts at several total unit counts (both sides rescaled)."""
    config = config or mock_config()
    corpus = corpus or load_corpus()
    out = Path(out_dir) if out_dir else None
    base = load_scenario(ABILITY_SCENARIO[ability])
    prompts = corpus.prompts_for(ability)
    jobs = []
    for count in counts:
        scenario = base.scaled(count)
        label = f"{ABILITY_TITLES[ability]} @ {count} units"
        for i, prompt in enumerate(prompts):
            name = f"{ability}_{count}_{i}"
            jobs.append(
                lambda s=scenario, p=prompt, i=i, n=name, l=label: _run_one(
                    ability, s, p, i, config, seed,
                    label=l, alone=False, out_dir=out, replay_name=n,
                )
            )
    return _run_batch(jobs, parallelism)


def run_temperature_sweep(
    config: ProviderConfig | None = None,
    temperatures=DEFAULT_TEMPERATURES,
    seed: int = 1,
    *,
    abilities=("follow_markers", "exploit_terrain"),
    corpus: PromptCorpus | None = None,
    out_dir=None,
    parallelism: int = 1,
) -> list[ResultRow]:
    """Ability suites repeated across sampling temperatures."""
    config = config or mock_config()
    corpus = corpus or load_corpus()
    out = Path(out_dir) if out_dir else None
    jobs = []
    for temperature in temperatures:
        cfg = ProviderConfig(**{**config.to_json(), "temperature": temperature})
        for ability in abilities:
            scenario = load_scenario(ABILITY_SCENARIO[ability])
            label = f"{ABILITY_TITLES[ability]} @ T={temperature:g}"
            for i, prompt in enumerate(corpus.prompts_for(ability)):
                name = f"{ability}_t{temperature:g}_{i}"
                jobs.append(
                    lambda a=ability, s=scenario, p=prompt, i=i, n=name, l=label,
                    c=cfg: _run_one(
                        a, s, p, i, c, seed,
                        label=l, alone=False, out_dir=out, replay_name=n,
                    )
                )
    return _run_batch(jobs, parallelism)


# -- aggregation and report ------------------------------------------------------------


def _quartiles(values) -> dict | None:
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    q1, med, q3 = np.percentile(np.asarray(vals, dtype=float), [25, 50, 75])
    return {"q1": round(float(q1), 3), "median": round(float(med), 3),
            "q3": round(float(q3), 3)}


def aggregate(rows: list[ResultRow]) -> dict:
    """Per-label strict counts, outcome histograms, and metric quartiles."""
    labels: dict[str, list[ResultRow]] = {}
    for row in rows:
        labels.setdefault(row.label, []).append(row)
    out = {}
    for label, group in labels.items():
        histogram = {bucket: 0 for bucket in HISTOGRAM_BUCKETS}
        for row in group:
            histogram[bucket_of(row.outcome)] += 1
        out[label] = {
            "total": len(group),
            "strict": sum(row.outcome is Outcome.WIN for row in group),
            "valid_plans": sum(row.plan_valid for row in group),
            "histogram": histogram,
            "quartiles": {
                "pct_enemies_eliminated": _quartiles(
                    r.metrics.pct_enemies_eliminated for r in group
                ),
                "ticks_elapsed": _quartiles(r.metrics.ticks_elapsed for r in group),
                "min_ally_distance_to_objective": _quartiles(
                    r.metrics.min_ally_distance_to_objective for r in group
                ),
            },
        }
    return out


def _row_doc(row: ResultRow) -> dict:
    m = row.metrics
    return {
        "ability": row.ability,
        "label": row.label,
        "scenario": row.scenario,
        "model": row.model,
        "prompt_index": row.prompt_index,
        "seed": row.seed,
        "alone": row.alone,
        "scaled_total": row.scaled_total,
        "temperature": row.temperature,
        "outcome": row.outcome.value,
        "plan_valid": row.plan_valid,
        "metrics": {
            "pct_enemies_eliminated": round(m.pct_enemies_eliminated, 6),
            "min_ally_distance_to_objective": (
                None if m.min_ally_distance_to_objective is None
                else round(m.min_ally_distance_to_objective, 3)
            ),
            "ticks_elapsed": m.ticks_elapsed,
            "ally_survivors": m.ally_survivors,
            "enemy_survivors": m.enemy_survivors,
        },
        "diagnostics": row.diagnostics,
        "replay": row.replay,
    }


def emit_report(rows: list[ResultRow], out_dir=None) -> str:
    """Render the outcome table + histogram and optionally write artifacts.

    Writes ``report.md`` and ``results.json`` under ``out_dir``.  Both are
    deterministic for a given (rows) input: no timestamps, no wall-clock
    latencies.
    """
    aggregates = aggregate(rows)
    models = sorted({row.model for row in rows})
    providers_line = ", ".join(models) if models else "none"

    lines = [
        "# Ability Suite Report",
        "",
        f"Model: {providers_line}",
        f"Seeds: {sorted({row.seed for row in rows})}",
        "",
        "| Test | Strict | " + " | ".join(HISTOGRAM_BUCKETS) + " |",
        "|" + "---|" * (2 + len(HISTOGRAM_BUCKETS)),
    ]
    seen_labels = list(dict.fromkeys(row.label for row in rows))
    total_hist = {bucket: 0 for bucket in HISTOGRAM_BUCKETS}
    total_strict = total_n = 0
    for label in seen_labels:
        agg = aggregates[label]
        hist = agg["histogram"]
        for bucket in HISTOGRAM_BUCKETS:
            total_hist[bucket] += hist[bucket]
        total_strict += agg["strict"]
        total_n += agg["total"]
        cells = " | ".join(str(hist[bucket]) for bucket in HISTOGRAM_BUCKETS)
        lines.append(f"| {label} | {agg['strict']}/{agg['total']} | {cells} |")
    cells = " | ".join(str(total_hist[bucket]) for bucket in HISTOGRAM_BUCKETS)
    lines.append(f"| **Total** | {total_strict}/{total_n} | {cells} |")

    lines += [
        "",
        "## Metric quartiles (q1 / median / q3)",
        "",
        "| Test | enemies eliminated | ticks | distance to objective |",
        "|---|---|---|---|",
    ]

    def fmt_q(q):
        if q is None:
            return "-"
        return f"{q['q1']:g} / {q['median']:g} / {q['q3']:g}"

    for label in seen_labels:
        qs = aggregates[label]["quartiles"]
        lines.append(
            f"| {label} | {fmt_q(qs['pct_enemies_eliminated'])} | "
            f"{fmt_q(qs['ticks_elapsed'])} | "
            f"{fmt_q(qs['min_ally_distance_to_objective'])} |"
        )
    report = "\n".join(lines) + "\n"

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.md").write_text(report)
        doc = {
            "rows": [_row_doc(row) for row in rows],
            "aggregates": aggregates,
        }
        (out / "results.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n"
        )
    return report
