"""From model text to battle outcome: parse, validate, execute, adjudicate.

A plan is the structured block a language model answers with: numbered steps,
prerequisites, an objective per step, and unit groups assigned behaviors and
target positions. This demo walks one recorded plan through the whole pipe.
"""

from pathlib import Path

from phalanx.bench import default_fixture_dir
from phalanx.plan import parse_plan, validate_plan
from phalanx.scenario import load_scenario, run_episode

fixtures = Path(default_fixture_dir())

example = parse_plan((fixtures / "example_plan.txt").read_text())
print("The worked example decomposes into steps gated by prerequisites:\n")
for step_id in example.step_ids:
    step = example.steps[step_id]
    needs = ", ".join(str(p) for p in step.prerequisites) or "none"
    behaviors = ", ".join(g.behavior.name for g in step.groups)
    print(
        f"   step {step_id}: needs [{needs}]  objective={step.objective.kind.value}"
        f"  groups={len(step.groups)} ({behaviors})"
    )

print("\nValidation is roster-aware. Against the 60-ally roster it was written")
print("for, nothing is fatal — only the deliberate overlap between step 1's")
print("two groups draws a warning:")
for violation in validate_plan(example, ally_count=60, enemy_count=20):
    print(f"   {violation}")
print("Against a 40-ally roster the open-ended slices clip, with warnings:")
for violation in validate_plan(example, ally_count=40, enemy_count=20)[:3]:
    print(f"   {violation}")

print("\nNow a real mission. The recorded plan for the 1,000-vs-1,000 open-field")
print("battle splits the army into thirds and envelops both flanks. Running it:")
plan = parse_plan((fixtures / "coordinate.txt").read_text())
scenario = load_scenario("coordinate")
record = run_episode(scenario, plan, seed=1)
m = record.metrics
print(
    f"   full scale : {record.outcome.value.upper()} in {m.ticks_elapsed} ticks — "
    f"{m.pct_enemies_eliminated:.0%} of enemies eliminated, "
    f"{m.ally_survivors} allies standing"
)

small = scenario.scaled(200)
record = run_episode(small, plan, seed=1)
m = record.metrics
print(
    f"   1/10 scale : {record.outcome.value.upper()} in {m.ticks_elapsed} ticks — "
    f"{m.pct_enemies_eliminated:.0%} eliminated, "
    f"{m.enemy_survivors} enemies left when the clock ran out"
)

print("\nSame plan, same seed discipline, different army size: the envelopment")
print("needs its numbers. Outcomes are adjudicated, not declared — a plan that")
print("runs out of steps with enemies alive scores an early completion, one")
print("that cannot even parse scores invalid, and everything is replayable.")
