"""Ten prompts, ten battles, one table — twice, to the same byte.

The benchmark harness replays recorded model responses through the full
pipeline (prompt build, plan parse, validation, simulation, adjudication), so
it runs offline and its artifacts are reproducible enough to diff in CI.

Takes ~20 seconds: it runs the 10-prompt coordination ability twice.
"""

import hashlib
import tempfile
from pathlib import Path

from phalanx.bench import emit_report, mock_config, run_ability_suite

print(__doc__)

digests = []
with tempfile.TemporaryDirectory() as tmp:
    for attempt in ("first", "second"):
        out_dir = Path(tmp) / attempt
        rows = run_ability_suite(
            mock_config(), seed=1, abilities=("coordinate",), out_dir=out_dir, parallelism=4
        )
        report = emit_report(rows, out_dir=out_dir)
        digest = hashlib.sha256((out_dir / "results.json").read_bytes()).hexdigest()
        digests.append(digest)
        print(f"{attempt} run: {len(rows)} episodes, results.json sha256 {digest[:16]}…")

    print("\nIdentical:" , digests[0] == digests[1])
    print("\nThe rendered report:\n")
    print(report)

print("Strict counts wins only; the histogram buckets every outcome. Replay")
print("files for each episode land next to the report, each re-executable with")
print("`phalanx replay --file …` to verify the recorded outcome on your machine.")
