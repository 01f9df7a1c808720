"""Regenerate golden files from the independent reference implementations.

    python scripts/make_golden.py

Writes tests/data/golden_eval.csv (reference AP3D evaluator) and
tests/data/golden_stats.json (reference statistics script).
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from reference_eval import reference_csv  # noqa: E402
from reference_stats import reference_stats  # noqa: E402

DATA = ROOT / "tests" / "data"


def main():
    csv_text = reference_csv(DATA / "eval_gt.json", DATA / "eval_pred.json")
    (DATA / "golden_eval.csv").write_text(csv_text)
    stats = reference_stats(json.loads((DATA / "stats_dataset.json").read_text()))
    (DATA / "golden_stats.json").write_text(json.dumps(stats, indent=2) + "\n")


if __name__ == "__main__":
    main()
