#!/usr/bin/env python3
"""Regenerate the frozen toy-experiment reference values.

Runs the seeded toy experiments once, sanity-checks that the predictions
track the ground truth (the programmatic stand-in for eyeballing the
curves), and freezes the measured interior errors into
tests/golden/toy_golden.json. The acceptance suite later requires the
interior mean absolute error to stay within 2x of what is frozen here.

Run from the repository root:  python scripts/make_golden.py
"""

import json
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from maxentnn.evaluation import (  # noqa: E402
    ToySpec,
    boundary_distances,
    diagonal_queries,
    metrics,
    run_toy_experiment,
)

SEED = 7
BOUNDARY_BAND = 0.05
GOLDEN_PATH = pathlib.Path(__file__).resolve().parents[1] / "tests" / "golden" / "toy_golden.json"


def regression_reference() -> dict:
    spec = ToySpec("regression", 500, 50, SEED)
    result = run_toy_experiment(spec, "maxent")
    x = np.linspace(0.0, 1.0, spec.eval_count)
    interior = (x >= 0.1) & (x <= 0.9)
    y1_true = np.array([float(r["y1_true"]) for r in result.rows])
    y1_pred = np.array([float(r["y1_pred"]) for r in result.rows])
    y2_true = np.array([float(r["y2_true"]) for r in result.rows])
    y2_pred = np.array([float(r["y2_pred"]) for r in result.rows])

    mae_y1 = float(np.abs(y1_true - y1_pred)[interior].mean())
    r2_y2 = float(metrics(y2_true[interior], y2_pred[interior]).r2)

    # the curves must visibly hug the truth before the numbers are frozen
    assert mae_y1 < 0.05, f"y1 drifts from the true curve (interior MAE {mae_y1:.4f})"
    assert r2_y2 >= 0.95, f"y2 interior R^2 too low ({r2_y2:.4f})"
    return {
        "seed": SEED,
        "interior_mae_y1": mae_y1,
        "interior_r2_y2": r2_y2,
        "full_r2": {k: v["r2"] for k, v in result.summary.items()},
    }


def classification_reference() -> dict:
    spec = ToySpec("classification", 500, 50, SEED)
    result = run_toy_experiment(spec, "maxent")
    queries = diagonal_queries(spec.eval_count)
    out = {"seed": SEED, "boundary_band": BOUNDARY_BAND}
    for which, name in (("sin", "y1"), ("cos", "y2")):
        keep = boundary_distances(queries, which) >= BOUNDARY_BAND
        true = np.array([int(r[f"{name}_true"]) for r in result.rows])
        pred = np.array([int(r[f"{name}_pred"]) for r in result.rows])
        acc = float((true[keep] == pred[keep]).mean())
        assert acc >= 0.9, f"{name} off-boundary accuracy too low ({acc:.3f})"
        out[f"accuracy_{name}"] = acc
        out[f"kept_{name}"] = int(keep.sum())
    return out


def main() -> int:
    payload = {
        "regression": regression_reference(),
        "classification": classification_reference(),
    }
    GOLDEN_PATH.parent.mkdir(parents=True, exist_ok=True)
    GOLDEN_PATH.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(json.dumps(payload, indent=2, sort_keys=True))
    print(f"wrote {GOLDEN_PATH}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
