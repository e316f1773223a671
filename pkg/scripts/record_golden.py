"""Record the seed-42 benchmark golden file used by tests/test_golden.py.

    python3 scripts/record_golden.py [--out tests/golden/benchmark_seed42_small.json]

Fits the 8-candidate-grid pipeline on the 730-day seed-42 synthetic series
and stores the first test-window forecast, the per-day MC horizon table and
the chosen meta candidates. Only rerun this after a deliberate change to the
numerics; the test compares against the stored values.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from chronocast.ensemble import PipelineConfig, fit_ensemble
from chronocast.evaluation import evaluate_ensemble
from chronocast.synth import synth_series

GOLDEN = Path(__file__).resolve().parents[1] / "tests" / "golden" / "benchmark_seed42_small.json"


def record(fitted) -> dict:
    model, test_ws = fitted.model, fitted.test_windows
    first_norm, first_mw = model.predict(test_ws.inputs[0], denormalize=True)
    last_window = test_ws.inputs[-1]
    reports = evaluate_ensemble(model, test_ws)
    return {
        "config": {"seed": 42, "days": 730, "grid": "small", "encoding": "paper"},
        "first_test_window": {"normalized": first_norm.tolist(), "mw": first_mw.tolist()},
        "last_test_window": model.predict(last_window).tolist(),
        "reports": [r.to_dict() for r in reports],
        "chosen": [m.chosen.label() for m in model.metas],
        "windows": fitted.log["windows"],
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=GOLDEN)
    args = ap.parse_args(argv)
    fitted = fit_ensemble(synth_series(42, 730), PipelineConfig(seed=42, grid="small"))
    payload = record(fitted)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(payload, indent=2) + "\n")
    mc = payload["reports"][2]["avg"]
    print(f"wrote {args.out}: MC avg MAE {mc['mae']:.5f} RMSE {mc['rmse']:.5f}")
    print("first window:", np.round(payload["first_test_window"]["normalized"], 5))
    return 0


if __name__ == "__main__":
    sys.exit(main())
