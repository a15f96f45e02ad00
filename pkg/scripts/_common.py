"""Small helpers shared by the experiment scripts."""

import json
from pathlib import Path

import numpy as np

from encagg.config import ExperimentConfig
from encagg.simulation import run_experiment


def seed_averaged(seeds, **overrides) -> dict:
    """Run one config over several seeds and average the numeric summary fields."""
    rows = [run_experiment(ExperimentConfig(seed=s, **overrides).validate()).summary() for s in seeds]
    out = dict(rows[0])
    for key, value in rows[0].items():
        if isinstance(value, float) or value is None:
            vals = [r[key] for r in rows if r[key] is not None]
            out[key] = float(np.mean(vals)) if vals else None
    out["seeds"] = list(seeds)
    return out


def write_json(path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def fmt(value) -> str:
    return "-" if value is None else f"{value:.3f}"
