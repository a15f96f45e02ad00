"""Command line entry point: ``encagg run | sweep | verify``.

Per-round CSV columns, in this fixed order::

    round,aggregator,attack,accuracy,precision,recall,epsilon,fallback,l_total

Floats are written with ``repr`` after rounding to 12 significant digits,
booleans as 0/1, and values that do not apply to the aggregator are left
empty. Files are UTF-8 with LF line endings, so identical configs and seeds
give identical bytes.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, config_hash, dump_config, parse_config
from .errors import ConfigError, EncAggError
from .simulation import run_experiment

log = logging.getLogger("encagg")

CSV_COLUMNS = ("round", "aggregator", "attack", "accuracy", "precision", "recall", "epsilon", "fallback", "l_total")
SEED_ENV = "ENCAGG_SEED"


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    code_version: str
    started: str
    finished: str
    outputs: dict


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(float(f"{value:.12g}"))
    return str(value)


def rows_to_csv(rows) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for r in rows:
        lines.append(",".join(_fmt(getattr(r, col)) for col in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def apply_seed_override(config: ExperimentConfig) -> ExperimentConfig:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return config
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}", key="seed") from None
    return config.replace(seed=seed)


def execute(config: ExperimentConfig, out_dir, stem: str = "run") -> dict:
    """Run one experiment and write ``<stem>.csv``, ``<stem>.json`` and ``<stem>.manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = _now()
    result = run_experiment(config)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    cfg_path = out_dir / f"{stem}.cfg"
    man_path = out_dir / f"{stem}.manifest.json"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(rows_to_csv(result.rounds))
    summary = result.summary()
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(cfg_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_config(config))
    manifest = RunManifest(
        config_hash=config_hash(config),
        seed=config.seed,
        code_version=__version__,
        started=started,
        finished=_now(),
        outputs={"csv": str(csv_path), "summary": str(json_path), "config": str(cfg_path)},
    )
    with open(man_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _parse_values(text: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            out.append(json.loads(part))
        except json.JSONDecodeError:
            out.append(part)
    if not out:
        raise ConfigError("--values is empty")
    return out


def _sweep_member(args):
    config, out_dir, stem = args
    return execute(config, out_dir, stem)


def cmd_run(ns) -> int:
    config = apply_seed_override(parse_config(ns.config))
    summary = execute(config, ns.out, ns.name)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_sweep(ns) -> int:
    base = apply_seed_override(parse_config(ns.config))
    if ns.param not in ExperimentConfig.__dataclass_fields__:
        raise ConfigError("unknown sweep parameter", key=ns.param)
    members = []
    for value in _parse_values(ns.values):
        try:
            cfg = base.replace(**{ns.param: value})
        except TypeError as exc:
            raise ConfigError(str(exc), key=ns.param) from None
        members.append((cfg, ns.out, f"{ns.param}={value}"))
    if ns.jobs > 1:
        with ProcessPoolExecutor(ns.jobs) as pool:
            summaries = list(pool.map(_sweep_member, members))
    else:
        summaries = [_sweep_member(m) for m in members]
    out = Path(ns.out) / "sweep.json"
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"param": ns.param, "summaries": summaries}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for s in summaries:
        print(json.dumps(s, sort_keys=True))
    return 0


def cmd_verify(ns) -> int:
    from . import verification

    failed = 0
    for res in verification.run_all(quick=ns.quick):
        status = "ok" if res.ok else "FAIL"
        print(f"{status:4s} {res.name} ({res.cases} cases)")
        for msg in res.failures[:5]:
            print(f"     {msg}")
        failed += not res.ok
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="encagg", description="Robust federated aggregation experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--name", default="run", help="file stem for the outputs")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="vary one config key over a list of values")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True, help="comma separated, e.g. 0.05,0.1,0.2")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run the oracle and invariant self-checks")
    v.add_argument("--quick", action="store_true")
    v.set_defaults(func=cmd_verify)
    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return ns.func(ns)
    except (ConfigError, EncAggError, OSError) as exc:
        print(f"encagg: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())
