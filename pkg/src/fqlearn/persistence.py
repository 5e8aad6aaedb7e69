"""Run directories: curve CSV, checkpoints, config copy and run manifest."""
from __future__ import annotations

import csv
import io
import json
import platform
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from . import config as config_mod

CURVE_FILE = "curve.csv"
MANIFEST_FILE = "run-manifest.json"
CONFIG_FILE = "config.yaml"


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def run_directory(root, seed: int, now: datetime | None = None) -> Path:
    """Fresh directory ``<root>/<UTC timestamp>-seed<seed>``, suffixed if it already exists."""
    now = now or datetime.now(timezone.utc)
    base = Path(root) / f"{now:%Y%m%d-%H%M%S}-seed{seed}"
    path, k = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}-{k}")
        k += 1
    path.mkdir(parents=True)
    return path


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def curve_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue()


def write_curve(path, columns, rows) -> None:
    Path(path).write_text(curve_csv(columns, rows))


def read_curve(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_manifest(directory, cfg, extra: dict | None = None) -> dict:
    manifest = {
        "seed": cfg.seed,
        "config": cfg.model_dump(mode="json"),
        "code_version": code_version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        **(extra or {}),
    }
    Path(directory, MANIFEST_FILE).write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return manifest


def save_run(result, cfg, root="runs", now: datetime | None = None) -> Path:
    """Write everything a training run produced; returns the run directory."""
    d = run_directory(root, cfg.seed, now)
    write_curve(d / CURVE_FILE, result.columns, result.curve)
    Path(d, CONFIG_FILE).write_text(config_mod.dump(cfg))
    for k, learner in enumerate(result.learners, start=1):
        learner.save(d / "checkpoints" / f"group{k}")
    write_manifest(d, cfg, {"checkpoints": [f"checkpoints/group{k}"
                                            for k in range(1, len(result.learners) + 1)]})
    return d
