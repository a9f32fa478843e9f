"""Report persistence: canonical JSON, CSV tables, and run manifests.

Outputs are byte-deterministic: canonical JSON sorts keys, floats are
serialized with shortest round-trip repr, and no timestamps or host
information ever enter a report directory.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(obj), encoding="utf-8")
    return path


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    return str(x)


def write_csv(path: str | Path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


_ENVIRONMENT_KEYS = ("out",)  # output location is environment, not experiment


def experiment_config(config: dict) -> dict:
    return {k: v for k, v in config.items() if k not in _ENVIRONMENT_KEYS}


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(experiment_config(config)).encode("utf-8")).hexdigest()


def write_manifest(outdir: str | Path, config: dict, seeds=()) -> Path:
    manifest = {
        "tool": "oflux",
        "version": __version__,
        "config_sha256": config_hash(config),
        "seeds": list(seeds),
        "thread_tiles": 1,
    }
    return write_json(Path(outdir) / "manifest.json", manifest)


def echo_config(outdir: str | Path, config: dict) -> Path:
    return write_json(Path(outdir) / "config.json", experiment_config(config))
