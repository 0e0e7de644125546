"""CSV / JSON serialisation and the append-only run log.

CSV files are UTF-8, LF line endings, one header row, numbers written with
17 significant digits so that every double round-trips exactly.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .bloch import ControlWaveform, PulseParams, PulseTarget, Trajectory
from .errors import InvalidArgument

WAVEFORM_COLUMNS = ("t", "omega")
TRAJECTORY_COLUMNS = ("t", "theta", "a", "omega", "lambda_theta")
MAGNETIZATION_COLUMNS = ("t", "mx", "my", "mz", "m_rel", "theta", "phi")
SWEEP_COLUMNS = ("r", "E_pi2", "E_pi", "T_pi2", "T_pi", "kappa_pi2", "kappa_pi")
ORACLE_COLUMNS = ("t_start", "t_mid", "omega")

RUN_LOG = "runs.jsonl"


def fresh_path(path) -> Path:
    """``path`` if unused, else the first free ``stem_N.suffix`` next to it."""
    path = Path(path)
    k = 1
    candidate = path
    while candidate.exists():
        candidate = path.with_name(f"{path.stem}_{k}{path.suffix}")
        k += 1
    return candidate


def fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(path, columns, rows) -> Path:
    path = fresh_path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path, required) -> dict[str, np.ndarray]:
    """Read a numeric CSV, checking that ``required`` columns are present."""
    path = Path(path)
    try:
        with path.open(encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise InvalidArgument(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise InvalidArgument(f"{path} is empty")
    header, body = [h.strip() for h in rows[0]], [r for r in rows[1:] if r]
    missing = [c for c in required if c not in header]
    if missing:
        raise InvalidArgument(f"{path} lacks columns {missing}")
    if not body:
        raise InvalidArgument(f"{path} has no data rows")
    try:
        data = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise InvalidArgument(f"{path} has a non-numeric entry: {exc}") from exc
    if data.shape[1] != len(header):
        raise InvalidArgument(f"{path} rows do not match the header width")
    if not np.all(np.isfinite(data)):
        raise InvalidArgument(f"{path} contains non-finite values")
    return {h: data[:, i] for i, h in enumerate(header)}


def waveform_from_columns(t, omega) -> ControlWaveform:
    t = np.asarray(t, dtype=float)
    if t.size == 1:
        return ControlWaveform(t0=float(t[0]), dt=1.0, omega=omega)
    dt = np.diff(t)
    if not np.all(dt > 0) or np.max(np.abs(dt - dt.mean())) > 1e-6 * dt.mean():
        raise InvalidArgument("waveform times must be uniformly spaced and increasing")
    return ControlWaveform(t0=float(t[0]), dt=float((t[-1] - t[0]) / (t.size - 1)), omega=omega)


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, payload, overwrite=False) -> Path:
    path = Path(path) if overwrite else fresh_path(path)
    path.write_text(json.dumps(_clean(payload), indent=2, allow_nan=False) + "\n", encoding="utf-8")
    return path


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvalidArgument(f"cannot parse {path}: {exc}") from exc


def load_schema(name: str) -> dict:
    """Published JSON schema for an output kind (``synthesize``, ``sweep``, ...)."""
    text = resources.files("relaxo").joinpath("schemas", f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def params_block(target: PulseTarget | None, params: PulseParams, time_unit: str) -> dict:
    out = {"R": params.R, "r": params.r, "eps": params.eps, "time_unit": time_unit}
    if target is not None:
        out["target"] = target.value
    return out


def trajectory_payload(traj: Trajectory) -> dict:
    return {name: getattr(traj, name) for name in TRAJECTORY_COLUMNS}


def trajectory_from_payload(block: dict, params: PulseParams, target: PulseTarget, kappa: float) -> Trajectory:
    try:
        cols = {k: np.asarray(block[k], dtype=float) for k in TRAJECTORY_COLUMNS}
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidArgument(f"malformed trajectory block: {exc}") from exc
    return Trajectory(params=params, target=target, kappa=kappa, **cols)


def append_run(out_dir, command: str, params: dict, outputs, metrics: dict) -> dict:
    """Append one record to ``<out_dir>/runs.jsonl``; the log is never rewritten."""
    record = {
        "command": command,
        "params": params,
        "outputs": [str(Path(p)) for p in outputs],
        "metrics": metrics,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    with (Path(out_dir) / RUN_LOG).open("a", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(_clean(record), allow_nan=False) + "\n")
    return record
