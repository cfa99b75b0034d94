"""File formats: trajectory CSVs, summary matrices, canonical JSON."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError
from .model import Trajectory


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(x) for x in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DomainError(f"{path} is empty")
    return rows[0], rows[1:]


def write_trajectory_csv(path, traj: Trajectory) -> None:
    """``t,ch0[,ch1,...]``, one row per time step."""
    header = ["t"] + [f"ch{c}" for c in range(traj.n_channels)]
    rows = (
        [traj.times[i], *traj.channels[:, i]] for i in range(len(traj))
    )
    write_csv(path, header, rows)


def read_trajectory_csv(path) -> Trajectory:
    header, rows = read_csv(path)
    if not header or header[0] != "t" or len(header) < 2:
        raise DomainError(f"{path}: expected header 't,ch0,...'")
    try:
        arr = np.array([[float(x) for x in r] for r in rows])
    except ValueError as exc:
        raise DomainError(f"{path}: non-numeric entry ({exc})") from None
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] != len(header):
        raise DomainError(f"{path}: ragged or too short")
    t = arr[:, 0]
    dt = (t[-1] - t[0]) / (t.size - 1)
    if not dt > 0 or not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12):
        raise DomainError(f"{path}: time column is not uniformly increasing")
    # t_i = i * dt was rounded when written; 12 digits recovers the step exactly
    # for any dt typed in decimal, which keeps frequency summaries bit-identical
    return Trajectory(arr[:, 1:].T, float(f"{dt:.12g}"), float(t[0]))


def read_trajectory_dir(path, n: int | None = None) -> list[Trajectory]:
    files = sorted(Path(path).glob("traj_*.csv"))
    if not files:
        raise DomainError(f"no traj_*.csv files in {path}")
    if n is not None:
        if n > len(files):
            raise DomainError(f"requested n1={n} but only {len(files)} trajectories in {path}")
        files = files[:n]
    return [read_trajectory_csv(f) for f in files]


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DomainError(f"missing file {path}") from None
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: invalid JSON ({exc})") from None


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=_json_default).encode()).hexdigest()[:16]
