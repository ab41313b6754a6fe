"""CSV tables with ``#`` metadata headers: sweep rows and trajectory exports.

Floats are written with ``repr`` (shortest round-trip form), missing values as
empty fields, and every file starts with ``# key = value`` lines describing the
run that produced it.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

SWEEP_COLUMNS = (
    "g", "q0", "tau_requested", "tau_realized", "sigma_q2", "sigma_v2", "corr", "s_pump",
    "w_ext", "s_i", "s_vfb", "s_highq", "bound_nm", "eta_pump", "source", "status", "seed",
    "se_sigma_q2", "se_sigma_v2", "se_corr", "se_s_pump", "se_w_ext",
)
SOURCES = ("closed", "quadrature", "simulation")


@dataclass
class SweepRow:
    """One parameter point evaluated by one source.

    ``status`` is ``"ok"``, ``"unstable"``, ``"indeterminate"`` or ``"diverged"``;
    non-ok rows leave the steady-state columns empty.  Standard errors are only
    present for simulation rows.
    """

    g: float
    q0: float
    tau_requested: float
    tau_realized: float
    source: str
    status: str = "ok"
    sigma_q2: Optional[float] = None
    sigma_v2: Optional[float] = None
    corr: Optional[float] = None
    s_pump: Optional[float] = None
    w_ext: Optional[float] = None
    s_i: Optional[float] = None
    s_vfb: Optional[float] = None
    s_highq: Optional[float] = None
    bound_nm: Optional[float] = None
    eta_pump: Optional[float] = None
    seed: Optional[int] = None
    se_sigma_q2: Optional[float] = None
    se_sigma_v2: Optional[float] = None
    se_corr: Optional[float] = None
    se_s_pump: Optional[float] = None
    se_w_ext: Optional[float] = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepRow":
        kw = {}
        for f in fields(cls):
            raw = d.get(f.name, "")
            if f.name in ("source", "status"):
                kw[f.name] = raw or ("ok" if f.name == "status" else raw)
            elif f.name == "seed":
                kw[f.name] = int(raw) if raw not in ("", None) else None
            else:
                kw[f.name] = parse_float(raw)
        return cls(**kw)


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    return str(v)


def parse_float(s) -> Optional[float]:
    if s is None or s == "":
        return None
    return float(s)


def _format_meta(v) -> str:
    if isinstance(v, (dict, list, tuple)):
        return json.dumps(v, sort_keys=True, default=_json_default)
    return format_value(v)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def render_table(meta: dict, columns: Sequence[str], rows: Iterable) -> str:
    """Serialize rows (dicts or sequences) under a ``#`` metadata header."""
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key} = {_format_meta(value)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if isinstance(row, SweepRow):
            row = row.as_dict()
        if isinstance(row, dict):
            row = [row.get(c) for c in columns]
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_table(path, meta: dict, columns: Sequence[str], rows: Iterable) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(render_table(meta, columns, rows))
    return path


def parse_table(text: str) -> tuple[dict, list[dict]]:
    """Inverse of :func:`render_table`; values stay strings."""
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        elif line:
            body.append(line)
    reader = csv.DictReader(body)
    return meta, list(reader)


def read_table(path) -> tuple[dict, list[dict]]:
    with open(path, encoding="utf-8") as fh:
        return parse_table(fh.read())


def meta_value(s: str):
    """Best-effort decoding of a metadata value written by :func:`render_table`."""
    if s in ("true", "false"):
        return s == "true"
    try:
        return json.loads(s)
    except ValueError:
        return s


def write_sweep(path, meta: dict, rows: Sequence, extra_columns: Sequence[str] = ()) -> Path:
    return write_table(path, meta, SWEEP_COLUMNS + tuple(extra_columns), rows)


def read_sweep(path) -> tuple[dict, list[SweepRow]]:
    meta, raw = read_table(path)
    return meta, [SweepRow.from_dict(r) for r in raw]


def write_trajectory(path, traj) -> Path:
    """Export ``t,q,v`` samples of a :class:`~delaytherm.simulate.Trajectory`."""
    meta = dict(traj.meta)
    meta.update({f"stat_{k}": v for k, v in traj.stats.items()})
    return write_table(path, meta, ("t", "q", "v"), zip(traj.t, traj.q, traj.v))


def read_trajectory(path) -> tuple[dict, np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(meta, t, q, v)`` from a trajectory CSV."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    meta = {}
    start = 0
    for start, line in enumerate(lines):
        if not line.startswith("#"):
            break
        key, _, value = line[1:].partition("=")
        meta[key.strip()] = meta_value(value.strip())
    if lines[start].replace(" ", "") != "t,q,v":
        raise ValueError(f"expected header 't,q,v', got {lines[start]!r}")
    data = np.loadtxt(lines[start + 1:], delimiter=",", ndmin=2)
    if data.size == 0:
        data = np.empty((0, 3))
    return meta, data[:, 0], data[:, 1], data[:, 2]
