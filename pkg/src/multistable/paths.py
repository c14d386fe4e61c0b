"""Uniformly sampled trajectories and their on-disk form."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

__all__ = ["SamplePath", "InputError", "write_atomic", "format_float",
           "parse_path_csv", "read_path_csv"]


class InputError(ValueError):
    """Raised for unparseable or inconsistent input files."""


def expected_length(t_start: float, t_end: float, resolution: int) -> int:
    return int(math.floor((t_end - t_start) * resolution + 1e-9)) + 1


@dataclass
class SamplePath:
    """Samples ``Y(t_start + k / resolution)`` for ``k = 0, 1, ...``."""

    values: np.ndarray
    resolution: int
    t_start: float = 0.0
    t_end: float = 1.0
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if int(self.resolution) != self.resolution or self.resolution < 2:
            raise ValueError(f"resolution must be an integer >= 2, got {self.resolution!r}")
        self.resolution = int(self.resolution)
        n = expected_length(self.t_start, self.t_end, self.resolution)
        if len(self.values) != n:
            raise ValueError(f"expected {n} samples for span [{self.t_start}, {self.t_end}] "
                             f"at resolution {self.resolution}, got {len(self.values)}")

    def __len__(self):
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return self.t_start + np.arange(len(self.values)) / self.resolution

    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def scaled(self, factor: float) -> "SamplePath":
        return SamplePath(self.values * factor, self.resolution, self.t_start,
                          self.t_end, dict(self.meta))

    # -- serialisation -----------------------------------------------------

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write("t,value\n")
        for t, v in zip(self.times, self.values):
            buf.write(f"{format_float(t)},{format_float(v)}\n")
        return buf.getvalue()

    def sidecar(self) -> dict[str, Any]:
        return {"resolution": self.resolution, "t_start": self.t_start,
                "t_end": self.t_end, **self.meta}

    def write(self, csv_path: str | os.PathLike, extra_meta: dict | None = None) -> Path:
        csv_path = Path(csv_path)
        write_atomic(csv_path, self.to_csv_text())
        meta = self.sidecar()
        if extra_meta:
            meta.update(extra_meta)
        write_atomic(csv_path.with_suffix(".json"),
                     json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")
        return csv_path


def format_float(x: float) -> str:
    """Shortest repr that round-trips exactly."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def write_atomic(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def parse_path_csv(text: str, rel_tol: float = 1e-9) -> SamplePath:
    """Parse a ``t,value`` CSV into a :class:`SamplePath`.

    The time column must be uniformly spaced with spacing ``1/N`` for an
    integer ``N`` (relative tolerance ``rel_tol``).
    """
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError("empty CSV")
    if [c.strip() for c in rows[0]] != ["t", "value"]:
        raise InputError("expected header 't,value'")
    try:
        data = np.array([[float(a), float(b)] for a, b in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise InputError(f"unparseable row: {exc}") from None
    if len(data) < 3:
        raise InputError("need at least 3 samples")
    t, v = data[:, 0], data[:, 1]
    steps = np.diff(t)
    dt = (t[-1] - t[0]) / (len(t) - 1)
    if not dt > 0 or np.max(np.abs(steps - dt)) > rel_tol * dt:
        raise InputError("time column is not uniformly spaced")
    resolution = round(1.0 / dt)
    if resolution < 2 or abs(resolution * dt - 1.0) > 1e-6:
        raise InputError(f"spacing {dt!r} is not 1/N for an integer N")
    return SamplePath(v, resolution, float(t[0]), float(t[-1]))


def read_path_csv(path: str | os.PathLike) -> SamplePath:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(str(exc)) from None
    sp = parse_path_csv(text)
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        try:
            meta = json.loads(sidecar.read_text())
            sp.meta = {k: v for k, v in meta.items()
                       if k not in ("resolution", "t_start", "t_end")}
        except json.JSONDecodeError:
            pass
    sp.meta.setdefault("source", str(path))
    return sp
