"""Pointwise estimators of the localisability H(t0) and stability alpha(t0).

Both work on the ``n`` increments ``Y((k+1)/N) - Y(k/N)`` with
``k = [N t0] - n/2, ..., [N t0] + n/2 - 1``.

* ``H_hat = -mean(log|Y_k|) / log N``
* ``alpha_hat``: smallest grid alpha minimising
  ``int_{p0}^{2} |R_exp(p) - R_alpha(p)|^gamma dp``, where
  ``R_exp(p) = S(p0) / S(p)`` is the empirical power-mean ratio and
  ``R_alpha`` its stable counterpart.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Literal

import numpy as np

from .paths import SamplePath, format_float, write_atomic
from .stable import MomentRatioSpec, ratio_table, theoretical_ratio

__all__ = [
    "WindowError", "ZeroWindowError", "EstimatorConfig", "EstimateSeries",
    "even_window", "window_increments", "estimate_h", "estimate_h_detail",
    "empirical_moment", "ratio_curve", "alpha_objective", "alpha_from_ratio",
    "estimate_alpha", "sweep", "t0_grid", "parse_estimates_csv",
]

BoundaryPolicy = Literal["error", "shrink-window"]
_FLOOR_EPS = 1e-9


class WindowError(ValueError):
    """The estimation window does not fit inside the path."""


class ZeroWindowError(ValueError):
    """Every increment in the window is zero."""


def even_window(n: float) -> int:
    """Round ``n`` down to an even integer (at least 2)."""
    k = int(math.floor(n))
    k -= k % 2
    return max(k, 2)


@dataclass(frozen=True)
class EstimatorConfig:
    """Window and grids for the two estimators.

    ``n_window_h`` overrides the window for ``H_hat`` only; the published
    figures use a different window for each estimator.
    """

    n_window: int
    p0: float = 0.2
    gamma: float = 0.5
    p_grid: tuple[float, ...] | None = None
    alpha_grid: tuple[float, ...] | None = None
    boundary_policy: BoundaryPolicy = "error"
    n_window_h: int | None = None
    refine: bool = False

    def __post_init__(self):
        for name in ("n_window", "n_window_h"):
            n = getattr(self, name)
            if n is None:
                continue
            if int(n) != n or n < 2 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 2, got {n!r}")
        if not self.p0 > 0 or not self.p0 < 2:
            raise ValueError("p0 must lie in (0, 2)")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.boundary_policy not in ("error", "shrink-window"):
            raise ValueError(f"unknown boundary policy {self.boundary_policy!r}")
        if self.p_grid is None:
            object.__setattr__(self, "p_grid", tuple(np.linspace(self.p0, 2.0, 61)))
        if self.alpha_grid is None:
            object.__setattr__(self, "alpha_grid", tuple(np.linspace(0.0, 2.0, 401)))
        pg = np.asarray(self.p_grid, dtype=np.float64)
        ag = np.asarray(self.alpha_grid, dtype=np.float64)
        object.__setattr__(self, "p_grid", tuple(float(p) for p in pg))
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in ag))
        if len(pg) < 2 or np.any(np.diff(pg) <= 0) or pg[0] != self.p0 or pg[-1] != 2.0:
            raise ValueError("p_grid must increase strictly from p0 to 2")
        if len(ag) < 2 or np.any(np.diff(ag) <= 0) or ag[0] != 0.0 or ag[-1] != 2.0:
            raise ValueError("alpha_grid must increase strictly from 0 to 2")

    @property
    def window_h(self) -> int:
        return self.n_window_h if self.n_window_h is not None else self.n_window

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["p_grid"] = list(self.p_grid)
        d["alpha_grid"] = list(self.alpha_grid)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Windows and moments
# ---------------------------------------------------------------------------

def window_increments(path: SamplePath, t0: float, n_window: int,
                      policy: BoundaryPolicy = "error") -> np.ndarray:
    """The ``n_window`` increments centred on ``[N t0]``.

    With ``policy="shrink-window"`` the index range is clipped to the path and
    the returned array may be shorter.
    """
    if int(n_window) != n_window or n_window < 2 or n_window % 2:
        raise ValueError(f"n_window must be an even integer >= 2, got {n_window!r}")
    times = (path.t_start, path.t_end)
    if not times[0] <= t0 <= times[1]:
        raise WindowError(f"t0={t0} outside path span [{times[0]}, {times[1]}]")
    N = path.resolution
    center = int(math.floor(N * (t0 - path.t_start) + _FLOOR_EPS))
    lo, hi = center - n_window // 2, center + n_window // 2 - 1
    last = len(path.values) - 2
    if lo < 0 or hi > last:
        if policy == "error":
            raise WindowError(f"window k in [{lo}, {hi}] leaves [0, {last}] at t0={t0}")
        lo, hi = max(lo, 0), min(hi, last)
        if hi < lo:
            raise WindowError(f"empty window at t0={t0}")
    v = path.values
    return v[lo + 1:hi + 2] - v[lo:hi + 1]


def estimate_h_detail(increments) -> tuple[float, int, int]:
    """Return ``(sum of -log|y| over nonzero y, retained, skipped)``."""
    a = np.abs(np.asarray(increments, dtype=np.float64))
    nz = a[a != 0]
    if nz.size == 0:
        raise ZeroWindowError("all increments in the window are zero")
    return float(-np.sum(np.log(nz))), int(nz.size), int(a.size - nz.size)


def estimate_h(path: SamplePath, t0: float, config: EstimatorConfig) -> float:
    """``H_hat(t0) = -(1 / (n log N)) sum log|Y_k|``.

    Zero increments are dropped and the mean is taken over the rest.
    """
    y = window_increments(path, t0, config.window_h, config.boundary_policy)
    total, kept, _ = estimate_h_detail(y)
    return total / (kept * math.log(path.resolution))


def empirical_moment(increments, p: float) -> float:
    """Power mean ``(mean |y|^p)^(1/p)``."""
    if not p > 0:
        raise ValueError(f"p must be positive, got {p!r}")
    a = np.abs(np.asarray(increments, dtype=np.float64))
    if a.size == 0:
        raise ValueError("empty window")
    return float(np.mean(a ** p) ** (1.0 / p))


def _log_power_means(a: np.ndarray, p: np.ndarray) -> np.ndarray:
    # scaled by max|y| so that large p cannot underflow
    m = a.max()
    if m == 0:
        raise ZeroWindowError("all increments in the window are zero")
    x = a / m
    with np.errstate(divide="ignore"):
        lx = np.log(x)
    means = np.array([np.mean(np.exp(pi * lx)) for pi in p])
    return math.log(m) + np.log(means) / p


def ratio_curve(increments, config: EstimatorConfig) -> tuple[np.ndarray, np.ndarray]:
    """``(p_grid, R_exp(p_grid))`` with ``R_exp(p) = S(p0) / S(p)``."""
    a = np.abs(np.asarray(increments, dtype=np.float64))
    if a.size == 0:
        raise ValueError("empty window")
    p = np.asarray(config.p_grid)
    logs = _log_power_means(a, p)
    r = np.exp(logs[0] - logs)
    r[0] = 1.0
    return p, r


# ---------------------------------------------------------------------------
# Stability index
# ---------------------------------------------------------------------------

def _trapezoid(f: np.ndarray, x: np.ndarray) -> np.ndarray:
    dx = np.diff(x)
    return np.sum(0.5 * (f[..., 1:] + f[..., :-1]) * dx, axis=-1)


def alpha_objective(r_exp, config: EstimatorConfig) -> np.ndarray:
    """``g(alpha) = int |R_exp - R_alpha|^gamma dp`` on ``config.alpha_grid``."""
    table = ratio_table(config.p0, config.p_grid, config.alpha_grid)
    diff = np.abs(np.asarray(r_exp, dtype=np.float64)[None, :] - table) ** config.gamma
    return _trapezoid(diff, np.asarray(config.p_grid))


def _objective_at(alpha: float, r_exp: np.ndarray, config: EstimatorConfig) -> float:
    r = np.array([theoretical_ratio(alpha, MomentRatioSpec(config.p0, p)) for p in config.p_grid])
    return float(_trapezoid(np.abs(r_exp - r) ** config.gamma, np.asarray(config.p_grid)))


def _golden(fn, lo: float, hi: float, tol: float = 1e-6) -> float:
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def alpha_from_ratio(r_exp, config: EstimatorConfig) -> float:
    """Smallest grid alpha minimising the ratio-curve distance.

    With ``config.refine`` one golden-section pass is run inside the grid
    cells adjacent to the minimiser; the result never leaves them.
    """
    r_exp = np.asarray(r_exp, dtype=np.float64)
    g = alpha_objective(r_exp, config)
    i = int(np.argmin(g))  # first occurrence == smallest alpha
    grid = config.alpha_grid
    if not config.refine:
        return grid[i]
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    best = _golden(lambda a: _objective_at(a, r_exp, config), lo, hi)
    return best if _objective_at(best, r_exp, config) < g[i] else grid[i]


def estimate_alpha(path: SamplePath, t0: float, config: EstimatorConfig) -> float:
    y = window_increments(path, t0, config.n_window, config.boundary_policy)
    _, r = ratio_curve(y, config)
    return alpha_from_ratio(r, config)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def t0_grid(count: int, start: float, end: float) -> np.ndarray:
    if count < 1:
        raise ValueError("count must be >= 1")
    return np.linspace(start, end, count) if count > 1 else np.array([start])


@dataclass
class EstimateSeries:
    t0_values: np.ndarray
    h_hat: np.ndarray | None
    alpha_hat: np.ndarray | None
    status: list[str]
    config: EstimatorConfig
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.t0_values)
        for name in ("h_hat", "alpha_hat"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise ValueError(f"{name} length differs from t0_values")
        if len(self.status) != n:
            raise ValueError("status length differs from t0_values")

    @property
    def ok(self) -> np.ndarray:
        return np.array([s == "ok" for s in self.status], dtype=bool)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write("t0,h_hat,alpha_hat,status\n")
        nan = np.full(len(self.t0_values), np.nan)
        h = self.h_hat if self.h_hat is not None else nan
        a = self.alpha_hat if self.alpha_hat is not None else nan
        for row in zip(self.t0_values, h, a, self.status):
            buf.write(",".join((format_float(row[0]), format_float(row[1]),
                                format_float(row[2]), row[3])) + "\n")
        return buf.getvalue()

    def sidecar(self) -> dict[str, Any]:
        return {"config": self.config.to_dict(), "config_digest": self.config.digest(),
                **self.meta}

    def write(self, csv_path, extra_meta: dict | None = None) -> None:
        from pathlib import Path
        csv_path = Path(csv_path)
        write_atomic(csv_path, self.to_csv_text())
        meta = self.sidecar()
        if extra_meta:
            meta.update(extra_meta)
        write_atomic(csv_path.with_suffix(".json"), json.dumps(meta, indent=2, sort_keys=True) + "\n")


def parse_estimates_csv(text: str) -> dict[str, Any]:
    """Parse ``t0,h_hat,alpha_hat,status`` back into arrays."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["t0", "h_hat", "alpha_hat", "status"]:
        raise ValueError("expected header 't0,h_hat,alpha_hat,status'")
    body = rows[1:]
    return {"t0": np.array([float(r[0]) for r in body]),
            "h_hat": np.array([float(r[1]) for r in body]),
            "alpha_hat": np.array([float(r[2]) for r in body]),
            "status": [r[3] for r in body]}


def _point(path, t0, config, which):
    h = a = math.nan
    skipped = 0
    try:
        if which in ("H", "both"):
            y = window_increments(path, t0, config.window_h, config.boundary_policy)
            total, kept, skipped = estimate_h_detail(y)
            h = total / (kept * math.log(path.resolution))
        if which in ("alpha", "both"):
            a = estimate_alpha(path, t0, config)
    except WindowError:
        return h, a, "window-error", skipped
    except ZeroWindowError:
        return h, a, "zero-window", skipped
    except (ValueError, FloatingPointError) as exc:
        return h, a, f"error:{type(exc).__name__}", skipped
    return h, a, "ok", skipped


def sweep(path: SamplePath, t0_values, config: EstimatorConfig,
          which: Literal["H", "alpha", "both"] = "both", jobs: int = 1) -> EstimateSeries:
    """Apply the estimators at every ``t0``; failures go to ``status``."""
    if which not in ("H", "alpha", "both"):
        raise ValueError(f"which must be 'H', 'alpha' or 'both', got {which!r}")
    t0_values = np.asarray(t0_values, dtype=np.float64)
    if which != "H":
        ratio_table(config.p0, config.p_grid, config.alpha_grid)  # warm the shared cache
    if jobs > 1 and len(t0_values) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda t: _point(path, t, config, which), t0_values))
    else:
        results = [_point(path, t, config, which) for t in t0_values]
    h = np.array([r[0] for r in results]) if which != "alpha" else None
    a = np.array([r[1] for r in results]) if which != "H" else None
    meta = {"source": dict(path.meta), "which": which,
            "zero_increments_skipped": int(sum(r[3] for r in results))}
    return EstimateSeries(t0_values, h, a, [r[2] for r in results], config, meta)
