"""Experiment configuration, seeding, figure presets and pipelines.

Config files are INI-style::

    [experiment]
    generator = levy-increments     ; levy-increments | levy-fkl | lmmm | external-csv
    alpha = affine:1.98,-0.96       ; index function, see parse_index_function
    H =                             ; required for lmmm only
    N = 20000                       ; samples per unit time
    n_terms = 65536                 ; series truncation (levy-fkl, lmmm)
    replications = 1
    seed = 7                        ; unsigned 64-bit, mandatory
    compensate = true               ; Gaussian tail for the series routes

    [estimator]
    n_window = 2042                 ; increments per alpha_hat window (even)
    n_window_h = 500                ; increments per H_hat window (even)
    p0 = 0.2
    gamma = 0.5
    p_points = 61                   ; nodes of the p grid on [p0, 2]
    alpha_step = 0.005              ; spacing of the alpha grid on [0, 2]
    boundary_policy = error         ; error | shrink-window
    refine = false

    [t0]
    count = 81
    start = 0.1                     ; omitted: clipped to the window margin
    end = 0.9

    [output]
    dir = out
    input =                         ; CSV files for external-csv
"""
from __future__ import annotations

import configparser
import hashlib
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .estimators import EstimateSeries, EstimatorConfig, even_window, sweep, t0_grid
from .fkl import DEFAULT_N_TERMS
from .indexfn import IndexFunction, parse_index_function
from .paths import InputError, SamplePath, read_path_csv, write_atomic
from .processes import cumulative_demean, levy_multistable_fkl, levy_multistable_increments, lmmm

__all__ = ["ConfigError", "InputError", "ExperimentSpec", "substream", "load_config",
           "parse_config", "PRESETS", "preset_spec", "simulate_one", "cmd_simulate",
           "cmd_estimate", "cmd_reproduce", "cmd_analyze", "curve_metrics", "REPORT_SCHEMA_VERSION"]

GENERATORS = ("levy-increments", "levy-fkl", "lmmm", "external-csv")
REPORT_SCHEMA_VERSION = 1
COMPONENT_PATH = 0


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def substream(seed: int, replication: int, component: int = COMPONENT_PATH) -> np.random.Generator:
    """Independent PCG64 stream keyed by ``(seed, replication, component)``.

    Uses numpy's SeedSequence spawn keys, so the stream does not depend on the
    order in which replications run.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replication), int(component)))
    return np.random.Generator(np.random.PCG64(ss))


def make_estimator_config(n_window: int, n_window_h: int | None = None, p0: float = 0.2,
                          gamma: float = 0.5, p_points: int = 61, alpha_step: float = 0.005,
                          boundary_policy: str = "error", refine: bool = False) -> EstimatorConfig:
    n_alpha = int(round(2.0 / alpha_step)) + 1
    if abs((n_alpha - 1) * alpha_step - 2.0) > 1e-9:
        raise ConfigError(f"alpha_step {alpha_step} does not divide [0, 2]")
    if p_points < 2:
        raise ConfigError("p_points must be >= 2")
    try:
        return EstimatorConfig(n_window=n_window, p0=p0, gamma=gamma,
                               p_grid=tuple(np.linspace(p0, 2.0, p_points)),
                               alpha_grid=tuple(np.linspace(0.0, 2.0, n_alpha)),
                               boundary_policy=boundary_policy, n_window_h=n_window_h,
                               refine=refine)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class ExperimentSpec:
    generator: str
    N: int
    estimator: EstimatorConfig
    seed: int
    alpha_spec: str | None = None
    h_spec: str | None = None
    n_terms: int = DEFAULT_N_TERMS
    replications: int = 1
    t0_count: int = 81
    t0_span: tuple[float, float] | None = None
    outputs: Path = Path("out")
    compensate: bool = True
    inputs: tuple[str, ...] = ()
    name: str = "experiment"

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ConfigError(f"unknown generator {self.generator!r}; expected one of {GENERATORS}")
        if self.seed is None:
            raise ConfigError("seed is required")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.generator == "external-csv":
            if not self.inputs:
                raise ConfigError("external-csv needs [output] input files")
            return
        if self.N < 2:
            raise ConfigError("N must be >= 2")
        if self.n_terms < 1:
            raise ConfigError("n_terms must be >= 1")
        if not self.alpha_spec:
            raise ConfigError("alpha is required")
        if (self.generator == "lmmm") != bool(self.h_spec):
            raise ConfigError("H is required for lmmm and only for lmmm")
        alpha = self.alpha_fn()
        try:
            if self.generator.startswith("levy"):
                alpha.require_within(1.0, 2.0, "Levy alpha")
            else:
                alpha.require_within(0.0, 2.0, "alpha")
                h = self.h_fn()
                h.require_within(0.0, 1.0, "H")
                grid = np.linspace(0.0, 1.0, 10_001)
                gap = h(grid) - 1.0 / alpha(grid)
                if np.any(gap < 0):
                    raise ValueError(f"H - 1/alpha must be non-negative (minimum {gap.min():.3g})")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def alpha_fn(self) -> IndexFunction:
        try:
            return parse_index_function(self.alpha_spec)
        except ValueError as exc:
            raise ConfigError(f"alpha: {exc}") from None

    def h_fn(self) -> IndexFunction:
        try:
            return parse_index_function(self.h_spec)
        except ValueError as exc:
            raise ConfigError(f"H: {exc}") from None

    def t0_values(self, N: int | None = None) -> np.ndarray:
        if self.t0_span is not None:
            return t0_grid(self.t0_count, *self.t0_span)
        return t0_grid(self.t0_count, *clipped_span(N or self.N, self.estimator))

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "generator": self.generator, "alpha": self.alpha_spec,
                "H": self.h_spec, "N": self.N, "n_terms": self.n_terms,
                "replications": self.replications, "seed": int(self.seed),
                "compensate": self.compensate, "t0_count": self.t0_count,
                "t0_span": list(self.t0_span) if self.t0_span else None,
                "estimator": self.estimator.to_dict(), "inputs": list(self.inputs)}


def clipped_span(N: int, config: EstimatorConfig) -> tuple[float, float]:
    """``[n/(2N), 1 - n/(2N)]`` for the larger of the two windows, nudged
    inward so the error policy never fires on the end points."""
    n = max(config.n_window, config.window_h)
    lo = (n // 2 + 1) / N
    hi = 1.0 - (n // 2 + 1) / N
    if lo >= hi:
        raise ConfigError(f"window {n} does not fit a path with N={N}")
    return lo, hi


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

def _get(section, key, cast, default=None, required=False):
    if section is None or key not in section or section[key].strip() == "":
        if required:
            raise ConfigError(f"missing key {key!r}")
        return default
    raw = section[key].split(";")[0].strip()
    try:
        if cast is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def parse_config(text: str, seed: int | None = None, out: str | None = None,
                 name: str = "experiment") -> ExperimentSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    exp = cp["experiment"] if cp.has_section("experiment") else None
    est = cp["estimator"] if cp.has_section("estimator") else None
    t0 = cp["t0"] if cp.has_section("t0") else None
    outp = cp["output"] if cp.has_section("output") else None
    if exp is None:
        raise ConfigError("missing [experiment] section")
    if est is None:
        raise ConfigError("missing [estimator] section")
    cfg = make_estimator_config(
        n_window=_get(est, "n_window", int, required=True),
        n_window_h=_get(est, "n_window_h", int),
        p0=_get(est, "p0", float, 0.2), gamma=_get(est, "gamma", float, 0.5),
        p_points=_get(est, "p_points", int, 61), alpha_step=_get(est, "alpha_step", float, 0.005),
        boundary_policy=_get(est, "boundary_policy", str, "error"),
        refine=_get(est, "refine", bool, False))
    start, end = _get(t0, "start", float), _get(t0, "end", float)
    if (start is None) != (end is None):
        raise ConfigError("[t0] start and end go together")
    file_seed = _get(exp, "seed", int)
    inputs = _get(outp, "input", str, "")
    return ExperimentSpec(
        generator=_get(exp, "generator", str, required=True),
        N=_get(exp, "N", int, 0), estimator=cfg,
        seed=seed if seed is not None else file_seed,
        alpha_spec=_get(exp, "alpha", str), h_spec=_get(exp, "H", str),
        n_terms=_get(exp, "n_terms", int, DEFAULT_N_TERMS),
        replications=_get(exp, "replications", int, 1),
        t0_count=_get(t0, "count", int, 81),
        t0_span=(start, end) if start is not None else None,
        outputs=Path(out or _get(outp, "dir", str, "out")),
        compensate=_get(exp, "compensate", bool, True),
        inputs=tuple(s.strip() for s in inputs.split(",") if s.strip()),
        name=name)


def load_config(path, seed: int | None = None, out: str | None = None) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, seed=seed, out=out, name=path.stem)


# ---------------------------------------------------------------------------
# Figure presets
# ---------------------------------------------------------------------------

_LEVY = dict(generator="levy-increments", N=20000, n_window=2042, n_window_h=500)
_LMMM = dict(generator="lmmm", N=20000, n_window=3000, n_window_h=500)

PRESETS: dict[str, dict[str, Any]] = {
    "fig1-row1": dict(_LEVY, alpha="affine:1.98,-0.96"),
    "fig1-row2": dict(_LEVY, alpha="logistic:1.98,-0.96,20,-40"),
    "fig1-row3": dict(_LEVY, alpha="sinusoidal:1.5,-0.48"),
    "fig2": dict(_LEVY, alpha="sinusoidal:1.5,0.48", replications=5),
    "fig3": dict(_LEVY, alpha="sinusoidal:1.5,0.48", N=50000, full_N=200000,
                 n_window=3546, n_window_h=500),
    "fig4-row1": dict(_LMMM, alpha="affine:1.41,0.57", H="sinusoidal:0.725,0.175"),
    "fig4-row2": dict(_LMMM, alpha="sinusoidal:1.695,0.235", H="sinusoidal:0.725,-0.175"),
    "fig4-row3": dict(_LMMM, alpha="sinusoidal:1.695,0.235", H="affine:0.59,0.31"),
    "fig4-row4": dict(_LMMM, alpha="logistic:1.41,0.47,20,-40", H="affine:0.9,-0.35"),
}


def preset_spec(name: str, seed: int = 0, full: bool = False, out: str | Path = "out",
                replications: int | None = None) -> ExperimentSpec:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    p = PRESETS[name]
    N = p.get("full_N", p["N"]) if full else p["N"]
    return ExperimentSpec(
        generator=p["generator"], N=N,
        estimator=make_estimator_config(p["n_window"], p["n_window_h"]),
        seed=seed, alpha_spec=p["alpha"], h_spec=p.get("H"),
        replications=replications or p.get("replications", 1),
        outputs=Path(out), name=name)


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------

def simulate_one(spec: ExperimentSpec, replication: int) -> SamplePath:
    rng = substream(spec.seed, replication)
    alpha = spec.alpha_fn()
    if spec.generator == "levy-increments":
        path = levy_multistable_increments(alpha, spec.N, rng)
    elif spec.generator == "levy-fkl":
        path = levy_multistable_fkl(alpha, spec.N, spec.n_terms, rng, compensate=spec.compensate)
    elif spec.generator == "lmmm":
        path = lmmm(alpha, spec.h_fn(), spec.N, spec.n_terms, rng, compensate=spec.compensate)
    else:
        raise ConfigError("external-csv has nothing to simulate")
    path.meta.update(seed=int(spec.seed), replication=replication)
    return path


def _versions() -> dict[str, str]:
    import scipy
    return {"multistable": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _simulate_task(args):
    spec, r = args
    t = time.perf_counter()
    path = simulate_one(spec, r)
    return path, time.perf_counter() - t


def _run_parallel(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def cmd_simulate(spec: ExperimentSpec, jobs: int = 1) -> list[Path]:
    """Simulate every replication and write ``path_rNNN.csv`` plus sidecars."""
    results = _run_parallel(_simulate_task, [(spec, r) for r in range(spec.replications)], jobs)
    written = []
    for r, (path, seconds) in enumerate(results):
        target = spec.outputs / f"path_r{r:03d}.csv"
        path.write(target, {"config": spec.to_dict(), "versions": _versions(),
                            "timing": {"simulate_seconds": seconds}})
        written.append(target)
    return written


def _estimate_task(args):
    path, t0, config, which, jobs = args
    t = time.perf_counter()
    series = sweep(path, t0, config, which=which, jobs=jobs)
    return series, time.perf_counter() - t


def cmd_estimate(inputs, config: EstimatorConfig, t0_values=None, out: Path = Path("out"),
                 jobs: int = 1, t0_count: int = 81, which: str = "both") -> list[tuple[Path, EstimateSeries]]:
    """Estimate H and alpha along each input path; returns written files."""
    paths = [p if isinstance(p, SamplePath) else read_path_csv(p) for p in inputs]
    names = [Path(p).stem if not isinstance(p, SamplePath) else f"path_r{i:03d}"
             for i, p in enumerate(inputs)]
    tasks = []
    for path in paths:
        grid = t0_values if t0_values is not None else t0_grid(
            t0_count, *clipped_span(path.resolution, config))
        tasks.append((path, np.asarray(grid), config, which, jobs if len(paths) == 1 else 1))
    results = _run_parallel(_estimate_task, tasks, jobs if len(paths) > 1 else 1)
    written = []
    for name, (series, seconds) in zip(names, results):
        target = Path(out) / f"{name}_estimates.csv"
        series.write(target, {"versions": _versions(), "timing": {"estimate_seconds": seconds}})
        written.append((target, series))
    return written


def curve_metrics(t0, estimate, truth, span=(0.1, 0.9)) -> dict[str, float]:
    """Correlation and mean absolute error over ``span`` (failed points skipped)."""
    t0, estimate, truth = (np.asarray(x, dtype=np.float64) for x in (t0, estimate, truth))
    m = (t0 >= span[0] - 1e-12) & (t0 <= span[1] + 1e-12) & np.isfinite(estimate)
    if m.sum() < 2:
        return {"corr": math.nan, "mae": math.nan, "points": int(m.sum())}
    e, tr = estimate[m], truth[m]
    corr = float(np.corrcoef(e, tr)[0, 1]) if np.std(e) > 0 and np.std(tr) > 0 else math.nan
    return {"corr": corr, "mae": float(np.mean(np.abs(e - tr))), "points": int(m.sum())}


def replication_metrics(spec: ExperimentSpec, series: EstimateSeries,
                        span=(0.1, 0.9)) -> dict[str, Any]:
    t0 = series.t0_values
    alpha_true = spec.alpha_fn()(t0)
    h_true = spec.h_fn()(t0) if spec.generator == "lmmm" else 1.0 / alpha_true
    a = curve_metrics(t0, series.alpha_hat, alpha_true, span)
    h = curve_metrics(t0, series.h_hat, h_true, span)
    m = (t0 >= span[0] - 1e-12) & (t0 <= span[1] + 1e-12) & series.ok
    product = float(np.mean(np.abs(series.alpha_hat[m] * series.h_hat[m] - 1.0))) if m.any() else math.nan
    return {"alpha_corr": a["corr"], "alpha_mae": a["mae"], "h_corr": h["corr"],
            "h_mae": h["mae"], "product_mae": product, "points": a["points"],
            "failed_points": int((~series.ok).sum())}


def cmd_reproduce(name: str, seed: int = 0, full: bool = False, out: str | Path = "out",
                  jobs: int = 1, replications: int | None = None) -> dict[str, Any]:
    """Run a figure preset end to end and write ``report.json``."""
    spec = preset_spec(name, seed=seed, full=full, out=Path(out) / name, replications=replications)
    started = time.perf_counter()
    path_files = cmd_simulate(spec, jobs=jobs)
    t0 = spec.t0_values()
    estimates = cmd_estimate(path_files, spec.estimator, t0_values=t0, out=spec.outputs, jobs=jobs)
    per_rep = [replication_metrics(spec, series) for _, series in estimates]
    keys = ("alpha_corr", "alpha_mae", "h_corr", "h_mae", "product_mae")
    summary = {k: float(np.nanmean([m[k] for m in per_rep])) for k in keys}
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "preset": name, "full": full, "seed": int(seed),
        "parameters": spec.to_dict(),
        "t0_span": [float(t0[0]), float(t0[-1])],
        "metric_span": [0.1, 0.9],
        "replications": per_rep,
        "summary": summary,
        "files": {"paths": [str(p) for p in path_files],
                  "estimates": [str(p) for p, _ in estimates]},
        "versions": _versions(),
        "timing": {"total_seconds": time.perf_counter() - started},
    }
    write_atomic(spec.outputs / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def read_raw_series(path) -> np.ndarray:
    """Single-column numbers, or a ``t,value`` CSV (value column used)."""
    path = Path(path)
    try:
        lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise InputError(str(exc)) from None
    if lines and lines[0].replace(" ", "") == "t,value":
        lines = [ln.split(",")[1] for ln in lines[1:]]
    elif lines and not _is_number(lines[0].split(",")[-1]):
        lines = lines[1:]
    try:
        return np.array([float(ln.split(",")[-1]) for ln in lines], dtype=np.float64)
    except ValueError as exc:
        raise InputError(f"unparseable value: {exc}") from None


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def cmd_analyze(input_path, n_window: int | None = None, out: str | Path = "out",
                t0_count: int = 101, jobs: int = 1, base: EstimatorConfig | None = None):
    """Integrate a raw series (demeaned partial sums) and estimate H and alpha."""
    raw = read_raw_series(input_path)
    if raw.size == 0:
        raise InputError("input series is empty")
    n = n_window or (base.n_window if base else even_window(raw.size / 40))
    if raw.size < 4 * n:
        raise InputError(f"series of length {raw.size} is shorter than 4 * n_window = {4 * n}")
    config = replace(base, n_window=n, n_window_h=None) if base else make_estimator_config(n)
    try:
        path = cumulative_demean(raw)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    path.meta["source"] = str(input_path)
    t0 = t0_grid(t0_count, *clipped_span(path.resolution, config))
    series = sweep(path, t0, config, which="both", jobs=jobs)
    target = Path(out) / f"{Path(input_path).stem}_estimates.csv"
    series.write(target, {"versions": _versions(), "transform": "cumulative-demean",
                          "input_sha256": hashlib.sha256(Path(input_path).read_bytes()).hexdigest()})
    return target, series
