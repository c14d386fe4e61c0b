"""Concrete multistable processes and the real-data integration transform."""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .fkl import DEFAULT_N_TERMS, FieldKernel, FklMeasure, eval_diagonal, generate_atoms, prefactor
from .indexfn import IndexFunction
from .paths import SamplePath
from .stable import cms_transform, open_uniform

__all__ = [
    "levy_measure", "levy_kernel", "levy_multistable_increments", "levy_multistable_fkl",
    "LMMM_J_MAX", "lmmm_shell_probabilities", "lmmm_measure", "lmmm_kernel", "lmmm_cells", "lmmm",
    "cumulative_demean", "DegenerateKernelWarning",
]

log = logging.getLogger(__name__)

LMMM_J_MAX = 2**14
_DENSE = 10_000


class DegenerateKernelWarning(UserWarning):
    pass


def _grid(N: int) -> np.ndarray:
    return np.arange(N + 1) / N


def _is_constant(fn) -> bool:
    lo, hi = getattr(fn, "declared_range", (None, 0))
    return lo == hi


# ---------------------------------------------------------------------------
# Symmetric multistable Levy motion
# ---------------------------------------------------------------------------

def _check_levy_alpha(alpha_fn: IndexFunction, N: int) -> None:
    alpha_fn.require_within(1.0, 2.0, "Levy alpha")
    if N < 2:
        raise ValueError("N must be >= 2")


def levy_multistable_increments(alpha_fn: IndexFunction, N: int,
                                rng: np.random.Generator) -> SamplePath:
    """Levy multistable motion on [0, 1] from independent stable increments.

    Increment ``k`` is ``N^{-1/a} Z_k`` with ``a = alpha(k/N)`` and
    ``Z_k ~ S_a(1, 0, 0)``; the path is their cumulative sum with ``Y(0) = 0``.
    """
    _check_levy_alpha(alpha_fn, N)
    alpha = np.asarray(alpha_fn(np.arange(N) / N), dtype=np.float64)
    u1 = open_uniform(rng, N)
    u2 = open_uniform(rng, N)
    steps = cms_transform(alpha, u1, u2) * float(N) ** (-1.0 / alpha)
    values = np.concatenate(([0.0], np.cumsum(steps)))
    return SamplePath(values, N, meta={"generator": "levy-increments",
                                       "alpha": alpha_fn.describe(), "N": N})


def levy_measure() -> FklMeasure:
    """Lebesgue measure on (0, 1): already a probability, so ``r = 1``."""
    return FklMeasure(sampler=lambda rng, n: open_uniform(rng, n),
                      weight=lambda x: np.ones_like(x), name="uniform(0,1)")


def levy_kernel(alpha_fn) -> FieldKernel:
    return FieldKernel(eval=lambda t, u, x: (x <= t).astype(np.float64), alpha_fn=alpha_fn)


def levy_multistable_fkl(alpha_fn: IndexFunction, N: int, n_terms: int = DEFAULT_N_TERMS,
                         rng: np.random.Generator | None = None, jobs: int = 1,
                         compensate: bool = False) -> SamplePath:
    """Levy multistable motion as the diagonal of its series field (slow route).

    For constant alpha the diagonal is an ordinary cumulative sum over sites
    sorted into grid cells, which is used directly.  ``compensate`` adds the
    Gaussian approximation of the discarded tail, a Brownian motion shared by
    every row of the field.
    """
    _check_levy_alpha(alpha_fn, N)
    rng = np.random.default_rng() if rng is None else rng
    atoms = generate_atoms(levy_measure(), n_terms, rng)
    times = _grid(N)
    if _is_constant(alpha_fn):
        a = float(alpha_fn(0.0))
        terms = atoms.signs * atoms.gammas ** (-1.0 / a)
        # first grid index k with V <= k/N
        cell = np.searchsorted(times, atoms.sites, side="left")
        values = np.cumsum(np.bincount(cell, weights=terms, minlength=N + 1)[:N + 1])
        values *= prefactor(a)[0]
    else:
        values = eval_diagonal(levy_kernel(alpha_fn), atoms, times, jobs=jobs)
    if compensate:
        alpha = np.asarray(alpha_fn(times), dtype=np.float64)
        bm = np.concatenate(([0.0], np.cumsum(rng.standard_normal(N)))) / math.sqrt(N)
        values = values + prefactor(alpha) * _remainder_scale(alpha, atoms.gammas[-1]) * bm
    return SamplePath(values, N, meta={"generator": "levy-fkl", "alpha": alpha_fn.describe(),
                                       "N": N, "n_terms": n_terms, "compensate": compensate})


# ---------------------------------------------------------------------------
# Linear multistable multifractional motion
# ---------------------------------------------------------------------------

def lmmm_shell_probabilities(j_max: int = LMMM_J_MAX) -> np.ndarray:
    """``P(shell = j) = 6 / (pi^2 j^2)`` for ``j = 1..j_max``, renormalised."""
    j = np.arange(1, j_max + 1, dtype=np.float64)
    p = 6.0 / (math.pi**2 * j**2)
    return p / p.sum()


def lmmm_measure(j_max: int = LMMM_J_MAX) -> FklMeasure:
    """Sites on ``[-j, -j+1) U [j-1, j)`` with shell ``j`` drawn from
    :func:`lmmm_shell_probabilities`; the density is ``P(j)/2`` there, so
    ``r = 2 / P(j)`` (equal to ``pi^2 j^2 / 3`` without the cap)."""
    probs = lmmm_shell_probabilities(j_max)
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0

    def sampler(rng, n):
        j = np.searchsorted(cdf, open_uniform(rng, n), side="left") + 1
        negative = rng.integers(0, 2, size=n).astype(bool)
        offset = open_uniform(rng, n)
        return np.where(negative, -j + offset, j - 1 + offset)

    def weight(x):
        j = np.floor(np.abs(x)).astype(np.int64) + 1
        return 2.0 / probs[np.minimum(j, j_max) - 1]

    return FklMeasure(sampler=sampler, weight=weight, name=f"lmmm-shells(j_max={j_max})")


def lmmm_kernel(alpha_fn, h_fn) -> FieldKernel:
    """Well-balanced kernel ``|t - x|^{H(u) - 1/a(u)} - |x|^{H(u) - 1/a(u)}``."""
    def f(t, u, x):
        e = np.asarray(h_fn(u)) - 1.0 / np.asarray(alpha_fn(u))
        return np.abs(t - x) ** e - np.abs(x) ** e
    return FieldKernel(eval=f, alpha_fn=alpha_fn)


def _lmmm_block(t, alpha, expo, signs, log_ratio, sites, log_abs_sites):
    coef = signs * np.exp(log_ratio[None, :] / alpha[:, None])
    e = expo[:, None]
    with np.errstate(divide="ignore"):
        near = np.log(np.abs(t[:, None] - sites[None, :]))
    with np.errstate(invalid="ignore"):
        f = np.exp(e * near) - np.exp(e * log_abs_sites[None, :])
    f[expo == 0.0] = 0.0  # 0 * log(0) at a site on the grid
    return prefactor(alpha) * np.sum(coef * f, axis=1)


def _remainder_scale(alpha: np.ndarray, gamma_last: float) -> np.ndarray:
    """Standard deviation factor of the series tail beyond ``gamma_last``:
    ``sqrt(int_{G}^inf s^{-2/a} ds) = sqrt(G^{1-2/a} / (2/a - 1))``."""
    return np.sqrt(gamma_last ** (1.0 - 2.0 / alpha) / (2.0 / alpha - 1.0))


def lmmm_cells(N: int, j_max: int = LMMM_J_MAX, growth: float = 0.02):
    """Partition of [-j_max, j_max] into cells: width 1/N on [0, 1], growing
    geometrically by ``growth`` per cell away from it.  Returns (midpoints, widths)."""
    inner = np.arange(N + 1) / N

    def outward(start, stop, sign):
        edges, x, w = [start], start, 1.0 / N
        while (stop - x) * sign > 0:
            x = x + sign * w
            if (stop - x) * sign < w * 0.5:
                x = stop
            edges.append(x)
            w *= 1.0 + growth
        return np.array(edges)

    right = outward(1.0, float(j_max), 1.0)
    left = outward(0.0, -float(j_max), -1.0)[::-1]
    edges = np.concatenate((left[:-1], inner, right[1:]))
    return 0.5 * (edges[1:] + edges[:-1]), np.diff(edges)


def _lmmm_gauss_block(t, alpha, expo, xi_w, mids, log_r, log_abs_mids):
    e = expo[:, None]
    with np.errstate(divide="ignore"):
        near = np.log(np.abs(t[:, None] - mids[None, :]))
    with np.errstate(invalid="ignore"):
        f = np.exp(e * near) - np.exp(e * log_abs_mids[None, :])
    f[expo == 0.0] = 0.0
    coef = np.exp((1.0 / alpha[:, None] - 0.5) * log_r[None, :]) * xi_w[None, :]
    return np.sum(coef * f, axis=1)


def lmmm(alpha_fn: IndexFunction, h_fn: IndexFunction, N: int,
         n_terms: int = DEFAULT_N_TERMS, rng: np.random.Generator | None = None,
         jobs: int = 1, j_max: int = LMMM_J_MAX, compensate: bool = True) -> SamplePath:
    """Linear multistable multifractional motion on [0, 1] via its series field.

    With ``compensate`` the discarded series tail (atoms beyond ``n_terms``)
    is replaced by its Gaussian approximation, a white-noise integral of the
    same kernel weighted by ``r(x)^{1/a - 1/2}``.  Without it, paths with
    alpha close to 2 lose most of their small-scale roughness.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    alpha_fn.require_within(0.0, 2.0, "alpha")
    h_fn.require_within(0.0, 1.0, "H")
    dense = np.linspace(0.0, 1.0, _DENSE)
    times = _grid(N)
    gap = np.concatenate((h_fn(dense) - 1.0 / alpha_fn(dense), h_fn(times) - 1.0 / alpha_fn(times)))
    if np.any(gap < 0):
        raise ValueError(f"H - 1/alpha must be non-negative (minimum {gap.min():.3g})")
    rng = np.random.default_rng() if rng is None else rng
    measure = lmmm_measure(j_max)
    atoms = generate_atoms(measure, n_terms, rng)
    meta = {"generator": "lmmm", "alpha": alpha_fn.describe(), "H": h_fn.describe(),
            "N": N, "n_terms": n_terms, "j_max": j_max, "compensate": compensate}
    if np.all(gap == 0):
        warnings.warn("H == 1/alpha everywhere: the kernel vanishes and the path is zero",
                      DegenerateKernelWarning, stacklevel=2)
        return SamplePath(np.zeros(N + 1), N, meta=meta)

    alpha = np.asarray(alpha_fn(times), dtype=np.float64)
    expo = np.asarray(h_fn(times), dtype=np.float64) - 1.0 / alpha
    log_ratio = np.log(atoms.weights) - np.log(atoms.gammas)
    log_abs_sites = np.log(np.abs(atoms.sites))
    block = max(1, 2**21 // n_terms)
    starts = range(0, N + 1, block)
    args = (atoms.signs, log_ratio, atoms.sites, log_abs_sites)

    def run(i):
        s = slice(i, i + block)
        return _lmmm_block(times[s], alpha[s], expo[s], *args)

    values = np.concatenate(_map(run, starts, jobs))
    if compensate:
        mids, widths = lmmm_cells(N, j_max)
        xi_w = rng.standard_normal(len(mids)) * np.sqrt(widths)
        log_r = np.log(measure.weight(mids))
        log_abs_mids = np.log(np.abs(mids))
        gblock = max(1, 2**21 // len(mids))

        def run_gauss(i):
            s = slice(i, i + gblock)
            return _lmmm_gauss_block(times[s], alpha[s], expo[s], xi_w, mids, log_r, log_abs_mids)

        tail = np.concatenate(_map(run_gauss, range(0, N + 1, gblock), jobs))
        values = values + prefactor(alpha) * _remainder_scale(alpha, atoms.gammas[-1]) * tail
    return SamplePath(values, N, meta=meta)


def _map(fn, items, jobs):
    if jobs <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Real data
# ---------------------------------------------------------------------------

def cumulative_demean(raw) -> SamplePath:
    """Integrated, demeaned series ``Y(j) = sum_{i<=j} (Z_i - mean Z)``, ``Y(0) = 0``.

    The result is indexed on [0, 1] with resolution ``len(raw)``.
    """
    z = np.asarray(raw, dtype=np.float64).ravel()
    if z.size == 0:
        raise ValueError("raw series is empty")
    if z.size < 2:
        raise ValueError("raw series needs at least 2 values")
    # shifting by z[0] first keeps constant input exactly zero
    d = z - z[0]
    y = np.concatenate(([0.0], np.cumsum(d - d.mean())))
    y[-1] = 0.0  # exact: the demeaned sum telescopes to zero
    return SamplePath(y, z.size, meta={"generator": "cumulative-demean", "length": int(z.size)})
