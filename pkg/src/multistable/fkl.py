"""Ferguson-Klass-LePage series for multistable random fields.

One realisation of the atoms ``(Gamma_i, gamma_i, V_i, r(V_i))`` defines the
whole field

    X(t, u) = C_{a(u)}^{1/a(u)} sum_i gamma_i Gamma_i^{-1/a(u)} r(V_i)^{1/a(u)} f(t, u, V_i)

and its diagonal ``Y(t) = X(t, t)`` deterministically.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .stable import c_eta, open_uniform

__all__ = ["FklAtoms", "FklMeasure", "FieldKernel", "generate_atoms",
           "prefactor", "eval_field", "eval_diagonal", "DEFAULT_N_TERMS"]

DEFAULT_N_TERMS = 2**16
_ALPHA_STEP = 1e-4
_BLOCK_ELEMS = 2**22


@dataclass(frozen=True)
class FklAtoms:
    gammas: np.ndarray
    signs: np.ndarray
    sites: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        n = len(self.gammas)
        if not (len(self.signs) == len(self.sites) == len(self.weights) == n):
            raise ValueError("atom arrays must share one length")
        if n and (self.gammas[0] <= 0 or np.any(np.diff(self.gammas) <= 0)):
            raise ValueError("gammas must be positive and strictly increasing")
        if not np.all(np.abs(self.signs) == 1):
            raise ValueError("signs must be +1 or -1")
        if not np.all(self.weights > 0):
            raise ValueError("weights must be positive")

    @property
    def count(self) -> int:
        return len(self.gammas)

    def permuted(self, order) -> "FklAtoms":
        """Reorder atoms (gammas are left unsorted, so validation is bypassed)."""
        obj = object.__new__(FklAtoms)
        for name in ("gammas", "signs", "sites", "weights"):
            object.__setattr__(obj, name, getattr(self, name)[order])
        return obj


@dataclass(frozen=True)
class FklMeasure:
    """Probability measure ``m_hat`` on the sites plus the density ``r = dm/dm_hat``."""

    sampler: Callable[[np.random.Generator, int], np.ndarray]
    weight: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"


@dataclass(frozen=True)
class FieldKernel:
    """``f(t, u, x)`` (broadcasting over arrays) together with ``alpha(u)``."""

    eval: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    alpha_fn: Callable[[np.ndarray], np.ndarray]

    def alpha(self, u) -> np.ndarray:
        a = np.asarray(self.alpha_fn(np.asarray(u, dtype=np.float64)), dtype=np.float64)
        if np.any(~(a > 0)) or np.any(~(a < 2)):
            raise ValueError("alpha(u) must lie in (0, 2)")
        return a


def generate_atoms(measure: FklMeasure, n_terms: int, rng: np.random.Generator) -> FklAtoms:
    """Draw one set of atoms; the stream is consumed as gammas, signs, sites."""
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    gammas = np.cumsum(-np.log(open_uniform(rng, n_terms)))
    signs = 2.0 * rng.integers(0, 2, size=n_terms) - 1.0
    sites = np.asarray(measure.sampler(rng, n_terms), dtype=np.float64)
    weights = np.asarray(measure.weight(sites), dtype=np.float64)
    return FklAtoms(gammas, signs, sites, weights)


@lru_cache(maxsize=None)
def _c_node(k: int) -> float:
    return c_eta(k * _ALPHA_STEP)


def prefactor(alpha) -> np.ndarray:
    """``C_a^{1/a}``, with ``C_a`` interpolated linearly between cached nodes
    spaced 1e-4 apart (exact quadrature next to the ends of (0, 2))."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=np.float64))
    k = np.floor(alpha / _ALPHA_STEP).astype(np.int64)
    frac = alpha / _ALPHA_STEP - k
    top = int(round(2.0 / _ALPHA_STEP))
    c = np.empty_like(alpha)
    for idx in np.ndindex(alpha.shape):
        ki = int(k[idx])
        if ki < 1 or ki + 1 >= top:
            c[idx] = c_eta(float(alpha[idx]))
        elif frac[idx] == 0.0:
            c[idx] = _c_node(ki)
        else:
            c[idx] = (1.0 - frac[idx]) * _c_node(ki) + frac[idx] * _c_node(ki + 1)
    return c ** (1.0 / alpha)


def eval_field(kernel: FieldKernel, atoms: FklAtoms, t: float, u: float) -> float:
    """Truncated series ``X(t, u)`` over the retained atoms (compensated sum)."""
    a = float(kernel.alpha(u))
    f = np.broadcast_to(kernel.eval(np.float64(t), np.float64(u), atoms.sites), atoms.sites.shape)
    terms = atoms.signs * np.exp((np.log(atoms.weights) - np.log(atoms.gammas)) / a) * f
    return float(prefactor(a)[0]) * math.fsum(terms)


def _diagonal_block(kernel, atoms, t, log_ratio):
    a = kernel.alpha(t)
    coef = atoms.signs * np.exp(log_ratio[None, :] / a[:, None])
    f = kernel.eval(t[:, None], t[:, None], atoms.sites[None, :])
    return prefactor(a) * np.sum(coef * f, axis=1)


def eval_diagonal(kernel: FieldKernel, atoms: FklAtoms, t_grid, jobs: int = 1) -> np.ndarray:
    """``Y(t_k) = X(t_k, t_k)`` on ``t_grid`` from one shared atom set.

    Work is split into fixed blocks of grid points; the block layout does not
    depend on ``jobs`` so results are identical for any degree of parallelism.
    """
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.size == 0:
        return np.empty(0)
    if np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be sorted")
    log_ratio = np.log(atoms.weights) - np.log(atoms.gammas)
    block = max(1, _BLOCK_ELEMS // max(atoms.count, 1))
    chunks = [t_grid[i:i + block] for i in range(0, len(t_grid), block)]
    if jobs <= 1 or len(chunks) == 1:
        parts = [_diagonal_block(kernel, atoms, c, log_ratio) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(lambda c: _diagonal_block(kernel, atoms, c, log_ratio), chunks))
    return np.concatenate(parts)
