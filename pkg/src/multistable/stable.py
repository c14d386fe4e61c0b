"""Symmetric alpha-stable toolkit.

Sampling (Chambers-Mallows-Stuck), the series normalisation constant
``C_eta``, fractional absolute moments ``E|Z|^p`` of ``Z ~ S_alpha(1, 0, 0)``
and the theoretical moment ratio used by the stability estimator.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

__all__ = [
    "INFINITE",
    "StableParams",
    "MomentRatioSpec",
    "open_uniform",
    "cms_transform",
    "sample_sas",
    "c_eta",
    "c_eta_closed_form",
    "sin2_integral",
    "abs_moment",
    "theoretical_ratio",
    "ratio_table",
]

#: Returned by :func:`abs_moment` when ``p >= alpha``.
INFINITE = math.inf

_QUAD_EPSABS = 1e-10
_QUAD_EPSREL = 1e-10


@dataclass(frozen=True)
class StableParams:
    """Stability index of a standard symmetric stable law S_alpha(1, 0, 0)."""

    alpha: float

    def __post_init__(self):
        a = float(self.alpha)
        if not (0.0 < a < 2.0) or math.isnan(a):
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha!r}")
        object.__setattr__(self, "alpha", a)


@dataclass(frozen=True)
class MomentRatioSpec:
    p0: float
    p: float

    def __post_init__(self):
        if not self.p0 > 0:
            raise ValueError(f"p0 must be positive, got {self.p0!r}")
        if not self.p >= self.p0:
            raise ValueError(f"p must be >= p0, got p={self.p!r}, p0={self.p0!r}")


def _as_params(alpha) -> StableParams:
    return alpha if isinstance(alpha, StableParams) else StableParams(alpha)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    """Uniform draws on the open interval (0, 1), 53-bit resolution."""
    k = rng.integers(0, 2**53, size=size, dtype=np.int64)
    return (k.astype(np.float64) + 0.5) * 2.0**-53


def cms_transform(alpha, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Map two open uniforms per draw to S_alpha(1, 0, 0) variates.

    ``alpha`` may be a scalar or an array broadcastable against the uniforms.
    Entries with ``alpha == 1`` use the Cauchy branch ``tan(V)``.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    v = np.pi * (u1 - 0.5)
    w = -np.log(u2)
    one = alpha == 1.0
    a = np.where(one, 0.5, alpha)  # placeholder keeps the general branch finite
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        general = (np.sin(a * v) / np.cos(v) ** (1.0 / a)
                   * (np.cos((1.0 - a) * v) / w) ** ((1.0 - a) / a))
    if not np.any(one):
        return general
    return np.where(one, np.tan(v), general)


def sample_sas(alpha, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` independent S_alpha(1, 0, 0) variates."""
    params = _as_params(alpha)
    if count < 0:
        raise ValueError("count must be non-negative")
    u1 = open_uniform(rng, count)
    u2 = open_uniform(rng, count)
    return cms_transform(params.alpha, u1, u2)


# ---------------------------------------------------------------------------
# Improper integrals
# ---------------------------------------------------------------------------

def _quad(*args, **kwargs) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, _ = integrate.quad(*args, epsabs=_QUAD_EPSABS, epsrel=_QUAD_EPSREL,
                                  limit=200, **kwargs)
    return value


def _sinc(x):
    return np.sinc(x / np.pi)


@lru_cache(maxsize=None)
def _sin_integral(eta: float) -> float:
    # int_0^inf x^-eta sin x dx; [0, 1] carries the x^(1-eta) algebraic weight,
    # [1, inf) is a Fourier integral (QAWF).
    head = _quad(_sinc, 0.0, 1.0, weight="alg", wvar=(1.0 - eta, 0.0))
    tail = _quad(lambda x: x ** -eta, 1.0, np.inf, weight="sin", wvar=1.0)
    return head + tail


def c_eta(eta: float) -> float:
    """``C_eta = (int_0^inf x^-eta sin(x) dx)^-1`` for ``eta`` in (0, 2)."""
    eta = float(eta)
    if not 0.0 < eta < 2.0:
        raise ValueError(f"eta must lie in (0, 2), got {eta!r}")
    return 1.0 / _sin_integral(eta)


def c_eta_closed_form(eta: float) -> float:
    """Closed form ``(1 - eta) / (Gamma(2 - eta) cos(pi eta / 2))``, 2/pi at eta=1."""
    if eta == 1.0:
        return 2.0 / math.pi
    return (1.0 - eta) / (special.gamma(2.0 - eta) * math.cos(math.pi * eta / 2.0))


@lru_cache(maxsize=None)
def sin2_integral(p: float) -> float:
    """``int_0^inf u^(-p-1) sin^2(u) du`` for ``p`` in (0, 2)."""
    if not 0.0 < p < 2.0:
        raise ValueError(f"p must lie in (0, 2), got {p!r}")
    head = _quad(lambda u: _sinc(u) ** 2, 0.0, 1.0, weight="alg", wvar=(1.0 - p, 0.0))
    # sin^2 = (1 - cos 2u) / 2 on the tail; the constant part is exact.
    osc = _quad(lambda u: u ** (-p - 1.0), 1.0, np.inf, weight="cos", wvar=2.0)
    return head + 0.5 / p - 0.5 * osc


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------

def _log_abs_moment(alpha: float, p: float) -> float:
    # alpha == 2 is admitted here; the ratio table needs the Gaussian end.
    if p >= alpha:
        return math.inf
    return ((p - 1.0) * math.log(2.0) + special.gammaln(1.0 - p / alpha)
            - math.log(p) - math.log(sin2_integral(p)))


@lru_cache(maxsize=65536)
def _abs_moment_cached(alpha: float, p: float) -> float:
    log_m = _log_abs_moment(alpha, p)
    return INFINITE if math.isinf(log_m) else math.exp(log_m)


def abs_moment(alpha, p: float) -> float:
    """``E|Z|^p`` for ``Z ~ S_alpha(1, 0, 0)``; :data:`INFINITE` when ``p >= alpha``."""
    params = _as_params(alpha)
    p = float(p)
    if not p > 0:
        raise ValueError(f"p must be positive, got {p!r}")
    return _abs_moment_cached(params.alpha, p)


def theoretical_ratio(alpha: float, spec: MomentRatioSpec) -> float:
    """``(E|Z|^p0)^(1/p0) / (E|Z|^p)^(1/p) * 1{p < alpha}``.

    Zero when ``p >= alpha`` or ``alpha <= p0``.
    """
    alpha = float(alpha)
    if not 0.0 <= alpha <= 2.0:
        raise ValueError(f"alpha must lie in [0, 2], got {alpha!r}")
    if spec.p >= alpha or alpha <= spec.p0:
        return 0.0
    if spec.p == spec.p0:
        return 1.0
    return math.exp(_log_abs_moment(alpha, spec.p0) / spec.p0
                    - _log_abs_moment(alpha, spec.p) / spec.p)


@lru_cache(maxsize=32)
def _ratio_table(p0: float, p_grid: tuple, alpha_grid: tuple) -> np.ndarray:
    table = np.zeros((len(alpha_grid), len(p_grid)))
    for i, a in enumerate(alpha_grid):
        for j, p in enumerate(p_grid):
            table[i, j] = theoretical_ratio(a, MomentRatioSpec(p0, p))
    table.setflags(write=False)
    return table


def ratio_table(p0: float, p_grid, alpha_grid) -> np.ndarray:
    """Matrix ``R[i, j] = R_{alpha_grid[i]}(p_grid[j])`` (read-only, memoised)."""
    return _ratio_table(float(p0), tuple(float(p) for p in p_grid),
                        tuple(float(a) for a in alpha_grid))
