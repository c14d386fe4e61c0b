"""Time-varying index functions alpha(t) and H(t)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["IndexFunction", "parse_index_function"]

FORMS = ("constant", "affine", "logistic", "sinusoidal", "tabulated")
_N_CHECK = 10_000


@dataclass(frozen=True)
class IndexFunction:
    """A scalar function of time from a small family of parametric forms.

    ``affine``      a + b t
    ``logistic``    a + b / (1 + exp(c + d t))
    ``sinusoidal``  a + b sin(2 pi t)
    ``constant``    a
    ``tabulated``   piecewise-linear through (t_0, v_0, t_1, v_1, ...)

    ``declared_range`` is a closed interval that the function must respect on
    ``span``; it is checked on 10^4 equispaced points at construction. When
    omitted it is set to the observed [min, max].
    """

    form: str
    coefficients: tuple[float, ...]
    declared_range: tuple[float, float] | None = None
    span: tuple[float, float] = (0.0, 1.0)
    _knots: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"unknown form {self.form!r}; expected one of {FORMS}")
        coeffs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        need = {"constant": 1, "affine": 2, "logistic": 4, "sinusoidal": 2}
        if self.form in need and len(coeffs) != need[self.form]:
            raise ValueError(f"{self.form} needs {need[self.form]} coefficients, got {len(coeffs)}")
        if self.form == "tabulated":
            if len(coeffs) < 4 or len(coeffs) % 2:
                raise ValueError("tabulated needs pairs t,v (at least two knots)")
            ts = np.array(coeffs[0::2])
            if np.any(np.diff(ts) <= 0):
                raise ValueError("tabulated knots must be strictly increasing in t")
            object.__setattr__(self, "_knots", (ts, np.array(coeffs[1::2])))
        grid = np.linspace(self.span[0], self.span[1], _N_CHECK)
        vals = self(grid)
        if not np.all(np.isfinite(vals)):
            raise ValueError("function is not finite on its span")
        if self.declared_range is None:
            object.__setattr__(self, "declared_range", (float(vals.min()), float(vals.max())))
        else:
            lo, hi = (float(x) for x in self.declared_range)
            object.__setattr__(self, "declared_range", (lo, hi))
            if vals.min() < lo or vals.max() > hi:
                raise ValueError(f"{self.describe()} leaves declared range [{lo}, {hi}] "
                                 f"(observed [{vals.min():.6g}, {vals.max():.6g}])")

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        c = self.coefficients
        if self.form == "constant":
            return np.full_like(t, c[0])
        if self.form == "affine":
            return c[0] + c[1] * t
        if self.form == "logistic":
            with np.errstate(over="ignore"):
                return c[0] + c[1] / (1.0 + np.exp(c[2] + c[3] * t))
        if self.form == "sinusoidal":
            return c[0] + c[1] * np.sin(2.0 * np.pi * t)
        ts, vs = self._knots
        return np.interp(t, ts, vs)

    def require_within(self, lo: float, hi: float, what: str = "function") -> None:
        """Reject unless ``declared_range`` lies inside the open interval (lo, hi)."""
        a, b = self.declared_range
        if not (lo < a and b < hi):
            raise ValueError(f"{what} range [{a:.6g}, {b:.6g}] is not inside ({lo}, {hi})")

    def describe(self) -> str:
        return f"{self.form}:" + ",".join(repr(c) for c in self.coefficients)

    def to_dict(self) -> dict:
        return {"form": self.form, "coefficients": list(self.coefficients),
                "declared_range": list(self.declared_range), "span": list(self.span)}


def parse_index_function(text: str, span=(0.0, 1.0), declared_range=None) -> IndexFunction:
    """Parse ``form:c1,c2,...`` (a bare number means ``constant``)."""
    text = text.strip()
    if ":" not in text:
        try:
            return IndexFunction("constant", (float(text),), declared_range, tuple(span))
        except ValueError:
            raise ValueError(f"cannot parse index function {text!r}") from None
    form, _, rest = text.partition(":")
    try:
        coeffs = tuple(float(x) for x in rest.split(",") if x.strip())
    except ValueError:
        raise ValueError(f"cannot parse coefficients in {text!r}") from None
    if any(math.isnan(c) for c in coeffs):
        raise ValueError("coefficients must not be NaN")
    return IndexFunction(form.strip(), coeffs, declared_range, tuple(span))
