"""Initial density profile from discrete (distance, density) samples.

A clamped cubic spline with zero end slopes, so the profile is compatible
with no-flux boundaries. With fewer than four samples a shape-preserving
(PCHIP-style) Hermite cubic with zero end slopes is used instead.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline, PPoly

from .errors import DomainError, ValidationError

__all__ = ["InitialDensity", "build_initial_density"]


@dataclass(frozen=True)
class InitialDensity:
    """Piecewise cubic ``phi(x)`` on ``[l, L]``; call it to evaluate."""

    knots_x: np.ndarray
    knots_y: np.ndarray
    poly: PPoly
    kind: str

    @property
    def l(self):
        return float(self.knots_x[0])

    @property
    def L(self):
        return float(self.knots_x[-1])

    @property
    def domain(self):
        return self.l, self.L

    def __call__(self, x, clamp=True):
        """Evaluate at ``x`` (scalar or array).

        Values are clipped at zero unless ``clamp=False``; spline undershoot
        between knots would otherwise break ``phi >= 0``.
        """
        xs = np.asarray(x, dtype=float)
        span = self.L - self.l
        tol = 1e-12 * max(1.0, span)
        if np.any(xs < self.l - tol) or np.any(xs > self.L + tol):
            raise DomainError(f"x outside [{self.l}, {self.L}]")
        vals = self.poly(np.clip(xs, self.l, self.L))
        if clamp:
            vals = np.maximum(vals, 0.0)
        return vals if vals.ndim else float(vals)

    def derivative(self, order=1):
        return self.poly.derivative(order)


def _pchip_slopes(x, y):
    h = np.diff(x)
    delta = np.diff(y) / h
    m = np.zeros_like(y)
    for k in range(1, len(x) - 1):
        if delta[k - 1] * delta[k] > 0:
            w1 = 2 * h[k] + h[k - 1]
            w2 = h[k] + 2 * h[k - 1]
            m[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k])
    return m


def build_initial_density(samples: Sequence[tuple[float, float]]) -> InitialDensity:
    """Interpolate ``samples`` with flat ends.

    Raises
    ------
    ValidationError
        Fewer than two samples, non-increasing or duplicate ``x``, negative
        values, or values that are all zero.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ValidationError("need at least two (x, value) samples")
    x, y = pts[:, 0], pts[:, 1]
    if not np.all(np.isfinite(pts)):
        raise ValidationError("samples must be finite")
    if np.any(np.diff(x) == 0):
        raise ValidationError("duplicate x in samples")
    if np.any(np.diff(x) < 0):
        raise ValidationError("sample x must be strictly increasing")
    if np.any(y < 0):
        raise ValidationError("sample values must be non-negative")
    if not np.any(y > 0):
        raise ValidationError("initial density must not be identically zero")

    if len(x) >= 4:
        spline = CubicSpline(x, y, bc_type="clamped")
        kind = "clamped"
    else:
        spline = CubicHermiteSpline(x, y, _pchip_slopes(x, y))
        kind = "hermite"
    poly = PPoly(spline.c, spline.x, extrapolate=False)
    return InitialDensity(knots_x=x.copy(), knots_y=y.copy(), poly=poly, kind=kind)
