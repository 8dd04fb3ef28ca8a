"""One-phase free-boundary (Stefan) spreading model.

    u_t = d u_xx + r(t) u (1 - u/K),   0 < x < h(t)
    u_x(t, 0) = 0,  u(t, h(t)) = 0,  h'(t) = -mu u_x(t, h(t))

The moving domain is mapped onto ``[0, 1]`` with ``xi = x / h(t)``; the
transformed equation picks up an advection term::

    v_t = (d / h^2) v_xixi + xi (h'/h) v_xi + r(t) v (1 - v/K)

Diffusion and advection are stepped with Crank-Nicolson (coefficients frozen
at the half step) and the reaction with Heun's method. The front position is
advanced implicitly (backward Euler) because the Stefan condition couples it
stiffly to the boundary gradient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from .errors import DivergenceError, EstimationError, NumericalConsistencyError, ValidationError
from .models import DecaySpec, GridSpec, r_decay

__all__ = [
    "StefanModel",
    "FrontTrajectory",
    "RegimeSettings",
    "solve_stefan",
    "front_speed",
    "classify_regime",
    "vanishing_threshold",
    "critical_length",
    "cosine_profile",
]


def cosine_profile(h0):
    """``cos(pi x / (2 h0))``: a member of the admissible class on ``[0, h0]``."""
    return lambda x: np.cos(0.5 * np.pi * np.asarray(x, dtype=float) / h0)


@dataclass(frozen=True)
class StefanModel:
    d: float
    K: float
    decay: DecaySpec
    mu: float
    h0: float
    u0: Callable
    scale: float = 1.0

    def __post_init__(self):
        for name in ("d", "K", "mu", "h0"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")
        if not self.decay.limit > 0:
            raise ValidationError("the growth rate must tend to a positive limit")
        if self.scale < 0:
            raise ValidationError("initial scale must be >= 0")

    def initial_values(self, xi):
        """Scaled initial data on the reference grid, checked for admissibility."""
        x = np.asarray(xi) * self.h0
        vals = self.scale * np.asarray(self.u0(x), dtype=float) * np.ones_like(x)
        peak = float(np.max(np.abs(vals)))
        if peak == 0 and self.scale > 0:
            raise ValidationError("initial data is identically zero")
        tol = 1e-8 * max(peak, 1e-300)
        if abs(vals[-1]) > tol:
            raise ValidationError("initial data must vanish at the front, u0(h0) = 0")
        if np.any(vals[:-1] <= 0) and self.scale > 0:
            raise ValidationError("initial data must be positive on [0, h0)")
        eps = 1e-6 * self.h0
        slope = (self.scale * float(self.u0(np.array([eps]))[0]) - vals[0]) / eps
        if abs(slope) > 1e-3 * max(peak, 1e-300) / self.h0 + 1e-12:
            raise ValidationError("initial data must be flat at x = 0, u0'(0) = 0")
        vals[-1] = 0.0
        return vals


@dataclass(frozen=True)
class RegimeSettings:
    """Thresholds for telling vanishing from spreading runs."""

    vanish_tol: float = 1e-6
    horizon_factor: float = 5.0
    stop_early: bool = True


@dataclass
class FrontTrajectory:
    times: np.ndarray
    h_values: np.ndarray
    xi: np.ndarray
    profile_times: np.ndarray
    profiles: np.ndarray
    regime: str = "undetermined"
    meta: dict = field(default_factory=dict)

    def physical_profile(self, k=-1):
        """``(x, u)`` of the ``k``-th stored profile on the physical domain."""
        t = self.profile_times[k]
        h = float(np.interp(t, self.times, self.h_values))
        return self.xi * h, self.profiles[k]


def critical_length(d, r_inf):
    """Half-width ``(pi/2) sqrt(d / r_inf)`` separating vanishing from spreading."""
    return 0.5 * math.pi * math.sqrt(d / r_inf)


def _front_gradient(v, dxi):
    # one-sided second-order difference at xi = 1 with v[-1] = 0
    return (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * dxi)


def solve_stefan(
    model: StefanModel,
    grid: GridSpec,
    regime: RegimeSettings | None = None,
    retreat_tol=1e-8,
) -> FrontTrajectory:
    """Advance the free-boundary problem on the reference grid ``xi in [0, 1]``.

    ``grid.nx`` is the number of reference intervals; ``grid.l``/``grid.L``
    are ignored. With ``regime`` given the run is classified (and stopped
    early when ``regime.stop_early``) as ``"vanishing"`` once
    ``max u < vanish_tol`` or ``"spreading"`` once
    ``h > horizon_factor * h0``.
    """
    n = grid.nx
    xi = np.linspace(0.0, 1.0, n + 1)
    dxi = 1.0 / n
    v = model.initial_values(xi)
    h = float(model.h0)
    d, K, mu = model.d, model.K, model.mu
    horizon = regime.horizon_factor * model.h0 if regime else math.inf
    inner = xi[:-1]

    def reaction(t, vv):
        return r_decay(model.decay, t) * vv * (1.0 - vv / K)

    def operator(hh, hp):
        """Banded form of the spatial operator on the unknowns v_0 .. v_{n-1}."""
        D = d / (hh * hh) / (dxi * dxi)
        c = inner * (hp / hh) / (2.0 * dxi)
        lower = D - c  # coefficient of v_{i-1}
        main = np.full(n, -2.0 * D)
        upper = D + c  # coefficient of v_{i+1}
        upper[0] = 2.0 * D  # mirror node at xi = 0 (c[0] = 0)
        return lower, main, upper

    def apply(op, vv):
        lower, main, upper = op
        out = main * vv
        out[:-1] += upper[:-1] * vv[1:]
        out[1:] += lower[1:] * vv[:-1]
        return out  # v_n = 0 contributes nothing

    def solve(op, theta, dt, rhs):
        lower, main, upper = op
        ab = np.zeros((3, n))
        ab[0, 1:] = -theta * dt * upper[:-1]
        ab[1] = 1.0 - theta * dt * main
        ab[2, :-1] = -theta * dt * lower[1:]
        return solve_banded((1, 1), ab, rhs)

    def transport(vv, hh, h_new, t, dt, theta):
        s = (h_new - hh) / dt
        op = operator(0.5 * (hh + h_new), s)
        base = vv + (1.0 - theta) * dt * apply(op, vv)
        f0 = reaction(t, vv)
        pred = solve(op, theta, dt, base + dt * f0)
        f1 = reaction(t + dt, pred)
        return solve(op, theta, dt, base + 0.5 * dt * (f0 + f1))

    def step(vv, hh, t, dt, implicit):
        # The front ODE is stiffly coupled to the boundary gradient, so the new
        # front position solves h+ = h + dt * (-mu v_xi(1) / h+) by secant iteration.
        theta = 1.0 if implicit else 0.5

        def residual(h_new):
            new = transport(vv, hh, h_new, t, dt, theta)
            return h_new - hh + dt * mu * _front_gradient(np.append(new, 0.0), dxi) / h_new, new

        s0 = -mu * _front_gradient(np.append(vv, 0.0), dxi) / hh
        h_a, h_b = hh, hh + dt * max(s0, 0.0) + 1e-6 * hh
        r_a, _ = residual(h_a)
        r_b, new = residual(h_b)
        for _ in range(50):
            if r_b == r_a or not np.isfinite(r_b):
                break
            h_c = h_b - r_b * (h_b - h_a) / (r_b - r_a)
            h_a, r_a = h_b, r_b
            h_b = h_c
            r_b, new = residual(h_b)
            if abs(r_b) <= 1e-13 * abs(h_b) and h_b > 0:
                return new, h_b, (h_b - hh) / dt
        return bracketed(residual, hh, dt)

    def bracketed(residual, hh, dt):
        # the residual is negative at h+ = h for an advancing front and grows
        # like h+ for large h+, so it can always be bracketed from h upward
        g_lo = residual(hh)[0]
        if not np.isfinite(g_lo) or g_lo > 0:
            return None
        hi, width = hh, 1e-3 * hh + dt
        for _ in range(60):
            hi = hh + width
            g_hi = residual(hi)[0]
            if np.isfinite(g_hi) and g_hi >= 0:
                break
            width *= 2.0
        else:
            return None
        h_star = brentq(lambda z: residual(z)[0], hh, hi, xtol=1e-14 * hi, rtol=1e-15)
        return residual(h_star)[1], h_star, (h_star - hh) / dt

    def acceptable(new, old):
        if not np.all(np.isfinite(new)):
            return False
        scale = max(1e-300, float(np.max(np.abs(old))))
        return np.min(new) >= -1e-9 * scale

    def advance(vv, hh, t, dt, depth=0):
        # a retreating front from a CN step is stiff-mode ringing at the
        # boundary; the backward Euler retry damps it
        out = step(vv, hh, t, dt, False)
        if out is not None and acceptable(out[0], vv) and out[2] >= -retreat_tol:
            return out
        out = step(vv, hh, t, dt, True)
        if out is not None and acceptable(out[0], vv):
            return out
        if depth >= 12:
            raise DivergenceError(f"free-boundary step rejected at t={t:.6g}", t=t, dt=dt)
        v1, h1, s1 = advance(vv, hh, t, 0.5 * dt, depth + 1)
        v2, h2, s2 = advance(v1, h1, t + 0.5 * dt, 0.5 * dt, depth + 1)
        return v2, h2, min(s1, s2)

    vv = v[:-1].copy()
    times, hs = [grid.t0], [h]
    prof_t, profs = [grid.t0], [v.copy()]
    label = "undetermined"
    t = grid.t0
    n_steps = grid.n_steps
    for k in range(1, n_steps + 1):
        t_next = min(grid.t0 + k * grid.dt, grid.t_end)
        vv, h_new, s_min = advance(vv, h, t, t_next - t)
        if s_min < -retreat_tol or h_new < h - retreat_tol * (t_next - t):
            raise NumericalConsistencyError(
                f"front retreats at t={t:.6g} (h' = {s_min:.3g})", t=t, dt=t_next - t
            )
        h = max(h, h_new)
        t = t_next
        times.append(t)
        hs.append(h)
        done = False
        if regime is not None and label == "undetermined":
            if np.max(vv) < regime.vanish_tol:
                label = "vanishing"
            elif h > horizon:
                label = "spreading"
            done = regime.stop_early and label != "undetermined"
        if k % grid.save_every == 0 or k == n_steps or done:
            prof_t.append(t)
            profs.append(np.append(vv, 0.0))
        if done:
            break
    return FrontTrajectory(
        times=np.array(times), h_values=np.array(hs), xi=xi,
        profile_times=np.array(prof_t), profiles=np.array(profs), regime=label,
        meta={"mu_K_over_d": mu * K / d, "r_inf": model.decay.limit, "d": d},
    )


def front_speed(traj: FrontTrajectory, tail_fraction=0.5, monotone_tol=1e-12):
    """Least-squares slope of ``h(t)`` over the trailing ``tail_fraction`` of the run.

    Returns ``(k0, residual)`` with ``residual`` the RMS regression residual.
    """
    if not 0 < tail_fraction < 1:
        raise ValidationError("tail_fraction must lie in (0, 1)")
    t = np.asarray(traj.times, dtype=float)
    h = np.asarray(traj.h_values, dtype=float)
    start = t[0] + (1.0 - tail_fraction) * (t[-1] - t[0])
    sel = t >= start
    if sel.sum() < 10:
        raise EstimationError("tail window holds fewer than 10 samples")
    tt, hh = t[sel], h[sel]
    if np.any(np.diff(hh) < -monotone_tol * max(1.0, float(np.max(np.abs(hh))))):
        raise EstimationError("front position is not monotone over the tail window")
    A = np.column_stack([tt - tt.mean(), np.ones_like(tt)])
    coef, *_ = np.linalg.lstsq(A, hh, rcond=None)
    resid = hh - A @ coef
    return float(coef[0]), float(np.sqrt(np.mean(resid**2)))


def classify_regime(model: StefanModel, grid: GridSpec, settings: RegimeSettings | None = None):
    """``"vanishing"`` or ``"spreading"`` for one run.

    Runs still undecided at ``t_end`` are labelled by comparing the final
    front with :func:`critical_length`: a front beyond it cannot vanish.
    """
    settings = settings or RegimeSettings()
    traj = solve_stefan(model, grid, regime=settings)
    if traj.regime != "undetermined":
        return traj.regime
    crit = critical_length(model.d, model.decay.limit)
    return "spreading" if traj.h_values[-1] > crit else "vanishing"


def vanishing_threshold(
    model: StefanModel, lam_lo, lam_hi, grid: GridSpec, n_bisect=20,
    settings: RegimeSettings | None = None,
):
    """Bisect on the initial amplitude ``u0 = lam * phi`` for the vanishing/spreading switch.

    Returns ``(lo, hi)`` with ``lo`` classified vanishing and ``hi`` spreading.
    """
    def label(lam):
        return classify_regime(replace(model, scale=lam), grid, settings)

    if not lam_hi > lam_lo:
        raise ValidationError("need lam_hi > lam_lo")
    lo_label, hi_label = label(lam_lo), label(lam_hi)
    if lo_label == hi_label:
        raise EstimationError(f"both ends of the range are {lo_label}; widen the range")
    if lo_label == "spreading":
        raise EstimationError("the lower amplitude spreads while the upper vanishes")
    lo, hi = float(lam_lo), float(lam_hi)
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        if label(mid) == "spreading":
            hi = mid
        else:
            lo = mid
    return lo, hi
