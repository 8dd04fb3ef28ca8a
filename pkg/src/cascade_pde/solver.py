"""Finite-difference solver for the scalar models and the interaction systems.

Method of lines on a uniform node grid. Diffusion is written in flux form,
``(a_{i+1/2}(u_{i+1} - u_i) - a_{i-1/2}(u_i - u_{i-1})) / dx^2``, with half
cells at the two boundary nodes (equivalent to mirror ghost nodes for the
no-flux condition). Multiplying by the trapezoid weights ``W`` gives a
symmetric stiffness matrix ``S`` with zero column sums under no-flux
conditions, so ``sum(W u)`` is conserved exactly by the diffusion step.

Each step is Crank-Nicolson in diffusion with the reaction taken explicitly
as a predictor-corrector (Heun) pair, second order overall::

    (W - dt/2 S) u* = (W + dt/2 S) u + dt W f(t, u)
    (W - dt/2 S) u+ = (W + dt/2 S) u + dt W (f(t, u) + f(t + dt, u*)) / 2

A step that produces non-finite values, loses positivity, or overshoots the
logistic bound is retried with backward Euler diffusion, then as two half
steps, recursively.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .cascade import DensityField
from .errors import DivergenceError, ValidationError
from .models import GridSpec, ScalarModel, SystemModel, h_profile
from .spline import InitialDensity

__all__ = [
    "SolutionField",
    "DiffusionOperator",
    "solve_scalar",
    "solve_system",
    "sample_at_distances",
    "front_positions",
    "boundary_flux",
    "total_mass",
]

MAX_HALVINGS = 12
_TIME_TOL = 1e-9


class DiffusionOperator:
    """Conservative 1-D diffusion operator on nodes ``x`` with flux coefficient ``a``.

    Parameters
    ----------
    x : array
        Uniform nodes, ``x[0] = l`` and ``x[-1] = L``.
    a : callable
        Diffusivity ``a(x)``, evaluated at half nodes and at ``L``.
    robin_alpha : float or None
        ``None`` for no flux at ``L``; otherwise ``u_x + robin_alpha u = 0`` there.
    """

    def __init__(self, x, a: Callable, robin_alpha=None):
        self.x = np.asarray(x, dtype=float)
        n = self.x.size
        dx = self.x[1] - self.x[0]
        self.dx = dx
        self.a_half = np.asarray(a(0.5 * (self.x[1:] + self.x[:-1])), dtype=float) * np.ones(n - 1)
        self.weights = np.full(n, dx)
        self.weights[0] = self.weights[-1] = 0.5 * dx
        coupling = self.a_half / dx
        diag = np.zeros(n)
        diag[:-1] -= coupling
        diag[1:] -= coupling
        self.robin_alpha = robin_alpha
        self.a_L = float(np.asarray(a(self.x[-1])))
        if robin_alpha is not None:
            diag[-1] -= self.a_L * robin_alpha
        # S is symmetric: off-diagonal entries are the half-node couplings.
        self.s_diag = diag
        self.s_off = coupling
        self._chol = {}

    def apply(self, u):
        """``S u`` (flux divergence times cell width)."""
        out = self.s_diag * u
        out[:-1] += self.s_off * u[1:]
        out[1:] += self.s_off * u[:-1]
        return out

    def rate(self, u):
        """Semi-discrete diffusion term ``W^{-1} S u``."""
        return self.apply(u) / self.weights

    def _factor(self, h):
        """Cholesky factor of ``W - h S`` (``h = dt/2`` for CN, ``dt`` for backward Euler)."""
        key = float(h)
        fac = self._chol.get(key)
        if fac is None:
            ab = np.zeros((2, self.x.size))
            ab[0, 1:] = -h * self.s_off
            ab[1] = self.weights - h * self.s_diag
            fac = cholesky_banded(ab, lower=False)
            self._chol[key] = fac
        return fac

    def cn_step(self, u, dt, forcing=None):
        rhs = self.weights * u + 0.5 * dt * self.apply(u)
        if forcing is not None:
            rhs = rhs + dt * self.weights * forcing
        return cho_solve_banded((self._factor(0.5 * dt), False), rhs, check_finite=False)

    def be_step(self, u, dt, forcing=None):
        """Backward Euler: L-stable and monotone, used when a CN step is rejected."""
        rhs = self.weights * u
        if forcing is not None:
            rhs = rhs + dt * self.weights * forcing
        return cho_solve_banded((self._factor(dt), False), rhs, check_finite=False)


@dataclass(frozen=True)
class SolutionField:
    """Solver output: ``components[k][n, i]`` is component ``k`` at ``t[n]``, ``x[i]``."""

    x: np.ndarray
    t: np.ndarray
    components: tuple[np.ndarray, ...]
    names: tuple[str, ...] = ("I",)
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def u(self):
        return self.components[0]

    def component(self, name):
        return self.components[self.names.index(name)]

    def at_time(self, t, component=0):
        idx = int(np.argmin(np.abs(self.t - t)))
        if abs(self.t[idx] - t) > _TIME_TOL:
            raise ValidationError(f"time {t} is not stored")
        return self.components[component][idx]


def _initial_values(phi, x, domain=None):
    if isinstance(phi, InitialDensity):
        tol = 1e-9 * max(1.0, x[-1] - x[0])
        if abs(phi.l - x[0]) > tol or abs(phi.L - x[-1]) > tol:
            raise ValidationError(
                f"initial density domain [{phi.l}, {phi.L}] does not match grid "
                f"[{x[0]}, {x[-1]}]"
            )
        vals = phi(x)
    elif callable(phi):
        vals = phi(x)
    else:
        vals = phi
    vals = np.array(vals, dtype=float) * np.ones_like(x)
    if vals.shape != x.shape:
        raise ValidationError(f"initial data has shape {vals.shape}, grid has {x.shape}")
    if not np.all(np.isfinite(vals)):
        raise ValidationError("initial data must be finite")
    return vals


def _march(ops, u0s, rhs, grid: GridSpec, upper_bound=None, names=("I",)):
    """Shared time loop for scalar and system problems."""
    t0, dt_nom = grid.t0, grid.dt
    n_steps = grid.n_steps
    us = [u.copy() for u in u0s]
    times = [t0]
    stored = [[u.copy()] for u in us]
    halvings = 0
    fallbacks = 0

    def step(us, t, dt, implicit=False):
        f0 = rhs(t, us)
        pred = [op.be_step(u, dt, f) if implicit else op.cn_step(u, dt, f)
                for op, u, f in zip(ops, us, f0)]
        f1 = rhs(t + dt, pred)
        if implicit:
            return [op.be_step(u, dt, 0.5 * (a + b)) for op, u, a, b in zip(ops, us, f0, f1)]
        return [op.cn_step(u, dt, 0.5 * (a + b)) for op, u, a, b in zip(ops, us, f0, f1)]

    def acceptable(new, old):
        for u_new, u_old in zip(new, old):
            if not np.all(np.isfinite(u_new)):
                return False
            scale = max(1.0, float(np.max(np.abs(u_old))))
            if np.min(u_new) < -1e-12 * scale and np.min(u_old) >= -1e-12 * scale:
                return False
            if upper_bound is not None:
                cap = max(upper_bound, float(np.max(u_old)))
                if np.max(u_new) > cap + 1e-12 * max(1.0, cap):
                    return False
        return True

    def advance(us, t, dt, depth):
        nonlocal halvings, fallbacks
        new = step(us, t, dt)
        if acceptable(new, us):
            return new
        # CN rings on stiff or non-smooth modes; backward Euler damps them
        new = step(us, t, dt, implicit=True)
        if acceptable(new, us):
            fallbacks += 1
            return new
        if depth >= MAX_HALVINGS:
            bad = any(not np.all(np.isfinite(u)) for u in new)
            reason = "non-finite values" if bad else "positivity/bound violation"
            raise DivergenceError(
                f"step rejected at t={t:.6g} after {depth} halvings (dt={dt:.3g}): {reason}",
                t=t, dt=dt,
            )
        halvings += 1
        mid = advance(us, t, 0.5 * dt, depth + 1)
        return advance(mid, t + 0.5 * dt, 0.5 * dt, depth + 1)

    t = t0
    for n in range(1, n_steps + 1):
        t_next = min(t0 + n * dt_nom, grid.t_end)
        us = advance(us, t, t_next - t, 0)
        t = t_next
        if n % grid.save_every == 0 or n == n_steps:
            times.append(t)
            for k, u in enumerate(us):
                stored[k].append(u.copy())

    comps = tuple(np.array(s) for s in stored)
    for c in comps:
        c.setflags(write=False)
    return SolutionField(
        x=ops[0].x.copy(), t=np.array(times), components=comps, names=tuple(names),
        meta={"halvings": halvings, "implicit_fallbacks": fallbacks},
    )


def solve_scalar(model: ScalarModel, grid: GridSpec, phi) -> SolutionField:
    """Integrate one of the scalar models from ``grid.t0`` to ``grid.t_end``.

    ``phi`` is an :class:`InitialDensity`, any callable of ``x``, or an array
    of nodal values.
    """
    x = grid.x
    u0 = _initial_values(phi, x)
    robin = model.robin_alpha if model.bc == "robin" else None
    op = DiffusionOperator(x, model.diffusivity, robin_alpha=robin)
    hx = h_profile(model.heterogeneity, x)

    def rhs(t, us):
        return [model.reaction(t, x, us[0], hx)]

    bound = None
    if model.family == "logistic":
        bound = model.K
    field_ = _march([op], [u0], rhs, grid, upper_bound=bound)
    cap = model.K * max(1.0, float(np.max(hx))) if model.family != "linear" else np.inf
    field_.meta["left_bounds"] = bool(
        np.min(field_.u) < -1e-8 or np.max(field_.u) > max(cap, float(np.max(u0))) + 1e-8
    )
    field_.meta["model"] = model.to_dict()
    return field_


def solve_system(model: SystemModel, grid: GridSpec, inits: Sequence) -> SolutionField:
    """Integrate a multi-component system; ``inits`` holds one initial profile per component."""
    if len(inits) != model.n_components:
        raise ValidationError(
            f"{model.family} needs {model.n_components} initial profiles, got {len(inits)}"
        )
    x = grid.x
    u0s = [_initial_values(phi, x) for phi in inits]
    if any(np.min(u) < 0 for u in u0s):
        raise ValidationError("initial data must be non-negative")
    robin = model.robin_alpha if model.bc == "robin" else None
    ops = [DiffusionOperator(x, (lambda y, d=d: d * np.ones_like(y)), robin_alpha=robin)
           for d in model.diffusivities]

    def rhs(t, us):
        return model.reaction(t, us)

    return _march(ops, u0s, rhs, grid, names=model.component_names)


def total_mass(field_: SolutionField, component=0):
    """Trapezoid-rule ``integral u dx`` at every stored time."""
    u = field_.components[component]
    dx = field_.x[1] - field_.x[0]
    w = np.full(field_.x.size, dx)
    w[0] = w[-1] = 0.5 * dx
    return u @ w


def boundary_flux(model: ScalarModel, field_: SolutionField, side="right"):
    """Outward diffusive flux ``-a u_x`` (right) or ``a u_x`` (left) per stored time.

    Uses the boundary condition itself, so it is exactly zero for no flux.
    """
    if side == "left" or model.bc == "neumann":
        return np.zeros(field_.t.size)
    a_L = float(model.diffusivity(field_.x[-1]))
    return a_L * model.robin_alpha * field_.u[:, -1]


def front_positions(field_: SolutionField, level, component=0):
    """Rightmost ``x`` where the profile crosses ``level``, per stored time.

    Linear interpolation between nodes; ``nan`` where the profile never
    reaches ``level``.
    """
    u = field_.components[component]
    x = field_.x
    out = np.full(u.shape[0], np.nan)
    for n, row in enumerate(u):
        above = np.nonzero(row >= level)[0]
        if above.size == 0:
            continue
        i = above[-1]
        if i == x.size - 1:
            out[n] = x[-1]
            continue
        u0, u1 = row[i], row[i + 1]
        out[n] = x[i] + (u0 - level) / (u0 - u1) * (x[i + 1] - x[i])
    return out


def sample_at_distances(
    field_: SolutionField,
    distances: Sequence[int],
    times: Sequence[float],
    component=0,
    mode="count",
) -> DensityField:
    """Read the solution at integer distances and observation times.

    Grid-aligned points are returned exactly. Off-node distances are linearly
    interpolated in ``x`` (with a warning) and times between stored steps in
    ``t``; either sets ``meta["interpolated"]``.
    """
    u = field_.components[component]
    x, tt = field_.x, field_.t
    dxg = x[1] - x[0]
    interpolated = False
    for t in times:
        if t < tt[0] - _TIME_TOL or t > tt[-1] + _TIME_TOL:
            raise ValidationError(f"time {t} outside solved range [{tt[0]}, {tt[-1]}]")
    cols = []
    for t in times:
        j = int(np.searchsorted(tt, t - _TIME_TOL))
        if j < tt.size and abs(tt[j] - t) <= _TIME_TOL:
            cols.append(u[j])
        else:
            interpolated = True
            w = (t - tt[j - 1]) / (tt[j] - tt[j - 1])
            cols.append((1 - w) * u[j - 1] + w * u[j])
    snap = np.array(cols)  # (n_times, n_x)
    rows = []
    for xv in distances:
        if xv < x[0] - 1e-9 * dxg or xv > x[-1] + 1e-9 * dxg:
            raise ValidationError(f"distance {xv} outside grid [{x[0]}, {x[-1]}]")
        pos = (xv - x[0]) / dxg
        i = int(round(pos))
        if abs(pos - i) <= 1e-9:
            rows.append(snap[:, i])
        else:
            interpolated = True
            warnings.warn(f"distance {xv} is not a grid node; interpolating", stacklevel=2)
            rows.append(np.array([np.interp(xv, x, s) for s in snap]))
    return DensityField(
        distances=tuple(int(d) for d in distances),
        times=tuple(float(t) for t in times),
        values=np.array(rows),
        mode=mode,
        group_sizes=None,
        meta={"interpolated": interpolated},
    )
