"""Minimum wave speeds and the principal eigenvalue of the Robin problem.

For ``u_t = D u_xx + f(u)`` linearised at the invaded state, the minimum
speed is ``c* = inf_{lam > 0} Phi(lam)`` with
``Phi(lam) = Psi(diag(d_i lam^2) + f'(0)) / lam``. ``Psi`` is the principal
(largest real) eigenvalue; for the non-negative matrices that arise in the
cooperative case it coincides with the spectral radius.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solveh_banded

from .errors import (
    DomainError, NoMinimumError, NoWaveError, NumericalConsistencyError, ValidationError,
)
from .models import DecaySpec, GridSpec, HeterogeneitySpec, ScalarModel, h_profile

__all__ = [
    "Linearization",
    "SpeedResult",
    "EigenResult",
    "spectral_radius",
    "principal_root",
    "phi",
    "min_speed_numeric",
    "min_speed_cooperative",
    "min_speed_competition",
    "min_speed_sir",
    "competition_linearization",
    "sir_linearization",
    "principal_eigenvalue",
    "persistence_threshold",
    "persistence_check",
]

LAMBDA_RANGE = (1e-6, 1e6)
_INV_PHI = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class Linearization:
    diffusion_diag: tuple[float, ...]
    jacobian0: np.ndarray

    def __post_init__(self):
        jac = np.atleast_2d(np.asarray(self.jacobian0, dtype=float))
        object.__setattr__(self, "jacobian0", jac)
        object.__setattr__(self, "diffusion_diag", tuple(float(d) for d in self.diffusion_diag))
        n = len(self.diffusion_diag)
        if jac.shape != (n, n):
            raise ValidationError(f"jacobian shape {jac.shape} does not match {n} diffusivities")
        if any(not d > 0 for d in self.diffusion_diag):
            raise ValidationError("diffusivities must be > 0")

    @classmethod
    def scalar(cls, d, growth):
        return cls((d,), np.array([[growth]]))

    @property
    def is_cooperative(self):
        off = self.jacobian0 - np.diag(np.diag(self.jacobian0))
        return bool(np.all(off >= 0))

    def matrix(self, lam):
        return np.diag(np.asarray(self.diffusion_diag) * lam * lam) + self.jacobian0


@dataclass(frozen=True)
class SpeedResult:
    c_star: float
    lam_star: float
    method: str
    profile: np.ndarray = field(repr=False, compare=False)
    extra: dict = field(default_factory=dict, compare=False)


def _eig2(m):
    a, b, c, d = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    half_tr = 0.5 * (a + d)
    disc = (0.5 * (a - d)) ** 2 + b * c
    if disc >= 0:
        s = math.sqrt(disc)
        return [complex(half_tr + s), complex(half_tr - s)]
    s = math.sqrt(-disc)
    return [complex(half_tr, s), complex(half_tr, -s)]


def _eigenvalues(matrix):
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise ValidationError("matrix must be square")
    n = m.shape[0]
    if n > 4:
        raise ValidationError("only matrices up to 4x4 are supported")
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix must be finite")
    if n == 1:
        return [complex(m[0, 0])]
    if n == 2:
        return _eig2(m)
    return list(np.linalg.eigvals(m))


def spectral_radius(matrix) -> float:
    """Largest eigenvalue modulus of a matrix of size at most 4."""
    return max(abs(z) for z in _eigenvalues(matrix))


def principal_root(matrix) -> float:
    """Largest real part among the eigenvalues (the Perron root of a Metzler matrix)."""
    return max(z.real for z in _eigenvalues(matrix))


def phi(lin: Linearization, lam) -> float:
    if not lam > 0:
        raise DomainError("Phi is defined for lambda > 0")
    return principal_root(lin.matrix(lam)) / lam


def _profile(lin, lam_star, n=81):
    lams = lam_star * np.logspace(-1, 1, n)
    return np.column_stack([lams, [phi(lin, v) for v in lams]])


def min_speed_numeric(lin: Linearization, allow_noncooperative=False, rtol=1e-10) -> SpeedResult:
    """Minimise ``Phi`` over ``log lambda`` by bracketing then golden section.

    Non-cooperative linearisations (negative off-diagonal entries) are
    refused unless ``allow_noncooperative`` is set; the SIR linearisation is
    upper triangular and is the intended use of that flag.
    """
    if not allow_noncooperative and not lin.is_cooperative:
        raise ValidationError("jacobian has negative off-diagonal entries (not cooperative)")
    lo, hi = math.log(LAMBDA_RANGE[0]), math.log(LAMBDA_RANGE[1])
    grid = np.linspace(lo, hi, 281)
    vals = np.array([phi(lin, math.exp(s)) for s in grid])
    i = int(np.argmin(vals))
    if i == 0 or i == grid.size - 1:
        raise NoMinimumError(
            f"Phi has no interior minimum on lambda in {LAMBDA_RANGE} "
            f"(smallest value at the {'lower' if i == 0 else 'upper'} end)"
        )
    a, b = grid[i - 1], grid[i + 1]

    def g(s):
        return phi(lin, math.exp(s))

    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    gc, gd = g(c), g(d)
    while (b - a) > rtol:
        if gc < gd:
            b, d, gd = d, c, gc
            c = b - _INV_PHI * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + _INV_PHI * (b - a)
            gd = g(d)
    s_star = 0.5 * (a + b)
    lam_star = math.exp(s_star)
    c_star = g(s_star)
    if not c_star > 0:
        raise NoMinimumError(f"minimum of Phi is not positive ({c_star})")
    return SpeedResult(c_star, lam_star, "numeric", _profile(lin, lam_star))


def _closed(lin, c_star, lam_star, **extra):
    return SpeedResult(c_star, lam_star, "closed-form", _profile(lin, lam_star), extra)


def min_speed_cooperative(d1, r1, d2, r2, alpha1, alpha2, k1, k2) -> SpeedResult:
    """Speed of the two-source cooperative system spreading from ``(0, 0)``.

    The closed form covers the ordered cases (one source both more popular
    and faster growing); otherwise ``Phi`` is minimised numerically.
    """
    denom = r1 * r2 - alpha1 * alpha2 * k1 * k2
    if not denom > 0:
        raise ValidationError(
            "no positive coexistence state: need r1*r2 - alpha1*alpha2*k1*k2 > 0 "
            f"(got {denom:.6g}); e1 = k1*r2*(alpha1*k2 + r1)/denom, "
            "e2 = k2*r1*(alpha2*k1 + r2)/denom"
        )
    e1 = k1 * r2 * (alpha1 * k2 + r1) / denom
    e2 = k2 * r1 * (alpha2 * k1 + r2) / denom
    lin = Linearization((d1, d2), np.diag([r1, r2]))
    if d1 >= d2 and r1 >= r2:
        return _closed(lin, 2 * math.sqrt(d1 * r1), math.sqrt(r1 / d1), equilibrium=(e1, e2))
    if d2 >= d1 and r2 >= r1:
        return _closed(lin, 2 * math.sqrt(d2 * r2), math.sqrt(r2 / d2), equilibrium=(e1, e2))
    res = min_speed_numeric(lin)
    return SpeedResult(res.c_star, res.lam_star, "numeric", res.profile, {"equilibrium": (e1, e2)})


def competition_linearization(d1, r1, alpha1, k2, d2, r2, alpha2):
    """Jacobian at ``(0, 0)`` after ``v1 = u1, v2 = k2 - u2``."""
    return Linearization((d1, d2), np.array([[r1 - alpha1 * k2, 0.0], [alpha2 * k2, -r2]]))


def min_speed_competition(d1, r1, alpha1, k2, d2=None, r2=None, alpha2=None) -> SpeedResult:
    """Invasion speed of the winning information ``u1``: ``2 sqrt(d1 (r1 - alpha1 k2))``."""
    growth = r1 - alpha1 * k2
    if not growth > 0:
        raise NoWaveError(f"u1 cannot invade: r1 - alpha1*k2 = {growth:.6g} <= 0")
    if d2 is not None and d2 > d1:
        raise ValidationError("closed form assumes d1 >= d2")
    lin = competition_linearization(
        d1, r1, alpha1, k2, d1 if d2 is None else d2, 0.0 if r2 is None else r2,
        0.0 if alpha2 is None else alpha2,
    )
    return _closed(lin, 2 * math.sqrt(d1 * growth), math.sqrt(growth / d1))


def sir_linearization(d2, beta, gamma, d1=None):
    """Jacobian of the ``(S, I)`` system at ``(S_-inf, 0)``."""
    d1 = d2 if d1 is None else d1
    return Linearization((d1, d2), np.array([[0.0, -beta], [0.0, beta - gamma]]))


def min_speed_sir(d2, beta, gamma, d1=None) -> SpeedResult:
    """Cut-off wave speed ``2 sqrt(d2 (beta - gamma))`` of the diffusive SIR model."""
    if not beta > gamma:
        raise NoWaveError(
            f"R0 = beta/gamma = {beta / gamma if gamma else math.inf:.6g} <= 1: "
            "no non-trivial travelling wave"
        )
    if d1 is not None and d1 > d2:
        raise ValidationError("closed form assumes d2 >= d1")
    lin = sir_linearization(d2, beta, gamma, d1)
    growth = beta - gamma
    return _closed(lin, 2 * math.sqrt(d2 * growth), math.sqrt(growth / d2), R0=beta / gamma)


@dataclass(frozen=True)
class EigenResult:
    mu: float
    x: np.ndarray
    eigenfunction: np.ndarray
    iterations: int


def _stiffness(x, a_func, robin_alpha):
    dx = x[1] - x[0]
    xh = 0.5 * (x[1:] + x[:-1])
    coupling = np.asarray(a_func(xh), dtype=float) * np.ones(x.size - 1) / dx
    diag = np.zeros(x.size)
    diag[:-1] += coupling
    diag[1:] += coupling
    diag[-1] += float(a_func(x[-1])) * robin_alpha
    w = np.full(x.size, dx)
    w[0] = w[-1] = 0.5 * dx
    return diag, -coupling, w


def principal_eigenvalue(
    d, b, h_spec: HeterogeneitySpec, robin_alpha, interval, nx, tol=1e-11, max_iter=5000,
) -> EigenResult:
    """Principal eigenpair of ``-(a u')' = mu h u`` with ``u'(l) = 0``, ``u'(L) + alpha u(L) = 0``.

    ``a(x) = d exp(-b x)``. The weighted problem is discretised with the same
    flux-form stencil as the solver, symmetrised by ``M^{-1/2}`` and solved by
    shifted inverse iteration.
    """
    l, L = interval
    x = np.linspace(l, L, int(nx) + 1)
    hx = h_profile(h_spec, x)
    if np.any(hx <= 0):
        raise ValidationError("h(x) must be positive on [l, L]; sign-changing h is unsupported")
    if robin_alpha < 0:
        raise ValidationError("Robin coefficient must be >= 0")

    def a_func(y):
        return d * np.exp(-b * np.asarray(y, dtype=float))

    s_diag, s_off, w = _stiffness(x, a_func, robin_alpha)
    m = w * hx
    root_m = np.sqrt(m)
    b_diag = s_diag / m
    b_off = s_off / (root_m[:-1] * root_m[1:])
    # small negative shift on the natural eigenvalue scale keeps B - shift SPD
    shift = -1e-3 * float(np.mean(a_func(x)) / (np.mean(hx) * (L - l) ** 2))
    ab = np.zeros((2, x.size))
    ab[0, 1:] = b_off
    ab[1] = b_diag - shift

    v = np.ones(x.size) / math.sqrt(x.size)
    converged = False
    for it in range(1, max_iter + 1):
        y = solveh_banded(ab, v)
        mu_est = shift + 1.0 / float(v @ y)
        v_new = y / np.linalg.norm(y)
        if v_new.sum() < 0:
            v_new = -v_new
        converged = np.linalg.norm(v_new - v) < tol
        v = v_new
        if converged:
            break
    if not converged:
        raise NumericalConsistencyError(
            f"inverse iteration did not converge in {max_iter} iterations")
    # Rayleigh quotient of the converged vector is the sharper estimate
    bv = b_diag * v
    bv[:-1] += b_off * v[1:]
    bv[1:] += b_off * v[:-1]
    mu_est = float(v @ bv)
    u = v / root_m
    u = u / np.max(np.abs(u))
    if np.min(u) < -1e-10:
        raise NumericalConsistencyError("principal eigenfunction is not of one sign")
    return EigenResult(mu=mu_est, x=x, eigenfunction=u, iterations=it)


def persistence_threshold(mu1, r_infinity) -> float:
    """Scale ``lambda*`` above which the Robin model keeps a positive steady state."""
    if not r_infinity > 0:
        raise ValidationError("r_infinity must be > 0")
    return mu1 / r_infinity


def persistence_check(
    d, b, h_spec, robin_alpha, interval, r_infinity, lam, K=1.0,
    per_unit=40, t_end=40.0, dt=0.01, u0=0.5,
):
    """Run the Robin model at reaction scale ``lam`` from a constant start.

    Returns the sup-norm of the solution at ``t_end``.
    """
    from .solver import solve_scalar

    l, L = interval
    model = ScalarModel(
        family="variable-diffusion-logistic", d=d, b=b, K=K,
        decay=DecaySpec.constant(r_infinity), heterogeneity=h_spec,
        bc="robin", robin_alpha=robin_alpha, rate_scale=lam,
    )
    nx = max(8, int(round((L - l) * per_unit)))
    grid = GridSpec(l=l, L=L, nx=nx, t0=0.0, t_end=t_end, dt=dt, save_every=10**9)
    sol = solve_scalar(model, grid, lambda y: np.full_like(y, u0))
    return float(np.max(np.abs(sol.u[-1])))
