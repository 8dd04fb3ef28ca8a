"""Parameter calibration against observed density fields.

Fits are derivative-free: Nelder-Mead over the free parameters, with
strictly positive parameters searched in log space and a few seeded random
restarts. Every objective evaluation is a full solve of the scalar model,
sampled at the observed cells.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import minimize

from .cascade import DensityField
from .errors import CascadePDEError, FitError, ValidationError
from .models import GridSpec, ScalarModel
from .solver import sample_at_distances, solve_scalar
from .spline import InitialDensity, build_initial_density

__all__ = [
    "FreeParameter",
    "FitProblem",
    "FitResult",
    "accuracy",
    "accuracy_report",
    "fit",
    "predict",
    "synthesize",
    "initial_density_from_field",
    "fit_grid",
]


def accuracy(predicted, actual):
    """``1 - |predicted - actual| / actual``; ``nan`` where ``actual == 0``.

    Vectorised over arrays. Values can be negative for poor predictions.
    """
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        acc = 1.0 - np.abs(p - a) / a
    acc = np.where(a == 0, np.nan, acc)
    return float(acc) if acc.ndim == 0 else acc


@dataclass(frozen=True)
class FreeParameter:
    name: str
    lo: float
    hi: float
    init: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ValidationError(f"{self.name}: bounds must be finite with lo < hi")
        if not self.lo <= self.init <= self.hi:
            raise ValidationError(f"{self.name}: initial guess outside bounds")

    @property
    def log_scale(self):
        return self.lo > 0

    def to_internal(self, value):
        return math.log(value) if self.log_scale else float(value)

    def from_internal(self, z):
        return math.exp(z) if self.log_scale else float(z)

    @property
    def internal_bounds(self):
        return (self.to_internal(self.lo), self.to_internal(self.hi))


@dataclass(frozen=True)
class FitProblem:
    """What to fit.

    ``base_model`` carries the family, boundary condition and every fixed
    parameter value; each name in ``free`` overrides one of them.
    """

    base_model: ScalarModel
    observed: DensityField
    free: tuple[FreeParameter, ...] = ()
    loss: str = "rmse"
    per_unit: int = 8
    dt: float = 0.02
    seed: int = 0
    restarts: int = 3
    max_evals: int = 4000
    xatol: float = 1e-8
    fatol: float = 1e-12

    def __post_init__(self):
        if self.loss not in ("rmse", "mean-inaccuracy"):
            raise ValidationError(f"unknown loss {self.loss!r}")
        known = set(self.base_model.flat_params())
        names = [p.name for p in self.free]
        if len(set(names)) != len(names):
            raise ValidationError("a parameter is listed as free twice")
        unknown = set(names) - known
        if unknown:
            raise ValidationError(
                f"free parameters {sorted(unknown)} are not parameters of this "
                f"{self.base_model.family} model (known: {sorted(known)})"
            )
        obs = self.observed
        if len(obs.distances) < 2 or len(obs.times) < 3:
            raise ValidationError("observed field needs >= 2 distances and >= 3 times")

    @property
    def fixed(self):
        free = {p.name for p in self.free}
        return {k: v for k, v in self.base_model.flat_params().items() if k not in free}


@dataclass(frozen=True)
class FitResult:
    parameters: Mapping[str, float]
    final_loss: float
    initial_loss: float
    iterations: int
    evaluations: int
    loss_history: tuple[float, ...]
    per_cell_accuracy: np.ndarray
    per_distance_average: Mapping[int, float]
    overall_average: float
    included_cells: Mapping[int, int]
    predicted: DensityField
    model: ScalarModel = field(repr=False)


def initial_density_from_field(observed: DensityField, t0=1.0) -> InitialDensity:
    """Spline through the observed column at ``t0``."""
    if float(t0) not in observed.times:
        raise ValidationError(f"observed field has no t={t0} column to build phi from")
    col = observed.column(t0)
    return build_initial_density(list(zip(observed.distances, col)))


def fit_grid(observed: DensityField, per_unit=8, dt=0.02, t0=1.0) -> GridSpec:
    return GridSpec.aligned(
        min(observed.distances), max(observed.distances), per_unit,
        t0=t0, t_end=max(observed.times), dt=dt,
    )


def predict(model: ScalarModel, grid: GridSpec, phi, times, distances, mode="count") -> DensityField:
    """Solve ``model`` and read it off at ``distances`` x ``times``."""
    sol = solve_scalar(model, grid, phi)
    out = sample_at_distances(sol, distances, times, mode=mode)
    return out


def accuracy_report(predicted: DensityField, actual: DensityField, t0=1.0):
    """Per-cell accuracy plus per-distance and overall means.

    The ``t0`` column (the initial condition) and zero-valued actual cells
    are excluded from every average.
    """
    acc = accuracy(predicted.values, actual.values)
    acc = np.array(acc, dtype=float)
    for j, t in enumerate(actual.times):
        if abs(t - t0) < 1e-12:
            acc[:, j] = np.nan
    per_distance, counts = {}, {}
    for i, x in enumerate(actual.distances):
        row = acc[i][~np.isnan(acc[i])]
        counts[x] = int(row.size)
        if row.size:
            per_distance[x] = float(row.mean())
    included = acc[~np.isnan(acc)]
    overall = float(included.mean()) if included.size else math.nan
    return acc, per_distance, overall, counts


def _loss(kind, pred, obs):
    if kind == "rmse":
        return float(np.sqrt(np.mean((pred - obs) ** 2)))
    acc = accuracy(pred, obs)
    return float(np.nanmean(1.0 - acc))


def _threads():
    try:
        return max(1, int(os.environ.get("CASCADE_PDE_THREADS", "1")))
    except ValueError:
        return 1


def fit(problem: FitProblem, grid: GridSpec | None = None) -> FitResult:
    """Calibrate the free parameters of ``problem`` against its observed field."""
    obs = problem.observed
    phi = initial_density_from_field(obs)
    grid = grid or fit_grid(obs, problem.per_unit, problem.dt)
    free = problem.free
    distances, times = list(obs.distances), list(obs.times)
    target = obs.values

    def model_for(values):
        return problem.base_model.with_params(**dict(zip((p.name for p in free), values)))

    def evaluate(values):
        try:
            model = model_for(values)
            pred = predict(model, grid, phi, times, distances, mode=obs.mode).values
        except (CascadePDEError, ValueError, ArithmeticError):
            return math.inf
        val = _loss(problem.loss, pred, target)
        return val if math.isfinite(val) else math.inf

    init_vals = [p.init for p in free]
    initial_loss = evaluate(init_vals)
    if not math.isfinite(initial_loss):
        raise FitError("loss is not finite at the initial guess")

    history = [initial_loss]
    iterations = evaluations = 0
    best_vals, best_loss = init_vals, initial_loss

    if free:
        bounds = [p.internal_bounds for p in free]
        rng = np.random.default_rng(problem.seed)
        starts = [np.array([p.to_internal(p.init) for p in free])]
        for _ in range(max(0, problem.restarts - 1)):
            starts.append(np.array([rng.uniform(lo, hi) for lo, hi in bounds]))

        def objective(z):
            return evaluate([p.from_internal(v) for p, v in zip(free, z)])

        def run(z0):
            trace = []

            def wrapped(z):
                val = objective(z)
                trace.append(val)
                return val

            res = minimize(
                wrapped, z0, method="Nelder-Mead", bounds=bounds,
                options={"xatol": problem.xatol, "fatol": problem.fatol,
                         "maxfev": problem.max_evals,
                         "adaptive": len(free) > 2},
            )
            return res, trace

        with ThreadPoolExecutor(max_workers=_threads()) as pool:
            outcomes = list(pool.map(run, starts))
        # polish the best restart once more from its own optimum
        best_res = min((r for r, _ in outcomes), key=lambda r: r.fun)
        outcomes.append(run(best_res.x))

        finite = False
        for res, trace in outcomes:
            iterations += int(res.nit)
            evaluations += int(res.nfev)
            for val in trace:
                finite = finite or math.isfinite(val)
                if val < history[-1]:
                    history.append(val)
            if res.fun < best_loss:
                best_loss = float(res.fun)
                best_vals = [p.from_internal(v) for p, v in zip(free, res.x)]
        if not finite:
            raise FitError("every solver evaluation failed; the fit is infeasible")

    model = model_for(best_vals)
    predicted = predict(model, grid, phi, times, distances, mode=obs.mode)
    acc, per_distance, overall, counts = accuracy_report(predicted, obs, t0=grid.t0)
    acc.setflags(write=False)
    return FitResult(
        parameters=model.flat_params(),
        final_loss=float(best_loss),
        initial_loss=float(initial_loss),
        iterations=iterations,
        evaluations=evaluations,
        loss_history=tuple(history),
        per_cell_accuracy=acc,
        per_distance_average=per_distance,
        overall_average=overall,
        included_cells=counts,
        predicted=predicted,
        model=model,
    )


def synthesize(
    model: ScalarModel, grid: GridSpec, phi, noise_level=0.0, seed=0,
    distances=None, times=None, mode="count",
) -> DensityField:
    """Model output at integer distances and hourly times, with multiplicative noise.

    Each cell is multiplied by ``1 + U(-noise_level, noise_level)``; ratio-mode
    fields are then clipped to ``[0, 1]`` and count-mode fields at 0.
    """
    if noise_level < 0:
        raise ValidationError("noise_level must be >= 0")
    if distances is None:
        distances = list(range(math.ceil(grid.l), math.floor(grid.L) + 1))
    if times is None:
        times = [float(t) for t in range(math.ceil(grid.t0), math.floor(grid.t_end) + 1)]
    clean = predict(model, grid, phi, times, distances, mode=mode)
    values = np.array(clean.values)
    if noise_level > 0:
        rng = np.random.default_rng(seed)
        values = values * (1.0 + rng.uniform(-noise_level, noise_level, size=values.shape))
    values = np.clip(values, 0.0, 1.0) if mode == "ratio" else np.maximum(values, 0.0)
    return DensityField(
        distances=clean.distances, times=clean.times, values=values, mode=mode,
        meta={"noise_level": noise_level, "seed": seed},
    )
