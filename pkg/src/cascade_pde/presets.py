"""Published parameter sets used for synthetic round-trip calibration.

Each preset bundles the model, the initial density samples, the grid the
synthetic data is generated and refit on, and the free parameters with the
bounds and starting guesses a fit begins from.
"""
from __future__ import annotations

from dataclasses import dataclass

from .calibrate import FitProblem, FreeParameter
from .models import DecaySpec, GridSpec, HeterogeneitySpec, ScalarModel
from .spline import build_initial_density

__all__ = ["RoundTripPreset", "story_one", "obama_tweet", "PRESETS"]


@dataclass(frozen=True)
class RoundTripPreset:
    name: str
    model: ScalarModel
    samples: tuple[tuple[float, float], ...]
    grid: GridSpec
    free: tuple[FreeParameter, ...]
    per_unit: int
    dt: float
    max_evals: int = 1500

    @property
    def phi(self):
        return build_initial_density(self.samples)

    def start_model(self):
        """The model with every free parameter at its starting guess."""
        return self.model.with_params(**{p.name: p.init for p in self.free})

    def problem(self, observed, **kw) -> FitProblem:
        kw.setdefault("per_unit", self.per_unit)
        kw.setdefault("dt", self.dt)
        kw.setdefault("max_evals", self.max_evals)
        return FitProblem(self.start_model(), observed, self.free, **kw)


def story_one() -> RoundTripPreset:
    """Logistic model, ``K = 25``, ``d = 0.01``, ``r(t) = 1.4 exp(-1.5 (t - 1)) + 0.25``."""
    model = ScalarModel("logistic", d=0.01, K=25.0, decay=DecaySpec.ode(1.5, 0.375, 1.65))
    samples = ((1, 4.0), (2, 2.6), (3, 1.3), (4, 0.6), (5, 0.3))
    free = (
        FreeParameter("d", 1e-3, 1.0, 0.02),
        FreeParameter("K", 5.0, 100.0, 20.0),
        FreeParameter("alpha", 0.1, 5.0, 1.0),
        FreeParameter("beta", 0.01, 2.0, 0.3),
        FreeParameter("gamma", 0.1, 5.0, 1.2),
    )
    grid = GridSpec.aligned(1, 5, 4, t0=1.0, t_end=12.0, dt=0.05)
    return RoundTripPreset("story-1", model, samples, grid, free, per_unit=4, dt=0.05)


def obama_tweet() -> RoundTripPreset:
    """Variable-diffusion logistic model, ``d = 1``, ``b = 3``, ``K = 300``.

    The growth rate and ``h(x)`` are not published with this set; an
    offset-exponential rate and a concave quadratic positive on ``[1, 4]``
    stand in.
    """
    model = ScalarModel(
        "variable-diffusion-logistic", d=1.0, b=3.0, K=300.0,
        decay=DecaySpec.offset_exp(0.3, 1.0, 2.0),
        heterogeneity=HeterogeneitySpec.quadratic(-0.2, 4.2),
    )
    samples = ((1, 20.0), (2, 40.0), (3, 10.0), (4, 1.0))
    free = (
        FreeParameter("d", 0.05, 20.0, 0.5),
        FreeParameter("b", 0.5, 10.0, 2.0),
        FreeParameter("K", 10.0, 3000.0, 200.0),
    )
    grid = GridSpec.aligned(1, 4, 4, t0=1.0, t_end=15.0, dt=0.05)
    return RoundTripPreset("obama-tweet", model, samples, grid, free, per_unit=4, dt=0.05)


PRESETS = {"story-1": story_one, "obama-tweet": obama_tweet}
