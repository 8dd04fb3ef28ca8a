"""Parameter containers for the reaction-diffusion model family."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import DomainError, ValidationError

__all__ = [
    "DecaySpec",
    "HeterogeneitySpec",
    "ScalarModel",
    "SystemModel",
    "GridSpec",
    "r_decay",
    "h_profile",
    "SCALAR_FAMILIES",
    "SYSTEM_FAMILIES",
]

SCALAR_FAMILIES = ("logistic", "linear", "variable-diffusion-logistic")
SYSTEM_FAMILIES = ("cooperative", "competing", "si", "sir")


@dataclass(frozen=True)
class DecaySpec:
    """Time-dependent growth rate ``r(t)``.

    ``form`` is one of

    * ``"ode"``: ``r(t) = beta/alpha - exp(-alpha (t - 1)) (beta/alpha - gamma)``,
      the solution of ``r' = -alpha r + beta`` with ``r(1) = gamma``;
    * ``"offset-exp"``: ``r(t) = A + B exp(-C t)``;
    * ``"constant"``: ``r(t) = rate``.
    """

    form: str = "constant"
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    A: float = 0.0
    B: float = 0.0
    C: float = 0.0
    rate: float = 0.0

    def __post_init__(self):
        if self.form not in ("ode", "offset-exp", "constant"):
            raise ValidationError(f"unknown decay form {self.form!r}")
        for f in fields(self):
            if f.name != "form" and getattr(self, f.name) < 0:
                raise ValidationError(f"decay parameter {f.name} must be >= 0")
        if self.form == "ode" and self.alpha == 0:
            raise ValidationError("ode decay needs alpha > 0")

    @classmethod
    def ode(cls, alpha, beta, gamma):
        return cls(form="ode", alpha=alpha, beta=beta, gamma=gamma)

    @classmethod
    def offset_exp(cls, A, B, C):
        return cls(form="offset-exp", A=A, B=B, C=C)

    @classmethod
    def constant(cls, rate):
        return cls(form="constant", rate=rate)

    @property
    def limit(self):
        """``lim r(t)`` as ``t -> infinity``."""
        if self.form == "ode":
            return self.beta / self.alpha
        if self.form == "offset-exp":
            return self.A if self.C > 0 else self.A + self.B
        return self.rate

    def __call__(self, t):
        return r_decay(self, t)

    def to_dict(self):
        keys = {"ode": ("alpha", "beta", "gamma"), "offset-exp": ("A", "B", "C"),
                "constant": ("rate",)}[self.form]
        return {"form": self.form, **{k: getattr(self, k) for k in keys}}


def r_decay(spec: DecaySpec, t):
    """Evaluate the growth rate at time ``t`` (hours, ``t >= 1`` for ``ode``)."""
    t = np.asarray(t, dtype=float)
    if spec.form == "ode":
        if np.any(t < 1):
            raise DomainError("ode decay is defined for t >= 1")
        ratio = spec.beta / spec.alpha
        val = ratio - np.exp(-spec.alpha * (t - 1.0)) * (ratio - spec.gamma)
    elif spec.form == "offset-exp":
        val = spec.A + spec.B * np.exp(-spec.C * t)
    else:
        val = np.full_like(t, spec.rate)
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class HeterogeneitySpec:
    """Distance-dependent growth modifier ``h(x)``: ``1`` or ``-(x - rho)(x - sigma)``."""

    form: str = "constant"
    rho: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.form not in ("constant", "quadratic"):
            raise ValidationError(f"unknown heterogeneity form {self.form!r}")

    @classmethod
    def quadratic(cls, rho, sigma):
        return cls(form="quadratic", rho=rho, sigma=sigma)

    @property
    def vertex(self):
        return 0.5 * (self.rho + self.sigma) if self.form == "quadratic" else None

    def __call__(self, x):
        return h_profile(self, x)

    def to_dict(self):
        if self.form == "constant":
            return {"form": "constant"}
        return {"form": "quadratic", "rho": self.rho, "sigma": self.sigma}


def h_profile(spec: HeterogeneitySpec, x):
    x = np.asarray(x, dtype=float)
    if spec.form == "quadratic":
        val = -(x - spec.rho) * (x - spec.sigma)
    else:
        val = np.ones_like(x)
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class ScalarModel:
    """One scalar equation ``I_t = (a(x) I_x)_x + rate_scale * f(t, x, I)``.

    ``a(x) = d exp(-b x)``. The reaction depends on ``family``:

    * ``logistic``: ``r(t) I (1 - I/K)``
    * ``linear``: ``r(t) h(x) I``
    * ``variable-diffusion-logistic``: ``r(t) I (h(x) - I/K)``

    ``bc`` is ``"neumann"`` (no flux at both ends) or ``"robin"``: no flux at
    ``l`` and ``I_x + robin_alpha I = 0`` at ``L``. ``rate_scale`` multiplies
    the reaction (the bifurcation parameter of the Robin model).
    """

    family: str = "logistic"
    d: float = 1.0
    b: float = 0.0
    K: float = 1.0
    decay: DecaySpec = field(default_factory=lambda: DecaySpec.constant(1.0))
    heterogeneity: HeterogeneitySpec = field(default_factory=HeterogeneitySpec)
    bc: str = "neumann"
    robin_alpha: float = 0.0
    rate_scale: float = 1.0

    def __post_init__(self):
        if self.family not in SCALAR_FAMILIES:
            raise ValidationError(f"unknown scalar family {self.family!r}")
        if not self.d > 0:
            raise ValidationError("diffusivity d must be > 0")
        if self.b < 0:
            raise ValidationError("diffusion decay b must be >= 0")
        if self.family != "linear" and not self.K > 0:
            raise ValidationError("carrying capacity K must be > 0")
        if self.family == "logistic" and self.heterogeneity.form != "constant":
            raise ValidationError("logistic family takes a constant h(x)")
        if self.family != "variable-diffusion-logistic" and self.b != 0:
            raise ValidationError("only variable-diffusion-logistic has b != 0")
        if self.bc not in ("neumann", "robin"):
            raise ValidationError(f"unknown boundary condition {self.bc!r}")
        if self.robin_alpha < 0:
            raise ValidationError("Robin coefficient must be >= 0")
        if self.rate_scale < 0:
            raise ValidationError("rate_scale must be >= 0")

    def diffusivity(self, x):
        return self.d * np.exp(-self.b * np.asarray(x, dtype=float))

    def reaction(self, t, x, u, hx=None):
        r = self.rate_scale * r_decay(self.decay, t)
        if hx is None:
            hx = h_profile(self.heterogeneity, x)
        if self.family == "logistic":
            return r * u * (1.0 - u / self.K)
        if self.family == "linear":
            return r * hx * u
        return r * u * (hx - u / self.K)

    def with_params(self, **params):
        """Copy with flat parameter names (``alpha``, ``rho``, ``A`` ...) substituted."""
        top, decay, het = {}, {}, {}
        decay_keys = {f.name for f in fields(DecaySpec)} - {"form"}
        for key, value in params.items():
            if key in ("rho", "sigma"):
                het[key] = value
            elif key in decay_keys:
                decay[key] = value
            else:
                top[key] = value
        model = replace(self, **top)
        if decay:
            model = replace(model, decay=replace(model.decay, **decay))
        if het:
            model = replace(model, heterogeneity=replace(model.heterogeneity, **het))
        return model

    def flat_params(self):
        """Flat name -> value view matching :meth:`with_params`."""
        out = {"d": self.d, "K": self.K}
        if self.family == "variable-diffusion-logistic":
            out["b"] = self.b
        out.update({k: v for k, v in self.decay.to_dict().items() if k != "form"})
        if self.heterogeneity.form == "quadratic":
            out["rho"] = self.heterogeneity.rho
            out["sigma"] = self.heterogeneity.sigma
        if self.bc == "robin":
            out["robin_alpha"] = self.robin_alpha
        if self.rate_scale != 1.0:
            out["rate_scale"] = self.rate_scale
        return out

    def to_dict(self):
        return {
            "family": self.family, "d": self.d, "b": self.b, "K": self.K,
            "decay": self.decay.to_dict(), "heterogeneity": self.heterogeneity.to_dict(),
            "bc": self.bc, "robin_alpha": self.robin_alpha, "rate_scale": self.rate_scale,
        }


@dataclass(frozen=True)
class SystemModel:
    """Two- or three-component interaction systems.

    * ``cooperative``: ``u_i' = d_i u_i'' + r_i(t) u_i (1 - u_i/K_i) + alpha_i u_1 u_2``
    * ``competing``: same with ``- alpha_i u_1 u_2``
    * ``si``: ``S' = d_1 S'' - r(t) S I/(S+I)``, ``I' = d_2 I'' + r(t) S I/(S+I)``
    * ``sir``: ``S' = d_1 S'' - beta S I/(S+I)``,
      ``I' = d_2 I'' + beta S I/(S+I) - gamma I``, ``R' = d_3 R'' + gamma I``

    ``rates`` are per-component :class:`DecaySpec` for the logistic pairs;
    ``si`` uses ``rates[0]``.
    """

    family: str
    diffusivities: tuple[float, ...]
    rates: tuple[DecaySpec, ...] = ()
    capacities: tuple[float, ...] = ()
    alphas: tuple[float, float] = (0.0, 0.0)
    beta_e: float = 0.0
    gamma_e: float = 0.0
    bc: str = "neumann"
    robin_alpha: float = 0.0
    incidence_eps: float = 1e-12

    def __post_init__(self):
        if self.family not in SYSTEM_FAMILIES:
            raise ValidationError(f"unknown system family {self.family!r}")
        n = self.n_components
        if len(self.diffusivities) != n or any(not d > 0 for d in self.diffusivities):
            raise ValidationError(f"{self.family} needs {n} positive diffusivities")
        if self.family in ("cooperative", "competing"):
            if len(self.rates) != 2 or len(self.capacities) != 2:
                raise ValidationError(f"{self.family} needs 2 rates and 2 capacities")
            if any(not k > 0 for k in self.capacities):
                raise ValidationError("capacities must be > 0")
        if self.family == "si" and len(self.rates) < 1:
            raise ValidationError("si needs a rate r(t)")
        if min(self.alphas) < 0 or self.beta_e < 0 or self.gamma_e < 0:
            raise ValidationError("interaction and epidemic rates must be >= 0")
        if self.bc not in ("neumann", "robin"):
            raise ValidationError(f"unknown boundary condition {self.bc!r}")

    @property
    def n_components(self):
        return 3 if self.family == "sir" else 2

    @property
    def component_names(self):
        return {"cooperative": ("u1", "u2"), "competing": ("u1", "u2"),
                "si": ("S", "I"), "sir": ("S", "I", "R")}[self.family]

    def _incidence(self, S, I):
        tot = S + I
        out = np.zeros_like(S)
        ok = tot >= self.incidence_eps
        out[ok] = S[ok] * I[ok] / tot[ok]
        return out

    def reaction(self, t, us):
        fam = self.family
        if fam in ("cooperative", "competing"):
            u1, u2 = us
            r1, r2 = (r_decay(r, t) for r in self.rates)
            k1, k2 = self.capacities
            sign = 1.0 if fam == "cooperative" else -1.0
            a1, a2 = self.alphas
            return [
                r1 * u1 * (1 - u1 / k1) + sign * a1 * u1 * u2,
                r2 * u2 * (1 - u2 / k2) + sign * a2 * u1 * u2,
            ]
        if fam == "si":
            S, I = us
            inc = r_decay(self.rates[0], t) * self._incidence(S, I)
            return [-inc, inc]
        S, I, R = us
        inc = self.beta_e * self._incidence(S, I)
        return [-inc, inc - self.gamma_e * I, self.gamma_e * I]


@dataclass(frozen=True)
class GridSpec:
    """Uniform node grid on ``[l, L]`` with ``nx`` intervals, times ``t0 .. t_end``.

    ``save_every`` keeps every n-th step (the final time is always kept).
    """

    l: float = 1.0
    L: float = 5.0
    nx: int = 40
    t0: float = 1.0
    t_end: float = 6.0
    dt: float = 0.01
    save_every: int = 1

    def __post_init__(self):
        if not self.L > self.l:
            raise ValidationError("grid needs L > l")
        if self.nx < 8:
            raise ValidationError("grid needs nx >= 8")
        if not self.dt > 0:
            raise ValidationError("dt must be > 0")
        if not self.t_end >= self.t0:
            raise ValidationError("t_end must be >= t0")
        if self.save_every < 1:
            raise ValidationError("save_every must be >= 1")

    @classmethod
    def aligned(cls, l, L, per_unit, **kw):
        """Grid with spacing ``1/per_unit`` so integer distances are nodes."""
        span = L - l
        if abs(span - round(span)) > 1e-12:
            raise ValidationError("aligned grids need an integer-length interval")
        return cls(l=l, L=L, nx=int(round(span)) * int(per_unit), **kw)

    @property
    def dx(self):
        return (self.L - self.l) / self.nx

    @property
    def x(self):
        return self.l + self.dx * np.arange(self.nx + 1)

    @property
    def n_steps(self):
        return max(0, math.ceil((self.t_end - self.t0) / self.dt - 1e-9))

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}
