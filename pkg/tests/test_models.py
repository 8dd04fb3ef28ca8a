import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cascade_pde.errors import DomainError, ValidationError
from cascade_pde.models import (
    DecaySpec,
    GridSpec,
    HeterogeneitySpec,
    ScalarModel,
    SystemModel,
    h_profile,
    r_decay,
)

STORY = DecaySpec.ode(alpha=1.5, beta=0.375, gamma=1.65)
DIGG_H = HeterogeneitySpec.quadratic(rho=-0.9478, sigma=8.9149)


class TestDecay:
    def test_starts_at_gamma(self):
        assert r_decay(STORY, 1.0) == pytest.approx(1.65, abs=1e-15)

    def test_long_term_limit(self):
        assert r_decay(STORY, 60.0) == pytest.approx(0.25, abs=1e-15)
        assert STORY.limit == pytest.approx(0.25)

    def test_matches_published_story_rate(self):
        # the fitted story-1 rate 1.4 exp(-1.5 (t - 1)) + 0.25
        ts = np.linspace(1, 20, 50)
        assert np.allclose(r_decay(STORY, ts), 1.4 * np.exp(-1.5 * (ts - 1)) + 0.25, atol=1e-14)

    def test_at_two(self):
        assert r_decay(STORY, 2.0) == pytest.approx(0.25 + 1.4 * math.exp(-1.5), rel=1e-14)
        assert r_decay(STORY, 2.0) == pytest.approx(0.5624, abs=5e-5)

    def test_zero_alpha_rejected(self):
        with pytest.raises(ValidationError):
            DecaySpec.ode(0.0, 0.3, 1.0)

    def test_before_start_rejected(self):
        with pytest.raises(DomainError):
            r_decay(STORY, 0.5)

    def test_offset_exp(self):
        spec = DecaySpec.offset_exp(0.3, 1.0, 2.0)
        assert r_decay(spec, 1.0) == pytest.approx(0.3 + math.exp(-2.0))
        assert spec.limit == 0.3

    def test_constant(self):
        assert np.all(r_decay(DecaySpec.constant(0.7), np.arange(5.0)) == 0.7)

    def test_negative_rate_rejected(self):
        with pytest.raises(ValidationError):
            DecaySpec.constant(-1.0)

    @given(st.floats(0.1, 5), st.floats(0, 3), st.floats(0, 5))
    def test_ode_solution_satisfies_ode(self, a, b, g):
        spec = DecaySpec.ode(a, b, g)
        t, h = 2.3, 1e-5
        deriv = (r_decay(spec, t + h) - r_decay(spec, t - h)) / (2 * h)
        assert deriv == pytest.approx(-a * r_decay(spec, t) + b, abs=1e-6)


class TestHeterogeneity:
    def test_root(self):
        assert h_profile(DIGG_H, -0.9478) == pytest.approx(0.0, abs=1e-14)

    def test_vertex(self):
        assert DIGG_H.vertex == pytest.approx(3.98355, abs=1e-5)

    def test_value_at_four(self):
        assert h_profile(DIGG_H, 4.0) == pytest.approx(24.318, abs=1e-3)

    def test_constant(self):
        assert h_profile(HeterogeneitySpec(), 3.0) == 1.0


class TestScalarModel:
    def test_family_invariants(self):
        with pytest.raises(ValidationError):
            ScalarModel("logistic", heterogeneity=DIGG_H)
        with pytest.raises(ValidationError):
            ScalarModel("logistic", b=1.0)
        with pytest.raises(ValidationError):
            ScalarModel("linear", d=0.0)
        with pytest.raises(ValidationError):
            ScalarModel("nonsense")

    def test_variable_diffusivity(self):
        m = ScalarModel("variable-diffusion-logistic", d=1.0, b=3.0, K=300)
        assert m.diffusivity(1.0) == pytest.approx(math.exp(-3.0))

    def test_flat_params_round_trip(self):
        m = ScalarModel("linear", d=0.01, decay=STORY, heterogeneity=DIGG_H)
        flat = m.flat_params()
        assert set(flat) >= {"d", "alpha", "beta", "gamma", "rho", "sigma"}
        m2 = ScalarModel("linear", decay=DecaySpec.ode(1, 1, 1),
                         heterogeneity=HeterogeneitySpec.quadratic(0, 1)).with_params(**flat)
        assert m2 == m

    def test_reaction_forms(self):
        x = np.array([1.0, 2.0])
        u = np.array([1.0, 2.0])
        lin = ScalarModel("linear", decay=DecaySpec.constant(2.0), heterogeneity=DIGG_H)
        assert np.allclose(lin.reaction(1.0, x, u), 2.0 * DIGG_H(x) * u)
        vdl = ScalarModel("variable-diffusion-logistic", K=4.0, b=1.0,
                          decay=DecaySpec.constant(2.0), heterogeneity=DIGG_H)
        assert np.allclose(vdl.reaction(1.0, x, u), 2.0 * u * (DIGG_H(x) - u / 4.0))


class TestSystemModel:
    def test_component_counts(self):
        assert SystemModel("sir", (1, 1, 1), beta_e=1, gamma_e=0.25).n_components == 3
        with pytest.raises(ValidationError):
            SystemModel("si", (1.0,), rates=(DecaySpec.constant(1),))

    def test_incidence_zero_at_empty_population(self):
        m = SystemModel("si", (1, 1), rates=(DecaySpec.constant(1.0),))
        dS, dI = m.reaction(1.0, [np.zeros(3), np.zeros(3)])
        assert np.all(dS == 0) and np.all(dI == 0)

    def test_cooperative_coupling_sign(self):
        kw = dict(rates=(DecaySpec.constant(1),) * 2, capacities=(1, 1), alphas=(0.5, 0.5))
        u = [np.array([0.5]), np.array([0.5])]
        coop = SystemModel("cooperative", (1, 1), **kw).reaction(0, u)
        comp = SystemModel("competing", (1, 1), **kw).reaction(0, u)
        assert coop[0][0] == pytest.approx(0.25 + 0.125)
        assert comp[0][0] == pytest.approx(0.25 - 0.125)


class TestGrid:
    def test_aligned_nodes_hit_integers(self):
        g = GridSpec.aligned(1, 5, 8)
        for k in range(1, 6):
            assert np.min(np.abs(g.x - k)) < 1e-12

    def test_minimum_resolution(self):
        with pytest.raises(ValidationError):
            GridSpec(nx=4)

    def test_step_count(self):
        assert GridSpec(t0=1, t_end=2, dt=0.1).n_steps == 10
