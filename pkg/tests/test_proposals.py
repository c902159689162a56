import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from eggcount_kit.distributions import RngStream
from eggcount_kit.proposals import (
    DegenerateConditionalError,
    ProposalSpec,
    build_delta_proposal,
    build_mu_proposal,
    delta_log_target,
    delta_mode_curvature,
    kl_divergences,
    mu_candidates,
    mu_log_target,
    mu_mode_curvature,
    sample_truncated_gamma,
    truncated_exponential_cdf,
)


def mode_and_curvature(spec: ProposalSpec):
    """Closed-form mode of each family and minus the second derivative of its log density there."""
    p = spec.params
    if spec.family == "inverse_gamma":
        x = p["scale"] / (p["shape"] + 1)
        return x, -(p["shape"] + 1) / x**2 + 2 * p["scale"] / x**3
    if spec.family == "lognormal":
        x = math.exp(p["meanlog"] - p["sdlog"] ** 2)
        return x, 1 / (p["sdlog"] ** 2 * x**2)
    if spec.family == "gamma":
        x = (p["shape"] - 1) / p["rate"]
        return x, (p["shape"] - 1) / x**2
    if spec.family == "beta":
        x = (p["a"] - 1) / (p["a"] + p["b"] - 2)
        return x, (p["a"] - 1) / x**2 + (p["b"] - 1) / (1 - x) ** 2
    raise AssertionError(spec.family)


mu_coeffs = st.tuples(
    st.floats(0.2, 60.0),
    st.floats(-4.0, -1.5).map(lambda e: 10.0**e),
    st.floats(0.0, 5.0).map(lambda e: 10.0**e),
)
delta_coeffs = st.tuples(
    st.floats(-0.3, 3.0).map(lambda e: 10.0**e),
    # b = b_delta - 1: zero under the flat prior, otherwise of prior size
    st.one_of(st.just(0.0), st.floats(0.05, 4.0)),
    st.floats(1.0, 5.0).map(lambda e: 10.0**e),
)


class TestMuConditional:
    @given(mu_coeffs)
    @settings(max_examples=100)
    def test_mode_is_stationary(self, coeffs):
        a, b, c = coeffs
        m, _ = mu_mode_curvature(a, b, c)
        grad = a / m + b - c / m**2
        assert abs(grad) < 1e-8

    @given(mu_coeffs)
    @settings(max_examples=100)
    def test_candidates_match_mode_and_curvature(self, coeffs):
        m, d2 = mu_mode_curvature(*coeffs)
        for cand in mu_candidates(*coeffs):
            xm, cm = mode_and_curvature(cand)
            assert xm == pytest.approx(m, rel=1e-8)
            assert cm == pytest.approx(d2, rel=1e-6)

    def test_curvature_against_finite_difference(self):
        a, b, c = 7.5, 0.001, 3000.0
        m, d2 = mu_mode_curvature(a, b, c)
        h = m * 1e-4
        fd = -(mu_log_target(m + h, a, b, c) - 2 * mu_log_target(m, a, b, c) + mu_log_target(m - h, a, b, c)) / h**2
        assert fd == pytest.approx(d2, rel=1e-5)

    def test_stable_mode_with_tiny_b(self):
        # 4bc << a^2: the textbook root loses all digits here
        m, _ = mu_mode_curvature(30.0, 1e-12, 5.0)
        assert m == pytest.approx(5.0 / 30.0, rel=1e-9)

    def test_zero_a_mode(self):
        m, _ = mu_mode_curvature(0.0, 0.002, 50.0)
        assert m == pytest.approx(math.sqrt(50.0 / 0.002), rel=1e-12)

    def test_large_a_worked_example(self):
        a, b, c = 10.0, 0.001, 5000.0
        m, d2 = mu_mode_curvature(a, b, c)
        assert m == pytest.approx((-a + math.sqrt(a * a + 4 * b * c)) / (2 * b), rel=1e-12)
        ig = next(s for s in mu_candidates(a, b, c) if s.family == "inverse_gamma")
        # inverse gamma mode scale / (shape + 1) and curvature at the mode
        shape, scale = ig.params["shape"], ig.params["scale"]
        assert scale / (shape + 1) == pytest.approx(m, rel=1e-12)
        assert (shape + 1) / m**2 == pytest.approx(d2, rel=1e-10)
        assert build_mu_proposal(a, b, c).family == "inverse_gamma"

    def test_inverse_gamma_dropped_when_shape_not_positive(self):
        families = [c.family for c in mu_candidates(0.05, 0.5, 0.02)]
        assert "inverse_gamma" not in families

    def test_degenerate(self):
        with pytest.raises(DegenerateConditionalError):
            mu_mode_curvature(3.0, 0.0, 5.0)


class TestKL:
    def test_matches_scipy_quadrature(self):
        a, b, c = 4.0, 0.002, 900.0
        cands = mu_candidates(a, b, c)
        kl = kl_divergences((a, b, c), cands)
        m, _ = mu_mode_curvature(a, b, c)
        lo, hi = m / 1e3, m * 1e4
        lz = math.log(integrate.quad(lambda x: math.exp(mu_log_target(x, a, b, c) - mu_log_target(m, a, b, c)),
                                     lo, hi, points=[m], limit=500)[0]) + mu_log_target(m, a, b, c)
        for cand, value in zip(cands, kl):
            def integrand(x, cand=cand):
                lp = mu_log_target(x, a, b, c) - lz
                return math.exp(lp) * (lp - cand.logpdf(x))
            ref = integrate.quad(integrand, lo, hi, points=[m], limit=500)[0]
            assert value == pytest.approx(ref, rel=1e-5, abs=1e-9)

    def test_exact_inverse_gamma_target(self):
        # with b = 0 the conditional is an inverse gamma, matched exactly
        a, c = 6.0, 250.0
        cands = mu_candidates(a, 1e-14, c)
        kl = kl_divergences((a, 1e-14, c), cands)
        ig = [k for cand, k in zip(cands, kl) if cand.family == "inverse_gamma"][0]
        assert abs(ig) < 1e-8
        assert build_mu_proposal(a, 1e-14, c).family == "inverse_gamma"

    def test_cached_selection_is_deterministic(self):
        a = build_mu_proposal(9.3, 0.001, 4321.0, cached=True)
        b = build_mu_proposal(9.3, 0.001, 4321.0, cached=True)
        assert a == b
        assert a.params == mu_candidates(9.3, 0.001, 4321.0)[[c.family for c in mu_candidates(9.3, 0.001, 4321.0)]
                                                            .index(a.family)].params


class TestDeltaConditional:
    @given(delta_coeffs)
    @settings(max_examples=100)
    def test_mode_is_stationary(self, coeffs):
        a, b, c = coeffs
        assume(b > 0 or a < 0.99 * c)  # otherwise the mode sits on 1
        m, _ = delta_mode_curvature(a, b, c)
        assert 0 < m < 1
        grad = -a / m + b / (1 - m) + c
        assert abs(grad) < 1e-8

    @given(delta_coeffs)
    @settings(max_examples=100)
    def test_beta_matches_mode_and_curvature(self, coeffs):
        a, b, c = coeffs
        assume(b > 0 or a < 0.99 * c)  # otherwise the mode sits on 1
        spec = build_delta_proposal(*coeffs)
        m, d2 = delta_mode_curvature(*coeffs)
        assert spec.family == "beta"
        xm, cm = mode_and_curvature(spec)
        assert xm == pytest.approx(m, rel=1e-8)
        assert cm == pytest.approx(d2, rel=1e-6)

    def test_exact_branch(self):
        spec = build_delta_proposal(0.0, 0.0, 40.0)
        assert spec.family == "exact"

    def test_fallback_when_no_interior_mode(self):
        spec = build_delta_proposal(0.0, 2.0, 40.0)
        assert spec.family == "truncated_gamma" and spec.fallback

    @pytest.mark.parametrize("a,c", [(10.0, 10.0), (1000.0, 10.0), (50.0, 0.5)])
    def test_fallback_when_mode_at_one(self, a, c):
        # delta^a e^(-c delta) increases on (0, 1) once a >= c
        spec = build_delta_proposal(a, 0.0, c)
        assert spec.family == "beta" and spec.fallback
        assert spec.params == {"a": a + 1.0, "b": 1.0}
        rng = RngStream(4)
        assert all(0 < spec.sample(rng) < 1 for _ in range(100))

    def test_log_target_support(self):
        assert delta_log_target(0.0, 1.0, 1.0, 1.0) == -math.inf
        assert delta_log_target(1.0, 1.0, 1.0, 1.0) == -math.inf


class TestProposalDensities:
    @pytest.mark.parametrize("spec,lo,hi", [
        (ProposalSpec("inverse_gamma", {"shape": 3.0, "scale": 20.0}, 5.0, 1.0), 0, np.inf),
        (ProposalSpec("lognormal", {"meanlog": 1.0, "sdlog": 0.4}, 1.0, 1.0), 0, np.inf),
        (ProposalSpec("gamma", {"shape": 4.0, "rate": 0.5}, 6.0, 1.0), 0, np.inf),
        (ProposalSpec("beta", {"a": 3.0, "b": 7.0}, 0.25, 1.0), 0, 1),
        (ProposalSpec("truncated_gamma", {"shape": 2.5, "rate": 6.0}, 0.0, math.nan), 0, 1),
        (ProposalSpec("exact", {"shape": 1.0, "rate": 30.0}, 0.0, math.nan), 0, 1),
    ])
    def test_normalized(self, spec, lo, hi):
        total = integrate.quad(lambda x: math.exp(spec.logpdf(x)), lo, hi, limit=200, points=None)[0]
        assert total == pytest.approx(1.0, abs=1e-7)

    def test_scalar_and_array_agree(self):
        spec = ProposalSpec("beta", {"a": 2.0, "b": 3.0}, 0.25, 1.0)
        x = np.array([0.1, 0.5, 0.9])
        np.testing.assert_allclose(spec.logpdf(x), [spec.logpdf(float(v)) for v in x])

    @pytest.mark.parametrize("shape", [1.0, 3.5])
    def test_truncated_gamma_sampler_ks(self, shape):
        g = np.random.default_rng(0)
        rate = 7.0
        draws = np.array([sample_truncated_gamma(shape, rate, u) for u in g.random(20_000)])
        cdf = lambda x: stats.gamma.cdf(x, shape, scale=1 / rate) / stats.gamma.cdf(1, shape, scale=1 / rate)
        assert stats.kstest(draws, cdf).pvalue > 0.01

    def test_truncated_exponential_cdf_endpoints(self):
        assert truncated_exponential_cdf(0.0, 5.0) == 0.0
        assert truncated_exponential_cdf(1.0, 5.0) == pytest.approx(1.0)

    def test_samples_inside_support(self):
        spec = build_delta_proposal(0.0, 0.0, 1e4)
        rng = RngStream(1)
        draws = [spec.sample(rng) for _ in range(2000)]
        assert all(0 < d < 1 for d in draws)
