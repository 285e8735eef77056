import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frailty_vb import approx
from frailty_vb.cavi import fit
from frailty_vb.checks import SCAN_REFERENCE, designed_tiny_dataset, monotonicity_datasets
from frailty_vb.data import Hyperparameters, validate_dataset
from frailty_vb.oracle import (
    BLOCK_SURROGATE,
    GridMassError,
    QuadratureError,
    approx_error_scan,
    frozen_sweep_monotonicity,
    quadrature_invgamma,
    tiny_exact_posterior,
)
from frailty_vb.simulate import ScenarioSpec, generate_dataset
from frailty_vb.special import invgamma_mean_inv, invgamma_mean_inv_sq, invgamma_mean_log


class TestQuadrature:
    def test_examples(self):
        assert quadrature_invgamma(3, 2, "1/b") == pytest.approx(1.5, abs=1e-10)
        assert quadrature_invgamma(1, 1, "1/b") == pytest.approx(1.0, abs=1e-10)
        expected = math.log(2) - float(mpmath.digamma(3))
        assert quadrature_invgamma(3, 2, "log b") == pytest.approx(expected, abs=1e-10)

    @pytest.mark.parametrize("shape", [1.0, 2.0, 3.0, 10.0])
    @pytest.mark.parametrize("scale", [0.5, 1.0, 2.0, 10.0])
    def test_closed_forms_on_lattice(self, shape, scale):
        assert quadrature_invgamma(shape, scale, "1/b") == pytest.approx(invgamma_mean_inv(shape, scale), abs=1e-8)
        assert quadrature_invgamma(shape, scale, "1/b^2") == pytest.approx(
            invgamma_mean_inv_sq(shape, scale), abs=1e-8
        )
        assert quadrature_invgamma(shape, scale, "log b") == pytest.approx(
            invgamma_mean_log(shape, scale), abs=1e-8
        )

    def test_unreachable_tolerance_reported(self):
        with pytest.raises(QuadratureError):
            quadrature_invgamma(3, 2, "1/b", tol=1e-30)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            quadrature_invgamma(0, 1, "1/b")
        with pytest.raises(KeyError):
            quadrature_invgamma(1, 1, "b")


class TestApproxErrorScan:
    def test_quadratic_at_zero(self):
        rho, zeta = approx.quad_coeffs_array(np.array([0.0]))
        assert float(approx.softplus(0.0) - (rho * 0 + zeta * 0)[0]) == math.log(2)
        err, _ = approx_error_scan("quadratic", -1.7, 1.7, points=3401)
        assert err >= math.log(2)

    def test_linear_far_right(self):
        err, at = approx_error_scan("linear", 10.0, 20.0)
        assert err < 5e-5
        assert at == 10.0

    def test_linear_far_left(self):
        err, _ = approx_error_scan("linear", -10.0, -10.0 + 1e-9, points=1000)
        assert err == pytest.approx(math.log1p(math.exp(-10.0)), rel=1e-6)
        assert err == pytest.approx(4.54e-5, abs=1e-7)

    @pytest.mark.parametrize("kind", ["linear", "quadratic"])
    def test_regression_constants(self, kind):
        err, at = approx_error_scan(kind, -5.0, 5.0)
        ref_err, ref_at = SCAN_REFERENCE[kind]
        assert err == pytest.approx(ref_err, abs=1e-12)
        assert at == pytest.approx(ref_at, abs=1e-9)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            approx_error_scan("linear", 1.0, 1.0)
        with pytest.raises(ValueError):
            approx_error_scan("linear", 0.0, 1.0, points=999)
        with pytest.raises(ValueError):
            approx_error_scan("cubic", 0.0, 1.0)


@pytest.fixture(scope="module")
def single():
    return validate_dataset([("a", 2.0, 1, [1.0])])


class TestTinyPosterior:
    def test_single_observation(self, single):
        h = Hyperparameters.weak(1)
        grid = tiny_exact_posterior(single, h)
        assert grid.total_mass == pytest.approx(1.0, abs=1e-8)
        assert all(v < 1e-3 for v in grid.edge_mass.values())
        vb = fit(single, h).state.mu[0]
        assert abs(vb - grid.mean_beta) <= 0.15

    def test_designed_instance(self):
        data, h = designed_tiny_dataset(), Hyperparameters.weak(1)
        grid = tiny_exact_posterior(data, h)
        assert abs(fit(data, h).state.mu[0] - grid.mean_beta) <= 0.15

    def test_refinement(self, single):
        h = Hyperparameters.weak(1)
        a = tiny_exact_posterior(single, h)
        b = tiny_exact_posterior(single, h, points=161, s2_points=481)
        assert abs(a.mean_beta - b.mean_beta) < 1e-4
        assert abs(a.mean_b - b.mean_b) < 1e-4

    def test_two_clusters(self):
        data = validate_dataset([("a", 2.0, 1, [1.0]), ("b", 0.6, 1, [1.0]), ("b", 1.5, 0, [1.0])])
        grid = tiny_exact_posterior(data, Hyperparameters.weak(1), points=41, s2_points=121)
        assert grid.total_mass == pytest.approx(1.0, abs=1e-8)
        assert grid.mean_gamma.shape == (2,)

    def test_narrow_grid_detected(self, single):
        with pytest.raises(GridMassError) as exc:
            tiny_exact_posterior(single, Hyperparameters.weak(1), b_range=(0.5, 0.6))
        assert exc.value.edge_mass["b"] > 1e-3

    def test_size_limits(self):
        three = validate_dataset([(c, 1.0, 1, [1.0]) for c in "abc"])
        with pytest.raises(ValueError):
            tiny_exact_posterior(three, Hyperparameters.weak(1))
        with pytest.raises(ValueError):
            tiny_exact_posterior(validate_dataset([("a", 1.0, 1, [1.0, 0.0])]), Hyperparameters.weak(2))


class TestMonotonicity:
    def test_surrogate_map(self):
        assert set(BLOCK_SURROGATE) == {"beta", "gamma", "b", "sigma2_gamma"}

    def test_seeded_campaign(self):
        h = Hyperparameters.weak(3)
        for data in monotonicity_datasets():
            rep = frozen_sweep_monotonicity(data, h, sweeps=10)
            assert rep.ok, rep.failed_block

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_random_small_datasets(self, K, n, seed):
        data = generate_dataset(ScenarioSpec(K=K, n=n, seed=seed), 0)
        rep = frozen_sweep_monotonicity(data, Hyperparameters.weak(3), sweeps=8)
        assert rep.ok, (rep.failed_block, rep.deltas[-1])

    def test_fixed_point(self):
        h = Hyperparameters.weak(3)
        data = generate_dataset(ScenarioSpec(K=4, n=5, seed=1), 0)
        res = fit(data, h, delta=1e-13, max_iter=500)
        assert res.converged
        rep = frozen_sweep_monotonicity(data, h, sweeps=1, state=res.state)
        assert all(abs(d) <= 1e-9 * max(1.0, abs(res.elbo_trace[-1])) for _, _, d in rep.deltas)

    @pytest.mark.parametrize("block", ["beta", "gamma", "b", "sigma2_gamma"])
    def test_block_idempotent(self, block):
        h = Hyperparameters.weak(3)
        data = generate_dataset(ScenarioSpec(K=3, n=4, seed=2), 0)
        warm = fit(data, h, max_iter=3).state
        rep = frozen_sweep_monotonicity(data, h, sweeps=1, state=warm, blocks=(block, block), refresh="sweep")
        assert rep.ok
        assert abs(rep.deltas[1][2]) <= 1e-9 * max(1.0, abs(rep.deltas[0][2]))

    def test_decrease_is_reported(self, monkeypatch):
        from frailty_vb import oracle

        real = oracle._apply_block

        def sabotaged(block, data, hyper, state, coeffs):
            new = real(block, data, hyper, state, coeffs)
            if block == "gamma":
                return oracle.replace(new, tau=new.tau + 1.0)
            return new

        monkeypatch.setattr(oracle, "_apply_block", sabotaged)
        data = generate_dataset(ScenarioSpec(K=3, n=4, seed=2), 0)
        rep = frozen_sweep_monotonicity(data, Hyperparameters.weak(3), sweeps=2)
        assert not rep.ok and rep.failed_block == "gamma"

    def test_bad_refresh(self):
        data = generate_dataset(ScenarioSpec(K=1, n=1), 0)
        with pytest.raises(ValueError):
            frozen_sweep_monotonicity(data, Hyperparameters.weak(3), refresh="never")
