import math

import numpy as np
import pytest

from gpamis.errors import NonFiniteObjective, NotNegativeDefinite
from gpamis.gp import Dataset, KernelSpec
from gpamis.gp.regression import log_marginal_regression
from gpamis.initialization import (
    DIAG,
    FULL,
    IDENTITY,
    build_proposal,
    find_mode,
    hessian_at_mode,
    initialize,
    repair_negative_definite,
)
from gpamis.linalg import FREE, OpCounter
from gpamis.targets import TargetDensity, gaussian_target, regression_target


def quadratic(c, A=None):
    c = np.asarray(c, dtype=float)
    A = np.eye(c.size) if A is None else A

    def vg(theta, counter=None):
        r = theta - c
        return -0.5 * float(r @ A @ r), -A @ r

    return TargetDensity(c.size, lambda t, rng=None, counter=None: vg(t)[0], False, vg)


class TestFindMode:
    def test_quadratic_converges_quickly(self):
        c = np.array([0.7, -1.2, 2.5])
        res = find_mode(quadratic(c))
        np.testing.assert_allclose(res.m, c, atol=1e-5)
        assert res.iterations <= c.size + 2

    def test_finite_difference_path(self):
        c = np.array([0.3, -0.4])
        target = TargetDensity(2, quadratic(c).log_f, False)
        np.testing.assert_allclose(find_mode(target).m, c, atol=1e-5)

    def test_noise_optimum_matches_grid_search(self):
        # one point: y ~ N(0, sigma + lambda), so only ln lambda is free here
        spec = KernelSpec("rbf", 1)
        data = Dataset(np.array([[0.3]]), np.array([2.0]))
        fixed = [math.log(0.5), 0.0]

        def log_f(t, rng=None, counter=None):
            return log_marginal_regression(spec, np.array(fixed + [t[0]]), data, FREE)

        res = find_mode(TargetDensity(1, log_f, False), np.zeros(1))
        grid = np.linspace(-3, 3, 600001)
        values = [log_f([g]) for g in grid[::100]]
        coarse = grid[::100][int(np.argmax(values))]
        fine = np.linspace(coarse - 1e-3, coarse + 1e-3, 20001)
        best = fine[int(np.argmax([log_f([g]) for g in fine]))]
        assert abs(res.m[0] - best) < 1e-4
        assert abs(math.exp(res.m[0]) - (2.0**2 - 0.5)) < 1e-3

    def test_restart_is_fixed_point(self):
        rng = np.random.default_rng(0)
        data = Dataset(rng.normal(size=(15, 2)), rng.normal(size=15))
        target = regression_target(KernelSpec("rbf", 2), data)
        first = find_mode(target)
        again = find_mode(target, first.m)
        assert np.max(np.abs(again.m - first.m)) < 1e-5

    def test_evaluations_are_charged(self):
        c = OpCounter()
        rng = np.random.default_rng(1)
        data = Dataset(rng.normal(size=(10, 1)), rng.normal(size=10))
        res = find_mode(regression_target(KernelSpec("rbf", 1), data), counter=c)
        assert res.op_cost == c.cubic_ops > 0 and c.cubic_ops % 3 == 0

    def test_non_finite_objective(self):
        target = TargetDensity(1, lambda t, rng=None, c=None: -math.inf, False)
        with pytest.raises(NonFiniteObjective):
            find_mode(target)


class TestHessian:
    def test_quadratic_recovers_matrix(self):
        A = np.array([[2.0, 0.6, 0.1], [0.6, 1.5, -0.3], [0.1, -0.3, 0.9]])
        c = np.array([0.1, 0.2, 0.3])
        for use_gradient in (True, False):
            H = hessian_at_mode(quadratic(c, A), c, use_gradient=use_gradient)
            np.testing.assert_allclose(H, -A, rtol=1e-4)

    def test_one_dimensional_second_difference(self):
        f = TargetDensity(1, lambda t, rng=None, c=None: float(math.sin(t[0]) - t[0] ** 4), False)
        m, h = np.array([0.4]), 1e-4
        expected = (f.log_f(m + h) - 2 * f.log_f(m) + f.log_f(m - h)) / h**2
        assert hessian_at_mode(f, m)[0, 0] == pytest.approx(expected, rel=1e-12)

    def test_exactly_symmetric(self):
        rng = np.random.default_rng(2)
        data = Dataset(rng.normal(size=(12, 2)), rng.normal(size=12))
        target = regression_target(KernelSpec("ard", 2), data)
        mode = find_mode(target)
        H = hessian_at_mode(target, mode.m)
        assert np.array_equal(H, H.T)

    def test_gaussian_target_hessian_is_negative_precision(self):
        cov = np.array([[1.0, 0.3], [0.3, 0.5]])
        res = initialize(gaussian_target(np.array([1.0, 2.0]), cov))
        np.testing.assert_allclose(res.approx_cov, cov, rtol=1e-5)

    def test_repair_floors_eigenvalues(self):
        H = -np.diag([4.0, -1.0])
        fixed = repair_negative_definite(H)
        vals = np.linalg.eigvalsh(-fixed)
        assert vals.min() == pytest.approx(4e-6) and vals.max() == pytest.approx(4.0)

    def test_repair_fails_without_curvature(self):
        with pytest.raises(NotNegativeDefinite):
            repair_negative_definite(np.eye(2))


class TestBuildProposal:
    def test_identity(self):
        p = build_proposal(IDENTITY, np.zeros(3), None, alpha=2.0)
        np.testing.assert_allclose(p.chol.reconstruct(), 2 * np.eye(3))

    def test_full_with_unit_hessian(self):
        p = build_proposal(FULL, np.ones(2), -np.eye(2), alpha=0.7)
        np.testing.assert_allclose(p.chol.reconstruct(), 0.7 * np.eye(2))

    def test_diag_matches_full_diagonal(self):
        H = -np.array([[2.0, 0.8], [0.8, 1.0]])
        m = np.array([0.5, -0.5])
        full = build_proposal(FULL, m, H).chol.reconstruct()
        diag = build_proposal(DIAG, m, H).chol.reconstruct()
        assert diag[0, 1] == 0 and diag[1, 0] == 0
        np.testing.assert_allclose(np.diag(diag), np.diag(full))
        np.testing.assert_allclose(full, np.linalg.inv(-H))

    def test_mean_is_mode(self):
        m = np.array([0.1, 0.2])
        for variant in (IDENTITY, FULL, DIAG):
            assert np.array_equal(build_proposal(variant, m, -np.eye(2)).mean, m)

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            build_proposal("bogus", np.zeros(2), -np.eye(2))
