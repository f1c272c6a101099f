import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from decaylab.errors import UsageError
from decaylab.feedback import FeedbackLaw
from decaylab.kato import (AbstractSystem, check_quasi_monotone, convergence_study, integrate_approx,
                           integrate_limit, random_system, resolvent_solve, yosida_apply)
from decaylab.modulation import ModulationProfile

BACKENDS = ["numba", "numpy"]


def scalar_linear():
    return AbstractSystem(A1=np.zeros((1, 1)), law=FeedbackLaw.linear(), damped=[True])


def nonlinear4(scale=0.5, seed=0, gamma=0.5):
    return random_system(4, FeedbackLaw.power(gamma, gamma), damped=[True, False, True, False],
                         seed=seed, scale=scale)


@pytest.mark.parametrize("backend", BACKENDS)
class TestResolvent:
    def test_zero_operator(self, backend):
        sys0 = AbstractSystem(A1=np.zeros((3, 3)), law=FeedbackLaw.linear(), damped=[False] * 3)
        x = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(resolvent_solve(sys0, 10, 0.0, x, backend), x)

    def test_scalar_linear(self, backend):
        y = resolvent_solve(scalar_linear(), 10, 0.0, [2.0], backend)
        assert y[0] == pytest.approx(2.0 / 1.1, rel=1e-14)
        assert yosida_apply(scalar_linear(), 10, 0.0, [2.0], backend)[0] == pytest.approx(2.0 / 1.1, rel=1e-12)

    def test_random_residual(self, backend):
        s = random_system(4, FeedbackLaw.power(0.5, 0.5), damped=[True, True, False, True], seed=7)
        x = np.random.default_rng(0).standard_normal(4)
        y = resolvent_solve(s, 10, 0.3, x, backend)
        res = y + s.apply(0.3, y) / 10 - x
        assert np.linalg.norm(res) < 1e-12 * (1 + np.linalg.norm(x))

    def test_yosida_identity(self, backend):
        s = nonlinear4()
        rng = np.random.default_rng(4)
        for n in (8.0, 64.0):
            x = rng.standard_normal(4)
            lhs = yosida_apply(s, n, 0.0, x, backend)
            rhs = s.apply(0.0, resolvent_solve(s, n, 0.0, x, backend))
            assert np.linalg.norm(lhs - rhs) < 1e-10
        assert not np.any(yosida_apply(s, 8.0, 0.0, np.zeros(4), backend))

    def test_n_must_exceed_omega(self, backend):
        s = random_system(3, omega=2.0)
        with pytest.raises(UsageError):
            resolvent_solve(s, 1.5, 0.0, np.ones(3), backend)


class TestProperties:
    @given(st.integers(0, 10_000), st.floats(2.0, 200.0))
    def test_resolvent_contraction(self, seed, n):
        s = random_system(4, FeedbackLaw.power(0.5, 2.0), damped=[True, False, True, True], seed=seed)
        rng = np.random.default_rng(seed)
        x, y = rng.standard_normal((2, 4)) * 2
        dx = np.linalg.norm(resolvent_solve(s, n, 0.0, x) - resolvent_solve(s, n, 0.0, y))
        assert dx <= np.linalg.norm(x - y) * (1 + 1e-10)

    @given(st.integers(0, 10_000), st.floats(2.0, 200.0))
    def test_yosida_bound(self, seed, n):
        omega = 0.5
        law = FeedbackLaw.linear(1.0 - omega)        # g(x) = x - omega x
        s = random_system(4, law, damped=[True] * 4, omega=omega, seed=seed)
        x = np.random.default_rng(seed).standard_normal(4)
        lhs = np.linalg.norm(yosida_apply(s, n, 0.0, x))
        assert lhs <= np.linalg.norm(s.apply(0.0, x)) / (1 - omega / n) * (1 + 1e-9)

    def test_quasi_monotone(self):
        assert check_quasi_monotone(nonlinear4())
        s = random_system(4, FeedbackLaw.linear(0.5), damped=[True] * 4, omega=0.5, seed=1)
        assert check_quasi_monotone(s)

    def test_skew_enforced(self):
        with pytest.raises(UsageError):
            AbstractSystem(A1=np.array([[0.0, 1.0], [1.0, 0.0]]), law=FeedbackLaw.linear(), damped=[True, False])


@pytest.mark.parametrize("backend", BACKENDS)
class TestIntegrate:
    def test_zero_data(self, backend):
        tr = integrate_approx(nonlinear4(), 16, np.zeros(4), 1.0, backend=backend)
        assert not np.any(tr.u)

    def test_scalar_closed_form(self, backend):
        n = 10.0
        tr = integrate_approx(scalar_linear(), n, [1.5], 2.0, backend=backend)
        # RK4 truncation with dt = 0.1 / n is ~1e-10 relative here
        np.testing.assert_allclose(tr.u[:, 0], 1.5 * np.exp(-tr.t / (1 + 1 / n)), rtol=1e-8)

    def test_limit_undamped_conserves(self, backend):
        s = random_system(4, FeedbackLaw.linear(0.0), damped=[False] * 4, seed=3)
        a = np.array([1.0, 0.5, -0.3, 2.0])
        tr = integrate_limit(s, a, 5.0, 1e-2, backend=backend)
        np.testing.assert_allclose(tr.norms, np.linalg.norm(a), rtol=1e-10)

    def test_limit_monotone_norm(self, backend):
        tr = integrate_limit(nonlinear4(), np.ones(4), 5.0, 1e-2, backend=backend)
        assert np.all(np.diff(tr.norms) <= 1e-12)


def test_yosida_drift_undamped():
    # A_n is not skew: |u_n| decays at a rate O(|A1|^2 / n), vanishing as n grows
    s = random_system(4, FeedbackLaw.linear(0.0), damped=[False] * 4, seed=3, scale=0.5)
    a = np.ones(4)
    drift = [abs(integrate_approx(s, n, a, 1.0).norms[-1] - 2.0) for n in (16.0, 64.0)]
    assert drift[1] < drift[0] / 2


def test_backends_agree():
    s = nonlinear4(seed=2)
    a = np.array([0.3, -1.0, 0.7, 0.2])
    t1 = integrate_approx(s, 32, a, 1.0, backend="numba")
    t2 = integrate_approx(s, 32, a, 1.0, backend="numpy")
    np.testing.assert_allclose(t1.u, t2.u, atol=1e-12)


class TestConvergence:
    def test_linear_scalar_rate(self):
        st_ = convergence_study(scalar_linear(), [1.0], 3.0, [8, 16, 32, 64])
        # errors between n and 2n shrink like 1/n, so errors^2 like n^-2
        ratios = st_.errors[:-1] / st_.errors[1:]
        np.testing.assert_allclose(ratios, 2.0, rtol=0.1)
        assert st_.slope == pytest.approx(-2.0, abs=0.15)

    def test_undamped_zero_operator(self):
        s = AbstractSystem(A1=np.zeros((2, 2)), law=FeedbackLaw.linear(), damped=[False, False])
        st_ = convergence_study(s, [1.0, 2.0], 1.0, [8, 16, 32])
        assert not np.any(st_.errors)

    def test_nonlinear_slope(self):
        a = np.random.default_rng(1).standard_normal(4)
        st_ = convergence_study(nonlinear4(), a, 2.0, [8, 16, 32, 64, 128])
        assert st_.slope <= -1 + 0.2
        assert np.all(st_.errors ** 2 <= st_.C * (1 / np.array(st_.n_list[:-1]) + 1 / np.array(st_.n_list[1:])) * (1 + 1e-12))
        assert [r[0] for r in st_.to_rows()] == [8, 16, 32, 64]

    def test_bad_n_list(self):
        with pytest.raises(UsageError):
            convergence_study(scalar_linear(), [1.0], 1.0, [16, 8])
