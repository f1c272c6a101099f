import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from decaylab.envelope import (EnvelopeSpec, InverseH, PowerRate, admissible_regimes, as_rate, calibrate_c,
                               check_discrete_recursion, closed_form_rate, envelope_at, envelope_clock,
                               h_eval, p_eval, psi_eval, psi_inverse, solve_comparison_ode)
from decaylab.errors import DomainError, UnsupportedClosedFormError, UsageError
from decaylab.feedback import ConcaveMajorant, FeedbackLaw, concave_majorant_for
from decaylab.modulation import NON_DECREASING, NON_INCREASING, OSCILLATING, ModulationProfile

LINEAR_G = ConcaveMajorant(q=1.0, delta=2.0)


def spec(c=1.0, G=LINEAR_G, E0=1.0, T=1.0, mu=1.0, regime=OSCILLATING, rate=None, alpha0=None):
    return EnvelopeSpec(T=T, mu=mu, c=c, G=G, E0=E0, regime=regime, rate=rate, alpha0=alpha0)


class TestHP:
    def test_h_examples(self):
        assert h_eval(spec(), 0.0) == 0.0
        assert h_eval(spec(), 3.0) == pytest.approx(6.0)
        assert h_eval(spec(c=2.0, G=ConcaveMajorant(q=3.0, delta=4.0)), 1.0) == pytest.approx(4.0)

    def test_p_examples(self):
        assert p_eval(spec(), 0.0) == 0.0
        assert p_eval(spec(), 1.0) == pytest.approx(0.5, rel=1e-14)
        assert p_eval(spec(), 4.0) == pytest.approx(2.0, rel=1e-14)

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            h_eval(spec(), -1.0)
        with pytest.raises(DomainError):
            p_eval(spec(), -1.0)

    @given(st.floats(1.0, 9.0), st.floats(0.05, 20.0), st.floats(1e-12, 1e6))
    def test_p_inverts_h(self, q, c, x):
        r = InverseH(c, ConcaveMajorant(q=q, delta=q + 1))
        assert r(r.h(x)) == pytest.approx(x, rel=1e-12)

    @given(st.floats(1.0, 9.0), st.floats(1e-6, 10.0), st.floats(1e-6, 10.0))
    def test_p_increasing_convex(self, q, a, b):
        r = InverseH(1.0, ConcaveMajorant(q=q, delta=q + 1))
        lo, hi = sorted((a, b))
        assert r(lo) <= r(hi)
        # convexity on the midpoint
        assert r(0.5 * (lo + hi)) <= 0.5 * (r(lo) + r(hi)) * (1 + 1e-12)


class TestPsi:
    def test_examples(self):
        s = spec()
        assert psi_eval(s, 1.0) == 0.0
        assert psi_eval(s, math.exp(-1)) == pytest.approx(2.0, rel=1e-12)
        s2 = spec(rate=PowerRate(1.0, 2.0))
        assert psi_eval(s2, 0.5) == pytest.approx(1.0, rel=1e-12)
        # same example through an explicit p(s) = s / (2c)
        s3 = spec(rate=PowerRate(0.5, 1.0))
        assert psi_eval(s3, math.exp(-1)) == pytest.approx(2.0, rel=1e-12)

    def test_inverse_examples(self):
        assert psi_inverse(spec(), 0.0) == 1.0
        assert psi_inverse(spec(), 2.0) == pytest.approx(math.exp(-1), rel=1e-12)
        assert psi_inverse(spec(rate=PowerRate(1.0, 2.0)), 1.0) == pytest.approx(0.5, rel=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            psi_eval(spec(), 0.0)
        with pytest.raises(DomainError):
            psi_eval(spec(), 2.0)
        with pytest.raises(DomainError):
            psi_inverse(spec(), -1.0)

    def test_closed_unavailable(self):
        s = spec(rate=as_rate(lambda y: np.asarray(y) ** 2))
        with pytest.raises(UnsupportedClosedFormError):
            psi_eval(s, 0.5, method="closed")
        assert psi_eval(s, 0.5) == pytest.approx(1.0, rel=1e-9)

    @given(st.floats(1.0, 7.0), st.floats(0.1, 10.0), st.floats(0.01, 100.0), st.floats(1e-6, 1.0))
    def test_closed_matches_quadrature(self, q, c, E0, frac):
        s = spec(c=c, G=ConcaveMajorant(q=q, delta=q + 1), E0=E0)
        x = E0 * frac
        a = psi_eval(s, x, method="closed")
        b = psi_eval(s, x, method="quadrature")
        assert a == pytest.approx(b, rel=1e-8, abs=1e-10)

    @given(st.floats(1.0, 7.0), st.floats(0.1, 10.0), st.floats(0.01, 100.0), st.floats(1e-8, 1.0))
    def test_roundtrip(self, q, c, E0, frac):
        s = spec(c=c, G=ConcaveMajorant(q=q, delta=q + 1), E0=E0)
        x = E0 * frac
        assert psi_inverse(s, psi_eval(s, x)) == pytest.approx(x, rel=1e-8)

    def test_inverse_paths_agree(self):
        s = spec(c=0.7, G=ConcaveMajorant(q=3.0, delta=4.0), E0=2.0)
        y = np.array([0.0, 0.3, 5.0, 200.0])
        np.testing.assert_allclose(psi_inverse(s, y, method="closed"), psi_inverse(s, y, method="quadrature"),
                                   rtol=1e-8)


class TestEnvelope:
    @pytest.mark.parametrize("regime", [NON_INCREASING, NON_DECREASING, OSCILLATING])
    def test_linear_constant_alpha(self, regime):
        s = spec(regime=regime, alpha0=1.0)
        prof = ModulationProfile.constant(1.0)
        t = np.array([1.0, 2.0, 5.0, 11.0])
        np.testing.assert_allclose(envelope_at(s, prof, t), np.exp(-(t - 1.0) / 2.0), rtol=1e-9)
        assert envelope_at(s, prof, 1.0) == 1.0

    def test_oscillating_alpha0_from_profile(self):
        s = spec(regime=OSCILLATING)
        prof = ModulationProfile.oscillating(2.0, 1.0, 1.0)
        assert envelope_at(s, prof, 3.0) == pytest.approx(math.exp(-1.0), rel=1e-12)

    def test_regime_mismatch(self):
        with pytest.raises(UsageError):
            envelope_clock(spec(regime=NON_DECREASING), ModulationProfile.power_decay(0.5), [2.0])
        assert admissible_regimes(ModulationProfile.constant()) == {NON_INCREASING, NON_DECREASING, OSCILLATING}

    def test_before_T_rejected(self):
        with pytest.raises(UsageError):
            envelope_at(spec(T=2.0), ModulationProfile.constant(), 1.0)

    def test_weighted_clock(self):
        s = spec(T=0.5, regime=NON_DECREASING, G=ConcaveMajorant(q=1.0, delta=2.0))
        prof = ModulationProfile.power_growth(1.0)
        t = np.array([0.5, 3.0])
        # beta(s) = T mu (1 + s - T) / (1 + s)^2 has antiderivative ln(1+s) + T/(1+s)
        F = lambda x: math.log(1 + x) + 0.5 / (1 + x)
        expected = 0.5 * np.array([0.0, F(3.0) - F(0.5)])
        np.testing.assert_allclose(envelope_clock(s, prof, t), expected, rtol=1e-9, atol=1e-14)


class TestComparisonODE:
    def test_linear(self):
        tr = solve_comparison_ode(lambda s: 0.7, PowerRate(1.0, 1.0), 2.0, 10.0)
        np.testing.assert_allclose(tr.S, 2.0 * np.exp(-0.7 * tr.t), rtol=1e-9)

    def test_quadratic(self):
        tr = solve_comparison_ode(lambda s: 0.5, PowerRate(1.0, 2.0), 3.0, 20.0)
        np.testing.assert_allclose(tr.S, 3.0 / (1 + 3.0 * 0.5 * tr.t), rtol=1e-9)

    def test_time_dependent(self):
        tr = solve_comparison_ode(lambda s: 1.0 / (1.0 + s), PowerRate(1.0, 1.0), 1.0, 30.0)
        np.testing.assert_allclose(tr.S, 1.0 / (1.0 + tr.t), rtol=1e-9)

    def test_bad_E0(self):
        with pytest.raises(UsageError):
            solve_comparison_ode(lambda s: 1.0, PowerRate(), 0.0, 1.0)


class TestRecursion:
    def test_equality_sequence(self):
        seq = 2.0 ** -np.arange(8)
        rc = check_discrete_recursion(seq, lambda s: 0.5 * np.ones_like(s), PowerRate(1.0, 1.0), 1.0)
        assert rc.ok and rc.dominated
        np.testing.assert_allclose(rc.margins, 0.0, atol=1e-15)

    def test_constant_sequence_fails(self):
        rc = check_discrete_recursion(np.ones(5), lambda s: np.ones_like(s), PowerRate(1.0, 1.0), 1.0)
        assert not rc.ok

    def test_increasing_sequence(self):
        rc = check_discrete_recursion([1.0, 2.0], lambda s: np.ones_like(s), PowerRate(), 1.0)
        assert not rc.monotone and not rc.ok

    @given(st.floats(0.05, 0.5), st.floats(0.2, 1.0), st.floats(1.0, 4.0), st.floats(0.5, 2.0))
    def test_ode_samples_dominated(self, b, k, r, T):
        beta = lambda s: b * (1.0 + np.asarray(s, float)) ** -0.5
        p = PowerRate(k, r)
        kappa = 1.0
        for _ in range(40):
            tr = solve_comparison_ode(lambda s: kappa * beta(s), p, 1.0, 15 * T, t_eval=np.arange(16) * T)
            rc = check_discrete_recursion(tr.S, beta, p, T)
            if rc.ok:
                break
            kappa *= 1.5
        assert rc.ok and rc.dominated


class TestClosedForm:
    def _spec(self, law, regime, alpha0=None):
        return spec(G=concave_majorant_for(law), regime=regime, T=5.0, mu=0.1, alpha0=alpha0)

    def test_linear_constant_exponential(self):
        law = closed_form_rate(self._spec(FeedbackLaw.linear(), OSCILLATING, 1.0), ModulationProfile.constant())
        assert law.model == "exponential" and law.clock == "t"

    def test_superlinear_power(self):
        law = closed_form_rate(self._spec(FeedbackLaw.power(1.0, 3.0), OSCILLATING, 1.0),
                               ModulationProfile.constant())
        assert law.model == "power" and law.r == pytest.approx(1.0)

    @pytest.mark.parametrize("sigma", [0.25, 0.5, 0.75])
    def test_underdamping_stretched(self, sigma):
        law = closed_form_rate(self._spec(FeedbackLaw.linear(), NON_INCREASING),
                               ModulationProfile.power_decay(sigma))
        assert law.model == "stretched" and law.sigma == pytest.approx(1 - sigma)

    def test_overdamping_power_in_t(self):
        law = closed_form_rate(self._spec(FeedbackLaw.linear(), NON_DECREASING), ModulationProfile.power_growth(1.0))
        assert law.model == "power" and law.clock == "1+t"

    def test_strong_decay_no_rate(self):
        law = closed_form_rate(self._spec(FeedbackLaw.linear(), NON_INCREASING), ModulationProfile.power_decay(2.0))
        assert law.model == "none"


class TestCalibration:
    def _trace(self, rate=1.0, n=2001, t_end=40.0):
        t = np.linspace(0.0, t_end, n)
        return t, 0.5 * np.exp(-rate * t) * (1.0 + 0.3 * np.cos(3 * t) ** 2) / 1.3

    def test_recursion_dominates(self):
        t, E = self._trace()
        s = spec(T=2.0, mu=0.5, E0=float(E[0]), alpha0=1.0)
        prof = ModulationProfile.constant()
        cal = calibrate_c(s, prof, t, E)
        assert cal.ok and np.isfinite(cal.c)
        env = envelope_at(s.with_c(cal.c), prof, t[t >= 4.0])
        assert np.all(env * (1 + 1e-9) >= E[t >= 4.0])

    def test_match2T(self):
        t, E = self._trace()
        s = spec(T=2.0, mu=0.5, E0=float(E[0]), alpha0=1.0)
        prof = ModulationProfile.constant()
        cal = calibrate_c(s, prof, t, E, method="match2T")
        e2 = np.exp(np.interp(4.0, t, np.log(E)))
        assert envelope_at(s.with_c(cal.c), prof, 4.0) == pytest.approx(e2, rel=1e-8)

    def test_flat_trace(self):
        t = np.linspace(0, 20, 201)
        cal = calibrate_c(spec(T=2.0, E0=1.0, alpha0=1.0), ModulationProfile.constant(), t, np.ones_like(t))
        assert not cal.ok and math.isinf(cal.c)

    def test_unknown_method(self):
        t, E = self._trace()
        with pytest.raises(UsageError):
            calibrate_c(spec(E0=float(E[0]), alpha0=1.0), ModulationProfile.constant(), t, E, method="x")
