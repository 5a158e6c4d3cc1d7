import math

import numpy as np
import pytest

from conftest import random_stats
from oracles import mc_uatf_sinr
from uplink_isac.errors import OutOfDomainError
from uplink_isac.estimation import derived_covariances, realize
from uplink_isac.metrics import (average_rho, detection_probability, ergodic_sensing_sinr,
                                 instantaneous_rates, instantaneous_sensing_sinr, instantaneous_sinr,
                                 instantaneous_sinrs, omega_matrices, rates_from_sinr, sensing_report,
                                 sinr_threshold_from_pd, uatf_sinr, uatf_sinrs, uatf_sum_rate)
from uplink_isac.numerics import make_rng, q_inverse
from uplink_isac.scenario import ChannelStatistics, SystemConfig, dft_pilots


def scalar():
    cfg = SystemConfig(K=1, N_b=1, T_p=1, P=1.0, sigma2=1.0)
    st = ChannelStatistics(R_h=np.ones((1, 1, 1), complex), R_g=np.zeros((1, 1, 1), complex))
    return cfg, st


class TestUatf:
    def test_scalar_value(self):
        cfg, st = scalar()
        dc = derived_covariances([1.0], st, cfg)
        assert uatf_sinr(0, [1.0], dc, st, cfg) == pytest.approx(0.25)

    def test_zero_data_power(self, unit_case):
        cfg, st = unit_case
        dc = derived_covariances(np.ones(3), st, cfg)
        g = uatf_sinrs([0.0, 1.0, 1.0], dc, st, cfg)
        assert g[0] == 0 and g[1] > 0

    def test_zero_estimate_energy(self, unit_case):
        cfg, st = unit_case
        dc = derived_covariances([0.0, 1.0, 1.0], st, cfg)
        assert uatf_sinrs(np.ones(3), dc, st, cfg)[0] == 0.0

    def test_rate_prefactor(self):
        cfg = SystemConfig(T_p=99)
        assert rates_from_sinr(1.0, cfg) == pytest.approx(1 / 100)
        assert rates_from_sinr(1.0, SystemConfig()) == pytest.approx(0.95)

    def test_sum_rate_report(self, unit_case):
        cfg, st = unit_case
        dc = derived_covariances(np.ones(3), st, cfg)
        rep = uatf_sum_rate(np.ones(3), dc, st, cfg)
        assert rep.sum == pytest.approx(rep.per_user.sum())
        assert rep.kind == "ergodic_lower_bound" and np.all(rep.per_user >= 0)
        assert uatf_sum_rate(np.zeros(3), dc, st, cfg).sum == 0

    def test_monte_carlo_oracle(self):
        rng = make_rng(31)
        cfg = SystemConfig(K=2, N_b=4, P=1.0, sigma2=0.5)
        st = random_stats(rng, 2, 4)
        p_p, p_d = np.array([0.6, 1.2]), np.array([1.0, 0.7])
        dc = derived_covariances(p_p, st, cfg)
        closed = uatf_sinrs(p_d, dc, st, cfg)
        mc = mc_uatf_sinr(st, p_p, p_d, cfg, rng, 200_000)
        assert np.all(np.abs(mc - closed) / closed < 0.02)

    def test_mrc_normalizer_expectation(self):
        rng = make_rng(32)
        cfg = SystemConfig(K=2, N_b=3, P=1.0, sigma2=0.5)
        st = random_stats(rng, 2, 3)
        p = np.array([1.0, 0.5])
        dc = derived_covariances(p, st, cfg)
        real = realize(st, p, dft_pilots(2, cfg.T_p), cfg, rng, 100_000)
        emp = np.mean(np.sum(np.abs(real.z_hat) ** 2, axis=-1), axis=0)
        assert np.allclose(emp, np.trace(dc.R_est, axis1=1, axis2=2).real, rtol=0.02)


class TestSensing:
    def _omegas(self, unit_case):
        cfg, st = unit_case
        p = np.array([0.5, 1.0, 2.0])
        return cfg, st, p, derived_covariances(p, st, cfg)

    def test_zero_power(self, unit_case):
        cfg, st = unit_case
        dc = derived_covariances(np.ones(3), st, cfg)
        assert ergodic_sensing_sinr(np.zeros(3), np.zeros(3), dc, np.ones(4), cfg) == 0.0

    def test_scale_invariance(self, unit_case, rng):
        cfg, st, p, dc = self._omegas(unit_case)
        u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        c = 3.0 - 2.0j
        assert ergodic_sensing_sinr(p, p, dc, c * u, cfg) == pytest.approx(ergodic_sensing_sinr(p, p, dc, u, cfg))

    def test_diagonal_hand_case(self):
        cfg = SystemConfig(K=1, N_b=2, T=10, T_p=2, P=1.0, sigma2=0.1)
        # Omega1 = (T_p + T_d) * 1 * R_g_hat = diag(2, 0) needs R_g_hat = diag(0.2, 0)
        class DC:
            R_g_hat = np.diag([0.2, 0.0]).astype(complex)[None]
            R_err = np.zeros((1, 2, 2), complex)
        om1, om2 = omega_matrices([1.0], [1.0], DC, cfg)
        assert np.allclose(om1, np.diag([2.0, 0.0]))
        # T sigma^2 = 1
        assert ergodic_sensing_sinr([1.0], [1.0], DC, np.array([1.0, 0.0]), cfg) == pytest.approx(2.0)

    def test_rho_equals_T_gamma_for_equal_powers(self, unit_case, rng):
        cfg, st, p, dc = self._omegas(unit_case)
        u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        rho = average_rho(p, p, dc, u, cfg)
        assert rho == pytest.approx(cfg.T * ergodic_sensing_sinr(p, p, dc, u, cfg), rel=1e-12)

    def test_joint_power_noise_scaling(self, rng):
        # scaling every power and the noise by c leaves the SINR unchanged
        st = random_stats(rng, 2, 3)
        p = np.array([0.5, 1.5])
        u = np.ones(3)
        vals = []
        for c in (1.0, 7.0):
            cfg = SystemConfig(K=2, N_b=3, P=c, sigma2=0.3 * c)
            vals.append(ergodic_sensing_sinr(c * p, c * p, derived_covariances(c * p, st, cfg), u, cfg))
        assert vals[1] == pytest.approx(vals[0], rel=1e-9)

    def test_report(self, unit_case):
        cfg, st, p, dc = self._omegas(unit_case)
        rep = sensing_report(p, p, dc, np.ones(4), cfg)
        assert rep.p_detect == pytest.approx(detection_probability(rep.rho, cfg.P_FA))


class TestDetection:
    def test_no_signal(self):
        assert detection_probability(0.0, 1e-5) == pytest.approx(1e-5, rel=1e-10)

    def test_strong_signal(self):
        assert detection_probability(200.0, 1e-5) > 1 - 1e-12

    def test_reference_point(self):
        # rho = (4.2649 + 2.3263)^2 / 2 = 21.72
        assert detection_probability(21.72, 1e-5) == pytest.approx(0.99, abs=2e-4)

    def test_monotone(self):
        rho = np.linspace(0, 50, 200)
        assert np.all(np.diff(detection_probability(rho, 1e-5)) >= 0)
        pfa = np.logspace(-8, -1, 50)
        assert np.all(np.diff([detection_probability(5.0, a) for a in pfa]) >= 0)

    def test_negative_rho(self):
        with pytest.raises(OutOfDomainError):
            detection_probability(-1.0, 1e-5)

    def test_threshold_mapping(self):
        g = sinr_threshold_from_pd(0.99, 1e-5, 100)
        assert g == pytest.approx(0.2172, abs=1e-4)
        assert detection_probability(100 * g, 1e-5) == pytest.approx(0.99, abs=1e-10)
        rho_th = 0.5 * (q_inverse(1e-5) - q_inverse(0.99)) ** 2
        assert g * 100 == pytest.approx(rho_th)

    def test_threshold_limit(self):
        assert sinr_threshold_from_pd(1e-5 * (1 + 1e-9), 1e-5, 100) < 1e-12

    def test_threshold_domain(self):
        with pytest.raises(OutOfDomainError):
            sinr_threshold_from_pd(1e-6, 1e-5, 100)


class TestInstantaneous:
    def test_single_user_matched_filter(self, rng):
        zh = rng.standard_normal((1, 4)) + 1j * rng.standard_normal((1, 4))
        u = zh[0] / np.linalg.norm(zh[0])
        g = instantaneous_sinr(0, [2.0], zh, np.zeros((1, 4, 4)), u, 1.0)
        assert g == pytest.approx(2.0 * np.linalg.norm(zh) ** 2)

    def test_vectorized_matches_term_by_term(self, rng, unit_case):
        cfg, st = unit_case
        p = np.array([0.4, 1.0, 2.0])
        dc = derived_covariances(p, st, cfg)
        zh = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
        U = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        vec = instantaneous_sinrs(p, zh, dc.R_err, U, cfg.sigma2)
        for k in range(3):
            u = U[:, k]
            sig = p[k] * abs(np.vdot(u, zh[k])) ** 2
            intf = sum(p[m] * abs(np.vdot(u, zh[m])) ** 2 for m in range(3) if m != k)
            err = sum(p[i] * np.vdot(u, dc.R_err[i] @ u).real for i in range(3))
            ref = sig / (intf + err + cfg.sigma2 * np.vdot(u, u).real)
            assert vec[k] == pytest.approx(ref, rel=1e-12)
            assert instantaneous_sinr(k, p, zh, dc.R_err, u, cfg.sigma2) == pytest.approx(ref, rel=1e-12)

    def test_scale_invariance(self, rng, unit_case):
        cfg, st = unit_case
        dc = derived_covariances(np.ones(3), st, cfg)
        zh = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
        U = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        a = instantaneous_sinrs(np.ones(3), zh, dc.R_err, U, cfg.sigma2)
        b = instantaneous_sinrs(np.ones(3), zh, dc.R_err, U * np.array([2.0, 1j, -0.3]), cfg.sigma2)
        assert np.allclose(a, b, rtol=1e-12)
        rep = instantaneous_rates(np.ones(3), zh, dc.R_err, U, cfg)
        assert rep.kind == "instantaneous"

    def test_sensing_sinr(self, rng):
        cfg = SystemConfig(K=1, N_b=2, T=10, T_p=2, P=1.0, sigma2=0.1)
        gh = np.array([[math.sqrt(0.2), 0.0]])
        val = instantaneous_sensing_sinr([1.0], [1.0], gh, np.zeros((1, 2, 2)), np.array([1.0, 0.0]), cfg)
        assert val == pytest.approx(2.0)
        assert instantaneous_sensing_sinr([0.0], [0.0], gh, np.zeros((1, 2, 2)), np.array([1.0, 0.0]), cfg) == 0.0
        u = np.array([0.3, 1j])
        a = instantaneous_sensing_sinr([1.0], [2.0], gh, np.zeros((1, 2, 2)), u, cfg)
        assert instantaneous_sensing_sinr([1.0], [2.0], gh, np.zeros((1, 2, 2)), 5 * u, cfg) == pytest.approx(a)
