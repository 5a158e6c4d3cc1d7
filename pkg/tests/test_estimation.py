import numpy as np
import pytest

from conftest import random_stats
from uplink_isac.estimation import (ChannelRealization, derived_covariances, draw_channels, echo_samples,
                                    mmse_estimate, realize, sensing_residual, simulate_pilot_rx)
from uplink_isac.numerics import cn_standard, make_rng
from uplink_isac.scenario import ChannelStatistics, SystemConfig, dft_pilots


def scalar_case():
    cfg = SystemConfig(K=1, N_b=1, T_p=1, P=1.0, sigma2=1.0)
    st = ChannelStatistics(R_h=np.ones((1, 1, 1), complex), R_g=np.zeros((1, 1, 1), complex))
    return cfg, st


def rel_fro(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestPilotReception:
    def test_noiseless(self, rng):
        st = random_stats(rng, 2, 3)
        h, g = draw_channels(st, rng)
        p = np.array([0.5, 2.0])
        _, y = simulate_pilot_rx(h, g, p, dft_pilots(2, 3), 0.0, rng)
        assert np.allclose(y, np.sqrt(p)[:, None] * 3 * (h + g))

    def test_zero_power_is_filtered_noise(self):
        rng = make_rng(4)
        st = random_stats(rng, 1, 2)
        h, g = draw_channels(st, rng, 50_000)
        _, y = simulate_pilot_rx(h, g, [0.0], dft_pilots(1, 4), 0.3, rng)
        assert np.var(y[..., 0, :], axis=0).mean() == pytest.approx(4 * 0.3, rel=0.03)

    def test_matched_output_covariance(self):
        rng = make_rng(5)
        st = random_stats(rng, 2, 3)
        p, T_p, s2 = np.array([0.7, 1.3]), 3, 0.4
        h, g = draw_channels(st, rng, 100_000)
        _, y = simulate_pilot_rx(h, g, p, dft_pilots(2, T_p), s2, rng)
        for k in range(2):
            emp = np.einsum("ni,nj->ij", y[:, k], y[:, k].conj()) / y.shape[0]
            ref = p[k] * T_p**2 * st.R[k] + T_p * s2 * np.eye(3)
            assert rel_fro(emp, ref) < 0.05


class TestMmse:
    def test_scalar_hand_value(self):
        cfg, st = scalar_case()
        h_hat, g_hat = mmse_estimate(np.array([[0.8 - 0.2j]]), [1.0], st, cfg)
        assert h_hat[0, 0] == pytest.approx((0.8 - 0.2j) / 2)
        assert g_hat[0, 0] == 0

    def test_zero_pilot_power(self, rng):
        cfg = SystemConfig(K=2, N_b=3, P=1.0, sigma2=0.5)
        st = random_stats(rng, 2, 3)
        real = realize(st, [0.0, 0.0], dft_pilots(2, cfg.T_p), cfg, rng, 10)
        assert np.all(real.h_hat == 0) and np.all(real.g_hat == 0)

    def test_decomposition_exact(self, rng):
        cfg = SystemConfig(K=2, N_b=3, P=1.0, sigma2=0.5)
        st = random_stats(rng, 2, 3)
        real = realize(st, [1.0, 0.3], dft_pilots(2, cfg.T_p), cfg, rng, 5)
        # eps = h - h_hat, so the sum reproduces h up to one rounding
        tol = 1e-15 * np.max(np.abs(real.h))
        assert np.allclose(real.h_hat + real.eps_h, real.h, rtol=0, atol=tol)
        assert np.allclose(real.g_hat + real.eps_g, real.g, rtol=0, atol=1e-15 * np.max(np.abs(real.g)))
        assert np.allclose(real.z_hat + real.err, real.z)

    def test_orthogonality_and_error_covariance(self):
        rng = make_rng(9)
        cfg = SystemConfig(K=2, N_b=3, P=1.0, sigma2=0.5)
        st = random_stats(rng, 2, 3)
        p = np.array([0.8, 0.2])
        n = 100_000
        real = realize(st, p, dft_pilots(2, cfg.T_p), cfg, rng, n)
        dc = derived_covariances(p, st, cfg)
        for k in range(2):
            hh, eh = real.h_hat[:, k], real.eps_h[:, k]
            cross = np.einsum("ni,nj->ij", hh, eh.conj()) / n
            scale = np.sqrt(np.trace(dc.R_h_hat[k]).real * np.trace(dc.R_eps_h[k]).real)
            assert np.max(np.abs(cross)) < 3 * scale / np.sqrt(n) * 3
            emp_err = np.einsum("ni,nj->ij", eh, eh.conj()) / n
            assert rel_fro(emp_err, dc.R_eps_h[k]) < 0.05
            emp_est = np.einsum("ni,nj->ij", real.z_hat[:, k], real.z_hat[:, k].conj()) / n
            assert rel_fro(emp_est, dc.R_est[k]) < 0.05


class TestDerivedCovariances:
    def test_scalar(self):
        cfg, st = scalar_case()
        dc = derived_covariances([1.0], st, cfg)
        assert dc.R_est[0, 0, 0].real == pytest.approx(0.5)
        assert dc.R_err[0, 0, 0].real == pytest.approx(0.5)

    def test_no_pilot_energy(self, rng):
        cfg = SystemConfig(K=2, N_b=3, P=1.0, sigma2=0.5)
        st = random_stats(rng, 2, 3)
        dc = derived_covariances([0.0, 1.0], st, cfg)
        assert np.all(dc.R_est[0] == 0)
        assert np.allclose(dc.R_err[0], st.R[0])

    def test_perfect_estimation_limit(self, rng):
        cfg = SystemConfig(K=2, N_b=3, P=1.0, sigma2=0.5)
        st = random_stats(rng, 2, 3)
        dc = derived_covariances([1e9, 1e9], st, cfg)
        for k in range(2):
            assert np.linalg.norm(dc.R_err[k]) < 1e-6 * np.linalg.norm(st.R[k])

    def test_decomposition_and_psd(self, rng):
        cfg = SystemConfig(K=3, N_b=4, P=1.0, sigma2=0.5)
        st = random_stats(rng, 3, 4)
        for p in ([0.1, 1.0, 3.0], [0.0, 0.0, 0.0], [10.0, 0.01, 1.0]):
            dc = derived_covariances(p, st, cfg)
            assert np.linalg.norm(dc.R_est + dc.R_err - st.R) < 1e-10
            for M in (dc.R_est, dc.R_err, dc.R_h_hat, dc.R_g_hat, dc.R_eps_h, dc.R_eps_g):
                w = np.linalg.eigvalsh(M)
                assert np.all(w > -1e-10 * np.max(np.abs(w)) - 1e-14)

    def test_loewner_monotone_diagonal(self):
        cfg = SystemConfig(K=1, N_b=3, P=1.0, sigma2=0.5)
        st = ChannelStatistics(R_h=np.diag([1.0, 0.3, 2.0]).astype(complex)[None],
                               R_g=np.diag([0.2, 0.0, 0.1]).astype(complex)[None])
        prev = None
        for p in np.linspace(0, 5, 30):
            d = np.real(np.diag(derived_covariances([p], st, cfg).R_est[0]))
            if prev is not None:
                assert np.all(d >= prev - 1e-15)
            prev = d


class TestSensingResidual:
    def _setup(self, rng, K=2, N_b=3, n=None):
        cfg = SystemConfig(K=K, N_b=N_b, P=1.0, sigma2=0.5)
        st = random_stats(rng, K, N_b)
        p = np.full(K, 0.8)
        pil = dft_pilots(K, cfg.T_p)
        real = realize(st, p, pil, cfg, rng, n)
        shape = (K, cfg.T_d) if n is None else (n, K, cfg.T_d)
        return cfg, st, p, pil, real, cn_standard(rng, shape)

    def test_perfect_noiseless_null(self, rng):
        cfg, st, p, pil, real, x_d = self._setup(rng)
        perfect = ChannelRealization(real.h, real.g, real.h, real.g)
        u = np.ones(3) / np.sqrt(3)
        y = sensing_residual(perfect, p, p, pil, x_d, u, 0.0, rng, target_present=False)
        assert y.shape == (cfg.T,)
        assert np.all(y == 0)

    def test_null_combiner(self, rng):
        cfg, st, p, pil, real, x_d = self._setup(rng)
        y = sensing_residual(real, p, p, pil, x_d, np.zeros(3), 0.5, rng)
        assert np.all(y == 0)

    def test_h1_is_echo_plus_h0(self, rng):
        cfg, st, p, pil, real, x_d = self._setup(rng)
        u = np.array([1.0, 1j, 0.5]) / 1.5
        noise = cn_standard(rng, (3, cfg.T))
        y1 = sensing_residual(real, p, p, pil, x_d, u, 0.5, rng, True, noise)
        y0 = sensing_residual(real, p, p, pil, x_d, u, 0.5, rng, False, noise)
        mu = echo_samples(real.g_hat @ u.conj(), p, p, pil, x_d)
        assert np.allclose(y1 - y0, mu)

    def test_null_variance_pilot_phase(self):
        rng = make_rng(21)
        n = 100_000
        cfg, st, p, pil, real, x_d = self._setup(rng, n=n)
        u = np.array([1.0, -1j, 0.5])
        u = u / np.linalg.norm(u)
        y = sensing_residual(real, p, p, pil, x_d, u, cfg.sigma2, rng, target_present=False)
        dc = derived_covariances(p, st, cfg)
        ref = np.real(np.vdot(u, np.tensordot(p, dc.R_err, 1) @ u)) + cfg.sigma2
        assert np.mean(np.abs(y[:, : cfg.T_p]) ** 2) == pytest.approx(ref, rel=0.05)
        assert np.mean(np.abs(y[:, cfg.T_p:]) ** 2) == pytest.approx(ref, rel=0.05)

    def test_symbolwise_error_variance(self):
        rng = make_rng(22)
        n = 50_000
        cfg, st, p, pil, real, x_d = self._setup(rng, n=n)
        u = np.ones(3) / np.sqrt(3)
        dc = derived_covariances(p, st, cfg)
        y = sensing_residual(real, p, p, pil, x_d, u, cfg.sigma2, rng, False, error_cov=dc.R_err)
        ref = np.real(np.vdot(u, np.tensordot(p, dc.R_err, 1) @ u)) + cfg.sigma2
        assert np.mean(np.abs(y) ** 2) == pytest.approx(ref, rel=0.03)
        # symbols decorrelate once the error is redrawn
        c = np.mean(y[:, 0] * np.conj(y[:, 1]))
        assert abs(c) < 0.02 * ref

    def test_batch_matches_single(self, rng):
        cfg, st, p, pil, real, x_d = self._setup(rng, n=3)
        u = np.ones(3) / np.sqrt(3)
        noise = cn_standard(rng, (3, 3, cfg.T))
        yb = sensing_residual(real, p, p, pil, x_d, u, 0.5, rng, True, noise)
        one = ChannelRealization(real.h[1], real.g[1], real.h_hat[1], real.g_hat[1])
        ys = sensing_residual(one, p, p, pil, x_d[1], u, 0.5, rng, True, noise[1])
        assert np.allclose(yb[1], ys)
