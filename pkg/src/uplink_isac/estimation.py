"""Pilot reception, MMSE channel estimation and the sensing residual.

Everything here is written for stacked arrays: a single coherence block uses
shape (K, N_b) for channel vectors, and Monte Carlo code may prepend any
number of batch axes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularError
from .numerics import cn_standard, hermitian_part, sample_complex_gaussian
from .scenario import ChannelStatistics, SystemConfig


@dataclass(frozen=True)
class ChannelRealization:
    """True channels and their MMSE estimates for one block (arrays of shape (K, N_b))."""

    h: np.ndarray
    g: np.ndarray
    h_hat: np.ndarray
    g_hat: np.ndarray

    @property
    def eps_h(self) -> np.ndarray:
        return self.h - self.h_hat

    @property
    def eps_g(self) -> np.ndarray:
        return self.g - self.g_hat

    @property
    def err(self) -> np.ndarray:
        """e_k = (h_k - h_hat_k) + (g_k - g_hat_k)."""
        return self.eps_h + self.eps_g

    @property
    def z_hat(self) -> np.ndarray:
        return self.h_hat + self.g_hat

    @property
    def z(self) -> np.ndarray:
        return self.h + self.g


@dataclass(frozen=True)
class DerivedCovariances:
    """Second-order statistics of the estimates and the estimation errors, each (K, N_b, N_b).

    ``R_est`` is the covariance of z_hat = h_hat + g_hat, i.e. P T_p R C^{-1} R,
    which includes the h/g cross terms; ``R_err = R - R_est`` is the covariance
    of e = z - z_hat. The per-path blocks are kept for the echo statistics.
    """

    R_h_hat: np.ndarray
    R_g_hat: np.ndarray
    R_eps_h: np.ndarray
    R_eps_g: np.ndarray
    R_est: np.ndarray
    R_err: np.ndarray
    C: np.ndarray


def _c_matrices(p_p, stats: ChannelStatistics, cfg: SystemConfig) -> np.ndarray:
    p_p = np.asarray(p_p, dtype=float)
    eye = np.eye(stats.N_b)
    return (p_p * cfg.T_p)[:, None, None] * stats.R + cfg.sigma2 * eye


def derived_covariances(p_p, stats: ChannelStatistics, cfg: SystemConfig) -> DerivedCovariances:
    p_p = np.asarray(p_p, dtype=float)
    C = _c_matrices(p_p, stats, cfg)
    scale = (p_p * cfg.T_p)[:, None, None]
    off = scale[:, 0, 0] > 0
    R_h_hat = np.zeros_like(stats.R_h)
    R_g_hat = np.zeros_like(stats.R_g)
    R_est = np.zeros_like(stats.R_h)
    if off.any():
        try:
            Xh = np.linalg.solve(C[off], stats.R_h[off])  # C^{-1} R_h
            Xg = np.linalg.solve(C[off], stats.R_g[off])
            X = Xh + Xg
        except np.linalg.LinAlgError as exc:
            raise SingularError(str(exc)) from exc
        R_h_hat[off] = hermitian_part(scale[off] * stats.R_h[off] @ Xh)
        R_g_hat[off] = hermitian_part(scale[off] * stats.R_g[off] @ Xg)
        R_est[off] = hermitian_part(scale[off] * stats.R[off] @ X)
    return DerivedCovariances(
        R_h_hat=R_h_hat,
        R_g_hat=R_g_hat,
        R_eps_h=stats.R_h - R_h_hat,
        R_eps_g=stats.R_g - R_g_hat,
        R_est=R_est,
        R_err=stats.R - R_est,
        C=C,
    )


def estimator_matrices(p_p, stats: ChannelStatistics, cfg: SystemConfig) -> tuple[np.ndarray, np.ndarray]:
    """(W_h, W_g) with h_hat_k = W_h[k] y_p,k and g_hat_k = W_g[k] y_p,k."""
    p_p = np.asarray(p_p, dtype=float)
    C = _c_matrices(p_p, stats, cfg)
    root = np.sqrt(p_p)[:, None, None]
    # W = sqrt(P) R C^{-1} = sqrt(P) (C^{-1} R)^H for Hermitian R, C
    W_h = np.zeros_like(stats.R_h)
    W_g = np.zeros_like(stats.R_g)
    on = p_p > 0
    if on.any():
        try:
            W_h[on] = root[on] * np.conj(np.swapaxes(np.linalg.solve(C[on], stats.R_h[on]), -1, -2))
            W_g[on] = root[on] * np.conj(np.swapaxes(np.linalg.solve(C[on], stats.R_g[on]), -1, -2))
        except np.linalg.LinAlgError as exc:
            raise SingularError(str(exc)) from exc
    return W_h, W_g


def draw_channels(stats: ChannelStatistics, rng: np.random.Generator, size=None) -> tuple[np.ndarray, np.ndarray]:
    """Sample (h, g), each of shape (*size, K, N_b)."""
    batch = () if size is None else tuple(np.atleast_1d(size))
    h = np.stack([sample_complex_gaussian(stats.R_h[k], rng, batch or None) for k in range(stats.K)], axis=-2)
    g = np.stack([sample_complex_gaussian(stats.R_g[k], rng, batch or None) for k in range(stats.K)], axis=-2)
    return h, g


def simulate_pilot_rx(h, g, p_p, pilots, sigma2: float, rng: np.random.Generator):
    """Received pilot block and matched-filter outputs.

    Returns ``(Y_p, y_p)`` with Y_p of shape (*batch, N_b, T_p) and y_p of shape
    (*batch, K, N_b), where ``y_p[..., k, :] = Y_p x_{p,k}^*``.
    """
    h = np.asarray(h)
    g = np.asarray(g)
    pilots = np.asarray(pilots)
    batch = h.shape[:-2]
    n_b = h.shape[-1]
    t_p = pilots.shape[1]
    amp = np.sqrt(np.asarray(p_p, dtype=float))[:, None] * (h + g)  # (*batch, K, N)
    Y = np.einsum("...kn,kt->...nt", amp, pilots)
    if sigma2 > 0:
        Y = Y + np.sqrt(sigma2) * cn_standard(rng, (*batch, n_b, t_p))
    y = np.einsum("...nt,kt->...kn", Y, pilots.conj())
    return Y, y


def mmse_estimate(y_p, p_p, stats: ChannelStatistics, cfg: SystemConfig):
    """MMSE estimates (h_hat, g_hat) from matched-filter outputs of shape (*batch, K, N_b)."""
    W_h, W_g = estimator_matrices(p_p, stats, cfg)
    h_hat = np.einsum("kij,...kj->...ki", W_h, y_p)
    g_hat = np.einsum("kij,...kj->...ki", W_g, y_p)
    return h_hat, g_hat


def realize(stats: ChannelStatistics, p_p, pilots, cfg: SystemConfig, rng: np.random.Generator,
            size=None) -> ChannelRealization:
    """Draw channels, transmit pilots and estimate: one block (or a batch of blocks)."""
    h, g = draw_channels(stats, rng, size)
    _, y = simulate_pilot_rx(h, g, p_p, pilots, cfg.sigma2, rng)
    h_hat, g_hat = mmse_estimate(y, p_p, stats, cfg)
    return ChannelRealization(h=h, g=g, h_hat=h_hat, g_hat=g_hat)


def sensing_residual(realization: ChannelRealization, p_p, p_d, pilots, x_d, u_s, sigma2: float,
                     rng: np.random.Generator, target_present: bool = True, noise=None,
                     error_cov=None) -> np.ndarray:
    """Residual after cancelling the reconstructed direct links, length T_p + T_d.

    Pilot symbol t uses the t-th entries of the users' pilot sequences
    (``pilots[:, t]``); ``x_d`` has shape (*batch, K, T_d). Under the null
    hypothesis the estimated-echo term is absent. ``noise`` may supply the
    (*batch, N_b, T) receiver noise explicitly. Batched realizations give a
    (*batch, T) result.

    By default the estimation error is the realization's own, constant over
    the block. Passing ``error_cov`` (the (K, N_b, N_b) error covariances)
    instead redraws the error independently for every symbol, which is the
    model behind the Gaussian hypothesis test.
    """
    u = np.asarray(u_s)
    x_d = np.asarray(x_d)
    t_p = pilots.shape[1]
    t_d = x_d.shape[-1]
    n_b = u.shape[0]
    batch = realization.h.shape[:-2]
    if error_cov is None:
        mix = realization.err + realization.g_hat if target_present else realization.err
        proj = mix @ u.conj()  # u^H (g_hat_k + e_k) for every k
    else:
        sd = np.sqrt(np.maximum(np.real(np.einsum("a,kab,b->k", u.conj(), error_cov, u)), 0.0))
        proj = sd[:, None] * cn_standard(rng, (*batch, sd.size, t_p + t_d))  # (*batch, K, T)
        if target_present:
            proj = proj + (realization.g_hat @ u.conj())[..., None]
    y = echo_samples(proj, p_p, p_d, pilots, x_d)
    if noise is None:
        shape = (*batch, n_b, t_p + t_d)
        noise = np.sqrt(sigma2) * cn_standard(rng, shape) if sigma2 > 0 else np.zeros(shape, complex)
    return y + u.conj() @ noise


def echo_samples(proj, p_p, p_d, pilots, x_d) -> np.ndarray:
    """sum_k proj_k sqrt(P_k) x_k,t over the pilot then the data phase.

    ``proj`` is (*batch, K) for a block-constant projection or (*batch, K, T)
    for one that changes from symbol to symbol.
    """
    sp = np.sqrt(np.asarray(p_p, dtype=float))
    sd = np.sqrt(np.asarray(p_d, dtype=float))
    proj = np.asarray(proj)
    t_p = pilots.shape[1]
    if proj.ndim >= 2 and proj.shape[-1] == t_p + x_d.shape[-1] and proj.shape[-2] == sp.size:
        y_p = np.einsum("...kt,kt->...t", proj[..., :t_p] * sp[:, None], pilots)
        y_d = np.einsum("...kt,...kt->...t", proj[..., t_p:] * sd[:, None], x_d)
    else:
        y_p = (proj * sp) @ pilots
        y_d = np.einsum("...k,...kt->...t", proj * sd, x_d)
    return np.concatenate([y_p, y_d], axis=-1)
