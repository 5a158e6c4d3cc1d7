"""Closed-form performance functionals: SINRs, rates and detection probability."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutOfDomainError
from .estimation import DerivedCovariances
from .numerics import q_function, q_inverse
from .scenario import ChannelStatistics, SystemConfig


@dataclass(frozen=True)
class RateReport:
    per_user: np.ndarray
    kind: str = "ergodic_lower_bound"

    @property
    def sum(self) -> float:
        return float(np.sum(self.per_user))


@dataclass(frozen=True)
class SensingReport:
    sinr: float
    rho: float
    p_detect: float


def rate_prefactor(cfg: SystemConfig) -> float:
    return cfg.T_d / cfg.T


def cross_traces(dc: DerivedCovariances, stats: ChannelStatistics) -> tuple[np.ndarray, np.ndarray]:
    """(tr(R_est,k), S) where S[k, i] = tr(R_i R_est,k)."""
    R_est = dc.R_est
    tr_est = np.real(np.trace(R_est, axis1=-2, axis2=-1))
    S = np.real(np.einsum("iab,kba->ki", stats.R, R_est))
    return tr_est, S


def uatf_sinrs(p_d, dc: DerivedCovariances, stats: ChannelStatistics, cfg: SystemConfig) -> np.ndarray:
    """Closed-form UaTF SINR of every user under statistical MRC combining."""
    p_d = np.asarray(p_d, dtype=float)
    tr_est, S = cross_traces(dc, stats)
    out = np.zeros(stats.K)
    ok = tr_est > 0
    interf = S[ok] @ p_d / tr_est[ok]
    out[ok] = p_d[ok] * tr_est[ok] / (interf + cfg.sigma2)
    return out


def uatf_sinr(k: int, p_d, dc: DerivedCovariances, stats: ChannelStatistics, cfg: SystemConfig) -> float:
    return float(uatf_sinrs(p_d, dc, stats, cfg)[k])


def rates_from_sinr(sinr, cfg: SystemConfig) -> np.ndarray:
    return rate_prefactor(cfg) * np.log2(1.0 + np.asarray(sinr, dtype=float))


def uatf_sum_rate(p_d, dc: DerivedCovariances, stats: ChannelStatistics, cfg: SystemConfig) -> RateReport:
    return RateReport(rates_from_sinr(uatf_sinrs(p_d, dc, stats, cfg), cfg), "ergodic_lower_bound")


def phase_energies(p_p, p_d, cfg: SystemConfig) -> np.ndarray:
    """Per-user energy over a block, T_p P_p,k + T_d P_d,k."""
    return cfg.T_p * np.asarray(p_p, dtype=float) + cfg.T_d * np.asarray(p_d, dtype=float)


def omega_matrices(p_p, p_d, dc: DerivedCovariances, cfg: SystemConfig) -> tuple[np.ndarray, np.ndarray]:
    e = phase_energies(p_p, p_d, cfg)[:, None, None]
    return np.sum(e * dc.R_g_hat, axis=0), np.sum(e * dc.R_err, axis=0)


def _quad(u, m) -> float:
    return float(np.real(np.vdot(u, m @ u)))


def ergodic_sensing_sinr(p_p, p_d, dc: DerivedCovariances, u_s, cfg: SystemConfig) -> float:
    om1, om2 = omega_matrices(p_p, p_d, dc, cfg)
    u = np.asarray(u_s)
    den = _quad(u, om2) + cfg.T * cfg.sigma2 * float(np.real(np.vdot(u, u)))
    num = _quad(u, om1)
    if num == 0.0:
        return 0.0
    return num / den


def average_rho(p_p, p_d, dc: DerivedCovariances, u_s, cfg: SystemConfig) -> float:
    """tr(R_mu R_eff^{-1}) for the block-diagonal pilot/data covariances."""
    p_p = np.asarray(p_p, dtype=float)
    p_d = np.asarray(p_d, dtype=float)
    u = np.asarray(u_s)
    nn = cfg.sigma2 * float(np.real(np.vdot(u, u)))
    mu_p = _quad(u, np.tensordot(p_p, dc.R_g_hat, axes=1))
    mu_d = _quad(u, np.tensordot(p_d, dc.R_g_hat, axes=1))
    eff_p = _quad(u, np.tensordot(p_p, dc.R_err, axes=1)) + nn
    eff_d = _quad(u, np.tensordot(p_d, dc.R_err, axes=1)) + nn
    return cfg.T_p * mu_p / eff_p + cfg.T_d * mu_d / eff_d


def detection_probability(rho, P_FA: float):
    """Q(Q^{-1}(P_FA) - sqrt(2 rho))."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise OutOfDomainError("rho must be nonnegative")
    return q_function(q_inverse(P_FA) - np.sqrt(2.0 * rho))


def sensing_report(p_p, p_d, dc: DerivedCovariances, u_s, cfg: SystemConfig) -> SensingReport:
    rho = average_rho(p_p, p_d, dc, u_s, cfg)
    return SensingReport(
        sinr=ergodic_sensing_sinr(p_p, p_d, dc, u_s, cfg),
        rho=rho,
        p_detect=float(detection_probability(rho, cfg.P_FA)),
    )


def sinr_threshold_from_pd(P_D_th: float, P_FA: float, T: int) -> float:
    """Sensing-SINR threshold matching a detection-probability target.

    rho_th = (Q^{-1}(P_FA) - Q^{-1}(P_D_th))^2 / 2 and gamma_s,th = rho_th / T.
    The division by T is exact when pilot and data powers coincide and
    approximate otherwise.
    """
    if not 0 < P_FA < P_D_th < 1:
        raise OutOfDomainError("need 0 < P_FA < P_D_th < 1")
    rho_th = 0.5 * (q_inverse(P_FA) - q_inverse(P_D_th)) ** 2
    return rho_th / T


def instantaneous_sinrs(p_d, z_hat, R_err, U, sigma2: float) -> np.ndarray:
    """Instantaneous SINR of every user for combiners U (columns u_k, shape (N_b, K))."""
    p_d = np.asarray(p_d, dtype=float)
    U = np.asarray(U)
    G = np.abs(np.conj(U.T) @ z_hat.T) ** 2  # G[k, m] = |u_k^H z_hat_m|^2
    err = np.real(np.einsum("nk,inm,mk->ki", U.conj(), R_err, U)) @ p_d
    noise = sigma2 * np.real(np.sum(U.conj() * U, axis=0))
    sig = p_d * np.diag(G)
    interf = G @ p_d - sig
    return sig / (interf + err + noise)


def instantaneous_sinr(k: int, p_d, z_hat, R_err, u_k, sigma2: float) -> float:
    p_d = np.asarray(p_d, dtype=float)
    u = np.asarray(u_k)
    proj = np.abs(z_hat @ u.conj()) ** 2
    sig = p_d[k] * proj[k]
    interf = float(p_d @ proj) - sig
    err = sum(p_d[i] * _quad(u, R_err[i]) for i in range(len(p_d)))
    return float(sig / (interf + err + sigma2 * float(np.real(np.vdot(u, u)))))


def instantaneous_rates(p_d, z_hat, R_err, U, cfg: SystemConfig) -> RateReport:
    return RateReport(rates_from_sinr(instantaneous_sinrs(p_d, z_hat, R_err, U, cfg.sigma2), cfg), "instantaneous")


def instantaneous_sensing_sinr(p_p, p_d, g_hat, R_err, u_s, cfg: SystemConfig) -> float:
    e = phase_energies(p_p, p_d, cfg)
    u = np.asarray(u_s)
    num = float(e @ (np.abs(g_hat @ u.conj()) ** 2))
    den = float(sum(e[k] * _quad(u, R_err[k]) for k in range(len(e)))) + cfg.T * cfg.sigma2 * float(np.real(np.vdot(u, u)))
    if num == 0.0:
        return 0.0
    return num / den
