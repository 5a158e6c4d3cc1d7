"""Receive combiners: statistical MRC, ZF/MRC baselines, the EVD sensing combiner
and the SCA-optimized communication combiners.

Combiner matrices are (N_b, K) with column k serving user k; channel
estimates are stacked row-wise as (K, N_b), matching :mod:`estimation`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .cvx import UnitBallQcqp, solve_unit_ball_qcqp
from .errors import DegenerateChannelError, InfeasibleError, RankDeficientError
from .estimation import DerivedCovariances
from .metrics import instantaneous_sinrs, rates_from_sinr
from .numerics import dominant_generalized_eigvec, hermitian_part
from .scenario import SystemConfig

log = logging.getLogger(__name__)

ZF_MAX_COND = 1e12
MAX_SCA_ITERS = 100


@dataclass(frozen=True)
class BeamformerSet:
    u_comm: np.ndarray  # (N_b, K), unit-norm columns
    u_sense: np.ndarray | None
    stage: str = "instantaneous"

    def __post_init__(self):
        norms = np.linalg.norm(self.u_comm, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-8):
            raise ValueError("communication combiners must have unit norm")
        if self.u_sense is not None and abs(np.linalg.norm(self.u_sense) - 1.0) > 1e-8:
            raise ValueError("sensing combiner must have unit norm")


def _unit_columns(U: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(U, axis=0)
    if np.any(norms == 0):
        raise DegenerateChannelError("zero combiner")
    return U / norms


def mrc_statistical(dc: DerivedCovariances) -> np.ndarray:
    """Per-user normalizer tr(R_est,k) = E{||z_hat_k||^2} of the statistical MRC combiner."""
    tr = np.real(np.trace(dc.R_est, axis1=-2, axis2=-1))
    if np.any(tr <= 0):
        raise DegenerateChannelError("a user has no channel-estimate energy (tr R_est = 0)")
    return tr


def mrc_instantaneous(z_hat: np.ndarray) -> np.ndarray:
    """u_k = z_hat_k / ||z_hat_k||."""
    z_hat = np.asarray(z_hat)
    if np.any(np.linalg.norm(z_hat, axis=1) == 0):
        raise DegenerateChannelError("zero channel estimate")
    return _unit_columns(z_hat.T.copy())


def zf_instantaneous(z_hat: np.ndarray) -> np.ndarray:
    """Columns of Z (Z^H Z)^{-1}, normalized; Z = [z_hat_1 .. z_hat_K]."""
    Z = np.asarray(z_hat).T
    n_b, K = Z.shape
    if K > n_b:
        raise RankDeficientError(f"zero forcing needs K <= N_b (K={K}, N_b={n_b})")
    G = Z.conj().T @ Z
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > ZF_MAX_COND:
        raise RankDeficientError(f"Gram matrix condition number {cond:.3g} exceeds {ZF_MAX_COND:.0e}")
    return _unit_columns(Z @ np.linalg.inv(G))


def sensing_evd(omega1: np.ndarray, omega2: np.ndarray, T: int, sigma2: float) -> np.ndarray:
    """Unit-norm maximizer of u^H Omega1 u / u^H (Omega2 + T sigma^2 I) u."""
    b = np.asarray(omega2) + T * sigma2 * np.eye(omega1.shape[0])
    u, _ = dominant_generalized_eigvec(omega1, b)
    return u


def instantaneous_sensing_combiner(p_p, p_d, g_hat, dc: DerivedCovariances, cfg: SystemConfig) -> np.ndarray:
    """EVD combiner built from the estimated echo channels and the error covariances."""
    e = cfg.T_p * np.asarray(p_p, dtype=float) + cfg.T_d * np.asarray(p_d, dtype=float)
    om1 = np.einsum("k,ka,kb->ab", e, g_hat, g_hat.conj())
    om2 = np.sum(e[:, None, None] * dc.R_err, axis=0)
    return sensing_evd(hermitian_part(om1), om2, cfg.T, cfg.sigma2)


# ---------------------------------------------------------------------------
# SCA minorant and Algorithm-2 style iterations


@dataclass(frozen=True)
class QuadMinorant:
    """R~(u) = c0 + 2 Re{b0^H u} - u^H A0 u."""

    c0: float
    b0: np.ndarray
    A0: np.ndarray

    def __call__(self, u) -> float:
        u = np.asarray(u)
        return float(self.c0 + 2.0 * np.real(np.vdot(self.b0, u)) - np.real(np.vdot(u, self.A0 @ u)))


def _total_covariance(p_d, z_hat, R_err, sigma2: float) -> np.ndarray:
    """sum_m P_m z_m z_m^H + sum_i P_i R_err,i + sigma^2 I."""
    p_d = np.asarray(p_d, dtype=float)
    n = z_hat.shape[1]
    M = np.einsum("m,ma,mb->ab", p_d, z_hat, z_hat.conj())
    M = M + np.tensordot(p_d, R_err, axes=1) + sigma2 * np.eye(n)
    return hermitian_part(M)


def sca_minorant(k: int, u_prev, p_d, z_hat, R_err, cfg: SystemConfig, total=None) -> QuadMinorant:
    """Concave quadratic minorant of R_k(u) that is tight at ``u_prev``."""
    p_d = np.asarray(p_d, dtype=float)
    u = np.asarray(u_prev)
    M = _total_covariance(p_d, z_hat, R_err, cfg.sigma2) if total is None else total
    x = complex(np.vdot(u, z_hat[k]))
    sig = p_d[k] * abs(x) ** 2
    y = float(np.real(np.vdot(u, M @ u))) - sig
    if y <= 0:
        raise DegenerateChannelError("interference-plus-noise at the expansion point is not positive")
    s = sig / y
    a = sig / (y * (sig + y))
    pref = cfg.T_d / (cfg.T * math.log(2.0))
    return QuadMinorant(
        c0=pref * (math.log1p(s) - s),
        b0=pref * (p_d[k] / y) * np.conj(x) * z_hat[k],
        A0=pref * a * M,
    )


def best_single_user_rate(k: int, p_d, z_hat, R_err, cfg: SystemConfig, total=None) -> float:
    """Rate of user k under its MMSE (max-SINR) combiner."""
    p_d = np.asarray(p_d, dtype=float)
    M = _total_covariance(p_d, z_hat, R_err, cfg.sigma2) if total is None else total
    Q = M - p_d[k] * np.outer(z_hat[k], z_hat[k].conj())
    sinr = p_d[k] * float(np.real(np.vdot(z_hat[k], np.linalg.solve(Q, z_hat[k]))))
    return float(rates_from_sinr(sinr, cfg))


@dataclass
class CombinerResult:
    beamformers: BeamformerSet
    trace: list
    converged: bool
    softened: list = field(default_factory=list)
    final_norms: np.ndarray | None = None
    warm_start: str = "zf"

    @property
    def sum_rate(self) -> float:
        return self.trace[-1]


def warm_start(z_hat) -> tuple[np.ndarray, str]:
    """ZF when it is well defined and well conditioned, otherwise MRC."""
    try:
        return zf_instantaneous(z_hat), "zf"
    except RankDeficientError:
        return mrc_instantaneous(z_hat), "mrc"


def optimize_combiners(z_hat, R_err, p_d, cfg: SystemConfig, u_init=None, u_sense=None,
                       max_iter: int = MAX_SCA_ITERS, tol: float | None = None) -> CombinerResult:
    """Successive convex approximation of the instantaneous sum rate over U.

    Each round builds the minorant of every user's rate at the current
    (unit-norm) combiner, solves the per-user regularized ball QCQP and
    renormalizes. A user keeps its previous combiner if the new one would
    lower its rate; as R_k depends on u_k alone, the sum-rate trace is then
    non-decreasing. A rate target above the current value is softened to
    that value (logged when the target exceeds the best achievable rate).
    """
    tol = cfg.eps if tol is None else tol
    z_hat = np.asarray(z_hat)
    K, n_b = z_hat.shape
    p_d = np.asarray(p_d, dtype=float)
    if u_init is None:
        U, start = warm_start(z_hat)
    else:
        U, start = _unit_columns(np.asarray(u_init, dtype=complex).copy()), "given"
    M = _total_covariance(p_d, z_hat, R_err, cfg.sigma2)
    r_th = cfg.R_th_vec
    softened = []
    for k in range(K):
        if r_th[k] > 0 and best_single_user_rate(k, p_d, z_hat, R_err, cfg, M) < r_th[k]:
            softened.append(k)
            log.info("user %d: rate target %.3g exceeds the best achievable rate", k, r_th[k])

    def rates(Um):
        return rates_from_sinr(instantaneous_sinrs(p_d, z_hat, R_err, Um, cfg.sigma2), cfg)

    cur = rates(U)
    trace = [float(np.sum(cur))]
    norms = np.ones(K)
    converged = False
    for _ in range(max_iter):
        new_U = U.copy()
        for k in range(K):
            if p_d[k] <= 0:
                continue
            mk = sca_minorant(k, U[:, k], p_d, z_hat, R_err, cfg, M)
            if r_th[k] > 0:
                r = min(r_th[k], cur[k])
                prob = UnitBallQcqp(mk.c0, mk.b0, mk.A0 + cfg.wp * np.eye(n_b), mk.c0, mk.b0, mk.A0, r=r)
            else:
                prob = UnitBallQcqp(mk.c0, mk.b0, mk.A0 + cfg.wp * np.eye(n_b))
            try:
                res = solve_unit_ball_qcqp(prob, U[:, k])
            except InfeasibleError:
                continue
            nrm = float(np.linalg.norm(res.x))
            if nrm == 0:
                continue
            norms[k] = nrm
            new_U[:, k] = res.x / nrm
        new_rates = rates(new_U)
        keep = new_rates < cur
        new_U[:, keep] = U[:, keep]
        new_rates[keep] = cur[keep]
        U, cur = new_U, new_rates
        trace.append(float(np.sum(cur)))
        if abs(trace[-1] - trace[-2]) <= tol:
            converged = True
            break
    return CombinerResult(BeamformerSet(U, u_sense), trace, converged, softened, norms, start)
