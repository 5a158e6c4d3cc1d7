"""Long-term power allocation by alternating optimization.

Pilot powers are updated by projected gradient ascent on an augmented
Lagrangian with slack-converted QoS constraints (penalty dual decomposition);
data powers by successive convex approximation, each step a small concave
program solved by :mod:`uplink_isac.cvx`.

Throughout, ``u_s`` is the sensing combiner used by the sensing constraint.
It is held fixed while differentiating with respect to pilot power.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .cvx import LinConstrainedConcaveProblem, solve_linconstrained_concave
from .errors import InfeasibleError, LineSearchFailed, SingularError
from .estimation import DerivedCovariances, derived_covariances
from .metrics import (
    cross_traces,
    ergodic_sensing_sinr,
    omega_matrices,
    rates_from_sinr,
    uatf_sinrs,
)
from .numerics import dominant_generalized_eigvec
from .scenario import ChannelStatistics, SystemConfig

log = logging.getLogger(__name__)

ARMIJO_C = 1e-4
MAX_BACKTRACKS = 50
MAX_OUTER = 200
MAX_PDD_ROUNDS = 30
MAX_INNER = 100
MAX_SCA_STEPS = 50
XI_FLOOR = 1e-8


@dataclass(frozen=True)
class PowerAllocation:
    p_p: np.ndarray
    p_d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p_p", np.asarray(self.p_p, dtype=float).copy())
        object.__setattr__(self, "p_d", np.asarray(self.p_d, dtype=float).copy())

    def energy(self, cfg: SystemConfig) -> np.ndarray:
        return cfg.T_p * self.p_p + cfg.T_d * self.p_d

    def within_budget(self, cfg: SystemConfig, atol: float = 1e-9) -> bool:
        return bool(np.all(self.energy(cfg) <= cfg.P * cfg.T + atol)
                    and np.all(self.p_p >= 0) and np.all(self.p_d >= 0))


@dataclass
class PddState:
    """Multipliers and slacks; index K is the sensing constraint."""

    omega: np.ndarray
    tau: np.ndarray
    xi: float
    delta: float

    @classmethod
    def initial(cls, cfg: SystemConfig) -> "PddState":
        return cls(np.zeros(cfg.K + 1), np.zeros(cfg.K + 1), cfg.xi0, cfg.delta0)

    def copy(self) -> "PddState":
        return PddState(self.omega.copy(), self.tau.copy(), self.xi, self.delta)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    objective: float
    max_residual: float
    xi: float


@dataclass
class PowerResult:
    allocation: PowerAllocation
    trace: list
    u_s: np.ndarray | None
    converged: bool
    feasible: bool
    state: PddState

    @property
    def objective_trace(self) -> np.ndarray:
        return np.array([r.objective for r in self.trace])

    def __iter__(self):
        return iter((self.allocation, self.objective_trace))


def fixed_power_allocation(cfg: SystemConfig) -> PowerAllocation:
    """Equal pilot and data power, min(P, PT/(T_p + T_d)) for everyone."""
    p = min(cfg.P, cfg.P * cfg.T / (cfg.T_p + cfg.T_d))
    return PowerAllocation(np.full(cfg.K, p), np.full(cfg.K, p))


def pilot_cap(p_d, cfg: SystemConfig) -> np.ndarray:
    return np.maximum((cfg.P * cfg.T - cfg.T_d * np.asarray(p_d, dtype=float)) / cfg.T_p, 0.0)


def data_cap(p_p, cfg: SystemConfig) -> np.ndarray:
    return np.maximum((cfg.P * cfg.T - cfg.T_p * np.asarray(p_p, dtype=float)) / cfg.T_d, 0.0)


def statistical_sensing_combiner(p_p, p_d, dc: DerivedCovariances, cfg: SystemConfig) -> np.ndarray:
    """Dominant generalized eigenvector of (Omega1, Omega2 + T sigma^2 I)."""
    om1, om2 = omega_matrices(p_p, p_d, dc, cfg)
    b = om2 + cfg.T * cfg.sigma2 * np.eye(om1.shape[0])
    u, _ = dominant_generalized_eigvec(om1, b)
    return u


# ---------------------------------------------------------------------------
# constraint functionals


def _active(cfg: SystemConfig) -> tuple[np.ndarray, bool]:
    return cfg.R_th_vec > 0, cfg.gamma_s_th > 0


def rates_and_sensing(p_p, p_d, stats: ChannelStatistics, u_s, cfg: SystemConfig):
    dc = derived_covariances(p_p, stats, cfg)
    rates = rates_from_sinr(uatf_sinrs(p_d, dc, stats, cfg), cfg)
    gs = ergodic_sensing_sinr(p_p, p_d, dc, u_s, cfg) if u_s is not None else 0.0
    return rates, gs


def _residuals_from(rates, gs, tau, cfg: SystemConfig) -> np.ndarray:
    on, s_on = _active(cfg)
    r_th = cfg.R_th_vec
    f = np.zeros(cfg.K + 1)
    f[:-1] = np.where(on, 1.0 - rates / np.where(on, r_th, 1.0) + tau[:-1], 0.0)
    if s_on:
        f[-1] = 1.0 - gs / cfg.gamma_s_th + tau[-1]
    return f


def constraint_residuals(p_p, p_d, state: PddState, stats: ChannelStatistics, u_s, cfg: SystemConfig) -> np.ndarray:
    """(f_1..f_K, f_s); constraints whose threshold is <= 0 are disabled and read 0."""
    rates, gs = rates_and_sensing(p_p, p_d, stats, u_s, cfg)
    return _residuals_from(rates, gs, state.tau, cfg)


def max_violation(rates, gs, cfg: SystemConfig) -> float:
    """Largest relative shortfall max(0, 1 - value/threshold) over active constraints."""
    on, s_on = _active(cfg)
    v = [0.0]
    if on.any():
        v.extend(np.maximum(0.0, 1.0 - rates[on] / cfg.R_th_vec[on]))
    if s_on:
        v.append(max(0.0, 1.0 - gs / cfg.gamma_s_th))
    return float(max(v))


def lagrangian_value(p_p, p_d, state: PddState, stats: ChannelStatistics, u_s, cfg: SystemConfig) -> float:
    rates, gs = rates_and_sensing(p_p, p_d, stats, u_s, cfg)
    f = _residuals_from(rates, gs, state.tau, cfg)
    return float(np.sum(rates) - state.omega @ f - (f @ f) / (2.0 * state.xi))


# ---------------------------------------------------------------------------
# analytic gradient


def _rate_gradient(p_p, p_d, dc: DerivedCovariances, stats: ChannelStatistics, cfg: SystemConfig) -> np.ndarray:
    """d R_k / d P_p,k for every k (the rate of user k depends only on its own pilot)."""
    K = stats.K
    p_d = np.asarray(p_d, dtype=float)
    R = stats.R
    X = np.linalg.solve(dc.C, R)  # C^{-1} R
    RX = R @ X  # R C^{-1} R
    d_est = cfg.T_p * RX - (np.asarray(p_p) * cfg.T_p**2)[:, None, None] * (RX @ X)
    tr_est, S = cross_traces(dc, stats)
    tr_d = np.real(np.trace(d_est, axis1=-2, axis2=-1))
    dS = np.real(np.einsum("iab,kba->ki", R, d_est))  # tr(R_i dR_est,k)
    t_D = S @ p_d + cfg.sigma2 * tr_est
    t_N = p_d * tr_est**2 + t_D
    dt_D = dS @ p_d + cfg.sigma2 * tr_d
    dt_N = 2.0 * p_d * tr_est * tr_d + dt_D
    out = np.zeros(K)
    ok = (tr_est > 0) & (t_D > 0)
    out[ok] = dt_N[ok] / t_N[ok] - dt_D[ok] / t_D[ok]
    return cfg.T_d / (cfg.T * math.log(2.0)) * out


def _sensing_parts(p_p, p_d, dc: DerivedCovariances, stats: ChannelStatistics, u_s, cfg: SystemConfig):
    """(t_N, t_D, dt_N, dt_D) of the sensing SINR quotient, derivatives per P_p,k."""
    u = np.asarray(u_s)
    p_p = np.asarray(p_p, dtype=float)
    E = cfg.T_p * p_p + cfg.T_d * np.asarray(p_d, dtype=float)
    Rg = stats.R_g
    R = stats.R
    Ci = np.linalg.inv(dc.C)
    q = lambda M: np.real(np.einsum("a,kab,b->k", u.conj(), M, u))  # noqa: E731
    a = q(dc.R_g_hat)
    b = q(dc.R_err)
    gCg = Rg @ Ci @ Rg
    gCRCg = Rg @ Ci @ R @ Ci @ Rg
    RCRC = R @ Ci @ R @ Ci
    d_ghat = cfg.T_p * q(gCg) - (p_p * cfg.T_p**2) * q(gCRCg)
    d_err = -cfg.sigma2 * cfg.T_p * q(RCRC)
    t_N = float(E @ a)
    t_D = float(E @ b) + cfg.T * cfg.sigma2 * float(np.real(np.vdot(u, u)))
    dt_N = cfg.T_p * a + E * d_ghat
    dt_D = cfg.T_p * b + E * d_err
    return t_N, t_D, dt_N, dt_D


def sensing_gradient(p_p, p_d, stats: ChannelStatistics, u_s, cfg: SystemConfig) -> np.ndarray:
    dc = derived_covariances(p_p, stats, cfg)
    t_N, t_D, dt_N, dt_D = _sensing_parts(p_p, p_d, dc, stats, u_s, cfg)
    return (dt_N * t_D - t_N * dt_D) / t_D**2


def lagrangian_gradient(p_p, p_d, state: PddState, stats: ChannelStatistics, u_s, cfg: SystemConfig) -> np.ndarray:
    """Exact gradient of :func:`lagrangian_value` with respect to the pilot powers."""
    try:
        dc = derived_covariances(p_p, stats, cfg)
        g_rate = _rate_gradient(p_p, p_d, dc, stats, cfg)
    except np.linalg.LinAlgError as exc:
        raise SingularError(str(exc)) from exc
    rates = rates_from_sinr(uatf_sinrs(p_d, dc, stats, cfg), cfg)
    on, s_on = _active(cfg)
    gs = ergodic_sensing_sinr(p_p, p_d, dc, u_s, cfg) if (s_on and u_s is not None) else 0.0
    f = _residuals_from(rates, gs, state.tau, cfg)
    r_th = np.where(on, cfg.R_th_vec, 1.0)
    coef = np.where(on, 1.0 + state.omega[:-1] / r_th + f[:-1] / (r_th * state.xi), 1.0)
    grad = coef * g_rate
    if s_on and u_s is not None:
        t_N, t_D, dt_N, dt_D = _sensing_parts(p_p, p_d, dc, stats, u_s, cfg)
        d_gs = (dt_N * t_D - t_N * dt_D) / t_D**2
        grad = grad + (state.omega[-1] + f[-1] / state.xi) * d_gs / cfg.gamma_s_th
    return grad


# ---------------------------------------------------------------------------
# PDD steps


def pilot_ascent_step(p_p, p_d, state: PddState, stats: ChannelStatistics, u_s, cfg: SystemConfig,
                      grad=None, step0: float | None = None) -> tuple[np.ndarray, float]:
    """One projected Armijo step; returns (new pilot powers, accepted step size).

    The sufficient-increase test is L(p') >= L(p) + c grad^T (p' - p), which
    reduces to c delta ||grad||^2 when the projection is inactive. The trial
    step starts at ``step0`` (default: the state's delta) and halves.
    """
    p_p = np.asarray(p_p, dtype=float)
    lo, hi = np.zeros_like(p_p), pilot_cap(p_d, cfg)
    g = lagrangian_gradient(p_p, p_d, state, stats, u_s, cfg) if grad is None else grad
    if not np.any(g):
        return p_p.copy(), 0.0
    L0 = lagrangian_value(p_p, p_d, state, stats, u_s, cfg)
    step = state.delta if step0 is None else min(step0, state.delta)
    for _ in range(MAX_BACKTRACKS):
        cand = np.clip(p_p + step * g, lo, hi)
        move = cand - p_p
        if not np.any(move):
            return cand, step
        if lagrangian_value(cand, p_d, state, stats, u_s, cfg) >= L0 + ARMIJO_C * float(g @ move):
            return cand, step
        step *= 0.5
    raise LineSearchFailed(f"no sufficient increase after {MAX_BACKTRACKS} halvings")


def update_slacks(rates, gs, state: PddState, cfg: SystemConfig) -> np.ndarray:
    """tau = max(0, value/threshold - 1 - omega xi) for active constraints."""
    on, s_on = _active(cfg)
    tau = np.zeros(cfg.K + 1)
    r_th = np.where(on, cfg.R_th_vec, 1.0)
    tau[:-1] = np.where(on, np.maximum(0.0, rates / r_th - 1.0 - state.omega[:-1] * state.xi), 0.0)
    if s_on:
        tau[-1] = max(0.0, gs / cfg.gamma_s_th - 1.0 - state.omega[-1] * state.xi)
    return tau


def pdd_updates(p_p, p_d, state: PddState, stats: ChannelStatistics, u_s, cfg: SystemConfig) -> PddState:
    """Slack refresh, multiplier ascent omega += f/xi, then the penalty schedule."""
    rates, gs = rates_and_sensing(p_p, p_d, stats, u_s, cfg)
    tau = update_slacks(rates, gs, state, cfg)
    f = _residuals_from(rates, gs, tau, cfg)
    omega = state.omega + f / state.xi
    xi = state.xi / cfg.eta if cfg.penalty_rule == "shrink" else state.xi * cfg.eta
    return PddState(omega, tau, xi, state.delta)


# ---------------------------------------------------------------------------
# data-power SCA


@dataclass(frozen=True)
class ScaModel:
    """Scalar statistics that fix the rate and sensing SINRs as functions of p_d."""

    phi: np.ndarray  # tr(R_est,k)
    vs: np.ndarray  # vs[k, i] = tr(R_i R_est,k) / tr(R_est,k)
    a_s: np.ndarray  # u^H R_ghat,k u
    b_s: np.ndarray  # u^H R_err,k u
    p_p: np.ndarray
    sigma2: float
    pref: float  # T_d / (T ln 2)

    @classmethod
    def build(cls, p_p, stats: ChannelStatistics, u_s, cfg: SystemConfig) -> "ScaModel":
        dc = derived_covariances(p_p, stats, cfg)
        tr_est, S = cross_traces(dc, stats)
        safe = np.where(tr_est > 0, tr_est, 1.0)
        vs = np.where(tr_est[:, None] > 0, S / safe[:, None], 0.0)
        if u_s is not None:
            u = np.asarray(u_s)
            a_s = np.real(np.einsum("a,kab,b->k", u.conj(), dc.R_g_hat, u))
            b_s = np.real(np.einsum("a,kab,b->k", u.conj(), dc.R_err, u))
        else:
            a_s = b_s = np.zeros(stats.K)
        return cls(tr_est, vs, a_s, b_s, np.asarray(p_p, dtype=float), cfg.sigma2, cfg.T_d / (cfg.T * math.log(2.0)))

    def sinrs(self, p_d) -> np.ndarray:
        p_d = np.asarray(p_d, dtype=float)
        return self.phi * p_d / (self.vs @ p_d + self.sigma2)

    def sum_rate(self, p_d) -> float:
        return float(self.pref * math.log(2.0) * np.sum(np.log2(1.0 + self.sinrs(p_d))))

    def sensing_sinr(self, p_d, cfg: SystemConfig) -> float:
        E = cfg.T_p * self.p_p + cfg.T_d * np.asarray(p_d, dtype=float)
        num = float(E @ self.a_s)
        return num / (float(E @ self.b_s) + cfg.T * cfg.sigma2) if num > 0 else 0.0

    def minorant(self, p_prev):
        """Concave surrogate of the sum rate built at ``p_prev``: value, gradient, Hessian callables."""
        p_prev = np.asarray(p_prev, dtype=float)
        D0 = self.vs @ p_prev + self.sigma2
        lin = self.vs / D0[:, None]  # gradient rows of the linearized log(D)
        A = np.diag(self.phi) + self.vs  # numerator coefficients
        c = self.pref

        def value(p):
            N = A @ p + self.sigma2
            return c * float(np.sum(np.log(N) - np.log(D0) - lin @ (p - p_prev)))

        def grad(p):
            N = A @ p + self.sigma2
            return c * (A.T @ (1.0 / N) - lin.sum(axis=0))

        def hess(p):
            N = A @ p + self.sigma2
            return -c * (A.T * (1.0 / N**2)) @ A

        return value, grad, hess


@dataclass
class ScaStep:
    p_d: np.ndarray
    value: float
    relaxed: bool


def _p5_constraints(model: ScaModel, p_prev, p_p, cfg: SystemConfig, scale: float):
    """Rows (A, b) in scaled variables x = p_d / scale, plus whether a threshold was relaxed."""
    K = cfg.K
    rows, rhs = [], []
    # budget: T_d p_d,k <= PT - T_p p_p,k
    rows.append(np.eye(K))
    rhs.append(data_cap(p_p, cfg) / scale)
    relaxed = False
    on, s_on = _active(cfg)
    gamma_prev = model.sinrs(p_prev)
    for k in np.flatnonzero(on & (model.phi > 0)):
        g_th = 2.0 ** (cfg.R_th_vec[k] * cfg.T / cfg.T_d) - 1.0
        if gamma_prev[k] < g_th:
            # unattainable from here: do not let this user get worse
            g_th = gamma_prev[k] * (1.0 - 1e-6)
            relaxed = True
        row = g_th * model.vs[k].copy()
        row[k] -= model.phi[k]
        rows.append(row[None, :])
        rhs.append(np.array([-g_th * model.sigma2 / scale]))
    if s_on and np.any(model.a_s > 0):
        g_th = cfg.gamma_s_th
        gs_prev = model.sensing_sinr(p_prev, cfg)
        if gs_prev < g_th:
            g_th = gs_prev * (1.0 - 1e-6)
            relaxed = True
        row = cfg.T_d * (g_th * model.b_s - model.a_s)
        rhs_s = cfg.T_p * float(p_p @ (model.a_s - g_th * model.b_s)) - g_th * cfg.T * cfg.sigma2
        rows.append(row[None, :])
        rhs.append(np.array([rhs_s / scale]))
    return np.vstack(rows), np.concatenate(rhs), relaxed


def data_power_sca(p_d_prev, p_p, stats: ChannelStatistics, u_s, cfg: SystemConfig, tol: float = 1e-8,
                   model: ScaModel | None = None) -> ScaStep:
    """Solve one convex surrogate problem expanded at ``p_d_prev``.

    Rate and sensing thresholds that the expansion point already misses are
    lowered to its own value, so the expansion point stays feasible and the
    sum rate cannot decrease.
    """
    model = model or ScaModel.build(p_p, stats, u_s, cfg)
    p_prev = np.asarray(p_d_prev, dtype=float)
    scale = cfg.P
    A, b, relaxed = _p5_constraints(model, p_prev, p_p, cfg, scale)
    value, grad, hess = model.minorant(p_prev)
    prob = LinConstrainedConcaveProblem(
        objective=lambda x: (value(scale * x), scale * grad(scale * x)),
        A=A, b=b, hessian=lambda x: scale**2 * hess(scale * x), value_only=lambda x: value(scale * x))
    x_prev = p_prev / scale
    start = x_prev
    for shrink in (1e-6, 1e-4, 1e-3, 1e-2):
        cand = x_prev * (1.0 - shrink)
        if np.all(A @ cand < b) and np.all(cand > 0):
            start = cand
            break
    res = solve_linconstrained_concave(prob, start, tol=tol)
    p_new = np.clip(res.x * scale, 0.0, data_cap(p_p, cfg))
    if model.sum_rate(p_new) < model.sum_rate(p_prev):
        # surrogate solve lost to round-off: keep the incumbent
        p_new = p_prev.copy()
    return ScaStep(p_new, model.sum_rate(p_new), relaxed)


def optimize_data_power(p_d, p_p, stats, u_s, cfg: SystemConfig, tol: float | None = None,
                        max_steps: int = MAX_SCA_STEPS) -> tuple[np.ndarray, bool]:
    """Iterate SCA steps to a fixed point; returns (p_d, any threshold relaxed)."""
    tol = cfg.eps if tol is None else tol
    model = ScaModel.build(p_p, stats, u_s, cfg)
    cur = np.asarray(p_d, dtype=float)
    val = model.sum_rate(cur)
    relaxed = False
    for _ in range(max_steps):
        step = data_power_sca(cur, p_p, stats, u_s, cfg, model=model)
        relaxed |= step.relaxed
        done = abs(step.value - val) <= tol * 1e-2
        cur, val = step.p_d, step.value
        if done:
            break
    return cur, relaxed


# ---------------------------------------------------------------------------
# alternating optimization


def user_rate(k: int, p_pk: float, p_d, stats: ChannelStatistics, cfg: SystemConfig) -> float:
    """Rate bound of user k as a function of its own pilot power only."""
    p = np.zeros(stats.K)
    p[k] = p_pk
    sub = ChannelStatistics(stats.R_h[k:k + 1], stats.R_g[k:k + 1])
    dc = derived_covariances(p[k:k + 1], sub, cfg)
    R_est = dc.R_est[0]
    tr = float(np.real(np.trace(R_est)))
    if tr <= 0:
        return 0.0
    S = np.real(np.einsum("iab,ba->i", stats.R, R_est))
    p_d = np.asarray(p_d, dtype=float)
    sinr = p_d[k] * tr / (S @ p_d / tr + cfg.sigma2)
    return float(rates_from_sinr(sinr, cfg))


def best_user_rate(k: int, p_d, stats: ChannelStatistics, cfg: SystemConfig) -> float:
    """max over P_p,k in [0, cap] of the user-k rate (bounded scalar search)."""
    from scipy.optimize import minimize_scalar

    cap = float(pilot_cap(p_d, cfg)[k])
    if cap <= 0:
        return 0.0
    res = minimize_scalar(lambda x: -user_rate(k, x * cap, p_d, stats, cfg), bounds=(0.0, 1.0),
                          method="bounded", options={"xatol": 1e-8})
    return max(-float(res.fun), user_rate(k, cap, p_d, stats, cfg))


def attainable_config(p_p, p_d, stats: ChannelStatistics, u_s, cfg: SystemConfig) -> SystemConfig:
    """Copy of cfg whose thresholds the pilot stage can actually meet.

    Rate targets are capped at the best rate each user can reach with its own
    pilot power; an unmet sensing target is lowered to the current value so
    the stage never trades it away further.
    """
    on, s_on = _active(cfg)
    r = cfg.R_th_vec.copy()
    for k in np.flatnonzero(on):
        r[k] = min(r[k], best_user_rate(k, p_d, stats, cfg))
    kw = {"R_th": tuple(r)}
    if s_on:
        _, gs = rates_and_sensing(p_p, p_d, stats, u_s, cfg)
        kw["sensing_sinr_th"] = min(cfg.gamma_s_th, gs)
    return cfg.with_(**kw)


def _pilot_stage(p_p, p_d, state: PddState, stats, u_s, cfg: SystemConfig) -> tuple[np.ndarray, PddState]:
    tol_p = cfg.eps * cfg.P
    # slacks start at their closed form so surplus is absorbed from the first step
    rates, gs = rates_and_sensing(p_p, p_d, stats, u_s, cfg)
    state.tau = update_slacks(rates, gs, state, cfg)
    step = state.delta
    for _ in range(MAX_PDD_ROUNDS):
        for _ in range(MAX_INNER):
            try:
                # warm start from twice the last accepted step
                new, taken = pilot_ascent_step(p_p, p_d, state, stats, u_s, cfg, step0=2.0 * step)
                step = taken if taken > 0 else state.delta
            except LineSearchFailed:
                new = p_p
            rates, gs = rates_and_sensing(new, p_d, stats, u_s, cfg)
            state.tau = update_slacks(rates, gs, state, cfg)
            moved = float(np.max(np.abs(new - p_p)))
            p_p = new
            if moved <= tol_p:
                break
        rates, gs = rates_and_sensing(p_p, p_d, stats, u_s, cfg)
        f = _residuals_from(rates, gs, state.tau, cfg)
        if float(np.max(np.abs(f))) <= cfg.eps or state.xi <= XI_FLOOR * cfg.xi0:
            break
        state = pdd_updates(p_p, p_d, state, stats, u_s, cfg)
    return p_p, state


def optimize_power(cfg: SystemConfig, stats: ChannelStatistics, init: PowerAllocation | None = None,
                   strict: bool = False, max_outer: int = MAX_OUTER) -> PowerResult:
    """Alternate the pilot (PDD) and data (SCA) stages until the sum rate settles.

    The statistical sensing combiner is recomputed from the current powers at
    the start of every outer iteration, and the pilot stage works against the
    attainable thresholds of :func:`attainable_config`. An outer iteration
    that would lower the sum rate is rejected and ends the loop.
    ``feasible`` reports whether every active QoS constraint of ``cfg`` holds
    to within 1e-3 relative at the output; with ``strict=True`` a violation
    raises :class:`InfeasibleError`.
    """
    alloc = init or fixed_power_allocation(cfg)
    if not alloc.within_budget(cfg):
        raise InfeasibleError("initial allocation exceeds the energy budget")
    p_p, p_d = alloc.p_p.copy(), alloc.p_d.copy()
    _, s_on = _active(cfg)
    state = PddState.initial(cfg)

    def sensing_u(pp, pd):
        if not s_on:
            return None
        return statistical_sensing_combiner(pp, pd, derived_covariances(pp, stats, cfg), cfg)

    def record(it, pp, pd, u):
        rates, gs = rates_and_sensing(pp, pd, stats, u, cfg)
        return TraceRecord(it, float(np.sum(rates)), max_violation(rates, gs, cfg), state.xi)

    u_s = sensing_u(p_p, p_d)
    trace = [record(0, p_p, p_d, u_s)]
    converged = False
    for it in range(1, max_outer + 1):
        u_new = sensing_u(p_p, p_d)
        work = attainable_config(p_p, p_d, stats, u_new, cfg)
        pp_new, state = _pilot_stage(p_p, p_d, state, stats, u_new, work)
        pd_new, _ = optimize_data_power(p_d, pp_new, stats, u_new, cfg)
        rec = record(it, pp_new, pd_new, u_new)
        if rec.objective < trace[-1].objective:
            # safeguard: keep the incumbent rather than accept a decrease
            converged = True
            break
        p_p, p_d, u_s = pp_new, pd_new, u_new
        trace.append(rec)
        if abs(trace[-1].objective - trace[-2].objective) <= cfg.eps:
            converged = True
            break
    if not converged:
        log.warning("power allocation hit the outer cap of %d iterations", max_outer)
    feasible = trace[-1].max_residual <= 1e-3
    if not feasible:
        msg = f"QoS constraints violated by {trace[-1].max_residual:.3g} (relative) at the output"
        if strict:
            raise InfeasibleError(msg)
        log.info(msg)
    return PowerResult(PowerAllocation(p_p, p_d), trace, u_s, converged, feasible, state)


__all__ = [
    "PddState",
    "PowerAllocation",
    "PowerResult",
    "ScaModel",
    "TraceRecord",
    "constraint_residuals",
    "data_power_sca",
    "fixed_power_allocation",
    "lagrangian_gradient",
    "lagrangian_value",
    "optimize_data_power",
    "optimize_power",
    "pdd_updates",
    "pilot_ascent_step",
]
