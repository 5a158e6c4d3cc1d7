"""Physical scenario: configuration, geometry, path loss and channel covariances."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import ConfigError, PilotShortageError


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(w: float) -> float:
    return 10.0 * math.log10(w) + 30.0


@dataclass(frozen=True)
class SystemConfig:
    """Scalar system parameters, stored in linear units.

    ``P`` is the per-user power budget in watts and ``sigma2`` the noise power
    per symbol in watts; build from dBm with :meth:`from_dbm`. ``R_th`` may be a
    scalar (same threshold for every user) or a length-K sequence.
    ``penalty_rule`` selects the penalty-parameter schedule: ``"shrink"``
    divides xi by eta every dual update (the penalty weight 1/xi grows);
    ``"literal"`` multiplies it by eta. ``sensing_sinr_th`` overrides the
    sensing-SINR threshold otherwise derived from ``P_D_th``.
    """

    K: int = 4
    N_b: int = 6
    T: int = 100
    T_p: int | None = None
    P: float = dbm_to_watts(10.0)
    sigma2: float = dbm_to_watts(-70.0)
    P_FA: float = 1e-5
    P_D_th: float = 0.99
    R_th: float | tuple = 1.0
    eps: float = 1e-3
    xi0: float = 1.0
    delta0: float = 1.0
    eta: float = 1.5
    wp: float = 1e-2
    penalty_rule: str = "shrink"
    sensing_constraint: bool = True
    sensing_sinr_th: float | None = None

    def __post_init__(self):
        if self.T_p is None:
            object.__setattr__(self, "T_p", self.K + 1)
        if not isinstance(self.R_th, (int, float)):
            object.__setattr__(self, "R_th", tuple(float(r) for r in self.R_th))
        if self.K < 1 or self.N_b < 1:
            raise ConfigError("K and N_b must be positive")
        if not 0 < self.T_p < self.T:
            raise ConfigError(f"need 0 < T_p < T, got T_p={self.T_p}, T={self.T}")
        if self.P <= 0:
            raise ConfigError("power budget must be positive")
        if self.sigma2 < 0:
            raise ConfigError("noise power must be nonnegative")
        if not 0 < self.P_FA < self.P_D_th < 1:
            raise ConfigError("need 0 < P_FA < P_D_th < 1")
        if isinstance(self.R_th, tuple) and len(self.R_th) != self.K:
            raise ConfigError("R_th needs one entry per user")
        if self.penalty_rule not in ("shrink", "literal"):
            raise ConfigError(f"unknown penalty_rule {self.penalty_rule!r}")

    @classmethod
    def from_dbm(cls, P_dbm: float = 10.0, sigma2_dbm: float = -70.0, **kw) -> "SystemConfig":
        return cls(P=dbm_to_watts(P_dbm), sigma2=dbm_to_watts(sigma2_dbm), **kw)

    @property
    def T_d(self) -> int:
        return self.T - self.T_p

    @property
    def R_th_vec(self) -> np.ndarray:
        if isinstance(self.R_th, tuple):
            return np.array(self.R_th, dtype=float)
        return np.full(self.K, float(self.R_th))

    @cached_property
    def gamma_s_th(self) -> float:
        if not self.sensing_constraint:
            return 0.0
        if self.sensing_sinr_th is not None:
            return float(self.sensing_sinr_th)
        from .metrics import sinr_threshold_from_pd

        return sinr_threshold_from_pd(self.P_D_th, self.P_FA, self.T)

    def with_(self, **kw) -> "SystemConfig":
        if "K" in kw and "T_p" not in kw and self.T_p == self.K + 1:
            kw["T_p"] = kw["K"] + 1
        if "K" in kw and isinstance(self.R_th, tuple) and "R_th" not in kw:
            kw["R_th"] = self.R_th[0]
        return replace(self, **kw)


@dataclass(frozen=True)
class PathLossParams:
    """Large-scale fading parameters.

    ``rh_correlation`` > 0 switches R_h from ``L_h I`` to the exponential model
    ``L_h [rho^|i-j|]``.
    """

    alpha_u2b: float = 3.6
    alpha_u2t: float = 2.2
    alpha_t2b: float = 2.2
    alpha_RCS: float = 0.8
    d0: float = 1.0
    sigma_g2: float = 1.0
    rh_correlation: float = 0.0

    def __post_init__(self):
        if min(self.alpha_u2b, self.alpha_u2t, self.alpha_t2b) < 2:
            raise ConfigError("path-loss exponents must be >= 2")
        if not 0 < self.alpha_RCS <= 1:
            raise ConfigError("alpha_RCS must lie in (0, 1]")
        if not 0 <= self.rh_correlation < 1:
            raise ConfigError("rh_correlation must lie in [0, 1)")


@dataclass(frozen=True)
class Geometry:
    """2-D layout. Azimuths are measured from the +x axis (array broadside)."""

    user_pos: np.ndarray
    bs_pos: tuple = (0.0, 0.0)
    target_pos: tuple = (50.0 / math.sqrt(2), 50.0 / math.sqrt(2))
    cluster_center: tuple = (100.0, 0.0)
    cluster_radius: float = 100.0
    d_over_lambda: float = 0.5

    def __post_init__(self):
        up = np.atleast_2d(np.asarray(self.user_pos, dtype=float))
        object.__setattr__(self, "user_pos", up)
        if np.any(self.d_u2b <= 0) or np.any(self.d_u2t <= 0) or self.d_t2b <= 0:
            raise ConfigError("all link distances must be positive")

    @property
    def K(self) -> int:
        return self.user_pos.shape[0]

    @property
    def theta_t(self) -> float:
        dx, dy = np.subtract(self.target_pos, self.bs_pos)
        return math.atan2(dy, dx)

    @property
    def d_u2b(self) -> np.ndarray:
        return np.linalg.norm(self.user_pos - np.asarray(self.bs_pos), axis=1)

    @property
    def d_u2t(self) -> np.ndarray:
        return np.linalg.norm(self.user_pos - np.asarray(self.target_pos), axis=1)

    @property
    def d_t2b(self) -> float:
        return float(np.linalg.norm(np.subtract(self.target_pos, self.bs_pos)))

    @staticmethod
    def target_on_diagonal(d_t2b: float) -> tuple:
        return (d_t2b / math.sqrt(2), d_t2b / math.sqrt(2))


@dataclass(frozen=True)
class ChannelStatistics:
    """Per-user covariances, each stacked as a (K, N_b, N_b) array."""

    R_h: np.ndarray
    R_g: np.ndarray
    L_h: np.ndarray = field(default=None)
    L_g: np.ndarray = field(default=None)
    steering: np.ndarray = field(default=None)

    @property
    def R(self) -> np.ndarray:
        return self.R_h + self.R_g

    @property
    def K(self) -> int:
        return self.R_h.shape[0]

    @property
    def N_b(self) -> int:
        return self.R_h.shape[-1]

    def without_echo(self) -> "ChannelStatistics":
        return replace(self, R_g=np.zeros_like(self.R_g))


def steering_vector(theta: float, N_b: int, d_over_lambda: float = 0.5) -> np.ndarray:
    n = np.arange(N_b)
    return np.exp(-2j * math.pi * n * d_over_lambda * math.sin(theta))


def _exp_correlation(n: int, rho: float) -> np.ndarray:
    idx = np.arange(n)
    return rho ** np.abs(idx[:, None] - idx[None, :]).astype(float)


def build_statistics(geom: Geometry, pl: PathLossParams, cfg: SystemConfig) -> ChannelStatistics:
    n = cfg.N_b
    L_h = (geom.d_u2b / pl.d0) ** (-pl.alpha_u2b)
    L_g = (geom.d_u2t / pl.d0) ** (-pl.alpha_u2t) * (geom.d_t2b / pl.d0) ** (-pl.alpha_t2b)
    base = np.eye(n) if pl.rh_correlation == 0 else _exp_correlation(n, pl.rh_correlation)
    R_h = L_h[:, None, None] * base[None].astype(complex)
    a = steering_vector(geom.theta_t, n, geom.d_over_lambda)
    aa = np.outer(a, a.conj())
    R_g = (pl.alpha_RCS * pl.sigma_g2 * L_g)[:, None, None] * aa[None]
    return ChannelStatistics(R_h=R_h, R_g=R_g, L_h=L_h, L_g=L_g, steering=a)


def place_users(center, radius: float, K: int, rng: np.random.Generator) -> np.ndarray:
    """K points uniform over the disk (area-uniform radius R*sqrt(u))."""
    r = radius * np.sqrt(rng.random(K))
    phi = 2.0 * math.pi * rng.random(K)
    return np.asarray(center, dtype=float) + np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def dft_pilots(K: int, T_p: int) -> np.ndarray:
    """Rows are the pilot sequences; row k is DFT column k scaled so x_i^T x_k^* = T_p delta_ik."""
    if T_p < K:
        raise PilotShortageError(f"need T_p >= K, got T_p={T_p}, K={K}")
    t = np.arange(T_p)
    k = np.arange(K)
    return np.exp(-2j * math.pi * np.outer(k, t) / T_p)


def default_scenario(cfg: SystemConfig, rng: np.random.Generator, pl: PathLossParams | None = None,
                     d_t2b: float = 50.0, radius: float = 100.0, center=(100.0, 0.0),
                     target_pos=None, min_distance: float = 1.0):
    """Random placement with the reference layout; returns (geometry, statistics).

    Users closer than ``min_distance`` to the BS or the target are redrawn so
    every power law stays finite.
    """
    pl = pl or PathLossParams()
    tpos = Geometry.target_on_diagonal(d_t2b) if target_pos is None else tuple(target_pos)
    pos = place_users(center, radius, cfg.K, rng)
    for _ in range(1000):
        bad = (np.linalg.norm(pos, axis=1) < min_distance) | (np.linalg.norm(pos - np.asarray(tpos), axis=1) < min_distance)
        if not bad.any():
            break
        pos[bad] = place_users(center, radius, int(bad.sum()), rng)
    geom = Geometry(user_pos=pos, target_pos=tpos, cluster_center=tuple(center), cluster_radius=radius)
    return geom, build_statistics(geom, pl, cfg)
