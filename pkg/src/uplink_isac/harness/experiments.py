"""Seeded Monte Carlo experiments: convergence traces, rate sweeps and detection validation.

Random streams are keyed by (seed, purpose, trial) so each trial sees the same
user placement and channel draws at every sweep value (common random
numbers) and results do not depend on how trials are spread over workers.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..beamforming import (instantaneous_sensing_combiner, mrc_instantaneous, optimize_combiners,
                           zf_instantaneous)
from ..errors import IsacError
from ..estimation import derived_covariances, echo_samples, realize, sensing_residual
from ..metrics import (average_rho, detection_probability, ergodic_sensing_sinr, instantaneous_rates,
                       instantaneous_sensing_sinr, uatf_sum_rate)
from ..numerics import child_rng, cn_standard, q_inverse
from ..power_alloc import (PowerAllocation, fixed_power_allocation, optimize_power,
                           statistical_sensing_combiner)
from ..scenario import SystemConfig, default_scenario, dbm_to_watts, dft_pilots
from .config import ExperimentSpec, RunConfig
from .output import ResultRow, aggregate

log = logging.getLogger(__name__)

_PLACE, _CHANNEL, _DETECT = 0, 1, 2
DETECT_CHUNK = 2000


def worker_count() -> int:
    cap = os.environ.get("ISAC_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            log.warning("ignoring non-integer ISAC_THREADS=%r", cap)
    return n


def _map(fn, items):
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


# ---------------------------------------------------------------------------
# sweep points


@dataclass(frozen=True)
class Point:
    """Everything a single trial needs (picklable)."""

    cfg: SystemConfig
    run: RunConfig
    target_pos: tuple | None = None


def sweep_point(run: RunConfig, variable: str, value: float) -> Point:
    cfg = run.system
    geo = run.geometry
    if variable == "P":
        return Point(cfg.with_(P=dbm_to_watts(value)), run)
    if variable == "P_tot":
        return Point(cfg.with_(P=dbm_to_watts(value) / cfg.K), run)
    if variable == "K":
        return Point(cfg.with_(K=int(value)), run)
    if variable == "N_b":
        return Point(cfg.with_(N_b=int(value)), run)
    if variable == "T_p":
        return Point(cfg.with_(T_p=int(value)), run)
    if variable == "d_t2u":
        # target on the segment from the BS towards the cluster center
        c = np.asarray(geo.center, dtype=float)
        direction = c / np.linalg.norm(c)
        return Point(cfg, run, tuple(c - value * direction))
    raise ValueError(f"unknown sweep variable {variable!r}")


def _scenario(point: Point, rng):
    geo = point.run.geometry
    return default_scenario(point.cfg, rng, point.run.pathloss, d_t2b=geo.d_t2b, radius=geo.radius,
                            center=geo.center, target_pos=point.target_pos)


def _placement_rng(seed: int, trial: int, fix: bool):
    return child_rng(seed, _PLACE, 0 if fix else trial)


# ---------------------------------------------------------------------------
# rate sweep


def _instantaneous(cfg, stats, alloc: PowerAllocation, rng, comm_only: bool = False):
    dc = derived_covariances(alloc.p_p, stats, cfg)
    real = realize(stats, alloc.p_p, dft_pilots(cfg.K, cfg.T_p), cfg, rng)
    gamma_s = None
    if not comm_only:
        u_s = instantaneous_sensing_combiner(alloc.p_p, alloc.p_d, real.g_hat, dc, cfg)
        gamma_s = instantaneous_sensing_sinr(alloc.p_p, alloc.p_d, real.g_hat, dc.R_err, u_s, cfg)
    return dc, real, gamma_s


def rate_trial(args) -> dict:
    """One placement and one channel draw, every requested baseline.

    Returns {(baseline, metric): value}; a failed baseline maps to None.
    """
    point, baselines, seed, trial, fix = args
    cfg = point.cfg
    out = {}
    geom, stats = _scenario(point, _placement_rng(seed, trial, fix))

    def fail(b, metrics, exc):
        log.info("trial %d: %s dropped (%s)", trial, b, exc)
        for m in metrics:
            out[(b, m)] = None

    if "FPA" in baselines:
        try:
            fpa = fixed_power_allocation(cfg)
            dc = derived_covariances(fpa.p_p, stats, cfg)
            u = statistical_sensing_combiner(fpa.p_p, fpa.p_d, dc, cfg)
            out[("FPA", "avg_sum_rate")] = uatf_sum_rate(fpa.p_d, dc, stats, cfg).sum
            out[("FPA", "sensing_sinr")] = ergodic_sensing_sinr(fpa.p_p, fpa.p_d, dc, u, cfg)
        except IsacError as exc:
            fail("FPA", ("avg_sum_rate", "sensing_sinr"), exc)

    inst = [b for b in ("ORB", "ZF", "MRC") if b in baselines]
    if inst or "OPA" in baselines:
        try:
            res = optimize_power(cfg, stats)
        except IsacError as exc:
            for b in inst + (["OPA"] if "OPA" in baselines else []):
                fail(b, ("avg_sum_rate", "sensing_sinr", "iterations"), exc)
            res = None
        if res is not None:
            alloc = res.allocation
            if "OPA" in baselines:
                dc = derived_covariances(alloc.p_p, stats, cfg)
                out[("OPA", "avg_sum_rate")] = uatf_sum_rate(alloc.p_d, dc, stats, cfg).sum
                out[("OPA", "sensing_sinr")] = ergodic_sensing_sinr(alloc.p_p, alloc.p_d, dc, res.u_s, cfg) \
                    if res.u_s is not None else None
                out[("OPA", "iterations")] = float(len(res.trace) - 1)
            if inst:
                dc, real, gamma_s = _instantaneous(cfg, stats, alloc, child_rng(seed, _CHANNEL, trial))
                zh = real.z_hat
                for b in inst:
                    try:
                        if b == "ORB":
                            cr = optimize_combiners(zh, dc.R_err, alloc.p_d, cfg)
                            U = cr.beamformers.u_comm
                            out[(b, "iterations")] = float(len(cr.trace) - 1)
                        elif b == "ZF":
                            U = zf_instantaneous(zh)
                        else:
                            U = mrc_instantaneous(zh)
                        out[(b, "avg_sum_rate")] = instantaneous_rates(alloc.p_d, zh, dc.R_err, U, cfg).sum
                        out[(b, "sensing_sinr")] = gamma_s
                    except IsacError as exc:
                        fail(b, ("avg_sum_rate", "sensing_sinr") + (("iterations",) if b == "ORB" else ()), exc)

    if "COMM_ONLY" in baselines:
        try:
            c_cfg = cfg.with_(sensing_constraint=False)
            c_stats = stats.without_echo()
            alloc = optimize_power(c_cfg, c_stats).allocation
            dc, real, _ = _instantaneous(c_cfg, c_stats, alloc, child_rng(seed, _CHANNEL, trial), comm_only=True)
            cr = optimize_combiners(real.z_hat, dc.R_err, alloc.p_d, c_cfg)
            out[("COMM_ONLY", "avg_sum_rate")] = cr.sum_rate
        except IsacError as exc:
            fail("COMM_ONLY", ("avg_sum_rate",), exc)
    return out


def run_rate_sweep(run: RunConfig, fix_placement: bool = False) -> list[ResultRow]:
    spec = run.experiment
    jobs, index = [], []
    for value in spec.values:
        point = sweep_point(run, spec.sweep, value)
        for t in range(spec.trials):
            jobs.append((point, spec.baselines, spec.seed, t, fix_placement))
            index.append(value)
    results = _map(rate_trial, jobs)
    rows = []
    for value in spec.values:
        per = [r for v, r in zip(index, results) if v == value]
        keys = sorted({k for r in per for k in r})
        for b, m in keys:
            rows.append(aggregate(value, b, m, [r.get((b, m)) for r in per], spec.trials))
    return rows


# ---------------------------------------------------------------------------
# detection validation


@dataclass(frozen=True)
class DetectionCounts:
    theory: float
    conditional: float  # sum over blocks of P_D(rho_block)
    hits: int
    false_alarms: int
    trials: int


def detection_placement(args) -> DetectionCounts:
    """Equal pilot/data power P_tot/K, statistical EVD combiner, `n` blocks on one placement.

    The test statistic is psi = Re{y^H R_eff^{-1} mu} against
    kappa = sqrt(mu^H R_eff^{-1} mu / 2) Q^{-1}(P_FA), per block. With
    ``error_model="symbol"`` the estimation error is redrawn every symbol
    (the Gaussian model the detector is designed for); ``"block"`` keeps each
    block's own error fixed over all T symbols. Data symbols are unit-modulus
    with uniform phase (``"psk"``), for which the averaged R_eff is also the
    covariance given the known symbols, or circular Gaussian (``"gaussian"``).
    """
    point, seed, placement, n, fix, error_model, symbols = args
    cfg = point.cfg
    geom, stats = _scenario(point, _placement_rng(seed, placement, fix))
    p = np.full(cfg.K, cfg.P)
    dc = derived_covariances(p, stats, cfg)
    u = statistical_sensing_combiner(p, p, dc, cfg)
    theory = float(detection_probability(average_rho(p, p, dc, u, cfg), cfg.P_FA))
    pilots = dft_pilots(cfg.K, cfg.T_p)
    err_var = float(np.real(np.vdot(u, np.tensordot(p, dc.R_err, axes=1) @ u)))
    v = err_var + cfg.sigma2 * float(np.real(np.vdot(u, u)))  # equal powers: same in both phases
    a = q_inverse(cfg.P_FA)
    rng = child_rng(seed, _DETECT, point.cfg.K, placement)
    hits = fa = 0
    cond = 0.0
    done = 0
    while done < n:
        m = min(DETECT_CHUNK, n - done)
        real = realize(stats, p, pilots, cfg, rng, size=m)
        x_d = cn_standard(rng, (m, cfg.K, cfg.T_d))
        if symbols == "psk":
            x_d = x_d / np.abs(x_d)
        mu = echo_samples(real.g_hat @ u.conj(), p, p, pilots, x_d)
        rho = np.sum(np.abs(mu) ** 2, axis=-1) / v
        kappa = np.sqrt(rho / 2.0) * a
        cond += float(np.sum(detection_probability(rho, cfg.P_FA)))
        cov = dc.R_err if error_model == "symbol" else None
        y1 = sensing_residual(real, p, p, pilots, x_d, u, cfg.sigma2, rng, True, error_cov=cov)
        y0 = sensing_residual(real, p, p, pilots, x_d, u, cfg.sigma2, rng, False, error_cov=cov)
        psi1 = np.real(np.sum(np.conj(y1) * mu, axis=-1)) / v
        psi0 = np.real(np.sum(np.conj(y0) * mu, axis=-1)) / v
        hits += int(np.count_nonzero(psi1 > kappa))
        fa += int(np.count_nonzero(psi0 > kappa))
        done += m
    return DetectionCounts(theory, cond, hits, fa, n)


def _split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def run_detection_validation(run: RunConfig, fix_placement: bool = False) -> list[ResultRow]:
    """Sweep P_tot (dBm) for every K in ``k_values``; trials are spread over placements."""
    spec = run.experiment
    ks = spec.k_values or (run.system.K,)
    n_place = 1 if fix_placement else min(spec.placements, spec.trials)
    counts = _split(spec.trials, n_place)
    jobs, keys = [], []
    for K in ks:
        base = RunConfig(run.system.with_(K=int(K)), run.geometry, run.pathloss, spec)
        for value in spec.values:
            point = sweep_point(base, "P_tot", value)
            for j, n in enumerate(counts):
                if n:
                    jobs.append((point, spec.seed, j, n, fix_placement, spec.error_model, spec.data_symbols))
                    keys.append((K, value))
    results = _map(detection_placement, jobs)
    rows = []
    for K in ks:
        label = f"K={K}"
        for value in spec.values:
            sel = [r for k, r in zip(keys, results) if k == (K, value)]
            n = sum(r.trials for r in sel)
            th = np.array([r.theory for r in sel])
            w = np.array([r.trials for r in sel], dtype=float)
            theory = float(np.average(th, weights=w))
            th_se = float(np.std(th, ddof=1) / math.sqrt(len(th))) if len(th) > 1 else 0.0
            pd = sum(r.hits for r in sel) / n
            pc = sum(r.conditional for r in sel) / n
            pfa = sum(r.false_alarms for r in sel) / n
            rows += [
                ResultRow(value, label, "p_detect_theory", theory, th_se, 0),
                ResultRow(value, label, "p_detect_conditional", pc, 0.0, 0),
                ResultRow(value, label, "p_detect_empirical", pd, math.sqrt(pd * (1 - pd) / n), 0),
                ResultRow(value, label, "p_false_alarm_empirical", pfa, math.sqrt(pfa * (1 - pfa) / n), 0),
            ]
    return rows


# ---------------------------------------------------------------------------
# convergence


@dataclass
class ConvergenceRun:
    N_b: int
    power: object
    combiners: object


def convergence_runs(run: RunConfig, seed: int, n_b_values=None) -> list[ConvergenceRun]:
    """Algorithm traces on one placement (shared across N_b)."""
    out = []
    for n_b in n_b_values or run.experiment.n_b_values:
        point = Point(run.system.with_(N_b=int(n_b)), run)
        cfg = point.cfg
        geom, stats = _scenario(point, _placement_rng(seed, 0, True))
        pr = optimize_power(cfg, stats)
        dc, real, _ = _instantaneous(cfg, stats, pr.allocation, child_rng(seed, _CHANNEL, 0))
        cr = optimize_combiners(real.z_hat, dc.R_err, pr.allocation.p_d, cfg)
        out.append(ConvergenceRun(int(n_b), pr, cr))
    return out


def run_power_convergence(run: RunConfig, seed: int, n_b_values=None) -> list[ResultRow]:
    """Objective per iteration: OPA_Nb<n> for the power stage, ORB_Nb<n> for the combiner stage."""
    rows = []
    for cr in convergence_runs(run, seed, n_b_values):
        for i, val in enumerate(cr.power.objective_trace):
            rows.append(ResultRow(float(i), f"OPA_Nb{cr.N_b}", "avg_sum_rate", float(val)))
        for i, val in enumerate(cr.combiners.trace):
            rows.append(ResultRow(float(i), f"ORB_Nb{cr.N_b}", "avg_sum_rate", float(val)))
    return rows


__all__ = [
    "ConvergenceRun",
    "DetectionCounts",
    "ExperimentSpec",
    "Point",
    "convergence_runs",
    "detection_placement",
    "rate_trial",
    "run_detection_validation",
    "run_power_convergence",
    "run_rate_sweep",
    "sweep_point",
    "worker_count",
]
