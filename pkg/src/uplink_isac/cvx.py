"""Small log-barrier interior-point solvers for the two convex subproblem shapes.

* :class:`LinConstrainedConcaveProblem`: maximize a smooth concave f(x)
  subject to ``A x <= b`` and ``x >= 0``.
* :class:`UnitBallQcqp`: maximize a concave quadratic of a complex vector u
  subject to one concave-quadratic lower bound and ``||u||^2 <= 1``.

Both reduce to a real barrier problem solved by damped Newton steps. Problem
sizes are tiny (tens of real variables) so dense linear algebra is fine.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InfeasibleError, MaxIterError

log = logging.getLogger(__name__)

_MU = 10.0
_MAX_NEWTON = 100
_MAX_CENTERINGS = 60


@dataclass
class SolverResult:
    x: np.ndarray
    value: float
    multipliers: np.ndarray
    kkt_residual: float
    gap: float
    iterations: int
    trace: list = field(default_factory=list)

    def __iter__(self):
        # allow ``x, value = solve(...)``
        return iter((self.x, self.value))


# constraint callback: v -> (s (m,), J (m, n), H (m, n, n) or None); feasible iff s > 0
ConsFn = Callable[[np.ndarray], tuple]
ObjFn = Callable[[np.ndarray], tuple]


def _barrier_parts(v, t, obj, cons):
    f, g, H = obj(v)
    s, J, Hs = cons(v)
    if np.any(s <= 0):
        return None
    inv = 1.0 / s
    phi = t * f + float(np.sum(np.log(s)))
    grad = t * g + J.T @ inv
    hess = t * H - (J.T * inv**2) @ J
    if Hs is not None:
        hess = hess + np.tensordot(inv, Hs, axes=1)
    return phi, grad, hess, g


def _phi(v, t, obj, cons):
    s = cons(v)[0]
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        return -np.inf
    return t * obj(v, False) + float(np.sum(np.log(s)))


def _newton_center(v, t, obj, cons, tol):
    """Maximize the barrier function for fixed t; returns (v, newton steps)."""
    grad_norm = np.inf
    for it in range(_MAX_NEWTON):
        phi, grad, hess, g_f = _barrier_parts(v, t, obj, cons)
        try:
            chol = np.linalg.cholesky(-hess)
            d = np.linalg.solve(chol.T, np.linalg.solve(chol, grad))
        except np.linalg.LinAlgError:
            # not negative definite numerically: fall back to gradient ascent
            d = grad / max(1.0, float(np.linalg.norm(grad)))
        dec = float(grad @ d)
        grad_norm = float(np.linalg.norm(grad))
        # small slacks inflate the Hessian, so the decrement alone can stop too early
        if dec / 2.0 <= tol and grad_norm <= 1e-12 * t * max(1.0, float(np.linalg.norm(g_f))):
            return v, it
        if dec / 2.0 <= 1e3 * np.finfo(float).eps * max(1.0, abs(phi)):
            # phi differences are now round-off; accept full steps that shrink the gradient
            trial = v + d
            nxt = _barrier_parts(trial, t, obj, cons)
            if nxt is not None and np.linalg.norm(nxt[1]) < grad_norm:
                v = trial
                continue
            return v, it
        step = 1.0
        for _ in range(60):
            trial = v + step * d
            val = _phi(trial, t, obj, cons)
            if np.isfinite(val) and val >= phi + 0.25 * step * dec:
                break
            step *= 0.5
        else:
            return v, it
        v = trial
    return v, _MAX_NEWTON


def _multipliers(g, s, J, lam_barrier, gap):
    """Nonnegative least-squares multipliers on the near-active set.

    The barrier estimate 1/(t s) inherits the cancellation error in tiny
    slacks; re-fitting grad f + J^T lam = 0 over the active rows is exact to
    round-off once x is.
    """
    from scipy.optimize import nnls

    active = s <= max(math.sqrt(gap), 1e-12) * max(1.0, float(np.max(np.abs(s))))
    lam = np.zeros_like(s)
    if active.any():
        lam[active], _ = nnls(J[active].T, -g)
    return lam


def _barrier_solve(v0, obj, cons, m, tol, t0=1.0, scale=1.0):
    """Path-following on t until the duality gap m/t is below tol*scale."""
    v = np.array(v0, dtype=float)
    t = t0
    trace = []
    total = 0
    for _ in range(_MAX_CENTERINGS):
        v, n = _newton_center(v, t, obj, cons, 1e-13)
        total += n
        trace.append(float(obj(v, False)))
        if m / t <= tol * scale:
            s, J, _ = cons(v)
            g = obj(v)[1]
            lam = _multipliers(g, s, J, 1.0 / (t * s), m / t)
            kkt = float(np.max(np.abs(g + J.T @ lam), initial=0.0))
            return v, lam, kkt, m / t, total, trace
        t *= _MU
    raise MaxIterError(f"barrier method did not reach gap {tol} after {_MAX_CENTERINGS} centerings")


# ---------------------------------------------------------------------------
# linear constraints, concave objective


@dataclass
class LinConstrainedConcaveProblem:
    """maximize f(x) s.t. A x <= b, x >= 0.

    ``objective(x)`` returns ``(value, gradient)``; an optional ``value_only(x)``
    skips the gradient during line searches. ``hessian(x)``, if given,
    returns the (negative semidefinite) Hessian; otherwise it is estimated by
    central differences of the gradient.
    """

    objective: Callable[[np.ndarray], tuple]
    A: np.ndarray
    b: np.ndarray
    hessian: Callable[[np.ndarray], np.ndarray] | None = None
    value_only: Callable[[np.ndarray], float] | None = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.A.shape[0] != self.b.size:
            raise ValueError("A and b disagree on the number of rows")

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.value_only is not None:
            return float(self.value_only(x))
        return float(self.objective(x)[0])


def _fd_hessian(grad_fn, x, h=1e-6):
    n = x.size
    H = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        step = h * max(1.0, abs(x[i]))
        e[i] = step
        H[:, i] = (grad_fn(x + e) - grad_fn(x - e)) / (2 * step)
    return 0.5 * (H + H.T)


def strictly_feasible_point(A, b) -> tuple[np.ndarray, float]:
    """Chebyshev-style max-margin point of {A x <= b, x >= 0} (scipy LP).

    Returns ``(x, margin)``; margin <= 0 means no strictly feasible point.
    """
    from scipy.optimize import linprog

    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    rows = np.vstack([A, -np.eye(n)])
    rhs = np.concatenate([b, np.zeros(n)])
    norms = np.linalg.norm(rows, axis=1)
    # variables [x, s]: maximize s with rows x + s*norm <= rhs, s <= 1
    A_ub = np.hstack([rows, norms[:, None]])
    c = np.zeros(n + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=A_ub, b_ub=rhs, bounds=[(None, None)] * n + [(None, 1.0)], method="highs")
    if res.status != 0:
        return np.zeros(n), -np.inf
    return res.x[:n], float(res.x[-1])


def solve_linconstrained_concave(prob: LinConstrainedConcaveProblem, x0, tol: float = 1e-8) -> SolverResult:
    """Barrier interior point for :class:`LinConstrainedConcaveProblem`.

    ``x0`` should be strictly feasible; otherwise a max-margin point is
    computed first. Multipliers are ordered as the rows of A followed by the
    bounds x >= 0.
    """
    A, b = prob.A, prob.b
    n = prob.dim
    norms = np.linalg.norm(A, axis=1)
    norms[norms == 0] = 1.0
    An = A / norms[:, None]
    bn = b / norms
    x0 = np.asarray(x0, dtype=float)
    if np.any(An @ x0 >= bn) or np.any(x0 <= 0):
        x0, margin = strictly_feasible_point(An, bn)
        if margin <= 0:
            raise InfeasibleError("no strictly feasible point for the linear constraints")

    def obj(x, derivs=True):
        if not derivs:
            return prob.value(x)
        f, g = prob.objective(x)
        if prob.hessian is not None:
            H = prob.hessian(x)
        else:
            H = _fd_hessian(lambda z: np.asarray(prob.objective(z)[1], dtype=float), x)
        return float(f), np.asarray(g, dtype=float), H

    rows = np.vstack([-An, np.eye(n)])

    def cons(x):
        s = np.concatenate([bn - An @ x, x])
        return s, rows, None

    m = rows.shape[0]
    scale = max(1.0, abs(prob.value(x0)))
    x, lam, kkt, gap, its, trace = _barrier_solve(x0, obj, cons, m, tol, scale=scale)
    lam = np.concatenate([lam[: A.shape[0]] / norms, lam[A.shape[0]:]])
    return SolverResult(x=x, value=prob.value(x), multipliers=lam, kkt_residual=kkt, gap=gap,
                        iterations=its, trace=trace)


# ---------------------------------------------------------------------------
# complex unit-ball QCQP


def _realify(A):
    A = np.asarray(A, dtype=complex)
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


def _realvec(b):
    b = np.asarray(b, dtype=complex)
    return np.concatenate([b.real, b.imag])


@dataclass
class UnitBallQcqp:
    """maximize q0(u) s.t. q1(u) >= r and ||u||^2 <= 1.

    q_i(u) = c_i + 2 Re{b_i^H u} - u^H A_i u with A_i Hermitian PSD. Set
    ``r = None`` (or leave A1/b1 unset) to drop the q1 constraint.
    """

    c0: float
    b0: np.ndarray
    A0: np.ndarray
    c1: float = 0.0
    b1: np.ndarray | None = None
    A1: np.ndarray | None = None
    r: float | None = None

    def __post_init__(self):
        self.b0 = np.asarray(self.b0, dtype=complex)
        self.A0 = np.asarray(self.A0, dtype=complex)
        if self.r is not None:
            if self.b1 is None or self.A1 is None:
                raise ValueError("q1 constraint needs b1 and A1")
            self.b1 = np.asarray(self.b1, dtype=complex)
            self.A1 = np.asarray(self.A1, dtype=complex)

    @property
    def dim(self) -> int:
        return self.b0.size

    @staticmethod
    def _q(c, b, A, u) -> float:
        u = np.asarray(u)
        return float(c + 2.0 * np.real(np.vdot(b, u)) - np.real(np.vdot(u, A @ u)))

    def q0(self, u) -> float:
        return self._q(self.c0, self.b0, self.A0, u)

    def q1(self, u) -> float:
        return self._q(self.c1, self.b1, self.A1, u)


def _quad_real(c, b, A):
    beta = _realvec(b)
    At = _realify(A)
    At = 0.5 * (At + At.T)

    def f(v, derivs=True):
        Av = At @ v
        val = c + 2.0 * beta @ v - v @ Av
        if not derivs:
            return val
        return val, 2.0 * beta - 2.0 * Av, -2.0 * At

    return f


def _ball_cons(q1=None, r=None):
    def cons(v):
        n = v.size
        s = [1.0 - v @ v]
        J = [-2.0 * v]
        H = [-2.0 * np.eye(n)]
        if q1 is not None:
            val, g, h = q1(v)
            s.append(val - r)
            J.append(g)
            H.append(h)
        return np.array(s), np.array(J), np.array(H)

    return cons


def _to_complex(v):
    n = v.size // 2
    return v[:n] + 1j * v[n:]


def solve_unit_ball_qcqp(prob: UnitBallQcqp, u0=None, tol: float = 1e-8) -> SolverResult:
    """Barrier interior point for :class:`UnitBallQcqp` in paired real coordinates.

    ``u0`` (feasible, possibly on the boundary) seeds the start; a strictly
    feasible point is built by mixing it with the maximizer of q1 over the ball.
    Multipliers are ordered (ball, q1).
    """
    n = prob.dim
    f0 = _quad_real(prob.c0, prob.b0, prob.A0)
    scale = max(1.0, abs(prob.c0), float(np.linalg.norm(prob.b0)), float(np.linalg.norm(prob.A0, 2)))
    if prob.r is None:
        v, lam, kkt, gap, its, trace = _barrier_solve(np.zeros(2 * n), f0, _ball_cons(), 1, tol, scale=scale)
        u = _to_complex(v)
        return SolverResult(u, prob.q0(u), lam, kkt, gap, its, trace)

    f1 = _quad_real(prob.c1, prob.b1, prob.A1)
    vb, *_ = _barrier_solve(np.zeros(2 * n), f1, _ball_cons(), 1, min(tol, 1e-10), scale=scale)
    best = f1(vb, False)
    if best - prob.r < 1e-12 * max(1.0, abs(prob.r)):
        if best < prob.r - tol * max(1.0, abs(prob.r)):
            raise InfeasibleError(f"max q1 over the ball is {best:.6g} < r = {prob.r:.6g}")
        u = _to_complex(vb)
        return SolverResult(u, prob.q0(u), np.zeros(2), 0.0, 0.0, 0, [prob.q0(u)])

    cons = _ball_cons(f1, prob.r)
    start = vb
    if u0 is not None:
        v0 = _realvec(u0)
        for theta in (0.01, 0.1, 0.3, 0.6, 0.9):
            cand = (1.0 - theta) * v0 + theta * vb
            if np.all(cons(cand)[0] > 0):
                start = cand
                break
    v, lam, kkt, gap, its, trace = _barrier_solve(start, f0, cons, 2, tol, scale=scale)
    u = _to_complex(v)
    return SolverResult(u, prob.q0(u), lam, kkt, gap, its, trace)
