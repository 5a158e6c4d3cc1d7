"""Complex Hermitian linear algebra, Gaussian sampling and normal-tail helpers.

Matrices and vectors are plain numpy arrays. Functions that sample take a
``numpy.random.Generator``; use :func:`make_rng` / :func:`spawn_rngs` so that a
single 64-bit seed fixes every stream.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special

from .errors import DimMismatchError, NotPsdError, OutOfDomainError, SingularError

HERMITIAN_ATOL = 1e-12
PSD_RTOL = 1e-10
MAX_COND = 1e14
_TINY = np.nextafter(0.0, 1.0)
_ALMOST_ONE = np.nextafter(1.0, 0.0)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def spawn_rngs(seed: int, n: int, *key: int) -> list[np.random.Generator]:
    """Independent child streams ``seed -> key -> 0..n-1``.

    The optional ``key`` integers select a sub-tree, so e.g. trial ``i`` of an
    experiment always gets the same stream no matter how the work is split.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(n)]


def child_rng(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def is_hermitian(a: np.ndarray, atol: float = HERMITIAN_ATOL) -> bool:
    a = np.asarray(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        return False
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    return bool(np.all(np.abs(a - np.conj(np.swapaxes(a, -1, -2))) <= atol * scale))


def check_psd(a: np.ndarray, rtol: float = PSD_RTOL) -> np.ndarray:
    """Return the eigenvalues of Hermitian ``a``; raise NotPsdError if any is too negative."""
    w = np.linalg.eigvalsh(hermitian_part(np.asarray(a, dtype=complex)))
    top = float(np.max(np.abs(w), initial=0.0))
    if w.size and w[0] < -rtol * top:
        raise NotPsdError(f"matrix has eigenvalue {w[0]:.3e} (largest magnitude {top:.3e})")
    return w


def psd_factor(cov: np.ndarray) -> np.ndarray:
    """A square-root factor F with F F^H = cov.

    Cholesky is used for well-conditioned input. Numerically singular
    covariances (e.g. the rank-one echo covariance) get an eigen-factor, which
    keeps the samples inside the range instead of leaking roundoff-sized
    components (or jitter) into the null space.
    """
    cov = hermitian_part(np.asarray(cov, dtype=complex))
    w = check_psd(cov)
    if w.size and w[0] > PSD_RTOL * w[-1]:
        try:
            return np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            pass
    w, v = np.linalg.eigh(cov)
    w = np.where(w > PSD_RTOL * max(float(w[-1]), 0.0), w, 0.0)
    return v * np.sqrt(w)


def sample_complex_gaussian(cov: np.ndarray, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw from CN(0, cov).

    ``size`` prepends batch dimensions: the result has shape ``(*size, n)``.
    """
    cov = np.asarray(cov)
    n = cov.shape[-1]
    factor = psd_factor(cov)
    shape = (n,) if size is None else (*np.atleast_1d(size), n)
    w = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(0.5)
    return w @ factor.T


def cn_standard(rng: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. CN(0, 1) entries."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(0.5)


def _fix_phase(x: np.ndarray) -> np.ndarray:
    mags = np.abs(x)
    nz = np.flatnonzero(mags > 1e-14 * max(float(mags.max(initial=0.0)), 1e-300))
    if nz.size == 0:
        return x
    ph = x[nz[0]] / mags[nz[0]]
    return x * np.conj(ph)


def dominant_generalized_eigvec(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float]:
    """Unit-norm maximiser of ``x^H A x / x^H B x`` and the achieved quotient.

    Solved by whitening with the Cholesky factor of B. The first nonzero
    entry of the returned vector is real and nonnegative.
    """
    a = hermitian_part(np.asarray(a, dtype=complex))
    b = hermitian_part(np.asarray(b, dtype=complex))
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise DimMismatchError(f"shapes {a.shape} and {b.shape}")
    wb = np.linalg.eigvalsh(b)
    if wb[0] <= 0 or wb[-1] / wb[0] > MAX_COND:
        raise SingularError("B is not positive definite or is too ill-conditioned")
    chol = np.linalg.cholesky(b)
    tmp = np.linalg.solve(chol, a)
    m = np.linalg.solve(chol, np.conj(tmp.T)).conj().T
    w, v = np.linalg.eigh(hermitian_part(m))
    y = v[:, -1]
    x = np.linalg.solve(np.conj(chol.T), y)
    x = x / np.linalg.norm(x)
    x = _fix_phase(x)
    quotient = float(np.real(np.vdot(x, a @ x)) / np.real(np.vdot(x, b @ x)))
    return x, quotient


def rayleigh_quotient(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.real(np.vdot(x, a @ x)) / np.real(np.vdot(x, b @ x)))


def log_q_function(x):
    """log Q(x), accurate far into both tails."""
    return special.log_ndtr(-np.asarray(x, dtype=float))


def q_function(x):
    """Right-tail probability of the standard normal.

    Uses the log-domain tail for |x| > 8. Results that would underflow are
    clamped to the smallest positive double (and to the largest double below
    one on the other side) so the value always lies in the open interval
    (0, 1); use :func:`log_q_function` when the tail magnitude itself matters.
    """
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) > 8.0, np.exp(log_q_function(x)), 0.5 * special.erfc(x / math.sqrt(2.0)))
    out = np.clip(out, _TINY, _ALMOST_ONE)
    return float(out) if out.ndim == 0 else out


def q_inverse(p):
    """Inverse of :func:`q_function` on (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise OutOfDomainError("q_inverse needs 0 < p < 1")
    # Q^{-1}(p) = -Phi^{-1}(p); the lower tail keeps full relative precision for small p
    x = np.where(p <= 0.5, -special.ndtri(p), special.ndtri(1.0 - p))
    # one Newton polish on log Q
    lq = log_q_function(x)
    dens = np.exp(-0.5 * x * x - lq) / math.sqrt(2.0 * math.pi)  # -(d/dx) log Q
    x = x + (lq - np.log(p)) / dens
    return float(x) if x.ndim == 0 else x


def trace_product(a: np.ndarray, b: np.ndarray) -> float:
    """Real part of tr(AB) for Hermitian A, B."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimMismatchError(f"shapes {a.shape} and {b.shape}")
    val = complex(np.einsum("ij,ji->", a, b))
    # |tr(AB)| <= ||A||_F ||B||_F bounds the relative residue
    if abs(val.imag) > 1e-10 * np.linalg.norm(a) * np.linalg.norm(b):
        raise DimMismatchError("tr(AB) has a non-negligible imaginary part; inputs are not Hermitian")
    return val.real


def solve_hermitian(c: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """C^{-1} rhs for Hermitian positive definite C (batched over leading axes)."""
    try:
        return np.linalg.solve(c, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularError(str(exc)) from exc
