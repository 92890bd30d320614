"""Lanczos tridiagonalisation and the small dense kernels built on it.

Provides the spectral-interval estimate used to rescale operators into
[-1, 1] for polynomial propagation, and the exponential of a Hermitian
tridiagonal matrix used by the step-wise subspace propagator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .sparse import SparseMatrix, linear_combine, spmv

__all__ = [
    "LanczosFactorization",
    "ScalingParams",
    "lanczos",
    "extreme_eigs",
    "rescale",
    "tridiag_expv",
]

#: Relative off-diagonal size below which the recurrence has found an
#: invariant subspace.
BREAKDOWN_TOL = 1e-14

#: Interval padding: guards against under-estimated spectral bounds, the
#: dominant failure mode of the [-1, 1] rescaling.
DEFAULT_INFLATION = 0.05
INFLATION_FLOOR = 1e-8

_SEED = 0x5EED


@dataclass
class LanczosFactorization:
    """Orthonormal basis plus tridiagonal projection from a Lanczos run.

    ``basis`` holds m orthonormal columns; ``alpha`` the m diagonal entries;
    ``beta`` the m-1 couplings followed by one trailing residual norm
    (``beta[-1]`` is the off-diagonal that *would* couple to vector m+1).
    """

    basis: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    breakdown: bool

    @property
    def m(self) -> int:
        return self.alpha.shape[0]


def lanczos(
    l_op: SparseMatrix,
    v0: np.ndarray,
    m_max: int,
    reorthogonalize: bool = True,
) -> LanczosFactorization:
    """Three-term recurrence building an orthonormal Krylov basis.

    Stops early when the next off-diagonal falls below ``BREAKDOWN_TOL``
    relative to ``||v0||`` (an invariant subspace was found). Full
    reorthogonalisation is on by default; at the subspace sizes used here its
    cost is negligible and it prevents ghost copies of converged Ritz values.
    """
    v0 = np.asarray(v0, dtype=np.complex128)
    norm0 = np.linalg.norm(v0)
    if norm0 == 0.0:
        raise ValueError("Lanczos start vector must be nonzero")
    if m_max < 1:
        raise ValueError("m_max must be positive")

    dim = v0.shape[0]
    basis = np.empty((dim, m_max), dtype=np.complex128)
    alphas = np.empty(m_max)
    betas = np.empty(m_max)

    q = v0 / norm0
    q_prev = np.zeros_like(q)
    beta_prev = 0.0
    breakdown = False
    m = 0
    for j in range(m_max):
        basis[:, j] = q
        w = spmv(l_op, q)
        a = np.vdot(q, w).real  # Hermitian operator: diagonal is real
        w = w - a * q - beta_prev * q_prev
        if reorthogonalize:
            # B_dagger w as conj(B.T conj(w)): avoids copying the basis
            proj = np.conj(basis[:, : j + 1].T @ np.conj(w))
            w -= basis[:, : j + 1] @ proj
        b = np.linalg.norm(w)
        alphas[j] = a
        betas[j] = b
        m = j + 1
        if b < BREAKDOWN_TOL * norm0:
            breakdown = True
            break
        q_prev = q
        beta_prev = b
        q = w / b

    return LanczosFactorization(
        basis=basis[:, :m], alpha=alphas[:m], beta=betas[:m], breakdown=breakdown
    )


@dataclass(frozen=True)
class ScalingParams:
    """Spectral interval [beta, alpha] with shift S and half-width D.

    ``S = (alpha + beta) / 2`` and ``D = (alpha - beta) / 2``; the rescaled
    operator ``(L - S*Id) / D`` then has its spectrum inside [-1, 1].
    """

    alpha: float
    beta: float
    S: float
    D: float

    @classmethod
    def from_bounds(cls, alpha: float, beta: float) -> "ScalingParams":
        if beta > alpha:
            raise ValueError(f"lower bound {beta} exceeds upper bound {alpha}")
        return cls(alpha=alpha, beta=beta, S=(alpha + beta) / 2.0, D=(alpha - beta) / 2.0)


def extreme_eigs(
    l_op: SparseMatrix,
    m: int = 30,
    inflation: float = DEFAULT_INFLATION,
) -> ScalingParams:
    """Estimate the spectral interval of a Hermitian operator.

    Runs an m-step Lanczos pass from a fixed pseudo-random start vector and
    takes the extreme Ritz values, inflated outward by ``inflation`` of the
    half-width plus an absolute floor of ``INFLATION_FLOOR``. Deterministic
    across calls: repeated runs produce identical parameters.
    """
    rng = np.random.default_rng(_SEED)
    v0 = rng.standard_normal(l_op.nrows) + 1j * rng.standard_normal(l_op.nrows)
    fac = lanczos(l_op, v0, m_max=min(m, l_op.nrows), reorthogonalize=True)
    if fac.m == 1:
        ritz = fac.alpha
    else:
        ritz = scipy.linalg.eigh_tridiagonal(
            fac.alpha, fac.beta[:-1], eigvals_only=True
        )
    lo, hi = float(np.min(ritz)), float(np.max(ritz))
    mid = 0.5 * (hi + lo)
    half = 0.5 * (hi - lo)
    half = half * (1.0 + inflation) + INFLATION_FLOOR
    return ScalingParams.from_bounds(alpha=mid + half, beta=mid - half)


def rescale(l_op: SparseMatrix, scaling: ScalingParams) -> SparseMatrix:
    """``(L - S*Id) / D``, spectrum mapped into [-1, 1]."""
    if scaling.D <= 0.0:
        raise ValueError("half-width must be positive (inflation floor guarantees this)")
    ident = SparseMatrix.identity(l_op.nrows)
    return linear_combine(1.0 / scaling.D, l_op, -scaling.S / scaling.D, ident)


def tridiag_expv(alpha: np.ndarray, beta: np.ndarray, t: float) -> np.ndarray:
    """First column of ``exp(-i*T*t)`` for the real symmetric tridiagonal T.

    ``alpha`` holds the m diagonal entries, ``beta`` the m-1 off-diagonal
    couplings. Uses the dense eigendecomposition of T, which is exact to
    roundoff and cheap at the subspace sizes involved.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if alpha.ndim != 1 or alpha.size == 0:
        raise ValueError("alpha must be a nonempty 1-D array")
    if beta.shape != (alpha.size - 1,):
        raise ValueError(f"beta must have length {alpha.size - 1}, got {beta.shape}")
    if alpha.size == 1:
        return np.array([np.exp(-1j * alpha[0] * t)])
    lam, u = scipy.linalg.eigh_tridiagonal(alpha, beta)
    return u @ (np.exp(-1j * lam * t) * u[0, :])
