"""Dense linear-algebra kernel shared by every solver in the package.

Hermitian generalized eigensolves go through an explicit Cholesky reduction
``M = L L^H`` followed by a standard Hermitian solve of ``L^{-1} K L^{-H}``.
LAPACK (via numpy/scipy) supplies the factorization and the standard solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .exceptions import Degenerate, MassNotSPD, NonFiniteInput, NotHermitian


@dataclass
class Tolerances:
    """Fixed numerical tolerances, overridable per call site."""

    hermitian: float = 1e-12
    degenerate: float = 1e-10
    tie: float = 1e-12
    gauge: float = 1e-8


TOL = Tolerances()


@dataclass(frozen=True)
class EigenSolution:
    """Eigenvalues ``omega^2`` (ascending) and M-orthonormal eigenvectors (columns)."""

    values: np.ndarray
    vectors: np.ndarray
    k: np.ndarray | None = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteInput("matrix contains NaN or Inf entries")


def hermitian_defect(A) -> float:
    """Relative Frobenius norm of the anti-Hermitian part of ``A``."""
    nrm = np.linalg.norm(A)
    if nrm == 0.0:
        return 0.0
    return float(np.linalg.norm(A - A.conj().T) / nrm)


def check_pencil(K, M, tol=None):
    tol = TOL.hermitian if tol is None else tol
    K = np.asarray(K)
    M = np.asarray(M)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape != M.shape:
        raise ValueError(f"pencil matrices must be square and equal-sized, got {K.shape} and {M.shape}")
    check_finite(K, M)
    for name, A in (("K", K), ("M", M)):
        d = hermitian_defect(A)
        if d > tol:
            raise NotHermitian(f"{name} is not Hermitian (relative defect {d:.3e} > {tol:.1e})")
    return K, M


def gauge_fix(v, tol=None):
    """Rotate the phase of ``v`` so its first entry is real and positive.

    If the first entry is tiny relative to the largest entry (a node of the
    mode), the largest-modulus entry is used instead.  Works column-wise on 2-D
    input.
    """
    tol = TOL.gauge if tol is None else tol
    v = np.asarray(v)
    if v.ndim == 2:
        return np.column_stack([gauge_fix(v[:, j], tol) for j in range(v.shape[1])]) if v.shape[1] else v.copy()
    amax = np.max(np.abs(v)) if v.size else 0.0
    if amax == 0.0:
        return v.copy()
    ref = v[0]
    if abs(ref) < tol * amax:
        ref = v[np.argmax(np.abs(v))]
    return v * (abs(ref) / ref)


def _tie_break(values, vectors, rel_tol):
    """Order eigenvectors inside numerically degenerate clusters deterministically."""
    n = values.shape[0]
    scale = max(np.max(np.abs(values)), 1.0) if n else 1.0
    order = np.arange(n)
    i = 0
    while i < n:
        j = i + 1
        while j < n and values[j] - values[i] <= rel_tol * scale:
            j += 1
        if j - i > 1:
            first = vectors[0, i:j]
            keys = sorted(range(j - i), key=lambda t: (round(first[t].real, 12), round(first[t].imag, 12)))
            order[i:j] = i + np.asarray(keys)
        i = j
    return values[order], vectors[:, order]


def eig_hermitian_gen(K, M, *, n=None, check=True, gauge=True, tol=None) -> EigenSolution:
    """Eigenpairs of ``K u = lam M u`` for a Hermitian pencil with SPD ``M``.

    Eigenvalues are ascending; eigenvectors are M-orthonormal and, when
    ``gauge`` is set, phase-fixed by :func:`gauge_fix`.  ``n`` limits the
    solve to the ``n`` smallest eigenpairs (LAPACK ``evr`` subset driver).

    Raises
    ------
    NotHermitian
        If ``K`` or ``M`` violates the symmetry tolerance.
    MassNotSPD
        If the Cholesky factorization of ``M`` fails.
    """
    if check:
        K, M = check_pencil(K, M, tol)
    K = np.asarray(K)
    M = np.asarray(M)
    dtype = np.result_type(K.dtype, M.dtype, np.float64)
    K = 0.5 * (K + K.conj().T)
    M = 0.5 * (M + M.conj().T)
    try:
        L = sla.cholesky(M.astype(dtype), lower=True)
    except np.linalg.LinAlgError as exc:
        raise MassNotSPD(f"Cholesky factorization of M failed: {exc}") from None
    if np.any(np.real(np.diag(L)) <= 0):
        raise MassNotSPD("non-positive Cholesky pivot")
    A = sla.solve_triangular(L, K.astype(dtype), lower=True)
    A = sla.solve_triangular(L, A.conj().T, lower=True).conj().T
    A = 0.5 * (A + A.conj().T)
    if n is None or n >= A.shape[0]:
        w, Y = np.linalg.eigh(A)
    else:
        if n < 1:
            raise ValueError(f"number of requested eigenpairs must be positive, got {n}")
        w, Y = sla.eigh(A, subset_by_index=[0, n - 1], driver="evr")
    U = sla.solve_triangular(L.conj().T, Y, lower=False)
    if gauge:
        U = gauge_fix(U)
        w, U = _tie_break(w, U, TOL.tie)
    return EigenSolution(values=w, vectors=U)


def eig_general_gen(K, M, method="qz") -> np.ndarray:
    """Eigenvalues of a general (possibly non-Hermitian) pencil, sorted by real part.

    ``method="qz"`` uses the generalized Schur form; ``"reduce"`` factors
    ``M`` (LU) and solves the standard problem for ``M^{-1} K``, which is
    faster and adequate when ``M`` is well conditioned.
    """
    check_finite(K, M)
    if method == "qz":
        lam = sla.eigvals(np.asarray(K), np.asarray(M))
    elif method == "reduce":
        lam = np.linalg.eigvals(sla.lu_solve(sla.lu_factor(M), K))
    else:
        raise ValueError(f"unknown method {method!r}")
    return lam[np.lexsort((lam.imag, lam.real))]


def thin_svd(A):
    """Economy SVD ``A = U diag(s) V^H`` with non-increasing ``s``."""
    A = np.asarray(A)
    check_finite(A)
    if A.size == 0:
        raise ValueError("cannot take the SVD of an empty matrix")
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    return U, s, Vh.conj().T


def _inner(u, v, W):
    if W is None:
        return np.vdot(u, v)
    return np.vdot(u, W @ v)


def orthonormalize_against(v, basis=None, W=None, rel_tol=None):
    """Two passes of modified Gram-Schmidt of ``v`` against orthonormal ``basis``.

    ``W`` selects a weighted inner product ``<x, y> = x^H W y`` (``None`` is
    Euclidean).  Returns the unit-norm remainder.

    Raises
    ------
    Degenerate
        When less than ``rel_tol`` of ``||v||`` survives the projection.
    """
    rel_tol = TOL.degenerate if rel_tol is None else rel_tol
    v = np.array(v, dtype=np.complex128 if np.iscomplexobj(v) or (basis is not None and np.iscomplexobj(basis)) else np.float64)
    norm0 = np.sqrt(abs(_inner(v, v, W)))
    if norm0 == 0.0:
        raise Degenerate("zero vector")
    if basis is not None and basis.shape[1]:
        for _ in range(2):
            for j in range(basis.shape[1]):
                q = basis[:, j]
                v = v - _inner(q, v, W) * q
    nrm = np.sqrt(abs(_inner(v, v, W)))
    if nrm < rel_tol * norm0:
        raise Degenerate(f"vector lies in the span of the basis (remainder {nrm / norm0:.2e})")
    return v / nrm
