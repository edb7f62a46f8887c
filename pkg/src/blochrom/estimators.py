"""scikit-learn style wrappers for the reduced-basis builders.

Snapshots follow the scikit-learn layout: one snapshot per *row*.  Complex
data are accepted, which :func:`sklearn.utils.check_array` does not allow,
so validation lives in :func:`check_snapshots`.
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_is_fitted

from .affine import AffineFamily
from .exceptions import Stagnation
from .greedy import oracle_greedy, reduced_solve, residual_greedy
from .nwidth import SnapshotSet, fit_decay, realify, svd_decay
from .numkernel import check_finite


def check_snapshots(X, min_samples=1):
    """Return ``X`` as a 2-D float or complex array with finite entries."""
    X = np.asarray(X)
    if X.ndim == 1:
        raise ValueError("expected a 2-D array with one snapshot per row; reshape 1-D input")
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D array, got {X.ndim}-D")
    if X.dtype.kind not in "fciu":
        raise ValueError(f"snapshots must be numeric, got dtype {X.dtype}")
    if X.shape[0] < min_samples:
        raise ValueError(f"need at least {min_samples} snapshot(s), got {X.shape[0]}")
    X = X.astype(np.complex128 if X.dtype.kind == "c" else np.float64)
    check_finite(X)
    return X


class SVDBasis(TransformerMixin, BaseEstimator):
    """Optimal linear basis of a snapshot set.

    Parameters
    ----------
    n_components : int, optional
        Basis size.  When omitted, the smallest ``n`` with
        ``sigma_{n+1} <= tol * sigma_1`` is used.
    tol : float
    realified : bool
        Work with real and imaginary parts stacked.

    Attributes
    ----------
    components_ : ndarray, shape (n_components_, n_features)
        Orthonormal basis vectors as rows; ``transform`` returns the
        coefficients ``X @ components_.conj().T``.
    singular_values_ : ndarray
    worst_case_error_ : ndarray
        Measured worst-case projection error for each basis size.
    """

    def __init__(self, n_components=None, tol=1e-12, realified=False):
        self.n_components = n_components
        self.tol = tol
        self.realified = realified

    def fit(self, X, y=None):
        X = check_snapshots(X)
        S = X.T
        res = svd_decay(S, realified=self.realified)
        self.singular_values_ = res.sigma
        self.worst_case_error_ = res.worst_case_error
        if self.n_components is None:
            n = int(np.count_nonzero(res.sigma > self.tol * res.sigma[0]))
        else:
            n = int(self.n_components)
        self.n_components_ = n
        self.components_ = res.U[:, :n].T
        self.n_features_in_ = X.shape[1]
        return self

    def _prep(self, X):
        X = check_snapshots(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return realify(X.T).T if self.realified else X

    def transform(self, X):
        check_is_fitted(self)
        return self._prep(X) @ self.components_.conj().T

    def inverse_transform(self, C):
        check_is_fitted(self)
        Y = np.asarray(C) @ self.components_
        if self.realified:
            n = self.n_features_in_
            Y = Y[:, :n] + 1j * Y[:, n:]
        return Y

    def decay_fit(self, model="exp", floor=1e-12, ceiling=1e-2):
        check_is_fitted(self)
        return fit_decay(self.singular_values_, model, floor, ceiling)


class OracleGreedyBasis(TransformerMixin, BaseEstimator):
    """Greedy basis picking the worst-approximated snapshot row.

    Parameters
    ----------
    n_max : int, optional
    tol : float
        Stop when the worst error is at most ``tol * sigma_1``.
    init : ndarray, optional
        Initial vectors, one per row.
    """

    def __init__(self, n_max=None, tol=1e-11, init=None):
        self.n_max = n_max
        self.tol = tol
        self.init = init

    def fit(self, X, y=None):
        X = check_snapshots(X)
        M = X.shape[0]
        snap = SnapshotSet(X.T, np.zeros(M), np.ones(M, dtype=int))
        init = None if self.init is None else check_snapshots(self.init).T
        try:
            basis, hist = oracle_greedy(snap, J=1, init=init, n_max=self.n_max, tol=self.tol)
            self.termination_ = "converged"
        except Stagnation as exc:
            warnings.warn(f"greedy stopped early: {exc}", ConvergenceWarning, stacklevel=2)
            basis, hist, self.termination_ = exc.basis, exc.history, "stagnation"
        self.components_ = basis.Phi.T
        self.n_components_ = basis.n
        self.history_ = hist
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        return check_snapshots(X) @ self.components_.conj().T

    def inverse_transform(self, C):
        check_is_fitted(self)
        return np.asarray(C) @ self.components_


class ResidualGreedyROM(BaseEstimator):
    """Reduced Bloch eigensolver built by the residual greedy.

    ``fit`` takes the training wave vectors (one per row); ``predict``
    returns the ``J`` reduced eigenvalues ``omega^2`` at new wave vectors.
    """

    def __init__(self, family: AffineFamily | None = None, J=10, n_max=None, tol=1e-10, norm="euclidean", init_k=None):
        self.family = family
        self.J = J
        self.n_max = n_max
        self.tol = tol
        self.norm = norm
        self.init_k = init_k

    def fit(self, X, y=None):
        if not isinstance(self.family, AffineFamily):
            raise ValueError("family must be an AffineFamily")
        k = np.asarray(X, dtype=float)
        k = k[:, None] if k.ndim == 1 else k
        if k.shape[1] != self.family.lattice.dim:
            raise ValueError(f"wave vectors must have {self.family.lattice.dim} component(s)")
        check_finite(k)
        try:
            self.basis_, self.history_ = residual_greedy(
                self.family, k, self.J, init_k=self.init_k, n_max=self.n_max, tol=self.tol, norm=self.norm
            )
            self.termination_ = "converged"
        except Stagnation as exc:
            # the selected eigenvector is already resolved to round-off by the basis
            warnings.warn(f"greedy stopped early: {exc}", ConvergenceWarning, stacklevel=2)
            self.basis_, self.history_, self.termination_ = exc.basis, exc.history, "stagnation"
        self.n_components_ = self.basis_.n
        self.full_solves_ = self.history_.rows[-1]["full_solves"]
        return self

    def predict(self, X):
        check_is_fitted(self)
        k = np.asarray(X, dtype=float)
        k = k[:, None] if k.ndim == 1 else k
        return np.array([reduced_solve(self.basis_, kk, self.J)[0] for kk in k])
