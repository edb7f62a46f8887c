"""Snapshot sets, SVD-based n-width estimates and decay-rate fits.

The discrete Kolmogorov n-width of a sampled manifold is bounded by the
singular values of its snapshot matrix: projecting onto the first ``n`` left
singular vectors leaves a worst-case column error of at most ``sigma_{n+1}``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .affine import AffineFamily
from .exceptions import FitRangeEmpty
from .numkernel import check_finite, thin_svd


@dataclass(frozen=True)
class SnapshotSet:
    """Snapshot matrix with per-column metadata.

    Attributes
    ----------
    S : ndarray, shape (N, M)
        Weighted snapshot columns.
    k : ndarray, shape (M, d)
        Wave vector of each column.
    band : ndarray, shape (M,)
        One-based band index of each column.
    weighting : str
        Description of the column weight, applied exactly once.
    domain : str
        ``"interval"``, ``"path"`` or ``"ibz"``.
    """

    S: np.ndarray
    k: np.ndarray
    band: np.ndarray
    weighting: str = "none"
    domain: str = "interval"
    values: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        S = np.asarray(self.S)
        k = np.asarray(self.k, dtype=float)
        if k.ndim == 1:
            k = k[:, None]
        band = np.asarray(self.band, dtype=int)
        if S.ndim != 2 or S.shape[1] != k.shape[0] or band.shape != (S.shape[1],):
            raise ValueError("metadata length must equal the number of snapshot columns")
        S = S.copy()
        S.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "band", band)

    @property
    def M(self) -> int:
        return self.S.shape[1]

    def select_bands(self, bands) -> "SnapshotSet":
        sel = np.isin(self.band, np.atleast_1d(bands))
        vals = None if self.values is None else self.values[sel]
        return SnapshotSet(self.S[:, sel], self.k[sel], self.band[sel], self.weighting, self.domain, vals)


# -- sampling grids --------------------------------------------------------


def interval_grid(M: int, a=1.0):
    """``M`` points uniformly spaced in the open interval ``(0, pi/a)``."""
    if M < 1:
        raise ValueError("M must be positive")
    return np.arange(1, M + 1) * np.pi / (a * (M + 1))


def collect_snapshots(solver, k, bands, weight=1.0, weighting="none", domain="interval") -> SnapshotSet:
    """Solve at every ``k`` and store the requested bands as columns.

    Parameters
    ----------
    solver : AffineFamily or callable
        Either a family (solved with :meth:`AffineFamily.solve`) or a callable
        ``solver(k_array, n_bands) -> (values[n_k, J], vectors[n_k, N, J])``
        with gauge-fixed vectors.
    k : array_like, shape (M,) or (M, d)
    bands : sequence of int
        One-based band indices.
    weight : float
        Scalar applied to every column (e.g. ``sqrt(dx)``).

    Columns are ordered wave vector first, band second.
    """
    k = np.asarray(k, dtype=float)
    if k.ndim == 1:
        k = k[:, None]
    bands = np.atleast_1d(np.asarray(bands, dtype=int))
    if np.any(bands < 1):
        raise ValueError("band indices are one-based")
    J = int(bands.max())
    if isinstance(solver, AffineFamily):
        sols = [solver.solve(kk, J) for kk in k]
        vals = np.array([s.values for s in sols])
        vecs = np.array([s.vectors for s in sols])
    else:
        vals, vecs = solver(k if k.shape[1] > 1 else k[:, 0], J)
        vals, vecs = np.asarray(vals), np.asarray(vecs)
    check_finite(vecs)
    idx = bands - 1
    cols = vecs[:, :, idx]  # (M, N, B)
    S = weight * np.transpose(cols, (1, 0, 2)).reshape(vecs.shape[1], -1)
    kk = np.repeat(k, bands.size, axis=0)
    bb = np.tile(bands, k.shape[0])
    vv = vals[:, idx].ravel()
    return SnapshotSet(S, kk, bb, weighting, domain, vv)


# -- SVD and projection errors ---------------------------------------------


@dataclass(frozen=True)
class DecayResult:
    """Singular values and measured worst-case projection errors.

    ``worst_case_error[n]`` is the largest column error after projecting onto
    the first ``n`` left singular vectors, for ``n = 0 .. len(sigma)``.
    """

    sigma: np.ndarray
    worst_case_error: np.ndarray
    U: np.ndarray

    @property
    def sigma_normalized(self):
        return self.sigma / self.sigma[0]

    def n_for(self, rel_tol: float) -> int:
        """Smallest ``n`` with ``sigma_n / sigma_1 <= rel_tol`` (``len + 1`` if never)."""
        hit = np.flatnonzero(self.sigma_normalized <= rel_tol)
        return int(hit[0]) + 1 if hit.size else self.sigma.size + 1

    def bound_violation(self, abs_tol=None) -> float:
        """Largest ``error_n - sigma_{n+1}`` (negative when the bound holds)."""
        s_next = np.append(self.sigma, 0.0)
        tol = 0.0 if abs_tol is None else abs_tol
        return float(np.max(self.worst_case_error - s_next - tol))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "sigma", "sigma_normalized", "worst_case_error"])
        for n, (s, sn) in enumerate(zip(self.sigma, self.sigma_normalized), start=1):
            w.writerow([n, repr(float(s)), repr(float(sn)), repr(float(self.worst_case_error[n - 1]))])
        return buf.getvalue()


def realify(S):
    """Stack real and imaginary parts, mapping ``C^N`` columns into ``R^{2N}``."""
    S = np.asarray(S)
    return np.vstack([S.real, S.imag])


def projection_errors(S, Q):
    """Per-column errors ``||s - Q Q^H s||`` for orthonormal ``Q``."""
    R = S - Q @ (Q.conj().T @ S)
    return np.linalg.norm(R, axis=0)


def svd_decay(snap, realified=False, n_max=None) -> DecayResult:
    """Singular values and measured worst-case projection errors.

    Errors are measured by explicit deflation ``R <- R - u_n (u_n^H R)``
    rather than read off the singular values, so comparing them against
    ``sigma_{n+1}`` is a genuine check.

    Parameters
    ----------
    snap : SnapshotSet or ndarray
    realified : bool
        Treat columns as real vectors in ``R^{2N}``.  A manifold of complex
        vectors can have a larger real dimension than complex dimension.
    n_max : int, optional
        Stop measuring errors beyond this basis size (remaining entries are
        filled with the last measured value).
    """
    S = snap.S if isinstance(snap, SnapshotSet) else np.asarray(snap)
    if S.size == 0:
        raise ValueError("snapshot set is empty")
    if realified:
        S = realify(S)
    U, s, _ = thin_svd(S)
    r = s.size if n_max is None else min(int(n_max), s.size)
    err = np.empty(s.size + 1)
    R = np.array(S, dtype=np.result_type(S.dtype, U.dtype))
    err[0] = np.max(np.linalg.norm(R, axis=0))
    for n in range(1, r + 1):
        u = U[:, n - 1 : n]
        R -= u @ (u.conj().T @ R)
        err[n] = np.max(np.linalg.norm(R, axis=0))
    err[r + 1 :] = err[r]
    return DecayResult(sigma=s, worst_case_error=err, U=U)


def worst_case_error(snap, V) -> float:
    """Worst-case projection error of snapshot columns onto orthonormal ``V``."""
    S = snap.S if isinstance(snap, SnapshotSet) else np.asarray(snap)
    return float(np.max(projection_errors(S, np.asarray(V))))


def nwidth_lower_bound_check(snap, V, realified=False) -> dict:
    """Compare a basis against the SVD optimum of the same size.

    Returns the basis' worst-case error, ``sigma_{n+1}``, the SVD basis' own
    worst-case error and the ratio of the supplied basis' error to it.
    """
    S = snap.S if isinstance(snap, SnapshotSet) else np.asarray(snap)
    if realified:
        S = realify(S)
    V = np.asarray(V)
    n = V.shape[1]
    U, s, _ = thin_svd(S)
    err = float(np.max(projection_errors(S, V)))
    svd_err = float(np.max(projection_errors(S, U[:, :n])))
    s_next = float(s[n]) if n < s.size else 0.0
    return {
        "n": n,
        "worst_case_error": err,
        "sigma_next": s_next,
        "svd_worst_case_error": svd_err,
        "ratio_to_svd": err / svd_err if svd_err > 0 else (np.inf if err > 0 else 1.0),
        "ratio_to_sigma_next": err / s_next if s_next > 0 else (np.inf if err > 0 else 1.0),
    }


# -- decay fits ------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    """Least-squares line through ``(x_n, log sigma_n)`` on the fit window."""

    model: str
    beta: float
    C: float
    r2: float
    n_range: tuple
    residuals: np.ndarray = field(repr=False)
    n_used: np.ndarray = field(repr=False)

    def curvature(self) -> float:
        """Leading coefficient of a quadratic fitted to the residuals versus ``n``.

        Negative values mean concave residuals, positive values convex.
        """
        return float(np.polyfit(self.n_used, self.residuals, 2)[0])

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "beta": self.beta,
            "C": self.C,
            "r2": self.r2,
            "fit_range": list(self.n_range),
            "residual_curvature": self.curvature() if self.n_used.size >= 3 else None,
        }


def fit_decay(sigma, model="exp", floor=1e-12, ceiling=1e-2) -> DecayFit:
    """Fit ``sigma_n ~ C exp(-beta x_n)`` with ``x_n = n`` or ``sqrt(n)``.

    Only indices with ``sigma_n / sigma_1`` in ``[floor, ceiling]`` are used.

    Raises
    ------
    FitRangeEmpty
        If fewer than four values fall in the window, or the fitted rate is
        not positive.
    """
    if model not in ("exp", "stretched"):
        raise ValueError(f"unknown decay model {model!r}")
    s = np.asarray(sigma, dtype=float)
    if s.size < 2 or s[0] <= 0:
        raise FitRangeEmpty("need at least two singular values with sigma_1 > 0")
    n = np.arange(1, s.size + 1)
    rel = s / s[0]
    mask = (rel >= floor) & (rel <= ceiling)
    if np.count_nonzero(mask) < 4:
        raise FitRangeEmpty(f"only {np.count_nonzero(mask)} values inside [{floor:g}, {ceiling:g}] * sigma_1")
    nn = n[mask]
    x = nn.astype(float) if model == "exp" else np.sqrt(nn)
    y = np.log(s[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    if slope >= 0:
        raise FitRangeEmpty(f"fitted rate {-slope:g} is not positive")
    return DecayFit(model, float(-slope), float(np.exp(intercept)), float(r2), (int(nn[0]), int(nn[-1])), resid, nn)


def fit_summary_json(fits) -> str:
    return json.dumps([f.to_dict() for f in fits], indent=2, sort_keys=True)
