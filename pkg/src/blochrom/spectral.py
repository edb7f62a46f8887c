"""Spectral gaps, Lipschitz constants, holomorphy radii and cluster projectors.

All quantities are in the eigenvalue variable ``lambda = omega^2``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .affine import AffineFamily
from .exceptions import ClusterBoundaryDegenerate, NoClosureFound, ZeroLipschitz
from .numkernel import EigenSolution, eig_general_gen
from .parallel import pmap

SAFETY = 1.2


def _as_k(k):
    k = np.asarray(k, dtype=float)
    return k[:, None] if k.ndim == 1 else k


def eigenvalue_sweep(solver, k, n_bands: int, threads=None):
    """First ``n_bands`` eigenvalues at each wave vector, shape ``(n_k, n_bands)``.

    ``solver`` is an :class:`AffineFamily`, an object with an
    ``eigenvalues(k, n)`` method accepting a batch (such as
    :class:`~blochrom.solver1d.TMMSolver`), or a plain callable with that
    signature.
    """
    k = _as_k(k)
    if isinstance(solver, AffineFamily):
        return np.array(pmap(lambda kk: solver.eigenvalues(kk, n_bands), k, threads))
    fn = solver.eigenvalues if hasattr(solver, "eigenvalues") else solver
    arg = k[:, 0] if k.shape[1] == 1 else k
    return np.asarray(fn(arg, n_bands)).reshape(k.shape[0], n_bands)


def band_gaps(values, j: int):
    """``delta_j = min_{i != j} |lambda_j - lambda_i|`` from sorted rows (``j`` one-based)."""
    v = np.asarray(values)
    lam = v[:, j - 1]
    cand = []
    if j > 1:
        cand.append(lam - v[:, j - 2])
    if j < v.shape[1]:
        cand.append(v[:, j] - lam)
    if not cand:
        raise ValueError("need at least two bands to define a gap")
    return np.min(np.abs(np.vstack(cand)), axis=0)


def cluster_gaps(values, J: int):
    v = np.asarray(values)
    if J >= v.shape[1]:
        raise ValueError(f"cluster gap of size {J} needs at least {J + 1} bands")
    return np.abs(v[:, J] - v[:, J - 1])


@dataclass
class LipschitzEstimate:
    L: float
    k_argmax: np.ndarray
    band: int
    raw_slope: float


@dataclass
class GapProfile:
    """Sampled gap of band ``j`` (or of a ``J``-band cluster)."""

    k: np.ndarray
    delta: np.ndarray
    j: int | None = None
    cluster: int | None = None
    L: float | None = None

    @property
    def delta_star(self) -> float:
        return float(np.min(self.delta))

    @property
    def k_star(self):
        return self.k[int(np.argmin(self.delta))]

    @property
    def rho_star(self):
        if self.L is None:
            return None
        return holomorphy_radius_bound(self.delta_star, self.L, strict=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kx", "ky", "delta"])
        for kk, d in zip(self.k, self.delta):
            ky = kk[1] if kk.size > 1 else 0.0
            w.writerow([repr(float(kk[0])), repr(float(ky)), repr(float(d))])
        return buf.getvalue()

    def summary(self) -> dict:
        rho = self.rho_star
        return {
            "band": self.j,
            "cluster": self.cluster,
            "delta_star": self.delta_star,
            "argmin_k": [float(x) for x in np.atleast_1d(self.k_star)],
            "L": self.L,
            "rho_star": None if rho is None else (None if np.isinf(rho) else float(rho)),
            "rho_star_infinite": bool(rho is not None and np.isinf(rho)),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def gap_profile(solver, k, j=None, cluster=None, n_bands=None, values=None, threads=None) -> GapProfile:
    """Gap of band ``j`` or of the first ``cluster`` bands at each sample.

    Exactly one of ``j`` and ``cluster`` must be given.  ``values`` may pass
    precomputed eigenvalues.
    """
    if (j is None) == (cluster is None):
        raise ValueError("give exactly one of j and cluster")
    need = (j + 1) if j is not None else (cluster + 1)
    n_bands = need if n_bands is None else max(n_bands, need)
    k = _as_k(k)
    v = eigenvalue_sweep(solver, k, n_bands, threads) if values is None else np.asarray(values)
    delta = band_gaps(v, j) if j is not None else cluster_gaps(v, cluster)
    return GapProfile(k=k, delta=delta, j=j, cluster=cluster)


def lipschitz_estimate(solver, k, n_bands: int, bands=None, values=None, safety=SAFETY, threads=None) -> LipschitzEstimate:
    """Largest eigenvalue slope between adjacent samples, times ``safety``.

    ``k`` is an ordered list of samples (interval or polyline).  ``bands``
    restricts the maximum to a subset of one-based band indices.
    """
    k = _as_k(k)
    if k.shape[0] < 3:
        raise ValueError("need at least three samples")
    v = eigenvalue_sweep(solver, k, n_bands, threads) if values is None else np.asarray(values)
    dk = np.linalg.norm(np.diff(k, axis=0), axis=1)
    keep = dk > 0
    slopes = np.abs(np.diff(v, axis=0))[keep] / dk[keep, None]
    if bands is not None:
        idx = np.asarray(bands) - 1
        slopes = slopes[:, idx]
    else:
        idx = np.arange(v.shape[1])
    i, b = np.unravel_index(int(np.argmax(slopes)), slopes.shape)
    mid = 0.5 * (k[:-1][keep][i] + k[1:][keep][i])
    raw = float(slopes[i, b])
    return LipschitzEstimate(L=safety * raw, k_argmax=mid, band=int(idx[b]) + 1, raw_slope=raw)


def holomorphy_radius_bound(delta_star, L=None, strict=True) -> float:
    """``rho* = delta* / (2 L)``.

    Accepts either numbers or a :class:`GapProfile` carrying ``L``.

    Raises
    ------
    ZeroLipschitz
        If ``L == 0`` while ``delta* > 0`` (with ``strict``; otherwise ``inf``
        is returned as a sentinel).
    """
    if isinstance(delta_star, GapProfile):
        L = delta_star.L
        delta_star = delta_star.delta_star
    if L is None:
        raise ValueError("Lipschitz constant required")
    if delta_star <= 0:
        return 0.0
    if L <= 0:
        if strict:
            raise ZeroLipschitz("Lipschitz constant is zero; the radius bound is infinite")
        return np.inf
    return float(delta_star / (2.0 * L))


# -- complex-k probe ---------------------------------------------------------


@dataclass
class ClosureResult:
    distance: float
    k: np.ndarray
    relative_gap: float


def _complex_gap(fam: AffineFamily, k_real, direction, j, z):
    lam = eig_general_gen(*fam.evaluate(k_real + z * direction), method="reduce")
    lam = lam[np.argsort(lam.real, kind="stable")]
    lj = lam[j - 1]
    others = np.delete(lam, j - 1)
    return float(np.min(np.abs(others - lj)) / max(abs(lj), 1e-300))


def gap_closure_probe(
    fam: AffineFamily,
    k_real,
    direction=None,
    j: int = 1,
    t_max=None,
    threshold=1e-6,
    n_radii=12,
    n_angles=16,
    n_refine=3,
) -> ClosureResult:
    """Distance from ``k_real`` to the nearest complex coalescence of band ``j``.

    Wave vectors ``k_real + z * direction`` with complex ``z`` are scanned on
    a polar grid of radius up to ``t_max``; the best grid points are refined
    by Nelder-Mead on the relative gap of the non-Hermitian pencil.  A point
    whose relative gap drops below ``threshold`` counts as a closure, and the
    smallest such ``|z|`` is returned.

    Raises
    ------
    NoClosureFound
        If no closure is found within ``t_max``.
    """
    k_real = np.atleast_1d(np.asarray(k_real, dtype=float))
    d = fam.lattice.dim
    direction = np.eye(d)[0] if direction is None else np.atleast_1d(np.asarray(direction, dtype=float))
    direction = direction / np.linalg.norm(direction)
    t_max = 1.5 * np.pi / fam.lattice.a if t_max is None else t_max
    g = lambda z: _complex_gap(fam, k_real, direction, j, z)  # noqa: E731

    radii = t_max * np.geomspace(1e-3, 1.0, n_radii)
    theta = np.linspace(0, 2 * np.pi, n_angles, endpoint=False)
    zs = (radii[:, None] * np.exp(1j * theta)[None, :]).ravel()
    vals = np.array([g(z) for z in zs])
    order = np.argsort(vals, kind="stable")[: max(n_refine, 1)]

    best = None
    for z0 in zs[order]:
        obj = lambda p: g(p[0] + 1j * p[1]) ** 0.5  # noqa: E731
        h = 0.2 * abs(z0) + 1e-6
        simplex = np.array([[z0.real, z0.imag], [z0.real + h, z0.imag], [z0.real, z0.imag + h]])
        res = minimize(
            obj,
            [z0.real, z0.imag],
            method="Nelder-Mead",
            options={"xatol": 1e-15, "fatol": 1e-18, "maxiter": 400, "initial_simplex": simplex},
        )
        z = res.x[0] + 1j * res.x[1]
        gz = g(z)
        if gz < threshold and abs(z) <= t_max and (best is None or abs(z) < abs(best[0])):
            best = (z, gz)
    if best is None:
        raise NoClosureFound(f"no coalescence of band {j} within |z| <= {t_max:g} (best relative gap {vals.min():.2e})")
    z, gz = best
    return ClosureResult(distance=float(abs(z)), k=k_real + z * direction, relative_gap=gz)


# -- cluster projectors ------------------------------------------------------


@dataclass
class ClusterProjector:
    k: np.ndarray
    J: int
    P: np.ndarray
    vectors: np.ndarray


def cluster_projector(sol: EigenSolution, J: int, M, k=None, gap_tol=1e-10) -> ClusterProjector:
    """``P_J = (sum_{j<=J} u_j u_j^H) M`` from M-orthonormal eigenvectors.

    Raises
    ------
    ClusterBoundaryDegenerate
        If ``lambda_{J+1} - lambda_J <= gap_tol * lambda_{J+1}``.
    """
    N = sol.vectors.shape[0]
    if J < N:
        if sol.values.shape[0] <= J:
            raise ValueError(f"need {J + 1} eigenpairs to check the cluster boundary")
        gap = sol.values[J] - sol.values[J - 1]
        if gap <= gap_tol * abs(sol.values[J]):
            raise ClusterBoundaryDegenerate(f"gap {gap:.3e} between bands {J} and {J + 1} is too small")
    U = sol.vectors[:, :J]
    P = U @ (U.conj().T @ M)
    return ClusterProjector(k=np.atleast_1d(k if k is not None else sol.k), J=J, P=P, vectors=U)


def projectors_along(fam: AffineFamily, k, J: int, threads=None):
    """Cluster projectors at each sample of a path."""
    k = _as_k(k)

    def one(kk):
        K, M = fam.pencil(kk)
        sol = fam.solve(kk, min(J + 1, fam.dim))
        return cluster_projector(sol, J, M, k=kk)

    return pmap(one, k, threads)


def projector_steps(projectors) -> np.ndarray:
    """``||P(k_{i+1}) - P(k_i)||_F`` for adjacent projectors."""
    return np.array([np.linalg.norm(b.P - a.P) for a, b in zip(projectors[:-1], projectors[1:])])


def projector_continuity(projectors) -> float:
    """Largest adjacent step distance along the path."""
    steps = projector_steps(projectors)
    return float(steps.max()) if steps.size else 0.0


def eigenvector_steps(fam: AffineFamily, k, j: int, threads=None) -> np.ndarray:
    """Phase-invariant step distances of the band-ordered eigenvector ``j``.

    Measured as the distance between the rank-one projectors ``u_j u_j^H M``
    at adjacent samples, without the cluster-boundary check.
    """
    k = _as_k(k)

    def one(kk):
        _, M = fam.pencil(kk)
        u = fam.solve(kk, j).vectors[:, j - 1 : j]
        return u @ (u.conj().T @ M)

    P = pmap(one, k, threads)
    return np.array([np.linalg.norm(b - a) for a, b in zip(P[:-1], P[1:])])
