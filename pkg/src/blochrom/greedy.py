"""Reduced-basis construction by greedy enrichment.

Two drivers share one :class:`ReducedBasis`:

* :func:`oracle_greedy` picks the snapshot with the largest true projection
  error (needs every snapshot up front);
* :func:`residual_greedy` ranks training wave vectors by the reduced
  eigenpair residual and performs one full solve per enrichment step.

Residuals are evaluated from cached operator-basis products ``K_m Phi`` and
``M_m Phi`` so a sweep over the training grid never forms ``K(k)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .affine import AffineFamily
from .exceptions import Degenerate, IndicatorCollapse, Stagnation
from .numkernel import eig_hermitian_gen, orthonormalize_against
from .nwidth import SnapshotSet, projection_errors
from .parallel import pmap


class ReducedBasis:
    """Orthonormal basis ``Phi`` with cached per-term products.

    Parameters
    ----------
    N : int
        Full dimension.
    family : AffineFamily, optional
        When given, ``K_m Phi``, ``M_m Phi`` and their reduced projections are
        kept in sync with ``Phi``.
    W : ndarray, optional
        Weight of the inner product ``<x, y> = x^H W y`` (``None`` is
        Euclidean).
    """

    def __init__(self, N: int, family: AffineFamily | None = None, W=None):
        self.N = N
        self.family = family
        self.W = W
        self.inner = "euclidean" if W is None else "weighted"
        self.Phi = np.zeros((N, 0), dtype=complex)
        self.provenance = []
        nterm = 0 if family is None else len(family.terms)
        self.KPhi = [np.zeros((N, 0), dtype=complex) for _ in range(nterm)]
        self.MPhi = [np.zeros((N, 0), dtype=complex) for _ in range(nterm)]
        self.Kr = [np.zeros((0, 0), dtype=complex) for _ in range(nterm)]
        self.Mr = [np.zeros((0, 0), dtype=complex) for _ in range(nterm)]

    @property
    def n(self) -> int:
        return self.Phi.shape[1]

    def orthonormality_defect(self) -> float:
        G = self.Phi.conj().T @ (self.Phi if self.W is None else self.W @ self.Phi)
        return float(np.max(np.abs(G - np.eye(self.n)))) if self.n else 0.0

    def add(self, v, k=None, band=None, step=None):
        """Orthonormalize ``v`` against the basis and append it.

        Raises
        ------
        Degenerate
            If ``v`` already lies in the span.
        """
        q = orthonormalize_against(v, self.Phi, self.W)
        if self.family is not None:
            for t, (Km, Mm) in enumerate(self.family.terms.values()):
                for P, R, A in ((self.KPhi, self.Kr, Km), (self.MPhi, self.Mr, Mm)):
                    Aq = A @ q
                    col = self.Phi.conj().T @ Aq
                    row = q.conj() @ P[t]
                    R[t] = np.block([[R[t], col[:, None]], [row[None, :], np.array([[np.vdot(q, Aq)]])]])
                    P[t] = np.column_stack([P[t], Aq])
        self.Phi = np.column_stack([self.Phi, q])
        kk = None if k is None else np.atleast_1d(np.asarray(k, dtype=float)).tolist()
        self.provenance.append((kk, band, step))
        return q

    def project_error(self, V):
        """Column-wise distance of ``V`` from the span, in the basis inner product."""
        if self.W is None:
            return projection_errors(V, self.Phi)
        R = V - self.Phi @ (self.Phi.conj().T @ (self.W @ V))
        return np.sqrt(np.abs(np.einsum("ij,ij->j", R.conj(), self.W @ R)))


def _normalize(V, W=None):
    if W is None:
        return V / np.linalg.norm(V, axis=0)
    return V / np.sqrt(np.abs(np.einsum("ij,ij->j", V.conj(), W @ V)))


def reduced_pencil(basis: ReducedBasis, k):
    f = basis.family.phases(k)
    Kt = sum(fm * R for fm, R in zip(f, basis.Kr))
    Mt = sum(fm * R for fm, R in zip(f, basis.Mr))
    return Kt, Mt, f


def reduced_solve(basis: ReducedBasis, k, J: int):
    """Rayleigh-Ritz eigenpairs from the cached reduced matrices.

    Returns ``(values, Y, lifted)`` where ``lifted = Phi @ Y``.
    """
    if basis.n < J:
        raise ValueError(f"basis size {basis.n} is smaller than the requested {J} bands")
    Kt, Mt, _ = reduced_pencil(basis, k)
    sol = eig_hermitian_gen(Kt, Mt, n=J, check=False, gauge=False)
    return sol.values, sol.vectors, basis.Phi @ sol.vectors


def residuals(basis: ReducedBasis, k, J: int, norm="euclidean"):
    """Residual norms ``||K(k) Phi y_j - w_j M(k) Phi y_j||`` for the ``J`` reduced pairs.

    Only the cached ``N x n`` products are touched, costing ``O(Q N n)``.
    ``norm="minv"`` measures the residual in the ``M(k)^{-1}`` norm, which
    needs a factorization of the full mass matrix.
    """
    Kt, Mt, f = reduced_pencil(basis, k)
    sol = eig_hermitian_gen(Kt, Mt, n=J, check=False, gauge=False)
    KP = sum(fm * P for fm, P in zip(f, basis.KPhi))
    MP = sum(fm * P for fm, P in zip(f, basis.MPhi))
    R = KP @ sol.vectors - (MP @ sol.vectors) * sol.values
    if norm == "euclidean":
        return np.linalg.norm(R, axis=0), sol.values
    if norm == "minv":
        _, M = basis.family.evaluate(k)
        c = sla.cho_factor(0.5 * (M + M.conj().T))
        return np.sqrt(np.abs(np.einsum("ij,ij->j", R.conj(), sla.cho_solve(c, R)))), sol.values
    raise ValueError(f"unknown residual norm {norm!r}")


@dataclass
class GreedyHistory:
    """One row per basis size ``n``.

    ``indicator`` and ``true_error`` describe the basis of size ``n``;
    ``k_sel``/``band_sel`` is the selection made from that state (``None``
    in the final row); ``full_solves`` counts solves used to build it.
    """

    rows: list = field(default_factory=list)
    sigma1: float | None = None

    def append(self, **row):
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows], dtype=float)

    def selections(self):
        return [(r["k_sel"], r["band_sel"]) for r in self.rows if r["band_sel"] is not None]

    def first_below(self, rel_tol):
        """First row whose true error is at most ``rel_tol * sigma1``."""
        for r in self.rows:
            if r["true_error"] is not None and r["true_error"] <= rel_tol * self.sigma1:
                return r
        return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["step", "n", "k_sel", "band_sel", "indicator", "true_error", "full_solves"]
        w.writerow(cols)

        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, (list, tuple, np.ndarray)):
                return " ".join(repr(float(x)) for x in np.atleast_1d(v))
            if isinstance(v, (float, np.floating)):
                return repr(float(v))
            return str(v)

        for r in self.rows:
            w.writerow([fmt(r[c]) for c in cols])
        return buf.getvalue()


def _k_of(k):
    k = np.atleast_1d(np.asarray(k, dtype=float))
    return float(k[0]) if k.size == 1 else k.tolist()


def oracle_greedy(snap: SnapshotSet, J: int, init=None, init_k=None, n_max=None, tol=1e-11):
    """Greedy selection of the worst-approximated snapshot column.

    Parameters
    ----------
    snap : SnapshotSet
    J : int
        Number of bands held in ``snap``.
    init : ndarray, optional
        Initial vectors (columns), e.g. the ``J`` eigenvectors at the zone
        center.  When omitted, the snapshot columns at the wave vector closest
        to ``init_k`` are used; when both are omitted the basis starts empty.
    n_max : int, optional
        Maximum basis size (default: rank bound ``min(N, M)``).
    tol : float
        Stop once the worst error is at most ``tol * sigma_1``.

    Returns
    -------
    basis : ReducedBasis
    history : GreedyHistory

    Raises
    ------
    Stagnation
        If the selected column is already in the span.
    """
    S = snap.S
    N, M = S.shape
    sigma1 = float(np.linalg.norm(S, 2))
    n_max = min(N, M) if n_max is None else n_max
    basis = ReducedBasis(N)
    hist = GreedyHistory(sigma1=sigma1)
    if init is None and init_k is not None:
        kk = np.atleast_1d(np.asarray(init_k, dtype=float))
        d = np.linalg.norm(snap.k - kk[None, :], axis=1)
        init = S[:, np.flatnonzero(d == d.min())]
    if init is not None:
        for j in range(np.asarray(init).shape[1]):
            try:
                basis.add(np.asarray(init)[:, j], k=init_k, band=j + 1, step=0)
            except Degenerate:
                continue
    step = 0
    while True:
        err = projection_errors(S, basis.Phi) if basis.n else np.linalg.norm(S, axis=0)
        i = int(np.argmax(err))  # argmax returns the lowest index on ties
        done = err[i] <= tol * sigma1 or basis.n >= n_max
        row = dict(step=step, n=basis.n, k_sel=None, band_sel=None, indicator=float(err[i]), true_error=float(err[i]), full_solves=0)
        if done:
            hist.append(**row)
            break
        row.update(k_sel=_k_of(snap.k[i]), band_sel=int(snap.band[i]))
        hist.append(**row)
        step += 1
        try:
            basis.add(S[:, i], k=snap.k[i], band=int(snap.band[i]), step=step)
        except Degenerate as exc:
            raise Stagnation(f"step {step}: selected column already in the span ({exc})", basis, hist) from None
    return basis, hist


def residual_greedy(
    fam: AffineFamily,
    training_k,
    J: int,
    init_k=None,
    n_max=None,
    tol=1e-10,
    norm="euclidean",
    inner="euclidean",
    audit: SnapshotSet | None = None,
    threads=None,
):
    """Weak greedy driven by the maximal reduced eigenpair residual.

    Each step evaluates ``Delta_n(k) = max_j ||r_j(k)||`` over the training
    grid, performs one full solve at the arg-max and appends the worst
    approximated of the ``J`` eigenvectors there.

    Parameters
    ----------
    fam : AffineFamily
    training_k : array_like, shape (M,) or (M, d)
    J : int
    init_k : array_like, optional
        Initialization wave vector; default is the zone-center of the
        1-D interval ``pi/(2a)`` or the centroid of the 2-D irreducible zone.
    n_max : int, optional
    tol : float
        Relative stopping tolerance on the indicator, measured against the
        first sweep maximum.  The sweep also stops once the indicator reaches
        round-off level, ``1e-12 * (||K(k_0)|| + w_J ||M(k_0)||)``.
    norm : {"euclidean", "minv"}
        Residual norm.
    inner : {"euclidean", "mass"}
        Basis inner product; ``"mass"`` uses ``M(k_0)``.
    audit : SnapshotSet, optional
        Reference snapshots (normalized in the basis inner product).  When
        given, the true worst-case projection error is recorded every step and
        :class:`IndicatorCollapse` is raised if the indicator has converged
        while the audited error exceeds ``10 * tol * sigma_1``.

    Raises
    ------
    Stagnation
        When the selected eigenvector already lies in the span.
    IndicatorCollapse
        See ``audit``.
    """
    tk = np.asarray(training_k, dtype=float)
    if tk.ndim == 1:
        tk = tk[:, None]
    a = fam.lattice.a
    if init_k is None:
        init_k = [np.pi / (2 * a)] if fam.lattice.dim == 1 else [2 * np.pi / (3 * a), np.pi / (3 * a)]
    init_k = np.atleast_1d(np.asarray(init_k, dtype=float))
    n_max = fam.dim if n_max is None else n_max
    W = None
    if inner == "mass":
        W = fam.pencil(init_k)[1]
    elif inner != "euclidean":
        raise ValueError(f"unknown inner product {inner!r}")
    basis = ReducedBasis(fam.dim, fam, W)
    sigma1 = float(np.linalg.norm(audit.S, 2)) if audit is not None else None
    hist = GreedyHistory(sigma1=sigma1)

    sol = fam.solve(init_k, J)
    solves = 1
    K0, M0 = fam.pencil(init_k)
    floor = 1e-12 * (np.linalg.norm(K0, 2) + abs(sol.values[-1]) * np.linalg.norm(M0, 2))
    V0 = _normalize(sol.vectors, W)
    for j in range(J):
        basis.add(V0[:, j], k=init_k, band=j + 1, step=0)

    def true_error():
        if audit is None:
            return None
        return float(np.max(basis.project_error(audit.S)))

    def indicator(kk):
        r, _ = residuals(basis, kk, J, norm)
        return float(np.max(r))

    step = 0
    delta0 = None
    while True:
        ind = np.array(pmap(indicator, tk, threads))
        i = int(np.argmax(ind))
        delta0 = ind[i] if delta0 is None else delta0
        terr = true_error()
        converged = ind[i] <= max(tol * delta0, floor)
        if converged and terr is not None and terr > 10 * tol * sigma1:
            hist.append(step=step, n=basis.n, k_sel=None, band_sel=None, indicator=float(ind[i]), true_error=terr, full_solves=solves)
            raise IndicatorCollapse(
                f"indicator {ind[i]:.3e} below tolerance but audited error {terr / sigma1:.3e} * sigma_1 exceeds 10 * tol"
            )
        row = dict(step=step, n=basis.n, k_sel=None, band_sel=None, indicator=float(ind[i]), true_error=terr, full_solves=solves)
        if converged or basis.n >= n_max:
            hist.append(**row)
            break
        sol = fam.solve(tk[i], J)
        solves += 1
        V = _normalize(sol.vectors, W)
        pe = basis.project_error(V)
        jb = int(np.argmax(pe))
        row.update(k_sel=_k_of(tk[i]), band_sel=jb + 1)
        hist.append(**row)
        step += 1
        try:
            basis.add(V[:, jb], k=tk[i], band=jb + 1, step=step)
        except Degenerate as exc:
            raise Stagnation(f"step {step}: selected eigenvector already in the span ({exc})", basis, hist) from None
    return basis, hist


def selection_pattern_report(history: GreedyHistory, omega_lookup=None):
    """Annotated selections ``(step, k, band, omega)`` for overlay plots.

    ``omega_lookup(k, band)`` supplies the frequency; ``None`` leaves it empty.
    """
    out = []
    for r in history.rows:
        if r["band_sel"] is None:
            continue
        w = None if omega_lookup is None else float(omega_lookup(r["k_sel"], r["band_sel"]))
        out.append({"step": r["step"] + 1, "k": r["k_sel"], "band": r["band_sel"], "omega": w})
    return out


def count_edge_selections(history: GreedyHistory, n_first=5, min_band=8, k_range=(0.0, np.pi), frac=0.1):
    """How many of the first ``n_first`` selections hit a high band near an interval endpoint."""
    lo, hi = k_range
    width = frac * (hi - lo)
    hits = 0
    for k, band in history.selections()[:n_first]:
        k = float(np.atleast_1d(k)[0])
        if band >= min_band and (k - lo <= width or hi - k <= width):
            hits += 1
    return hits
