"""Transfer-matrix solver for a periodically modulated rod.

The cell ``[0, a]`` is cut into ``n_layers`` homogeneous sublayers with
midpoint properties.  The state ``(u, E u')`` is propagated by 2x2 layer
matrices, band frequencies are the roots of ``tr T(omega)/2 - cos(k a)``,
and the Bloch modes come from propagating the eigenvector of ``T(omega_j)``.

A linear finite element discretization of the same rod is provided as an
:class:`~blochrom.affine.AffineFamily` for cross-checks and for the residual
greedy, which needs the affine structure.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .affine import AffineFamily, BlochConstraint, Lattice, build_from_constrained
from .exceptions import EigenvectorDefect, RootScanExhausted
from .numkernel import gauge_fix

log = logging.getLogger(__name__)

PROFILE_KINDS = ("two_harmonic", "single_harmonic", "homogeneous")


@dataclass(frozen=True)
class MaterialProfile1D:
    """Periodic modulus/density profile sampled at sublayer midpoints.

    ``kind`` is one of ``two_harmonic`` (params ``alpha1``, ``alpha2``),
    ``single_harmonic`` (``alpha``, with ``E = rho``) or ``homogeneous``
    (``E``, ``rho``).
    """

    kind: str = "two_harmonic"
    params: dict = field(default_factory=lambda: {"alpha1": 0.6, "alpha2": 0.3})
    a: float = 1.0
    n_layers: int = 100

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}; expected one of {PROFILE_KINDS}")
        if self.a <= 0 or self.n_layers < 1:
            raise ValueError("period must be positive and n_layers >= 1")
        object.__setattr__(self, "params", dict(self.params))
        if np.any(self.E_mid <= 0) or np.any(self.rho_mid <= 0):
            raise ValueError(f"{self.kind} profile with {self.params} is not positive on the midpoints")

    @classmethod
    def two_harmonic(cls, alpha1=0.6, alpha2=0.3, a=1.0, n_layers=100):
        return cls("two_harmonic", {"alpha1": alpha1, "alpha2": alpha2}, a, n_layers)

    @classmethod
    def single_harmonic(cls, alpha=0.8, a=1.0, n_layers=100):
        return cls("single_harmonic", {"alpha": alpha}, a, n_layers)

    @classmethod
    def homogeneous(cls, E=1.0, rho=1.0, a=1.0, n_layers=100):
        return cls("homogeneous", {"E": E, "rho": rho}, a, n_layers)

    def E(self, x):
        x = np.asarray(x, dtype=float)
        p, t = self.params, 2 * np.pi * x / self.a
        if self.kind == "two_harmonic":
            return 1 + p["alpha1"] * np.cos(t) + p["alpha2"] * np.cos(2 * t)
        if self.kind == "single_harmonic":
            return 1 + p["alpha"] * np.cos(t)
        return np.full_like(x, p.get("E", 1.0))

    def rho(self, x):
        x = np.asarray(x, dtype=float)
        p, t = self.params, 2 * np.pi * x / self.a
        if self.kind == "two_harmonic":
            return 1 + p["alpha1"] * np.cos(t) - p["alpha2"] * np.cos(2 * t)
        if self.kind == "single_harmonic":
            return 1 + p["alpha"] * np.cos(t)
        return np.full_like(x, p.get("rho", 1.0))

    @property
    def h(self) -> float:
        return self.a / self.n_layers

    @property
    def x_mid(self):
        return (np.arange(self.n_layers) + 0.5) * self.h

    @property
    def x_nodes(self):
        return np.arange(self.n_layers + 1) * self.h

    @property
    def E_mid(self):
        return self.E(self.x_mid)

    @property
    def rho_mid(self):
        return self.rho(self.x_mid)

    @property
    def c_min(self) -> float:
        return float(np.sqrt(self.E_mid.min() / self.rho_mid.max()))

    @property
    def travel_time(self) -> float:
        return float(np.sum(self.h * np.sqrt(self.rho_mid / self.E_mid)))


# -- transfer matrices -----------------------------------------------------


def layer_matrices(E, rho, h, omega):
    """Layer transfer matrices, shape ``omega.shape + (2, 2)``."""
    omega = np.asarray(omega, dtype=float)
    q = omega * np.sqrt(rho / E)
    c = np.cos(q * h)
    s_over_q = h * np.sinc(q * h / np.pi)
    T = np.empty(omega.shape + (2, 2))
    T[..., 0, 0] = c
    T[..., 0, 1] = s_over_q / E
    T[..., 1, 0] = -E * q * q * s_over_q
    T[..., 1, 1] = c
    return T


def cell_transfer_matrix(profile: MaterialProfile1D, omega):
    """``T(omega) = T_N ... T_1``; vectorized over ``omega``."""
    omega = np.asarray(omega, dtype=float)
    T = np.broadcast_to(np.eye(2), omega.shape + (2, 2)).copy()
    for E, rho in zip(profile.E_mid, profile.rho_mid):
        T = layer_matrices(E, rho, profile.h, omega) @ T
    return T


def half_trace(profile, omega):
    T = cell_transfer_matrix(profile, omega)
    return 0.5 * (T[..., 0, 0] + T[..., 1, 1])


def _layer_derivatives(E, rho, h, omega):
    """``d/d omega`` of :func:`layer_matrices`."""
    sl = np.sqrt(rho / E)
    q = omega * sl
    qh = q * h
    dT = np.empty(omega.shape + (2, 2))
    dT[..., 0, 0] = -h * sl * np.sin(qh)
    small = np.abs(qh) < 1e-4
    with np.errstate(divide="ignore", invalid="ignore"):
        d01 = sl * (qh * np.cos(qh) - np.sin(qh)) / (E * q * q)
    d01 = np.where(small, -sl * q * h**3 / (3 * E), d01)
    dT[..., 0, 1] = d01
    dT[..., 1, 0] = -E * sl * (np.sin(qh) + qh * np.cos(qh))
    dT[..., 1, 1] = dT[..., 0, 0]
    return dT


def half_trace_derivative(profile, omega):
    """``d/d omega`` of :func:`half_trace` by forward propagation of ``(T, dT)``."""
    omega = np.asarray(omega, dtype=float)
    T = np.broadcast_to(np.eye(2), omega.shape + (2, 2)).copy()
    dT = np.zeros_like(T)
    for E, rho in zip(profile.E_mid, profile.rho_mid):
        L = layer_matrices(E, rho, profile.h, omega)
        dT = _layer_derivatives(E, rho, profile.h, omega) @ T + L @ dT
        T = L @ T
    return 0.5 * (dT[..., 0, 0] + dT[..., 1, 1])


def _bisect_scalar(f, lo, hi, rtol):
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= rtol * abs(mid) or mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _tangency(profile, lo, hi):
    """Location of the extremum of the half-trace inside ``[lo, hi]``."""
    dlo, dhi = half_trace_derivative(profile, np.array([lo, hi]))
    if dlo * dhi < 0:
        return _bisect_scalar(lambda w: float(half_trace_derivative(profile, w)), lo, hi, 1e-15)
    res = minimize_scalar(lambda w: -abs(float(half_trace(profile, w))), bounds=(lo, hi), method="bounded")
    return float(res.x)


# -- dispersion ------------------------------------------------------------


@dataclass
class RootScan:
    """Scan settings for bracketing band frequencies."""

    step: float | None = None
    omega_max: float | None = None
    rtol: float = 1e-12
    tangency_tol: float = 1e-10
    zero_tol: float = 1e-12

    def grid(self, profile, n_bands):
        step = self.step if self.step is not None else profile.c_min * np.pi / profile.a / 50
        wmax = self.omega_max
        if wmax is None:
            wmax = 2.0 * (n_bands + 1) * np.pi / profile.travel_time
        n = int(np.ceil(wmax / step)) + 1
        return np.linspace(0.0, (n - 1) * step, n)


def _bisect(profile, lo, hi, target, rtol):
    """Vectorized bisection of ``half_trace - target`` on brackets ``[lo, hi]``."""
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    glo = half_trace(profile, lo) - target
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        active = (hi - lo > rtol * np.abs(mid)) & (mid > lo) & (mid < hi)
        if not np.any(active):
            break
        gm = half_trace(profile, mid[active]) - target[active]
        same = np.sign(gm) == np.sign(glo[active])
        idx = np.flatnonzero(active)
        lo[idx[same]] = mid[active][same]
        glo[idx[same]] = gm[same]
        hi[idx[~same]] = mid[active][~same]
    return 0.5 * (lo + hi)


def dispersion_solve(profile: MaterialProfile1D, k, n_bands: int, scan: RootScan | None = None):
    """Lowest ``n_bands`` frequencies ``omega_j(k)`` for each wave number in ``k``.

    Returns an array of shape ``(len(k), n_bands)`` (or ``(n_bands,)`` for
    scalar ``k``), ascending along the band axis.

    Raises
    ------
    RootScanExhausted
        If fewer than ``n_bands`` roots lie below the scan ceiling.
    """
    scan = scan or RootScan()
    scalar = np.ndim(k) == 0
    ks = np.atleast_1d(np.asarray(k, dtype=float))
    grid = scan.grid(profile, n_bands)
    ht = half_trace(profile, grid)
    cos_ka = np.cos(ks * profile.a)

    lo_all, hi_all, tgt_all, owner = [], [], [], []
    exact = [[] for _ in ks]
    for i, c in enumerate(cos_ka):
        g = ht - c
        z = np.abs(g) <= scan.zero_tol
        # scan points that hit a root to round-off
        for m in np.flatnonzero(z):
            if m == 0:
                exact[i].append(float(grid[0]))
            elif m < grid.size - 1 and g[m - 1] * g[m + 1] < 0:
                lo_all.append(grid[m - 1 : m]), hi_all.append(grid[m + 1 : m + 2])
                tgt_all.append(np.array([c])), owner.append(np.array([i]))
            elif m < grid.size - 1:
                exact[i].extend([_tangency(profile, grid[m - 1], grid[m + 1])] * 2)
        br = np.flatnonzero((g[:-1] * g[1:] < 0) & ~z[:-1] & ~z[1:])
        lo_all.append(grid[br])
        hi_all.append(grid[br + 1])
        tgt_all.append(np.full(br.size, c))
        owner.append(np.full(br.size, i))
        # tangential contacts: |g| has a small local minimum without a sign change
        ag = np.abs(g)
        cand = np.flatnonzero((ag[1:-1] < ag[:-2]) & (ag[1:-1] <= ag[2:]) & (g[:-2] * g[2:] > 0) & ~z[1:-1]) + 1
        for m in cand:
            if ag[m] > 0.1:
                continue
            w0 = _tangency(profile, grid[m - 1], grid[m + 1])
            if abs(float(half_trace(profile, w0)) - c) < scan.tangency_tol:
                exact[i].extend([w0, w0])
    lo = np.concatenate(lo_all)
    hi = np.concatenate(hi_all)
    roots = _bisect(profile, lo, hi, np.concatenate(tgt_all), scan.rtol) if lo.size else lo
    owner = np.concatenate(owner)

    out = np.empty((ks.size, n_bands))
    for i in range(ks.size):
        r = np.sort(np.concatenate([roots[owner == i], exact[i]]))
        if r.size < n_bands:
            raise RootScanExhausted(
                f"found {r.size} < {n_bands} roots below omega_max={grid[-1]:.4g} at k={ks[i]:.6g}"
            )
        out[i] = r[:n_bands]
    return out[0] if scalar else out


# -- Bloch modes -----------------------------------------------------------


@dataclass(frozen=True)
class BlochModes1D:
    """Periodic parts of Bloch modes on the ``n_layers + 1`` cell nodes.

    ``modes[i, j]`` is band ``j`` at ``k[i]``.  The last node repeats the
    first (periodicity); the periodic rectangle rule over the ``n_layers``
    distinct nodes gives ``sum |u|^2 dx = 1``.  Gauge-fixed with ``u(0)``
    real positive.
    """

    k: np.ndarray
    omega: np.ndarray
    modes: np.ndarray
    x: np.ndarray

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])


def _bloch_vector(T, lam_target, tol):
    """Right eigenvector of a 2x2 ``T`` for the eigenvalue closest to ``lam_target``."""
    w, V = np.linalg.eig(T)
    idx = np.argmin(np.abs(w - lam_target[..., None]), axis=-1)
    err = np.abs(np.take_along_axis(w, idx[..., None], -1)[..., 0] - lam_target)
    v = np.take_along_axis(V, idx[..., None, None], -1)[..., 0]
    return v, err


def bloch_modes(profile: MaterialProfile1D, k, n_bands: int, omega=None, scan=None, defect_tol=1e-8) -> BlochModes1D:
    """Dispersion and normalized, gauge-fixed periodic Bloch modes.

    Raises
    ------
    EigenvectorDefect
        If ``T(omega_j)`` has no eigenvalue within ``defect_tol`` of ``exp(i k a)``.
    """
    ks = np.atleast_1d(np.asarray(k, dtype=float))
    if omega is None:
        omega = dispersion_solve(profile, ks, n_bands, scan)
    omega = np.asarray(omega, dtype=float).reshape(ks.size, n_bands)
    lam = np.broadcast_to(np.exp(1j * ks * profile.a)[:, None], omega.shape)
    T = cell_transfer_matrix(profile, omega)
    v, err = _bloch_vector(T.astype(complex), lam, defect_tol)
    if np.any(err > defect_tol):
        i, j = np.unravel_index(np.argmax(err), err.shape)
        raise EigenvectorDefect(
            f"T(omega) has no eigenvalue near exp(ika) at k={ks[i]:.6g}, band {j + 1} (distance {err[i, j]:.2e})"
        )
    x = profile.x_nodes
    u = np.empty(omega.shape + (x.size,), dtype=complex)
    s = v
    u[..., 0] = s[..., 0]
    for layer, (E, rho) in enumerate(zip(profile.E_mid, profile.rho_mid)):
        s = np.einsum("...ij,...j->...i", layer_matrices(E, rho, profile.h, omega), s)
        u[..., layer + 1] = s[..., 0]
    u *= np.exp(-1j * ks[:, None, None] * x[None, None, :])
    norms = np.sqrt(np.sum(np.abs(u[..., :-1]) ** 2, axis=-1) * profile.h)
    u /= norms[..., None]
    flat = u.reshape(-1, x.size)
    u = gauge_fix(flat.T).T.reshape(u.shape)
    return BlochModes1D(k=ks, omega=omega, modes=u, x=x)


def bloch_mode(profile: MaterialProfile1D, k: float, j: int, scan=None) -> np.ndarray:
    """Single periodic mode of band ``j`` (1-based) at ``k``."""
    res = bloch_modes(profile, [k], j, scan=scan)
    return res.modes[0, j - 1]


# -- finite elements -------------------------------------------------------


def fem_global_matrices(profile: MaterialProfile1D, n_elements: int, layered=False):
    """Global linear-element stiffness and mass on ``n_elements + 1`` nodes.

    With ``layered`` set, element properties are taken from the sublayer the
    element falls in (the exact medium the transfer matrices describe);
    otherwise from the continuous profile at the element midpoint.
    """
    h = profile.a / n_elements
    xm = (np.arange(n_elements) + 0.5) * h
    if layered:
        layer = np.minimum((xm / profile.h).astype(int), profile.n_layers - 1)
        E, rho = profile.E_mid[layer], profile.rho_mid[layer]
    else:
        E, rho = profile.E(xm), profile.rho(xm)
    n = n_elements + 1
    Kg = np.zeros((n, n))
    Mg = np.zeros((n, n))
    ke = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    me = np.array([[2.0, 1.0], [1.0, 2.0]]) * h / 6
    for e in range(n_elements):
        idx = np.ix_([e, e + 1], [e, e + 1])
        Kg[idx] += E[e] * ke
        Mg[idx] += rho[e] * me
    return Kg, Mg


def fem_family(profile: MaterialProfile1D, n_elements: int | None = None, layered=False) -> AffineFamily:
    """Bloch-reduced linear FEM family; the last node is slaved to the first."""
    n_elements = profile.n_layers if n_elements is None else n_elements
    Kg, Mg = fem_global_matrices(profile, n_elements, layered)
    cols = np.arange(n_elements + 1)
    cols[-1] = 0
    ex = np.zeros((n_elements + 1, 1), dtype=int)
    ex[-1, 0] = 1
    return build_from_constrained(Kg, Mg, BlochConstraint(cols, ex, n_elements), Lattice.chain(profile.a))


class TMMSolver:
    """Callable band solver returning ``omega^2`` values (the eigenvalue convention)."""

    def __init__(self, profile: MaterialProfile1D, scan: RootScan | None = None):
        self.profile = profile
        self.scan = scan or RootScan()

    def eigenvalues(self, k, n_bands):
        return dispersion_solve(self.profile, k, n_bands, self.scan) ** 2

    def modes(self, k, n_bands):
        return bloch_modes(self.profile, k, n_bands, scan=self.scan)

    def __call__(self, k, n_bands):
        """``(omega^2[n_k, J], modes[n_k, N, J])`` in the snapshot-collector layout.

        The duplicated periodic end node is dropped, so with weight
        ``sqrt(dx)`` every snapshot column has unit Euclidean norm.
        """
        bm = self.modes(k, n_bands)
        return bm.omega**2, np.transpose(bm.modes[..., :-1], (0, 2, 1))

    @property
    def dx(self) -> float:
        return self.profile.h
