"""Linear triangular finite elements for the scalar 2-D Bloch problem.

Global stiffness and mass are assembled without boundary conditions; the
Bloch constraint ``u_right = z1 u_left``, ``u_top = z2 u_bottom``,
``u_TR = z1 z2 u_BL`` (and the other corners) is imposed by congruence and
expanded into an :class:`~blochrom.affine.AffineFamily`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .affine import AffineFamily, BlochConstraint, Lattice, build_from_constrained
from .exceptions import DegenerateTriangle, UnpairedBoundaryNode

MATRIX, INCLUSION = 0, 1


@dataclass(frozen=True)
class Material2D:
    """Two-phase unit cell: circular inclusion of radius ``r`` in a matrix."""

    E_matrix: float = 1.0
    rho_matrix: float = 1.0
    E_inclusion: float = 12.0
    rho_inclusion: float = 1.0
    r: float = 0.35
    a: float = 1.0

    def __post_init__(self):
        for name in ("E_matrix", "rho_matrix", "E_inclusion", "rho_inclusion", "a"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 <= self.r < self.a / 2:
            raise ValueError(f"inclusion radius must satisfy 0 <= r < a/2, got r={self.r}")

    def coefficients(self, region):
        region = np.asarray(region)
        E = np.where(region == INCLUSION, self.E_inclusion, self.E_matrix)
        rho = np.where(region == INCLUSION, self.rho_inclusion, self.rho_matrix)
        return E, rho


@dataclass(frozen=True)
class Mesh2D:
    """Triangulated square cell ``[x0, x0 + a]^2`` with periodic node pairing.

    ``pairs_lr`` holds ``(left, right)`` node pairs and ``pairs_bt``
    ``(bottom, top)`` pairs, both excluding corners; ``corners`` is
    ``(BL, BR, TL, TR)``.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    region: np.ndarray
    pairs_lr: np.ndarray
    pairs_bt: np.ndarray
    corners: np.ndarray
    a: float = 1.0
    origin: tuple = field(default=(0.0, 0.0))

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_free(self) -> int:
        return self.n_nodes - self.pairs_lr.shape[0] - self.pairs_bt.shape[0] - 3

    def areas(self):
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def equals(self, other, tol=1e-12) -> bool:
        return (
            self.nodes.shape == other.nodes.shape
            and np.allclose(self.nodes, other.nodes, atol=tol * self.a)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.region, other.region)
            and np.array_equal(self.pairs_lr, other.pairs_lr)
            and np.array_equal(self.pairs_bt, other.pairs_bt)
            and np.array_equal(self.corners, other.corners)
        )


def _orient(nodes, tris):
    p = nodes[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tris = tris.copy()
    tris[neg] = tris[neg][:, [0, 2, 1]]
    return tris


def pair_boundary(nodes, a=None, origin=None, tol=1e-9):
    """Infer periodic pairs and corners by coordinate matching.

    Raises
    ------
    UnpairedBoundaryNode
        If a boundary node has no partner within ``tol * a``.
    """
    nodes = np.asarray(nodes, dtype=float)
    lo = nodes.min(axis=0) if origin is None else np.asarray(origin, dtype=float)
    if a is None:
        a = float(np.max(nodes.max(axis=0) - lo))
    eps = tol * a
    x, y = nodes[:, 0] - lo[0], nodes[:, 1] - lo[1]
    on_l, on_r = np.abs(x) <= eps, np.abs(x - a) <= eps
    on_b, on_t = np.abs(y) <= eps, np.abs(y - a) <= eps

    def corner(mx, my):
        idx = np.flatnonzero(mx & my)
        if idx.size != 1:
            raise UnpairedBoundaryNode([f"corner count {idx.size} at ({x0}, {y0})" for x0, y0 in [(0, 0)]])
        return idx[0]

    corners = np.array([corner(on_l, on_b), corner(on_r, on_b), corner(on_l, on_t), corner(on_r, on_t)])
    cset = set(corners.tolist())

    def match(side_a, side_b, coord):
        ia = np.array([i for i in np.flatnonzero(side_a) if i not in cset], dtype=int)
        ib = np.array([i for i in np.flatnonzero(side_b) if i not in cset], dtype=int)
        ia = ia[np.argsort(coord[ia], kind="stable")]
        ib = ib[np.argsort(coord[ib], kind="stable")]
        bad = []
        if ia.size != ib.size:
            bad = [tuple(nodes[i]) for i in np.concatenate([ia, ib])]
        else:
            off = np.abs(coord[ia] - coord[ib]) > eps
            bad = [tuple(nodes[i]) for i in np.concatenate([ia[off], ib[off]])]
        if bad:
            raise UnpairedBoundaryNode(bad)
        return np.column_stack([ia, ib]) if ia.size else np.zeros((0, 2), dtype=int)

    # nodes close to, but not on, a boundary would otherwise be silently treated as interior
    near = lambda d: (np.abs(d) > eps) & (np.abs(d) <= 1e-2 * a)  # noqa: E731
    stray = np.flatnonzero(near(x) | near(x - a) | near(y) | near(y - a))
    if stray.size:
        raise UnpairedBoundaryNode([tuple(nodes[i]) for i in stray])
    pairs_lr = match(on_l, on_r, y)
    pairs_bt = match(on_b, on_t, x)
    return pairs_lr, pairs_bt, corners, a, (float(lo[0]), float(lo[1]))


def make_mesh(nodes, triangles, region, a=None, origin=None, tol=1e-9) -> Mesh2D:
    nodes = np.asarray(nodes, dtype=float)
    tris = _orient(nodes, np.asarray(triangles, dtype=int))
    pairs_lr, pairs_bt, corners, a, origin = pair_boundary(nodes, a, origin, tol)
    return Mesh2D(nodes, tris, np.asarray(region, dtype=int), pairs_lr, pairs_bt, corners, a, origin)


def generate_structured(n_per_side: int, mat: Material2D | None = None) -> Mesh2D:
    """Uniform right-triangle mesh of ``[0, a]^2`` with centroid-tagged inclusion.

    Each square is cut along its lower-left to upper-right diagonal, so the
    mesh is symmetric under ``x <-> y``.
    """
    if n_per_side < 4:
        raise ValueError("n_per_side must be >= 4")
    mat = mat or Material2D()
    n, a = n_per_side, mat.a
    g = np.arange(n + 1) * (a / n)
    X, Y = np.meshgrid(g, g, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    nid = lambda i, j: j * (n + 1) + i  # noqa: E731
    tris = []
    for j in range(n):
        for i in range(n):
            bl, br, tl, tr = nid(i, j), nid(i + 1, j), nid(i, j + 1), nid(i + 1, j + 1)
            tris.append((bl, br, tr))
            tris.append((bl, tr, tl))
    tris = np.array(tris)
    cent = nodes[tris].mean(axis=1)
    inside = np.hypot(cent[:, 0] - a / 2, cent[:, 1] - a / 2) < mat.r
    region = np.where(inside, INCLUSION, MATRIX)

    ii = np.arange(1, n)
    pairs_lr = np.column_stack([nid(0, ii), nid(n, ii)])
    pairs_bt = np.column_stack([nid(ii, 0), nid(ii, n)])
    corners = np.array([nid(0, 0), nid(n, 0), nid(0, n), nid(n, n)])
    return Mesh2D(nodes, tris, region, pairs_lr, pairs_bt, corners, a, (0.0, 0.0))


def assemble_global(mesh: Mesh2D, mat: Material2D):
    """Dense P1 stiffness and consistent mass with per-region coefficients.

    Raises
    ------
    DegenerateTriangle
        If any triangle has area below ``1e-14 a^2``.
    """
    area = mesh.areas()
    bad = np.flatnonzero(area < 1e-14 * mesh.a**2)
    if bad.size:
        raise DegenerateTriangle(f"triangles {bad[:10].tolist()} have (near-)zero or negative area")
    E, rho = mat.coefficients(mesh.region)
    p = mesh.nodes[mesh.triangles]
    # gradients of barycentric coordinates
    b = np.stack([p[:, 1, 1] - p[:, 2, 1], p[:, 2, 1] - p[:, 0, 1], p[:, 0, 1] - p[:, 1, 1]], axis=1)
    c = np.stack([p[:, 2, 0] - p[:, 1, 0], p[:, 0, 0] - p[:, 2, 0], p[:, 1, 0] - p[:, 0, 0]], axis=1)
    ke = (E / (4 * area))[:, None, None] * (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :])
    me = (rho * area / 12)[:, None, None] * (np.ones((3, 3)) + np.eye(3))[None]
    n = mesh.n_nodes
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    Kg = np.zeros((n, n))
    Mg = np.zeros((n, n))
    np.add.at(Kg, (rows, cols), ke.ravel())
    np.add.at(Mg, (rows, cols), me.ravel())
    return Kg, Mg


def bloch_constraint(mesh: Mesh2D) -> BlochConstraint:
    """Right, top and three corner DOFs slaved to left, bottom and BL."""
    n = mesh.n_nodes
    master = np.arange(n)
    ex = np.zeros((n, 2), dtype=int)
    master[mesh.pairs_lr[:, 1]] = mesh.pairs_lr[:, 0]
    ex[mesh.pairs_lr[:, 1]] = (1, 0)
    master[mesh.pairs_bt[:, 1]] = mesh.pairs_bt[:, 0]
    ex[mesh.pairs_bt[:, 1]] = (0, 1)
    bl, br, tl, tr = mesh.corners
    for node, e in ((br, (1, 0)), (tl, (0, 1)), (tr, (1, 1))):
        master[node] = bl
        ex[node] = e
    free = np.flatnonzero(master == np.arange(n))
    col = -np.ones(n, dtype=int)
    col[free] = np.arange(free.size)
    return BlochConstraint(col[master], ex, free.size)


def bloch_reduce(Kg, Mg, mesh: Mesh2D) -> AffineFamily:
    return build_from_constrained(Kg, Mg, bloch_constraint(mesh), Lattice.square(mesh.a))


def crystal_family(n_per_side=24, mat: Material2D | None = None):
    """Structured mesh, assembly and Bloch reduction in one call."""
    mat = mat or Material2D()
    mesh = generate_structured(n_per_side, mat)
    Kg, Mg = assemble_global(mesh, mat)
    return bloch_reduce(Kg, Mg, mesh), mesh


# -- wave-vector domains ---------------------------------------------------


def ibz_vertices(a=1.0):
    return np.array([[0.0, 0.0], [np.pi / a, 0.0], [np.pi / a, np.pi / a]])


def kpath(vertices, n_samples: int, closed=False):
    """Points uniform in arclength along a polyline, with cumulative coordinate.

    Returns ``(k, s)`` with ``k`` of shape ``(n_samples, d)``.
    """
    V = np.asarray(vertices, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if closed:
        V = np.vstack([V, V[:1]])
    seg = np.linalg.norm(np.diff(V, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.linspace(0.0, cum[-1], n_samples)
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, seg.size - 1)
    t = (s - cum[idx]) / seg[idx]
    k = V[idx] + t[:, None] * (V[idx + 1] - V[idx])
    return k, s


def ibz_path(n_samples: int, a=1.0):
    """Gamma-X-M-Gamma boundary of the square-lattice irreducible zone."""
    return kpath(ibz_vertices(a), n_samples, closed=True)


def ibz_interior(depth: int, a=1.0):
    """Barycentric lattice points strictly inside the Gamma-X-M triangle."""
    G, X, M = ibz_vertices(a)
    pts = [G + (i / depth) * (X - G) + (j / depth) * (M - X) for i in range(depth + 1) for j in range(1, i) if i < depth]
    return np.array(pts)


def band_structure(fam: AffineFamily, path_vertices, n_bands: int, n_samples: int, closed=True):
    """First ``n_bands`` frequencies along a polyline.

    Returns ``(s, k, omega)`` with ``omega`` of shape ``(n_samples, n_bands)``.
    """
    k, s = kpath(path_vertices, n_samples, closed=closed)
    w2 = np.array([fam.eigenvalues(kk, n_bands) for kk in k])
    return s, k, np.sqrt(np.clip(w2, 0.0, None))
