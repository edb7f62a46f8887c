"""Operator families that are Laurent polynomials in the Bloch phase factors.

A family stores ``K(k) = sum_m f_m(k) K_m`` and ``M(k) = sum_m f_m(k) M_m``
where every ``f_m(k) = prod_j exp(i alpha_mj k . a_j)`` with
``alpha_mj in {-1, 0, 1}``.  Evaluation accepts complex wave vectors, which
is what the complex-k diagnostics in :mod:`blochrom.spectral` rely on.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .exceptions import ExponentOverflow
from .numkernel import EigenSolution, check_pencil, eig_hermitian_gen


@dataclass(frozen=True)
class Lattice:
    """Bravais lattice with vectors as rows of ``vectors`` (1-D or square 2-D)."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if v.shape[0] != v.shape[1] or v.shape[0] not in (1, 2):
            raise ValueError("only 1-D and 2-D lattices are supported")
        if abs(np.linalg.det(v)) < 1e-14:
            raise ValueError("lattice vectors are linearly dependent")
        object.__setattr__(self, "vectors", v)

    @classmethod
    def chain(cls, a=1.0):
        return cls(np.array([[a]]))

    @classmethod
    def square(cls, a=1.0):
        return cls(a * np.eye(2))

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def a(self) -> float:
        return float(self.vectors[0, 0])

    @property
    def reciprocal(self) -> np.ndarray:
        """Reciprocal vectors ``b_i`` as rows with ``a_i . b_j = 2 pi delta_ij``."""
        return 2 * np.pi * np.linalg.inv(self.vectors).T

    def high_symmetry_points(self) -> dict:
        a = self.a
        if self.dim == 1:
            return {"G": np.array([0.0]), "X": np.array([np.pi / a])}
        return {
            "G": np.array([0.0, 0.0]),
            "X": np.array([np.pi / a, 0.0]),
            "M": np.array([np.pi / a, np.pi / a]),
        }


def _as_exponent(alpha, d):
    alpha = tuple(int(x) for x in np.atleast_1d(alpha))
    if len(alpha) != d:
        raise ValueError(f"exponent {alpha} does not match lattice dimension {d}")
    if any(x not in (-1, 0, 1) for x in alpha):
        raise ExponentOverflow(f"exponent {alpha} outside {{-1, 0, 1}}^{d}")
    return alpha


class AffineFamily:
    """Hermitian pencil ``K(k), M(k)`` stored as phase-monomial coefficients.

    Parameters
    ----------
    lattice : Lattice
    terms : dict
        Maps exponent tuples ``alpha`` to ``(K_alpha, M_alpha)`` pairs.
    """

    def __init__(self, lattice: Lattice, terms: dict):
        self.lattice = lattice
        d = lattice.dim
        clean = {}
        dim = None
        for alpha, (Km, Mm) in terms.items():
            alpha = _as_exponent(alpha, d)
            Km = np.array(Km)
            Mm = np.array(Mm)
            if dim is None:
                dim = Km.shape[0]
            if Km.shape != (dim, dim) or Mm.shape != (dim, dim):
                raise ValueError("all term matrices must share one square shape")
            clean[alpha] = (Km, Mm)
        zero = (0,) * d
        if zero not in clean:
            raise ValueError("family requires a k-independent term")
        for alpha, (Km, Mm) in clean.items():
            neg = tuple(-x for x in alpha)
            if neg not in clean:
                raise ValueError(f"term {alpha} has no conjugate partner {neg}")
            Kn, Mn = clean[neg]
            for A, B in ((Km, Kn), (Mm, Mn)):
                if np.linalg.norm(B - A.conj().T) > 1e-12 * max(np.linalg.norm(A), 1e-300):
                    raise ValueError(f"terms {alpha} and {neg} are not conjugate transposes")
        self.terms = dict(sorted(clean.items()))
        self.dim = dim
        for Km, Mm in self.terms.values():
            Km.setflags(write=False)
            Mm.setflags(write=False)

    @property
    def exponents(self):
        return list(self.terms)

    @property
    def Q(self) -> int:
        """Number of non-constant terms."""
        return len(self.terms) - 1

    def phases(self, k):
        """Coefficients ``f_m(k)`` in the order of :attr:`exponents`; ``k`` may be complex."""
        k = np.atleast_1d(np.asarray(k, dtype=complex))
        theta = self.lattice.vectors @ k
        return np.array([np.exp(1j * np.dot(alpha, theta)) for alpha in self.terms])

    def evaluate(self, k):
        """Return ``(K(k), M(k))``; no Hermitian check so complex ``k`` is allowed."""
        f = self.phases(k)
        K = np.zeros((self.dim, self.dim), dtype=complex)
        M = np.zeros((self.dim, self.dim), dtype=complex)
        for fm, (Km, Mm) in zip(f, self.terms.values()):
            K += fm * Km
            M += fm * Mm
        return K, M

    def pencil(self, k):
        """Validated Hermitian pencil at a real wave vector."""
        k = np.atleast_1d(np.asarray(k))
        if np.iscomplexobj(k) and np.any(k.imag != 0):
            raise ValueError("pencil() needs a real wave vector; use evaluate() for complex k")
        return check_pencil(*self.evaluate(k.real))

    def solve(self, k, n_bands=None) -> EigenSolution:
        K, M = self.pencil(k)
        sol = eig_hermitian_gen(K, M, n=n_bands, check=False)
        return EigenSolution(sol.values, sol.vectors, k=np.atleast_1d(np.asarray(k, dtype=float)))

    def eigenvalues(self, k, n_bands=None):
        return self.solve(k, n_bands).values

    # serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        def enc(A):
            A = np.asarray(A, dtype=complex)
            return [[[float(z.real), float(z.imag)] for z in row] for row in A]

        return {
            "format": "blochrom.affine/1",
            "dim": self.dim,
            "lattice": self.lattice.vectors.tolist(),
            "terms": [{"exponent": list(alpha), "K": enc(Km), "M": enc(Mm)} for alpha, (Km, Mm) in self.terms.items()],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AffineFamily":
        def dec(rows):
            A = np.array(rows, dtype=float)
            A = A[..., 0] + 1j * A[..., 1]
            return A.real.copy() if not np.any(A.imag) else A

        lattice = Lattice(np.array(doc["lattice"], dtype=float))
        terms = {tuple(t["exponent"]): (dec(t["K"]), dec(t["M"])) for t in doc["terms"]}
        return cls(lattice, terms)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "AffineFamily":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class BlochConstraint:
    """Row-wise monomial constraint ``u_global = T(k) q``.

    Row ``i`` of ``T(k)`` has a single nonzero ``z^{exponents[i]}`` in column
    ``columns[i]``, with ``z_j = exp(i k . a_j)``.
    """

    columns: np.ndarray
    exponents: np.ndarray
    n_free: int

    def __post_init__(self):
        cols = np.asarray(self.columns, dtype=int)
        ex = np.asarray(self.exponents, dtype=int)
        if ex.ndim == 1:
            ex = ex[:, None]
        if cols.shape[0] != ex.shape[0]:
            raise ValueError("columns and exponents must have one row per global DOF")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "exponents", ex)

    @classmethod
    def identity(cls, n, d=1):
        return cls(np.arange(n), np.zeros((n, d), dtype=int), n)

    def matrix(self, k, lattice: Lattice) -> np.ndarray:
        """Dense ``T(k)``; used as the direct-congruence oracle."""
        theta = lattice.vectors @ np.atleast_1d(np.asarray(k, dtype=complex))
        T = np.zeros((self.columns.shape[0], self.n_free), dtype=complex)
        T[np.arange(self.columns.shape[0]), self.columns] = np.exp(1j * (self.exponents @ theta))
        return T


def build_from_constrained(Kg, Mg, constraint: BlochConstraint, lattice: Lattice) -> AffineFamily:
    """Expand ``T(k)^H K_g T(k)`` symbolically into phase-monomial terms.

    Entry ``(i, j)`` of ``K_g`` lands in reduced entry ``(c_i, c_j)`` with
    exponent ``alpha_j - alpha_i``.

    Raises
    ------
    ExponentOverflow
        If a collected exponent leaves ``{-1, 0, 1}^d``.
    """
    Kg = np.asarray(Kg)
    Mg = np.asarray(Mg)
    d = lattice.dim
    if constraint.exponents.shape[1] != d:
        raise ValueError("constraint exponents do not match lattice dimension")
    n = constraint.n_free
    rows, cols = np.nonzero((Kg != 0) | (Mg != 0))
    diff = constraint.exponents[cols] - constraint.exponents[rows]
    if diff.size and np.max(np.abs(diff)) > 1:
        bad = diff[np.argmax(np.max(np.abs(diff), axis=1))]
        raise ExponentOverflow(f"collected exponent {tuple(bad)} outside {{-1, 0, 1}}^{d}")
    dtype = np.result_type(Kg.dtype, Mg.dtype, np.float64)
    terms = {}
    for alpha in itertools.product((-1, 0, 1), repeat=d):
        sel = np.all(diff == np.array(alpha), axis=1)
        if not np.any(sel) and any(alpha):
            continue
        Km = np.zeros((n, n), dtype=dtype)
        Mm = np.zeros((n, n), dtype=dtype)
        r, c = rows[sel], cols[sel]
        np.add.at(Km, (constraint.columns[r], constraint.columns[c]), Kg[r, c])
        np.add.at(Mm, (constraint.columns[r], constraint.columns[c]), Mg[r, c])
        terms[alpha] = (Km, Mm)
    return AffineFamily(lattice, terms)


# -- two-element homogeneous bar -------------------------------------------


def bar_global_matrices(E=1.0, A=1.0, rho=1.0, a=1.0):
    """Global 3x3 stiffness and mass of a bar cell split into two linear elements."""
    h = a / 2
    Kg = (E * A / h) * np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
    Mg = (rho * A * h / 6) * np.array([[2.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 2.0]])
    return Kg, Mg


def bar_constraint() -> BlochConstraint:
    """``u_2 = e^{ika} u_0`` with free DOFs ``(u_0, u_1)``."""
    return BlochConstraint(columns=np.array([0, 1, 0]), exponents=np.array([[0], [0], [1]]), n_free=2)


def bar_family(E=1.0, A=1.0, rho=1.0, a=1.0) -> AffineFamily:
    Kg, Mg = bar_global_matrices(E, A, rho, a)
    return build_from_constrained(Kg, Mg, bar_constraint(), Lattice.chain(a))


def bar_closed_form(k, c0=1.0, a=1.0):
    """Closed-form eigenpairs of the two-element bar cell.

    Returns ``(w1, w2, u1, u2)`` with ``w = omega^2`` and unnormalized
    eigenvectors ``(1, +-exp(i k a / 2))``.
    """
    c = np.cos(k * a / 2)
    pref = 24 * c0**2 / a**2
    w1 = pref * (1 - c) / (2 + c)
    w2 = pref * (1 + c) / (2 - c)
    ph = np.exp(1j * k * a / 2)
    return w1, w2, np.array([1.0, ph]), np.array([1.0, -ph])
