"""Reduced-order modeling of Bloch eigenproblems in periodic media.

Modules
-------
numkernel   dense Hermitian eigensolver, SVD and Gram-Schmidt kernel
affine      phase-monomial operator families and Bloch congruence
solver1d    transfer-matrix and finite element solvers for a layered rod
solver2d    linear triangular finite elements on a square unit cell
msh         MSH 2.2 mesh reader and writer
nwidth      snapshot sets, SVD decay and decay-rate fits
greedy      oracle and residual greedy reduced bases
spectral    gaps, Lipschitz constants, holomorphy radii, cluster projectors
estimators  scikit-learn style wrappers
cli         command-line driver
"""

__version__ = "0.1.0"

from .affine import AffineFamily, BlochConstraint, Lattice, bar_family  # noqa: E402
from .exceptions import BlochROMError  # noqa: E402
from .numkernel import EigenSolution, eig_hermitian_gen  # noqa: E402

__all__ = ["AffineFamily", "BlochConstraint", "Lattice", "bar_family", "BlochROMError", "EigenSolution", "eig_hermitian_gen", "__version__"]
