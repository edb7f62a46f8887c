import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given
from hypothesis import strategies as st

from blochrom.exceptions import EigenvectorDefect, RootScanExhausted
from blochrom.solver1d import (
    MaterialProfile1D,
    RootScan,
    TMMSolver,
    bloch_mode,
    bloch_modes,
    cell_transfer_matrix,
    dispersion_solve,
    fem_family,
    half_trace,
    half_trace_derivative,
)

# Regression constants: two-harmonic profile (0.6, 0.3), 100 sublayers, k = pi/2.
# Verified against the sparse Bloch FEM oracle below with 2000 elements.
FROZEN_OMEGA = np.array([1.38918501, 5.00198787, 7.99638908, 11.12879823, 14.30888277, 17.46982522])


def sparse_bloch_fem(profile, k, n_elements, n_bands):
    """Independent Bloch FEM oracle on the layered medium (sparse, shift-invert).

    Works with the full field ``u = e^{ikx} u~`` and the quasi-periodic
    closure ``u_N = e^{ika} u_0``: a different reduction from the periodic-part
    formulation the transfer-matrix code uses.
    """
    h = profile.a / n_elements
    xm = (np.arange(n_elements) + 0.5) * h
    layer = np.minimum((xm / profile.h).astype(int), profile.n_layers - 1)
    E, rho = profile.E_mid[layer], profile.rho_mid[layer]
    z = np.exp(1j * k * profile.a)
    rows, cols, kv, mv = [], [], [], []
    for e in range(n_elements):
        i, j = e, (e + 1) % n_elements
        pj = z if e == n_elements - 1 else 1.0
        loc = [(i, 1.0), (j, pj)]
        for (r, pr), ke_row, me_row in zip(loc, ([1, -1], [-1, 1]), ([2, 1], [1, 2])):
            for (c, pc), kk, mm in zip(loc, ke_row, me_row):
                rows.append(r)
                cols.append(c)
                kv.append(np.conj(pr) * pc * E[e] * kk / h)
                mv.append(np.conj(pr) * pc * rho[e] * mm * h / 6)
    K = sp.csc_matrix((kv, (rows, cols)), shape=(n_elements, n_elements))
    M = sp.csc_matrix((mv, (rows, cols)), shape=(n_elements, n_elements))
    vals, vecs = spla.eigsh(K, k=n_bands, M=M, sigma=-1.0, which="LM")
    order = np.argsort(vals)
    return np.sqrt(np.abs(vals[order])), vecs[:, order]


@pytest.fixture(scope="module")
def two_harmonic():
    return MaterialProfile1D.two_harmonic(0.6, 0.3, n_layers=100)


def test_homogeneous_trace():
    prof = MaterialProfile1D.homogeneous()
    w = np.linspace(0, 20, 41)
    assert np.allclose(half_trace(prof, w), np.cos(w), atol=1e-12)


def test_static_limit():
    prof = MaterialProfile1D.homogeneous(E=2.0)
    T = cell_transfer_matrix(prof, 0.0)
    assert np.allclose(T, [[1.0, 0.5], [0.0, 1.0]], atol=1e-14)


def test_richardson_refinement(two_harmonic):
    ref = half_trace(MaterialProfile1D.two_harmonic(0.6, 0.3, n_layers=1600), 5.0)
    e100 = abs(half_trace(two_harmonic, 5.0) - ref)
    e200 = abs(half_trace(MaterialProfile1D.two_harmonic(0.6, 0.3, n_layers=200), 5.0) - ref)
    assert e200 < e100 and e100 / e200 > 3.0


def test_unit_determinant_on_scan_grid(two_harmonic):
    grid = RootScan().grid(two_harmonic, 6)
    assert np.max(np.abs(np.linalg.det(cell_transfer_matrix(two_harmonic, grid)) - 1)) <= 1e-10


def test_half_trace_derivative_matches_finite_difference(two_harmonic):
    w = np.array([0.5, 3.0, 7.7, 12.1])
    h = 1e-6
    fd = (half_trace(two_harmonic, w + h) - half_trace(two_harmonic, w - h)) / (2 * h)
    assert np.allclose(half_trace_derivative(two_harmonic, w), fd, rtol=1e-6, atol=1e-8)


def test_homogeneous_folded_branches():
    prof = MaterialProfile1D.homogeneous()
    assert np.allclose(dispersion_solve(prof, np.pi / 2, 2), [np.pi / 2, 3 * np.pi / 2], rtol=1e-11)
    w = dispersion_solve(prof, np.pi, 4)
    assert np.allclose(w, [np.pi, np.pi, 3 * np.pi, 3 * np.pi], rtol=1e-7)
    assert np.allclose(dispersion_solve(prof, 0.0, 3), [0.0, 2 * np.pi, 2 * np.pi], atol=1e-7)


def test_two_harmonic_frozen_values(two_harmonic):
    w = dispersion_solve(two_harmonic, np.pi / 2, 6)
    assert np.allclose(w, FROZEN_OMEGA, rtol=1e-8)


def test_tmm_matches_sparse_fem_oracle(two_harmonic):
    for k in (0.3, np.pi / 2, 2.9):
        ref, _ = sparse_bloch_fem(two_harmonic, k, 2000, 6)
        assert np.allclose(dispersion_solve(two_harmonic, k, 6), ref, rtol=1e-5)


def test_modes_match_sparse_fem_oracle(two_harmonic):
    k = 1.1
    _, V = sparse_bloch_fem(two_harmonic, k, 2000, 4)
    bm = bloch_modes(two_harmonic, k, 4)
    x_fem = np.arange(2000) * two_harmonic.a / 2000
    for j in range(4):
        # periodic part of the FEM field, sampled on the sublayer nodes
        u = (V[:, j] * np.exp(-1j * k * x_fem))[::20]
        v = bm.modes[0, j, :-1]
        overlap = abs(np.vdot(u, v)) / (np.linalg.norm(u) * np.linalg.norm(v))
        assert overlap > 1 - 1e-6


def test_fem_family_converges_to_tmm(two_harmonic):
    fam = fem_family(two_harmonic, 400, layered=True)
    w2 = fam.solve(np.pi / 2, 6).values
    assert np.allclose(np.sqrt(w2), FROZEN_OMEGA, rtol=1e-4)


@given(st.floats(0.01, np.pi - 0.01))
def test_dispersion_symmetric_and_ordered(k):
    prof = MaterialProfile1D.two_harmonic(0.6, 0.3, n_layers=40)
    wp = dispersion_solve(prof, k, 5)
    wm = dispersion_solve(prof, -k, 5)
    assert np.allclose(wp, wm, rtol=1e-11)
    assert np.all(np.diff(wp) >= 0)


def test_second_order_convergence():
    k = np.pi / 3
    ref = dispersion_solve(MaterialProfile1D.two_harmonic(0.6, 0.3, n_layers=1600), k, 3)
    errs = [np.max(np.abs(dispersion_solve(MaterialProfile1D.two_harmonic(0.6, 0.3, n_layers=n), k, 3) - ref)) for n in (50, 100, 200)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8) and np.all(rates < 2.3)


def test_homogeneous_mode_is_constant():
    prof = MaterialProfile1D.homogeneous()
    u = bloch_mode(prof, 0.7, 1)
    assert np.allclose(np.abs(u), 1.0, atol=1e-10)
    assert np.allclose(u, u[0], atol=1e-10)


def test_modes_normalized_and_gauge_fixed(two_harmonic):
    bm = bloch_modes(two_harmonic, np.linspace(0.1, 3.0, 7), 6)
    norms = np.sum(np.abs(bm.modes[..., :-1]) ** 2, axis=-1) * bm.dx
    assert np.allclose(norms, 1.0, atol=1e-12)
    u0 = bm.modes[..., 0]
    assert np.all(np.abs(u0.imag) <= 1e-12) and np.all(u0.real > 0)


def test_mode_satisfies_fem_residual(two_harmonic):
    fam = fem_family(two_harmonic, layered=True)
    bm = bloch_modes(two_harmonic, 0.8, 3)
    K, M = fam.pencil(0.8)
    phase = np.exp(1j * 0.8 * bm.x[:-1])
    for j in range(3):
        u = bm.modes[0, j, :-1] * phase
        r = K @ u - bm.omega[0, j] ** 2 * M @ u
        # the layered FEM is only O(h^2) consistent with the exact layered modes
        assert np.linalg.norm(r) <= 1e-3 * (np.linalg.norm(K @ u) + bm.omega[0, j] ** 2 * np.linalg.norm(M @ u))


def test_root_scan_exhausted(two_harmonic):
    with pytest.raises(RootScanExhausted):
        dispersion_solve(two_harmonic, 1.0, 6, RootScan(omega_max=5.0))


def test_eigenvector_defect(two_harmonic):
    w = dispersion_solve(two_harmonic, 1.0, 2)
    with pytest.raises(EigenvectorDefect):
        bloch_modes(two_harmonic, 1.0, 2, omega=w + 0.05)


def test_non_positive_profile_rejected():
    with pytest.raises(ValueError):
        MaterialProfile1D.two_harmonic(0.8, 0.5)


def test_tmm_solver_layout(two_harmonic):
    lam, modes = TMMSolver(two_harmonic)([0.5, 1.0], 3)
    assert lam.shape == (2, 3) and modes.shape == (2, 100, 3)
    assert np.allclose(np.linalg.norm(modes, axis=1) * np.sqrt(two_harmonic.h), 1.0, atol=1e-12)
