import numpy as np
import pytest
from scipy.stats import pearsonr

from blochrom.affine import AffineFamily, Lattice, bar_family
from blochrom.exceptions import IndicatorCollapse, Stagnation
from blochrom.greedy import (
    GreedyHistory,
    ReducedBasis,
    count_edge_selections,
    oracle_greedy,
    reduced_solve,
    residual_greedy,
    residuals,
    selection_pattern_report,
)
from blochrom.nwidth import SnapshotSet, collect_snapshots, fit_decay, interval_grid, svd_decay
from blochrom.solver1d import MaterialProfile1D, fem_family

from conftest import random_hermitian, random_spd


@pytest.fixture(scope="module")
def fem_setup():
    prof = MaterialProfile1D.single_harmonic(0.8, n_layers=100)
    fam = fem_family(prof)
    k = interval_grid(200)
    snap = collect_snapshots(fam, k, range(1, 11))
    snap = SnapshotSet(snap.S / np.linalg.norm(snap.S, axis=0), snap.k, snap.band)
    return fam, k, snap


@pytest.fixture(scope="module")
def residual_run(fem_setup):
    fam, k, snap = fem_setup
    return residual_greedy(fam, k, 10, tol=1e-10, audit=snap)


def random_family(rng, N=8):
    K0, M0 = random_hermitian(rng, N) + 3 * N * np.eye(N), random_spd(rng, N)
    K1 = 0.3 * (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N)))
    M1 = 0.05 * (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N)))
    terms = {(0,): (K0, M0), (1,): (K1, M1), (-1,): (K1.conj().T, M1.conj().T)}
    return AffineFamily(Lattice.chain(), terms)


def test_exact_subspace_reproduces_eigenvalues(rng):
    fam = random_family(rng)
    k = 0.7
    sol = fam.solve(k, 3)
    basis = ReducedBasis(fam.dim, fam)
    for j in range(3):
        basis.add(sol.vectors[:, j])
    vals, _, _ = reduced_solve(basis, k, 3)
    assert np.allclose(vals, sol.values, rtol=1e-10)


def test_full_basis_is_similarity(rng):
    fam = random_family(rng)
    basis = ReducedBasis(fam.dim, fam)
    for e in np.eye(fam.dim):
        basis.add(e)
    for k in (0.1, 2.0, -1.3):
        assert np.allclose(reduced_solve(basis, k, fam.dim)[0], fam.eigenvalues(k, fam.dim), rtol=1e-10)


def test_cached_products_match_direct(rng):
    fam = random_family(rng)
    basis = ReducedBasis(fam.dim, fam)
    for v in rng.standard_normal((4, fam.dim)):
        basis.add(v)
    K, M = fam.evaluate(0.9)
    P = basis.Phi
    Kt = sum(f * R for f, R in zip(fam.phases(0.9), basis.Kr))
    assert np.allclose(Kt, P.conj().T @ K @ P, atol=1e-12)
    assert basis.orthonormality_defect() <= 1e-12


def test_rayleigh_ritz_upper_bound():
    fam = bar_family()
    basis = ReducedBasis(2, fam)
    basis.add(fam.solve(0.4).vectors[:, 0])
    for k in np.linspace(0.5, 3.0, 12):
        w = reduced_solve(basis, k, 1)[0][0]
        assert w >= fam.eigenvalues(k, 1)[0] * (1 - 1e-10)


def test_exact_pair_has_tiny_residual(rng):
    fam = random_family(rng)
    k = 1.2
    sol = fam.solve(k, 2)
    basis = ReducedBasis(fam.dim, fam)
    basis.add(sol.vectors[:, 0])
    r, vals = residuals(basis, k, 1)
    K, M = fam.pencil(k)
    assert r[0] <= 1e-12 * (np.linalg.norm(K, 2) + vals[0] * np.linalg.norm(M, 2))
    rm, _ = residuals(basis, k, 1, norm="minv")
    assert rm[0] <= 1e-12 * np.linalg.norm(K, 2)


def test_oracle_rank_three_manifold():
    snap = collect_snapshots(bar_family(), interval_grid(50), [1])
    basis, hist = oracle_greedy(snap, 1, init=snap.S[:, :1], tol=1e-10)
    assert basis.n <= 3
    assert hist.rows[-1]["true_error"] <= 1e-10 * hist.sigma1


def test_oracle_single_column():
    snap = SnapshotSet(np.array([[1.0], [2.0]]), [0.3], [1])
    basis, hist = oracle_greedy(snap, 1)
    assert basis.n == 1 and len(hist) == 2
    assert hist.rows[-1]["true_error"] <= 1e-15


def test_oracle_stagnation():
    # the second column sits 1e-12 off the first: above tol but below the span test
    S = np.array([[1.0, 1.0], [0.0, 1e-12]])
    snap = SnapshotSet(S, [0.1, 0.2], [1, 1])
    with pytest.raises(Stagnation) as info:
        oracle_greedy(snap, 1, tol=1e-16)
    assert info.value.basis.n == 1


def test_oracle_monotone_and_orthonormal(fem_setup):
    _, _, snap = fem_setup
    basis, hist = oracle_greedy(snap, 10, init_k=np.pi / 2, n_max=30)
    err = hist.column("true_error")
    assert np.all(np.diff(err) <= 1e-12 * hist.sigma1)
    assert basis.orthonormality_defect() <= 1e-10


def test_k_independent_family_needs_no_enrichment(rng):
    N = 6
    fam = AffineFamily(Lattice.chain(), {(0,): (random_hermitian(rng, N) + 2 * N * np.eye(N), random_spd(rng, N))})
    basis, hist = residual_greedy(fam, interval_grid(20), 2, tol=1e-10)
    assert basis.n == 2 and len(hist) == 1
    assert hist.rows[0]["indicator"] <= 1e-12
    assert hist.rows[0]["full_solves"] == 1


def test_residual_run_properties(residual_run, fem_setup):
    basis, hist = residual_run
    assert basis.orthonormality_defect() <= 1e-10
    # one initial solve plus one per enrichment step
    for r in hist.rows:
        assert r["full_solves"] == 1 + r["step"]
    assert hist.first_below(1e-11) is not None


def test_indicator_tracks_true_error(residual_run, fem_setup):
    fam, k, snap = fem_setup
    basis, _ = residual_run
    small = ReducedBasis(fam.dim, fam)
    for j in range(18):
        small.add(basis.Phi[:, j])
    ind = np.array([residuals(small, kk, 10)[0].max() for kk in k])
    err = small.project_error(snap.S).reshape(len(k), 10).max(axis=1)
    r, _ = pearsonr(np.log(ind), np.log(err))
    assert r > 0.9


def test_greedy_rate_matches_svd(residual_run, fem_setup):
    _, _, snap = fem_setup
    _, hist = residual_run
    beta = fit_decay(svd_decay(snap).sigma).beta
    err = hist.column("true_error") / hist.sigma1
    n = hist.column("n")
    mask = (err >= 1e-12) & (err <= 1e-2)
    slope = -np.polyfit(n[mask], np.log(err[mask]), 1)[0]
    assert abs(slope - beta) / beta <= 0.25


def test_oracle_and_residual_agree(residual_run, fem_setup):
    _, _, snap = fem_setup
    _, hr = residual_run
    _, ho = oracle_greedy(snap, 10, init_k=np.pi / 2, tol=1e-11)
    n_res = hr.first_below(1e-11)["n"]
    assert abs(ho.rows[-1]["n"] - n_res) <= 3


def test_indicator_collapse_detected(fem_setup):
    fam, k, snap = fem_setup
    # training grid far from the audited snapshots: the indicator converges on it early
    with pytest.raises(IndicatorCollapse):
        residual_greedy(fam, k[:3], 10, tol=1e-10, audit=snap)


def test_mass_inner_product(fem_setup):
    fam, k, _ = fem_setup
    basis, _ = residual_greedy(fam, k[::10], 4, n_max=8, inner="mass")
    assert basis.orthonormality_defect() <= 1e-10


def test_selection_report_and_edge_count():
    hist = GreedyHistory(sigma1=1.0)
    hist.append(step=0, n=10, k_sel=3.1, band_sel=9, indicator=1.0, true_error=None, full_solves=1)
    hist.append(step=1, n=11, k_sel=None, band_sel=None, indicator=0.1, true_error=None, full_solves=2)
    rep = selection_pattern_report(hist, lambda k, b: 10.0 * b)
    assert rep == [{"step": 1, "k": 3.1, "band": 9, "omega": 90.0}]
    assert count_edge_selections(hist) == 1
    text = hist.to_csv().splitlines()
    assert text[0] == "step,n,k_sel,band_sel,indicator,true_error,full_solves"
    assert text[2].startswith("1,11,,,")
