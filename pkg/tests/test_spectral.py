import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blochrom.affine import AffineFamily, Lattice, bar_closed_form, bar_family
from blochrom.exceptions import ClusterBoundaryDegenerate, NoClosureFound, ZeroLipschitz
from blochrom.numkernel import EigenSolution
from blochrom.solver1d import MaterialProfile1D, TMMSolver, fem_family
from blochrom.spectral import (
    GapProfile,
    band_gaps,
    cluster_gaps,
    cluster_projector,
    eigenvalue_sweep,
    eigenvector_steps,
    gap_closure_probe,
    gap_profile,
    holomorphy_radius_bound,
    lipschitz_estimate,
    projector_continuity,
    projectors_along,
)

from conftest import random_hermitian, random_spd


def constant_family(rng, N=5):
    return AffineFamily(Lattice.chain(), {(0,): (random_hermitian(rng, N) + 2 * N * np.eye(N), random_spd(rng, N))})


def test_bar_gaps():
    fam = bar_family()
    assert np.isclose(gap_profile(fam, [0.0], j=1).delta[0], 48.0, rtol=1e-12)
    assert gap_profile(fam, [np.pi], j=1).delta[0] <= 1e-12


def test_homogeneous_gap():
    solver = TMMSolver(MaterialProfile1D.homogeneous())
    g = gap_profile(solver, [np.pi / 2], j=1)
    assert np.isclose(g.delta[0], 2 * np.pi**2, rtol=1e-10)


@given(st.lists(st.floats(-100, 100), min_size=4, max_size=7), st.integers(1, 4))
def test_band_gap_brute_force(vals, j):
    v = np.sort(np.array(vals))[None, :]
    brute = min(abs(v[0, j - 1] - v[0, i]) for i in range(v.shape[1]) if i != j - 1)
    assert band_gaps(v, j)[0] == brute


def test_cluster_gap():
    v = np.array([[1.0, 2.0, 5.0]])
    assert cluster_gaps(v, 2)[0] == 3.0
    with pytest.raises(ValueError):
        cluster_gaps(v, 3)


def test_lipschitz_constant_family(rng):
    est = lipschitz_estimate(constant_family(rng), np.linspace(0, np.pi, 20), 3)
    assert est.L <= 1e-10


def test_lipschitz_homogeneous():
    solver = TMMSolver(MaterialProfile1D.homogeneous())
    k = np.linspace(0, np.pi, 401)
    est = lipschitz_estimate(solver, k, 1)
    assert abs(est.L - 1.2 * 2 * np.pi) / (1.2 * 2 * np.pi) < 0.01


def test_lipschitz_bar_matches_analytic_derivative():
    k = np.linspace(0, np.pi, 2001)
    c, s = np.cos(k / 2), np.sin(k / 2)
    analytic = max(np.max(36 * s / (2 + c) ** 2), np.max(36 * s / (2 - c) ** 2))
    est = lipschitz_estimate(bar_family(), np.linspace(0, np.pi, 201), 2, safety=1.0)
    assert abs(est.raw_slope - analytic) / analytic < 0.05


def test_radius_formula():
    assert holomorphy_radius_bound(2.0, 1.0) == 1.0
    assert holomorphy_radius_bound(0.0, 1.0) == 0.0
    with pytest.raises(ZeroLipschitz):
        holomorphy_radius_bound(1.0, 0.0)
    assert holomorphy_radius_bound(1.0, 0.0, strict=False) == np.inf
    g = GapProfile(k=np.zeros((2, 1)), delta=np.array([3.0, 2.0]), j=1, L=0.5)
    assert holomorphy_radius_bound(g) == 2.0
    summary = json.loads(g.to_json())
    assert summary["rho_star"] == 2.0 and summary["delta_star"] == 2.0


def test_gap_csv():
    g = gap_profile(bar_family(), np.linspace(0.1, 1, 3), j=1)
    lines = g.to_csv().splitlines()
    assert lines[0] == "kx,ky,delta" and len(lines) == 4


def test_delta_star_monotone_under_refinement():
    solver = TMMSolver(MaterialProfile1D.two_harmonic(0.6, 0.3, n_layers=60))
    prev = np.inf
    for m in (3, 4, 5, 6):
        k = np.linspace(0, np.pi, 2**m + 1)
        d = gap_profile(solver, k, j=2, n_bands=4).delta_star
        assert d <= prev * (1 + 1e-10)
        prev = d


def test_probe_constant_family(rng):
    with pytest.raises(NoClosureFound):
        gap_closure_probe(constant_family(rng), [0.5], n_radii=4, n_angles=6, n_refine=1)


def test_probe_bar_distance_shrinks_at_touching_point():
    fam = bar_family()
    d = [gap_closure_probe(fam, [np.pi - e]).distance for e in (0.4, 0.2, 0.1, 0.05)]
    assert np.all(np.diff(d) < 0)
    assert np.allclose(d, [0.4, 0.2, 0.1, 0.05], rtol=1e-3)


@pytest.mark.slow
def test_probe_distance_exceeds_radius_bound():
    fam = fem_family(MaterialProfile1D.two_harmonic(0.6, 0.3, n_layers=30))
    grid = np.linspace(0, np.pi, 401)
    values = eigenvalue_sweep(fam, grid, 7)
    rng = np.random.default_rng(7)
    for i, k0 in enumerate(rng.uniform(0.1, np.pi - 0.1, 10)):
        j = 1 + i % 6
        delta = gap_profile(fam, grid, j=j, values=values).delta_star
        L = lipschitz_estimate(fam, grid, 7, bands=[b for b in (j - 1, j, j + 1) if b >= 1], values=values).L
        rho = holomorphy_radius_bound(delta, L)
        try:
            dist = gap_closure_probe(fam, [k0], j=j).distance
        except NoClosureFound:
            continue
        assert dist >= rho


def check_projector(P, M, J):
    assert np.linalg.norm(P @ P - P) <= 1e-10 * np.linalg.norm(P)
    MP = M @ P
    assert np.linalg.norm(MP - MP.conj().T) <= 1e-10 * np.linalg.norm(MP)
    assert abs(np.trace(P).real - J) <= 1e-8


def test_projector_properties(rng):
    K, M = random_hermitian(rng, 7), random_spd(rng, 7)
    from blochrom.numkernel import eig_hermitian_gen

    sol = eig_hermitian_gen(K, M)
    for J in (1, 3):
        pr = cluster_projector(sol, J, M)
        check_projector(pr.P, M, J)
    U = sol.vectors * np.exp(1j * rng.uniform(0, 2 * np.pi, 7))
    again = cluster_projector(EigenSolution(sol.values, U, sol.k), 3, M)
    assert np.linalg.norm(again.P - cluster_projector(sol, 3, M).P) <= 1e-10
    assert np.allclose(cluster_projector(sol, 7, M).P, np.eye(7), atol=1e-10)
    u = sol.vectors[:, :1]
    assert np.allclose(cluster_projector(sol, 1, M).P, u @ u.conj().T @ M)


def test_bar_complete_cluster_is_identity():
    fam = bar_family()
    for k in (0.0, 1.0, np.pi):
        _, M = fam.pencil(k)
        assert np.allclose(cluster_projector(fam.solve(k), 2, M).P, np.eye(2), atol=1e-10)


def test_degenerate_cluster_boundary():
    fam = bar_family()
    _, M = fam.pencil(np.pi)
    with pytest.raises(ClusterBoundaryDegenerate):
        cluster_projector(fam.solve(np.pi), 1, M)


def test_constant_family_projectors_do_not_move(rng):
    prs = projectors_along(constant_family(rng), np.linspace(0, 1, 5), 2)
    assert projector_continuity(prs) <= 1e-14


def test_bar_crossing():
    fam = bar_family()
    dk = 0.02
    k = np.pi + (np.arange(-10, 10) + 0.5) * dk
    assert projector_continuity(projectors_along(fam, k, 2)) <= 1e-12
    steps = eigenvector_steps(fam, k, 1)
    i = np.argmax(steps)
    assert steps[i] > 1.0
    assert np.max(np.delete(steps, i)) <= dk
    # the closed-form eigenvectors swap order across ka = pi
    w1, w2, _, _ = bar_closed_form(np.pi + dk)
    assert w1 > w2
