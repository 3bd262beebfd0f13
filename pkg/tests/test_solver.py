import numpy as np
import pytest
from scipy.sparse.linalg import eigsh

from robinlab.geometry import disk, ellipse
from robinlab.mesh import triangulate
from robinlab.oracles import (
    J01,
    dirichlet_eig_disk,
    dirichlet_ground_state_boundary_gradient,
    robin_eig_disk,
)
from robinlab.solver import (
    SolverError,
    assemble,
    boundary_gradient_min,
    boundary_normal_derivative,
    eigen_residual,
    field_distance,
    l2_norm,
    solve,
    solve_dirichlet_eig,
    solve_dirichlet_torsion,
    solve_robin_eig,
    solve_robin_torsion,
    subspace_iteration,
)


# -- assembly ---------------------------------------------------------------


@pytest.mark.parametrize("name", ["disk_system", "ellipse_system"])
def test_system_invariants(name, request):
    S = request.getfixturevalue(name)
    m = S.mesh
    for A in (S.stiffness, S.mass, S.boundary_mass):
        assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    one = np.ones(m.n_vertices)
    assert np.abs(S.stiffness @ one).max() <= 1e-10
    assert S.load.sum() == pytest.approx(m.area(), abs=1e-12)
    bm = S.boundary_mass.diagonal()
    assert np.all(bm[: m.n_boundary] > 0) and np.all(bm[m.n_boundary:] == 0)
    assert bm.sum() == pytest.approx(m.domain.perimeter(), rel=m.h_target**2)
    assert (one @ (S.mass @ one)) == pytest.approx(m.area(), rel=1e-12)


# -- eigenproblems ----------------------------------------------------------


@pytest.mark.parametrize("beta", [1.0, 10.0, 100.0])
def test_robin_disk_eigenvalue(disk_system, beta):
    lam = solve_robin_eig(disk_system, beta).eigenvalues[0]
    assert lam == pytest.approx(robin_eig_disk(beta), rel=1e-3)


def test_solution_invariants(ellipse_system):
    S = ellipse_system
    for sol in (solve_robin_eig(S, 5.0, k=2), solve_dirichlet_eig(S, k=2)):
        assert l2_norm(sol) == pytest.approx(1.0, abs=1e-10)
        assert all(r <= 1e-9 for r in sol.residuals)
        assert eigen_residual(sol, 0) <= 1e-9 * sol.eigenvalues[0]
        assert sol.eigenvalues[0] < sol.eigenvalues[1]
    rob = solve_robin_eig(S, 5.0)
    assert np.all(rob.field > 0)
    dir_ = solve_dirichlet_eig(S)
    assert np.all(dir_.field[: S.mesh.n_boundary] == 0) and np.all(dir_.field[S.mesh.n_boundary:] > 0)


def test_eigenvalue_ordering_and_monotonicity(ellipse_system):
    S = ellipse_system
    lamD = solve_dirichlet_eig(S, k=2).eigenvalues
    prev = 0.0
    for b in (0.1, 1.0, 10.0, 100.0, 1e3, 1e4):
        lam = solve_robin_eig(S, b, k=2).eigenvalues
        assert lam[0] <= lamD[0] and lam[1] <= lamD[1]
        assert lam[0] >= prev
        prev = lam[0]


def test_dirichlet_disk_and_ball_minimality(disk_system, ellipse_system):
    lam = solve_dirichlet_eig(disk_system, k=2).eigenvalues
    assert lam[0] == pytest.approx(dirichlet_eig_disk(), rel=2e-3)
    assert lam[1] == pytest.approx(dirichlet_eig_disk(k=2), rel=5e-3)
    # same diameter: the disk of radius 1.5 has the smaller eigenvalue
    assert solve_dirichlet_eig(ellipse_system).eigenvalues[0] >= dirichlet_eig_disk(1.5)


def test_subspace_iteration_against_eigsh(ellipse_system):
    S = ellipse_system
    A = (S.stiffness + 3.0 * S.boundary_mass).tocsc()
    lam, X, res, _ = subspace_iteration(A, S.mass.tocsc(), 4)
    ref = np.sort(eigsh(A, k=4, M=S.mass.tocsc(), sigma=0.0, which="LM")[0])
    assert np.allclose(lam, ref, rtol=1e-9)
    assert np.all(res <= 1e-9)


def test_subspace_iteration_reports_nonconvergence(disk_system):
    S = disk_system
    with pytest.raises(SolverError, match="residual"):
        subspace_iteration(S.stiffness + S.boundary_mass, S.mass, 2, maxit=1)


def test_bad_parameters(disk_system):
    with pytest.raises(ValueError):
        solve_robin_eig(disk_system, 0.0)
    with pytest.raises(ValueError):
        solve_robin_eig(disk_system, 1.0, k=3)
    with pytest.raises(ValueError):
        solve(disk_system, "neumann_eig")
    with pytest.raises(ValueError):
        solve_robin_torsion(disk_system, -1.0)


# -- torsion ----------------------------------------------------------------


def test_robin_torsion_disk(disk_system):
    sol = solve_robin_torsion(disk_system, 2.0)
    r = np.linalg.norm(disk_system.mesh.vertices, axis=1)
    exact = (1 - r**2) / 4 + 0.25
    assert np.max(np.abs(sol.field - exact) / exact) <= 2e-3
    i0 = int(np.argmin(r))
    assert sol.field[i0] == pytest.approx(0.5, rel=2e-3)
    assert sol.field.min() > 0
    assert sol.residuals[0] <= 1e-11


def test_dirichlet_torsion_and_maximum_principle(ellipse_system, disk_system):
    d = solve_dirichlet_torsion(disk_system)
    i0 = int(np.argmin(np.linalg.norm(disk_system.mesh.vertices, axis=1)))
    assert d.field[i0] == pytest.approx(0.25, rel=2e-3)
    S = ellipse_system
    uD = solve_dirichlet_torsion(S)
    assert np.all(uD.field[: S.mesh.n_boundary] == 0.0)
    for b in (0.5, 10.0, 1e3):
        uB = solve_robin_torsion(S, b)
        assert np.all(uD.field <= uB.field)
        assert uB.field.min() > 0


def test_torsion_boundary_value_decays_like_inverse_beta(disk_system):
    for b in (10.0, 100.0, 1000.0):
        u = solve_robin_torsion(disk_system, b).field[: disk_system.mesh.n_boundary]
        assert np.mean(u) * 2 * b == pytest.approx(1.0, rel=0.02)


# -- boundary gradients -----------------------------------------------------


def test_boundary_gradient_disk(disk_system):
    h = disk_system.mesh.h_target
    t = solve_dirichlet_torsion(disk_system)
    for method in ("patch", "normal"):
        assert boundary_gradient_min(t, method) == pytest.approx(0.5, abs=h)
    e = solve_dirichlet_eig(disk_system)
    q = dirichlet_ground_state_boundary_gradient(1.0)
    assert boundary_gradient_min(e) == pytest.approx(q, abs=q * h)
    assert boundary_gradient_min(t.scaled(2.0)) == pytest.approx(2 * boundary_gradient_min(t), rel=1e-12)
    assert boundary_normal_derivative(t).fallback_count == 0
    with pytest.raises(ValueError):
        boundary_gradient_min(solve_robin_torsion(disk_system, 1.0))
    with pytest.raises(ValueError):
        boundary_gradient_min(t, "spline")
    assert q == pytest.approx(J01 / np.sqrt(np.pi))


def test_boundary_gradient_ellipse_torsion_closed_form(ellipse_system):
    # u = (1 - x^2/a^2 - y^2/b^2) c, c = 1 / (2 (1/a^2 + 1/b^2)); min |grad u| = 2c/a at (a, 0)
    a, b = 1.5, 1.0
    c = 1.0 / (2 * (1 / a**2 + 1 / b**2))
    t = solve_dirichlet_torsion(ellipse_system)
    assert boundary_gradient_min(t) == pytest.approx(2 * c / a, rel=5e-3)


# -- distances --------------------------------------------------------------


def test_field_distance(disk_system):
    S = disk_system
    a = solve_robin_eig(S, 10.0)
    assert field_distance(a, a) == 0.0
    flipped = a.scaled(-1.0)
    assert field_distance(a, flipped) == pytest.approx(0.0, abs=1e-14)
    tD = solve_dirichlet_torsion(S)
    for b in (50.0, 500.0):
        tB = solve_robin_torsion(S, b)
        assert field_distance(tB, tD, "C0") == pytest.approx(1 / (2 * b), rel=0.03)
    with pytest.raises(ValueError):
        field_distance(a, a, "H1")
    other = assemble(triangulate(disk(1.0), 0.2))
    with pytest.raises(ValueError):
        field_distance(a, solve_robin_eig(other, 10.0))


def test_ground_state_distance_decreases(disk_system):
    D = solve_dirichlet_eig(disk_system)
    d = [field_distance(solve_robin_eig(disk_system, b), D) for b in (1e2, 1e3, 1e4)]
    assert d[0] > d[1] > d[2]


def test_dilation_covariance_of_robin_eigenvalue():
    # lambda^beta(t Omega) = t^-2 lambda^{t beta}(Omega) on a scaled copy of the mesh
    e = ellipse(1.5, 1.0)
    S = assemble(triangulate(e, 0.05))
    for t in (0.5, 2.0):
        St = assemble(triangulate(e.scaled(t), 0.05 * t))
        lt = solve_robin_eig(St, 4.0).eigenvalues[0]
        assert lt == pytest.approx(solve_robin_eig(S, 4.0 * t).eigenvalues[0] / t**2, rel=1e-8)
