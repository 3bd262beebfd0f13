import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robinlab.concavity import (
    ConcavityError,
    HessianField,
    analyze,
    boundary_second_derivative_check,
    concavity_report,
    estimate_gradient_hessian,
    qform_consistency,
    transform,
    transformed_hessian,
    vertex_hessian,
)
from robinlab.geometry import disk
from robinlab.mesh import triangulate
from robinlab.solver import solve_dirichlet_torsion, solve_robin_eig, solve_robin_torsion


@pytest.fixture(scope="module")
def mesh():
    return triangulate(disk(1.0), 0.08)


def test_transform_examples():
    v, m = transform(np.array([1.0, np.e, 4.0]), "neg_log")
    assert np.allclose(v, [0.0, -1.0, -np.log(4.0)]) and m.all()
    v, _ = transform(np.array([4.0, 0.25]), "neg_sqrt")
    assert np.allclose(v, [-2.0, -0.5])
    with pytest.raises(ConcavityError):
        transform(np.array([1.0, 0.0]), "neg_log")
    with pytest.raises(ValueError):
        transform(np.array([1.0]), "neg_cube")


@given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=20))
def test_transform_round_trip(u):
    u = np.array(u)
    assert np.allclose(np.exp(-transform(u, "neg_log")[0]), u, rtol=1e-12)
    assert np.allclose(transform(u, "neg_sqrt")[0] ** 2, u, rtol=1e-12)


def test_dirichlet_mask_excludes_boundary_layer(mesh):
    from robinlab.solver import assemble

    sol = solve_dirichlet_torsion(assemble(mesh))
    v, m = transform(sol, "neg_log")
    assert not m[: mesh.n_boundary].any()
    assert np.all(np.isnan(v[~m])) and np.all(np.isfinite(v[m]))


@pytest.mark.parametrize(
    "f, H",
    [
        (lambda x, y: x**2 + y**2, [[2, 0], [0, 2]]),
        (lambda x, y: x * y, [[0, 1], [1, 0]]),
        (lambda x, y: 3 * x - y + 2, [[0, 0], [0, 0]]),
        (lambda x, y: 0.5 * x**2 - 2 * x * y + 4 * y**2 + x, [[1, -2], [-2, 8]]),
    ],
)
def test_quadratic_fit_is_exact(mesh, f, H):
    x, y = mesh.vertices.T
    hf = estimate_gradient_hessian(mesh, f(x, y))
    assert hf.valid.all()
    assert np.allclose(hf.hessian, np.array(H, float), atol=1e-8)


def test_quadratic_eigenvalues(mesh):
    x, y = mesh.vertices.T
    assert np.allclose(estimate_gradient_hessian(mesh, x**2 + y**2).min_eigenvalue(), 2.0, atol=1e-8)
    lam = estimate_gradient_hessian(mesh, x * y).min_eigenvalue()
    assert np.allclose(lam, -1.0, atol=1e-8)
    rep = concavity_report(estimate_gradient_hessian(mesh, 3 * x - y), mesh, sigma_tol=1e-6)
    assert rep.verdict == "indefinite"


def _analytic_field(mesh):
    # u = exp(-r^2): grad u = -2 x u, D2 u = (4 x x^T - 2 I) u
    x = mesh.vertices
    u = np.exp(-np.sum(x**2, axis=1))
    g = -2 * x * u[:, None]
    H = (4 * x[:, :, None] * x[:, None, :] - 2 * np.eye(2)) * u[:, None, None]
    n = len(u)
    return u, HessianField(g, H, np.ones(n), np.zeros(n), np.ones(n, bool), 0)


@pytest.mark.parametrize("kind", ["neg_log", "neg_sqrt"])
def test_qform_exact_on_analytic_field(mesh, kind):
    u, uh = _analytic_field(mesh)
    vh = transformed_hessian(uh, u, kind)
    assert qform_consistency(uh, vh, u, kind) <= 1e-8
    if kind == "neg_log":
        # -log u = r^2 has Hessian 2 I
        assert np.allclose(vh.hessian, 2 * np.eye(2), atol=1e-12)


def test_qform_on_recovered_quadratic_exponential(mesh):
    x, y = mesh.vertices.T
    u = np.exp(-(x**2 + 0.5 * y**2 + 0.3 * x * y))
    uh = estimate_gradient_hessian(mesh, u)
    vh = estimate_gradient_hessian(mesh, -np.log(u))
    assert np.allclose(vh.hessian, [[2.0, 0.3], [0.3, 1.0]], atol=1e-8)
    assert qform_consistency(uh, transformed_hessian(uh, u, "neg_log"), u, "neg_log") <= 1e-8


def test_disk_torsion_neg_sqrt_radial(disk_system):
    # v = -sqrt((1 - r^2)/4 + 1/(2 beta)); radial check at the centre: D2 v = I / (4 sqrt(u0))
    beta = 2.0
    sol = solve_robin_torsion(disk_system, beta)
    rep, hess = analyze(sol, "neg_sqrt")
    i0 = int(np.argmin(np.linalg.norm(disk_system.mesh.vertices, axis=1)))
    assert hess.hessian[i0] == pytest.approx(np.eye(2) / (4 * np.sqrt(0.5)), abs=1e-3)
    assert rep.passed and rep.min_eig_global > 0


@pytest.mark.parametrize("beta", [1.0, 10.0])
def test_disk_ground_state_log_concave(disk_system, beta):
    rep, _ = analyze(solve_robin_eig(disk_system, beta), "neg_log")
    assert rep.passed
    assert rep.min_eig_tube >= rep.min_eig_global
    assert rep.n_excluded == 0


def test_chain_and_direct_agree_in_interior(disk_system):
    sol = solve_robin_eig(disk_system, 5.0)
    a = vertex_hessian(sol, "neg_log", "chain")
    b = vertex_hessian(sol, "neg_log", "direct")
    inner = disk_system.mesh.boundary_distance > 0.3
    scale = np.abs(b.hessian[inner]).max()
    assert np.max(np.abs(a.hessian[inner] - b.hessian[inner])) <= 0.05 * scale
    with pytest.raises(ValueError):
        vertex_hessian(sol, "neg_log", "spline")


def test_boundary_identity_disk(disk_system):
    t = solve_dirichlet_torsion(disk_system)
    chk = boundary_second_derivative_check(t)
    assert chk.median_defect < 0.05
    scaled = boundary_second_derivative_check(t.scaled(3.0))
    assert scaled.max_defect == pytest.approx(chk.max_defect, rel=1e-9)
    with pytest.raises(ValueError):
        boundary_second_derivative_check(solve_robin_torsion(disk_system, 1.0))
