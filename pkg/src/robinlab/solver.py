"""Linear finite elements for the Robin/Dirichlet eigenvalue and torsion problems.

The weak form of the Robin problems is

    int grad u . grad v + beta int_{boundary} u v = lambda int u v   (eigen)
    int grad u . grad v + beta int_{boundary} u v = int v            (torsion)

and the Dirichlet problems restrict the same forms to functions vanishing on
the boundary (symmetric elimination of boundary rows and columns).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import splu

from .mesh import Mesh

EIG_TOL = 1e-9
TORSION_TOL = 1e-11
PROBLEMS = ("robin_eig", "dirichlet_eig", "robin_torsion", "dirichlet_torsion")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FemSystem:
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    boundary_mass: sp.csr_matrix
    load: np.ndarray
    mesh: Mesh


@dataclass(frozen=True, eq=False)
class Solution:
    """Nodal field together with the problem that produced it.

    ``modes`` holds all computed eigenvectors (column ``i`` belongs to
    ``eigenvalues[i]``); ``field`` is the first one for eigenproblems.
    """

    field: np.ndarray
    problem: str
    mesh: Mesh
    system: FemSystem
    beta: Optional[float] = None
    eigenvalues: tuple[float, ...] = ()
    modes: Optional[np.ndarray] = None
    residuals: tuple[float, ...] = ()
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def is_eigen(self) -> bool:
        return self.problem.endswith("_eig")

    @property
    def is_dirichlet(self) -> bool:
        return self.problem.startswith("dirichlet")

    def scaled(self, factor: float) -> "Solution":
        modes = None if self.modes is None else factor * self.modes
        return Solution(factor * self.field, self.problem, self.mesh, self.system, self.beta,
                        self.eigenvalues, modes, self.residuals, self.iterations, dict(self.info))


def assemble(mesh: Mesh) -> FemSystem:
    """P1 stiffness, consistent mass, lumped (edge trapezoid) boundary mass and load."""
    p = mesh.vertices
    t = mesh.triangles
    n = mesh.n_vertices
    x, y = p[t, 0], p[t, 1]
    # gradients of barycentric coordinates: grad phi_k = (b_k, c_k) / (2 area)
    b = np.column_stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]])
    c = np.column_stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]])
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    if np.any(area <= 0):
        raise SolverError("mesh has non-positive triangle areas")
    Ke = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (4.0 * area[:, None, None])
    Me = area[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))[None]
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    K = sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))
    M = sp.csr_matrix((Me.ravel(), (rows, cols)), shape=(n, n))
    K = 0.5 * (K + K.T)
    M = 0.5 * (M + M.T)
    load = np.zeros(n)
    np.add.at(load, t.ravel(), np.repeat(area / 3.0, 3))
    bw = np.zeros(n)
    e = mesh.boundary_edges
    np.add.at(bw, e[:, 0], 0.5 * mesh.boundary_weights)
    np.add.at(bw, e[:, 1], 0.5 * mesh.boundary_weights)
    B = sp.diags(bw, format="csr")
    return FemSystem(K.tocsr(), M.tocsr(), B, load, mesh)


def _m_inv_norm(Mlu, r: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(np.einsum("ij,ij->j", r, Mlu.solve(r)), 0.0))


def subspace_iteration(A, M, k: int, tol: float = EIG_TOL, maxit: int = 1000, block: int | None = None, seed: int = 0):
    """Smallest ``k`` eigenpairs of ``A x = lam M x`` (A, M SPD).

    Block inverse iteration with Rayleigh-Ritz projection; the Ritz step
    deflates converged directions and resolves (near-)multiple eigenvalues.
    Convergence is measured by ``||A x - lam M x||_{M^-1} / lam`` for
    M-normalized ``x``.
    """
    n = A.shape[0]
    p = min(n, block or max(2 * k, k + 4))
    Alu = splu(sp.csc_matrix(A))
    Mlu = splu(sp.csc_matrix(M))
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    X[:, 0] = 1.0
    res = np.full(k, np.inf)
    for it in range(1, maxit + 1):
        Y = Alu.solve(M @ X)
        Ar = Y.T @ (A @ Y)
        Mr = Y.T @ (M @ Y)
        Ar = 0.5 * (Ar + Ar.T)
        Mr = 0.5 * (Mr + Mr.T)
        lam, Q = eigh(Ar, Mr)
        X = Y @ Q
        # M-normalize
        X /= np.sqrt(np.einsum("ij,ij->j", X, M @ X))
        R = A @ X[:, :k] - (M @ X[:, :k]) * lam[:k]
        res = _m_inv_norm(Mlu, R) / np.abs(lam[:k])
        if np.all(res <= tol):
            return lam[:k], X[:, :k], res, it
    raise SolverError(
        f"eigensolver did not converge in {maxit} iterations; relative residuals {res}"
    )


def _fix_sign(mesh: Mesh, vec: np.ndarray) -> np.ndarray:
    i = int(np.argmin(np.linalg.norm(mesh.vertices, axis=1)))
    return -vec if vec[i] < 0 else vec


def _eig_solution(system, A, M, free, k, problem, beta):
    if k not in (1, 2):
        raise ValueError(f"k must be 1 or 2, got {k}")
    lam, X, res, it = subspace_iteration(A, M, k)
    n = system.mesh.n_vertices
    modes = np.zeros((n, k))
    modes[free] = X
    modes[:, 0] = _fix_sign(system.mesh, modes[:, 0])
    u = modes[:, 0]
    return Solution(u, problem, system.mesh, system, beta, tuple(float(v) for v in lam),
                    modes, tuple(float(r) for r in res), it)


def _check_beta(beta):
    if not (beta is not None and np.isfinite(beta) and beta > 0):
        raise ValueError(f"beta must be a positive finite number, got {beta}")


def solve_robin_eig(system: FemSystem, beta: float, k: int = 1) -> Solution:
    _check_beta(beta)
    A = system.stiffness + beta * system.boundary_mass
    free = np.arange(system.mesh.n_vertices)
    return _eig_solution(system, A, system.mass, free, k, "robin_eig", float(beta))


def _interior(system: FemSystem) -> np.ndarray:
    return np.arange(system.mesh.n_boundary, system.mesh.n_vertices)


def solve_dirichlet_eig(system: FemSystem, k: int = 1) -> Solution:
    free = _interior(system)
    A = system.stiffness[free][:, free]
    M = system.mass[free][:, free]
    return _eig_solution(system, A, M, free, k, "dirichlet_eig", None)


def _backward_error(A, u, f) -> float:
    """Normwise relative residual ``||Au - f|| / (||A|| ||u|| + ||f||)`` (inf-norms)."""
    anorm = float(abs(A).sum(axis=1).max())
    r = f - A @ u
    return float(np.abs(r).max() / (anorm * np.abs(u).max() + np.abs(f).max()))


def _spd_solve(A, f):
    lu = splu(sp.csc_matrix(A))
    u = lu.solve(f)
    for _ in range(3):  # iterative refinement for ill-conditioned small-beta systems
        rel = _backward_error(A, u, f)
        if rel <= TORSION_TOL:
            break
        u = u + lu.solve(f - A @ u)
    rel = _backward_error(A, u, f)
    if not rel <= TORSION_TOL:
        raise SolverError(f"linear solve breakdown: relative residual {rel:.3e}")
    return u, rel


def solve_robin_torsion(system: FemSystem, beta: float) -> Solution:
    _check_beta(beta)
    A = system.stiffness + beta * system.boundary_mass
    u, rel = _spd_solve(A, system.load)
    return Solution(u, "robin_torsion", system.mesh, system, float(beta), residuals=(float(rel),))


def solve_dirichlet_torsion(system: FemSystem) -> Solution:
    free = _interior(system)
    u = np.zeros(system.mesh.n_vertices)
    u[free], rel = _spd_solve(system.stiffness[free][:, free], system.load[free])
    return Solution(u, "dirichlet_torsion", system.mesh, system, None, residuals=(float(rel),))


def solve(system: FemSystem, problem: str, beta: float | None = None, k: int = 1) -> Solution:
    if problem == "robin_eig":
        return solve_robin_eig(system, beta, k)
    if problem == "dirichlet_eig":
        return solve_dirichlet_eig(system, k)
    if problem == "robin_torsion":
        return solve_robin_torsion(system, beta)
    if problem == "dirichlet_torsion":
        return solve_dirichlet_torsion(system)
    raise ValueError(f"unknown problem {problem!r}; expected one of {PROBLEMS}")


def eigen_residual(sol: Solution, i: int = 0) -> float:
    """``||(K + beta B) u - lam M u||`` measured in the M^-1 norm, ``u`` M-normalized."""
    s = sol.system
    if sol.problem == "robin_eig":
        A, M, free = s.stiffness + sol.beta * s.boundary_mass, s.mass, slice(None)
    else:
        free = _interior(s)
        A, M = s.stiffness[free][:, free], s.mass[free][:, free]
    u = sol.modes[free, i]
    r = A @ u - sol.eigenvalues[i] * (M @ u)
    return float(np.sqrt(r @ splu(sp.csc_matrix(M)).solve(r)))


# ---------------------------------------------------------------------------
# post-processing


def point_evaluator(mesh: Mesh, values: np.ndarray):
    """Piecewise-linear interpolant of nodal values; NaN outside the mesh."""
    from matplotlib.tri import LinearTriInterpolator, Triangulation

    tri = Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles)
    interp = LinearTriInterpolator(tri, values)

    def evaluate(pts):
        pts = np.asarray(pts, dtype=float)
        out = interp(pts[..., 0], pts[..., 1])
        return np.ma.filled(out.astype(float), np.nan)

    return evaluate


@dataclass(frozen=True)
class BoundaryGradient:
    minimum: float
    per_vertex: np.ndarray
    fallback_count: int


def boundary_normal_derivative(sol: Solution, depths: int = 3) -> BoundaryGradient:
    """Inward normal derivative at each boundary vertex of a Dirichlet solution.

    The field is sampled along the inward normal at ``j h`` (j = 1..depths)
    and a quadratic through these samples and the boundary value is fitted by
    least squares. Vertices whose samples leave the mesh fall back to a first
    order difference.
    """
    mesh = sol.mesh
    h = mesh.h_target
    th = mesh.boundary_theta
    nrm = np.column_stack([np.cos(th), np.sin(th)])
    x0 = mesh.vertices[: mesh.n_boundary]
    s = h * np.arange(depths + 1)
    pts = x0[:, None, :] - s[None, :, None] * nrm[:, None, :]
    ev = point_evaluator(mesh, sol.field)
    vals = ev(pts)
    vals[:, 0] = sol.field[: mesh.n_boundary]
    V = np.column_stack([np.ones_like(s), s, s**2])
    ok = np.all(np.isfinite(vals), axis=1)
    grad = np.empty(mesh.n_boundary)
    coef, *_ = np.linalg.lstsq(V, np.where(np.isfinite(vals), vals, 0.0).T, rcond=None)
    grad[:] = coef[1]
    fallback = ~ok
    if np.any(fallback):
        v1 = vals[fallback, 1]
        v1 = np.where(np.isfinite(v1), v1, 0.0)
        grad[fallback] = (v1 - vals[fallback, 0]) / h
    g = np.abs(grad)
    return BoundaryGradient(float(g.min()), g, int(fallback.sum()))


def boundary_gradient_patch(sol: Solution) -> np.ndarray:
    """|grad u| at boundary vertices from the quadratic 2-ring patch fit."""
    from .concavity import estimate_gradient_hessian

    nb = sol.mesh.n_boundary
    fit = estimate_gradient_hessian(sol.mesh, sol.field, at=np.arange(nb))
    return np.linalg.norm(fit.gradient[:nb], axis=1)


def boundary_gradient_min(sol: Solution, method: str = "patch") -> float:
    """Minimum over the boundary of |grad u| for a Dirichlet solution.

    ``patch`` (default) differentiates the quadratic patch fit and is second
    order on smooth data; ``normal`` uses the line fit along the inward normal.
    """
    if not sol.is_dirichlet:
        raise ValueError("boundary_gradient_min expects a Dirichlet solution")
    if method == "patch":
        return float(boundary_gradient_patch(sol).min())
    if method == "normal":
        return boundary_normal_derivative(sol).minimum
    raise ValueError(f"unknown gradient method {method!r}; expected 'patch' or 'normal'")


def field_distance(a: Solution, b: Solution, norm: str = "L2") -> float:
    if a.mesh is not b.mesh:
        raise ValueError("field_distance requires solutions on the same mesh")
    d = a.field - b.field
    if a.is_eigen and b.is_eigen and float(a.field @ (a.system.mass @ b.field)) < 0:
        d = a.field + b.field
    if norm == "L2":
        return float(np.sqrt(d @ (a.system.mass @ d)))
    if norm == "C0":
        return float(np.max(np.abs(d)))
    raise ValueError(f"unknown norm {norm!r}; expected 'L2' or 'C0'")


def l2_norm(sol: Solution) -> float:
    return float(np.sqrt(sol.field @ (sol.system.mass @ sol.field)))
