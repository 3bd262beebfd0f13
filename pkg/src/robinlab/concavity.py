"""Convexity diagnostics for v = -log u and v = -sqrt(u).

Gradients and Hessians of nodal fields are recovered by Gaussian-weighted
least-squares quadratic fits over vertex 2-rings; on top of that the module
checks the Hessian identity relating the Hessians of v and u, reports the
smallest Hessian eigenvalue globally and in a boundary tube, and checks the
boundary relation ``u_tt = -|grad u| kappa`` for Dirichlet solutions.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .geometry import ConvexDomain
from .mesh import Mesh, tubular_band
from .solver import Solution

KINDS = ("neg_log", "neg_sqrt")
MIN_NEIGHBORS = 6
SIGMA_REL = 1e-3


class ConcavityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HessianField:
    """Per-vertex gradient (n, 2) and symmetric Hessian (n, 2, 2) estimates.

    ``valid`` marks vertices with a well-posed fit inside the mask; other
    rows are NaN.
    """

    gradient: np.ndarray
    hessian: np.ndarray
    fit_radius: np.ndarray
    fit_residual: np.ndarray
    valid: np.ndarray
    n_rank_deficient: int

    def min_eigenvalue(self) -> np.ndarray:
        H = self.hessian
        a, b, c = H[:, 0, 0], H[:, 0, 1], H[:, 1, 1]
        return 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b * b)

    def max_abs_eigenvalue(self) -> np.ndarray:
        H = self.hessian
        a, b, c = H[:, 0, 0], H[:, 0, 1], H[:, 1, 1]
        return np.abs(0.5 * (a + c)) + np.sqrt(0.25 * (a - c) ** 2 + b * b)

    def quadratic_form(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        return np.einsum("i,nij,j->n", eta, self.hessian, eta)


def transform(sol_or_values, kind: str, mask: Optional[np.ndarray] = None):
    """Return ``(v, mask)`` with v = -log u or -sqrt u on the mask.

    For Dirichlet solutions the default mask drops vertices within 2h of the
    boundary, where u vanishes; Robin fields must be positive everywhere.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown transform {kind!r}; expected one of {KINDS}")
    if isinstance(sol_or_values, Solution):
        u = sol_or_values.field
        if mask is None:
            if sol_or_values.is_dirichlet:
                m = sol_or_values.mesh
                mask = m.boundary_distance > 2.0 * m.h_target
            else:
                mask = np.ones(u.shape, dtype=bool)
    else:
        u = np.asarray(sol_or_values, dtype=float)
        if mask is None:
            mask = np.ones(u.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    bad = mask & ~(u > 0)
    if np.any(bad):
        i = int(np.nonzero(bad)[0][0])
        raise ConcavityError(
            f"field is not strictly positive on the evaluation mask (u[{i}] = {u[i]:.3e}); "
            "Robin solutions must stay positive up to the boundary"
        )
    v = np.full(u.shape, np.nan)
    if kind == "neg_log":
        v[mask] = -np.log(u[mask])
    else:
        v[mask] = -np.sqrt(u[mask])
    return v, mask


def _two_ring(mesh: Mesh) -> sp.csr_matrix:
    A = mesh.neighbors()
    A2 = A + A @ A + sp.identity(mesh.n_vertices, format="csr")
    A2.data[:] = 1.0
    A2.sort_indices()
    return A2.tocsr()


def _mean_edge_length(mesh: Mesh) -> np.ndarray:
    A = mesh.neighbors().tocoo()
    elen = np.linalg.norm(mesh.vertices[A.row] - mesh.vertices[A.col], axis=1)
    n = mesh.n_vertices
    return np.bincount(A.row, weights=elen, minlength=n) / np.maximum(np.bincount(A.row, minlength=n), 1)


def estimate_gradient_hessian(
    mesh: Mesh,
    values: np.ndarray,
    mask: Optional[np.ndarray] = None,
    at: Optional[np.ndarray] = None,
    rings: Optional[sp.csr_matrix] = None,
    chunk: int = 20000,
) -> HessianField:
    """Weighted least-squares quadratic fit at every vertex (or at ``at``).

    The fit at vertex i uses the masked vertices of its 2-ring with weights
    ``exp(-|x_j - x_i|^2 / (2 l_i^2))`` where ``l_i`` is the mean incident
    edge length. The basis is expressed in coordinates scaled by ``l_i``.
    Vertices outside ``at`` get NaN rows and ``valid = False``.
    """
    values = np.asarray(values, dtype=float)
    n = mesh.n_vertices
    if mask is None:
        mask = np.isfinite(values)
    mask = np.asarray(mask, dtype=bool)
    R = rings if rings is not None else _two_ring(mesh)
    R = (R @ sp.diags(mask.astype(float))).tocsr()
    R.eliminate_zeros()
    ell = _mean_edge_length(mesh)
    fv = np.where(mask, values, 0.0)
    targets = np.arange(n) if at is None else np.asarray(at, dtype=np.int64)
    targets = targets[mask[targets]]

    grad = np.full((n, 2), np.nan)
    H = np.full((n, 2, 2), np.nan)
    resid = np.full(n, np.nan)
    valid = np.zeros(n, dtype=bool)
    n_rank_bad = 0
    for start in range(0, targets.size, chunk):
        tgt = targets[start : start + chunk]
        sub = R[tgt]
        counts = np.diff(sub.indptr)
        width = int(counts.max())
        m = tgt.size
        nbr = np.full((m, width), -1, dtype=np.int64)
        row = np.repeat(np.arange(m), counts)
        pos = np.arange(sub.nnz) - np.repeat(sub.indptr[:-1], counts)
        nbr[row, pos] = sub.indices
        present = nbr >= 0
        idx = np.where(present, nbr, 0)
        el = ell[tgt]
        d = (mesh.vertices[idx] - mesh.vertices[tgt][:, None, :]) / el[:, None, None]
        dx, dy = d[..., 0], d[..., 1]
        w = np.where(present, np.exp(-0.5 * (dx * dx + dy * dy)), 0.0)
        sw = np.sqrt(w)
        V = np.stack([np.ones_like(dx), dx, dy, 0.5 * dx * dx, dx * dy, 0.5 * dy * dy], axis=-1)
        f = np.where(present, fv[idx] - fv[tgt][:, None], 0.0)
        # neighbours other than the vertex itself
        ok = counts - 1 >= MIN_NEIGHBORS
        Vw = V * sw[..., None]
        fw = f * sw
        Q, Rm = np.linalg.qr(Vw)
        diag = np.abs(np.diagonal(Rm, axis1=1, axis2=2))
        good = ok & (diag.min(axis=1) > 1e-8 * diag.max(axis=1))
        n_rank_bad += int(np.sum(ok & ~good))
        if not np.any(good):
            continue
        qtf = np.einsum("nki,nk->ni", Q[good], fw[good])
        c = np.linalg.solve(Rm[good], qtf[..., None])[..., 0]
        r = np.einsum("nkj,nj->nk", Vw[good], c) - fw[good]
        wsum = np.maximum(w[good].sum(axis=1), 1e-300)
        g = tgt[good]
        e = el[good]
        resid[g] = np.sqrt(np.einsum("nk,nk->n", r, r) / wsum)
        grad[g] = c[:, 1:3] / e[:, None]
        H[g, 0, 0] = c[:, 3] / e**2
        H[g, 0, 1] = H[g, 1, 0] = c[:, 4] / e**2
        H[g, 1, 1] = c[:, 5] / e**2
        valid[g] = True
    return HessianField(grad, H, 2.0 * ell, resid, valid, n_rank_bad)


def transformed_hessian(u_hess: HessianField, u: np.ndarray, kind: str,
                        mask: Optional[np.ndarray] = None) -> HessianField:
    """Gradient and Hessian of v = -log u or v = -sqrt u by the chain rule.

    ``grad v = -grad u / u``, ``D2 v = -D2 u / u + grad u grad u^T / u^2`` for
    ``neg_log``; ``grad v = -grad u / (2 sqrt u)``,
    ``D2 v = -D2 u / (2 sqrt u) + grad u grad u^T / (4 u^{3/2})`` for ``neg_sqrt``.
    """
    u = np.asarray(u, dtype=float)
    valid = u_hess.valid & (u > 0)
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool)
    us = np.where(valid, u, 1.0)
    g = u_hess.gradient
    outer = g[:, :, None] * g[:, None, :]
    if kind == "neg_log":
        grad = -g / us[:, None]
        H = -u_hess.hessian / us[:, None, None] + outer / (us**2)[:, None, None]
    elif kind == "neg_sqrt":
        rt = np.sqrt(us)
        grad = -g / (2.0 * rt)[:, None]
        H = -u_hess.hessian / (2.0 * rt)[:, None, None] + outer / (4.0 * us**1.5)[:, None, None]
    else:
        raise ValueError(f"unknown transform {kind!r}")
    grad[~valid] = np.nan
    H[~valid] = np.nan
    return HessianField(grad, H, u_hess.fit_radius, u_hess.fit_residual, valid, u_hess.n_rank_deficient)


_ETAS = (np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0]) / np.sqrt(2.0))


def qform_rhs(u_hess: HessianField, u: np.ndarray, kind: str, eta: np.ndarray) -> np.ndarray:
    """Right-hand side of the Hessian identity for v = -log u or v = -sqrt u."""
    quad = u_hess.quadratic_form(eta)
    slope = u_hess.gradient @ eta
    if kind == "neg_log":
        return -quad / u + slope**2 / u**2
    if kind == "neg_sqrt":
        return -quad / (2.0 * np.sqrt(u)) + slope**2 / (4.0 * u**1.5)
    raise ValueError(f"unknown transform {kind!r}")


def qform_consistency(u_hess: HessianField, v_hess: HessianField, u: np.ndarray, kind: str) -> float:
    """Maximum relative defect between the two sides of the Hessian identity.

    Evaluated on e1, e2 and (e1 + e2)/sqrt(2) at vertices where both fits are
    valid; the defect is ``|lhs - rhs| / max(|lhs|, |rhs|)``, taken as 0 where
    both sides vanish.
    """
    u = np.asarray(u, dtype=float)
    sel = u_hess.valid & v_hess.valid & (u > 0)
    if not np.any(sel):
        raise ConcavityError("no vertex carries valid fits for both fields")
    worst = 0.0
    for eta in _ETAS:
        lhs = v_hess.quadratic_form(eta)[sel]
        rhs = qform_rhs(u_hess, u, kind, eta)[sel]
        scale = np.maximum(np.abs(lhs), np.abs(rhs))
        tiny = 1e-12 * max(float(scale.max()), 1e-300)
        dd = np.abs(lhs - rhs)
        rel = np.where(scale > tiny, dd / np.maximum(scale, tiny), 0.0)
        worst = max(worst, float(rel.max()))
    return worst


def default_sigma_tol(hess: HessianField) -> float:
    """Relative floor: 1e-3 times the median spectral norm of the Hessian."""
    mags = hess.max_abs_eigenvalue()[hess.valid]
    if mags.size == 0:
        raise ConcavityError("empty mask")
    return SIGMA_REL * float(np.median(mags))


def default_tube_width(domain: ConvexDomain) -> float:
    from .geometry import geometry_summary

    return geometry_summary(domain).interior_sphere_radius / 4.0


@dataclass(frozen=True)
class ConcavityReport:
    kind: str
    beta: Optional[float]
    min_eig_global: float
    min_eig_tube: float
    tube_width: float
    argmin: tuple[float, float]
    argmin_tube: tuple[float, float]
    sigma_tol: float
    verdict: str
    n_evaluated: int
    n_excluded: int

    @property
    def passed(self) -> bool:
        return self.verdict == "strictly_convex"

    def to_dict(self) -> dict:
        return asdict(self)


def concavity_report(
    hess: HessianField,
    mesh: Mesh,
    tube_width: Optional[float] = None,
    sigma_tol: Optional[float] = None,
    kind: str = "neg_log",
    beta: Optional[float] = None,
) -> ConcavityReport:
    if tube_width is None:
        tube_width = default_tube_width(mesh.domain)
    if sigma_tol is None:
        sigma_tol = default_sigma_tol(hess)
    sel = hess.valid
    if not np.any(sel):
        raise ConcavityError("empty mask: no vertex carries a valid Hessian fit")
    lam = hess.min_eigenvalue()
    idx = np.nonzero(sel)[0]
    i = idx[np.argmin(lam[idx])]
    tube = np.intersect1d(tubular_band(mesh, tube_width), idx)
    if tube.size:
        j = tube[np.argmin(lam[tube])]
        tmin, targ = float(lam[j]), tuple(float(x) for x in mesh.vertices[j])
    else:
        tmin, targ = float("inf"), (float("nan"), float("nan"))
    gmin = float(lam[i])
    return ConcavityReport(
        kind=kind,
        beta=beta,
        min_eig_global=gmin,
        min_eig_tube=tmin,
        tube_width=float(tube_width),
        argmin=tuple(float(x) for x in mesh.vertices[i]),
        argmin_tube=targ,
        sigma_tol=float(sigma_tol),
        verdict="strictly_convex" if gmin >= sigma_tol else "indefinite",
        n_evaluated=int(idx.size),
        n_excluded=int(mesh.n_vertices - idx.size),
    )


def vertex_hessian(sol: Solution, kind: str, method: str = "chain") -> HessianField:
    """Hessian field of the transformed solution.

    ``method="direct"`` fits the transformed nodal values; ``method="chain"``
    fits the (smooth) solution itself and applies the chain rule, which stays
    accurate inside thin Robin boundary layers where -log u is steep.
    """
    v, mask = transform(sol, kind)
    if method == "direct":
        return estimate_gradient_hessian(sol.mesh, v, mask)
    if method == "chain":
        u_hess = estimate_gradient_hessian(sol.mesh, sol.field)
        return transformed_hessian(u_hess, sol.field, kind, mask)
    raise ValueError(f"unknown Hessian method {method!r}; expected 'chain' or 'direct'")


def analyze(sol: Solution, kind: str, tube_width=None, sigma_tol=None, method: str = "chain"):
    """Transform, recover the Hessian and report in one call."""
    hess = vertex_hessian(sol, kind, method)
    return concavity_report(hess, sol.mesh, tube_width, sigma_tol, kind, sol.beta), hess


@dataclass(frozen=True)
class BoundaryIdentityCheck:
    max_defect: float
    median_defect: float
    tangential: np.ndarray
    predicted: np.ndarray


def boundary_second_derivative_check(sol: Solution, domain: Optional[ConvexDomain] = None) -> BoundaryIdentityCheck:
    """Compare u_tt with -|grad u| kappa at the boundary vertices.

    Gradient and Hessian come from the quadratic fit at each boundary vertex;
    ``kappa`` is the exact curvature at the vertex's normal angle.
    """
    if not sol.is_dirichlet:
        raise ValueError("boundary identity applies to Dirichlet solutions")
    mesh = sol.mesh
    domain = domain or mesh.domain
    nb = mesh.n_boundary
    hess = estimate_gradient_hessian(mesh, sol.field, at=np.arange(nb))
    th = mesh.boundary_theta
    tang = np.column_stack([-np.sin(th), np.cos(th)])
    H = hess.hessian[:nb]
    utt = np.einsum("ni,nij,nj->n", tang, H, tang)
    pred = -np.linalg.norm(hess.gradient[:nb], axis=1) * domain.curvature(th)
    ok = np.isfinite(utt) & np.isfinite(pred)
    defect = np.abs(utt[ok] - pred[ok]) / np.abs(pred[ok])
    return BoundaryIdentityCheck(float(defect.max()), float(np.median(defect)), utt, pred)
