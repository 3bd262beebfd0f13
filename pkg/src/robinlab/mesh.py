"""Conforming triangulations of convex domains with tagged boundary edges."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .geometry import ConvexDomain

MIN_ANGLE_DEG = 20.0
SMOOTHING_PASSES = 10


class MeshError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    """P1 triangulation of a convex domain.

    Boundary vertices come first (indices ``0..n_boundary-1``, counter-clockwise)
    and ``boundary_edges[i] = (i, i+1 mod n_boundary)``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_normals: np.ndarray
    boundary_weights: np.ndarray
    boundary_theta: np.ndarray
    boundary_distance: np.ndarray
    h_target: float
    domain: ConvexDomain

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_theta)

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.arange(self.n_boundary)

    @property
    def is_boundary(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[: self.n_boundary] = True
        return mask

    def areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    def area(self) -> float:
        return float(self.areas().sum())

    def edges(self) -> np.ndarray:
        """Unique undirected edges, sorted vertex pairs."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def edge_lengths(self) -> np.ndarray:
        e = self.edges()
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)

    def min_angle(self) -> float:
        return float(np.degrees(_angles(self.vertices, self.triangles).min()))

    def neighbors(self):
        """Vertex adjacency as a CSR matrix (no diagonal)."""
        from scipy.sparse import coo_matrix

        e = self.edges()
        n = self.n_vertices
        i = np.r_[e[:, 0], e[:, 1]]
        j = np.r_[e[:, 1], e[:, 0]]
        return coo_matrix((np.ones(len(i)), (i, j)), shape=(n, n)).tocsr()


def _signed_areas(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def _angles(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.empty(t.shape)
    for k in range(3):
        a = p[t[:, k]]
        u = p[t[:, (k + 1) % 3]] - a
        v = p[t[:, (k + 2) % 3]] - a
        cosang = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        out[:, k] = np.arccos(np.clip(cosang, -1.0, 1.0))
    return out


def _boundary_points(domain: ConvexDomain, h: float):
    n = max(16, int(np.ceil(domain.perimeter() / h)))
    s = domain.perimeter() * np.arange(n) / n
    theta = domain.theta_at_arc_length(s)
    return domain.point(theta), theta


def _hex_lattice(domain: ConvexDomain, h: float, rng: np.random.Generator | None, jitter: float):
    th = np.linspace(0.0, 2.0 * np.pi, 512, endpoint=False)
    bpts = domain.point(th)
    lo, hi = bpts.min(axis=0), bpts.max(axis=0)
    dy = h * np.sqrt(3.0) / 2.0
    ys = np.arange(np.floor(lo[1] / dy), np.ceil(hi[1] / dy) + 1) * dy
    pts = []
    for i, y in enumerate(ys):
        off = 0.5 * h if int(round(y / dy)) % 2 else 0.0
        xs = np.arange(np.floor(lo[0] / h) - 1, np.ceil(hi[0] / h) + 2) * h + off
        pts.append(np.column_stack([xs, np.full_like(xs, y)]))
    pts = np.concatenate(pts)
    if rng is not None and jitter > 0:
        pts = pts + jitter * h * rng.uniform(-1.0, 1.0, pts.shape)
    return pts


def _triangulate_points(points: np.ndarray, n_boundary: int) -> np.ndarray:
    tri = Delaunay(points, qhull_options="Qbb Qc Qz Q12").simplices.astype(np.int64)
    area = _signed_areas(points, tri)
    flip = area < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    area = np.abs(area)
    # boundary vertices are in convex position; drop slivers spanned by
    # three consecutive boundary vertices only
    keep = area > 1e-14 * np.max(area)
    onb = np.all(tri < n_boundary, axis=1)
    return tri[keep | ~onb]


def _relax(points, tri, n_boundary, h, domain, steps=6):
    """Spring relaxation of interior vertices towards edge length ~h."""
    p = points.copy()
    e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    e.sort(axis=1)
    e = np.unique(e, axis=0)
    n = len(p)
    for _ in range(steps):
        vec = p[e[:, 1]] - p[e[:, 0]]
        L = np.linalg.norm(vec, axis=1)
        L0 = 1.15 * h
        f = np.maximum(L0 - L, 0.0) / L
        fv = vec * f[:, None]
        force = np.zeros_like(p)
        np.add.at(force, e[:, 0], -fv)
        np.add.at(force, e[:, 1], fv)
        force[:n_boundary] = 0.0
        p = p + 0.2 * force
        inner = np.arange(n_boundary, n)
        d = domain.boundary_distance(p[inner])
        bad = d < 0.3 * h
        if np.any(bad):
            # pull escaping vertices back along the ray to the origin
            idx = inner[bad]
            p[idx] = points[idx]
    return p


def _boundary_data(domain: ConvexDomain, vertices: np.ndarray, n_boundary: int):
    nb = n_boundary
    edges = np.column_stack([np.arange(nb), (np.arange(nb) + 1) % nb])
    d = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    L = np.linalg.norm(d, axis=1)
    normals = np.column_stack([d[:, 1], -d[:, 0]]) / L[:, None]
    return edges, normals, L


def _finalize(domain, vertices, tri, theta, h) -> Mesh:
    nb = len(theta)
    edges, normals, L = _boundary_data(domain, vertices, nb)
    dist = np.zeros(len(vertices))
    if len(vertices) > nb:
        dist[nb:] = np.maximum(domain.boundary_distance(vertices[nb:]), 0.0)
    for arr in (vertices, tri, edges, normals, L, theta, dist):
        arr.setflags(write=False)
    return Mesh(vertices, tri, edges, normals, L, theta, dist, float(h), domain)


def triangulate(
    domain: ConvexDomain,
    h: float,
    seed: int | None = None,
    jitter: float = 0.0,
    min_angle: float = MIN_ANGLE_DEG,
) -> Mesh:
    """Quality triangulation with target edge length ``h``.

    Boundary vertices are placed at uniform arc length (spacing <= h), the
    interior is seeded with a hexagonal lattice and relaxed by spring
    smoothing between Delaunay passes until the minimum angle reaches
    ``min_angle``.
    """
    if not h > 0:
        raise ValueError(f"mesh size must be positive, got h={h}")
    rmin = float(np.min(domain.support(np.linspace(0, 2 * np.pi, 256, endpoint=False))))
    if h >= rmin:
        raise ValueError(f"mesh size h={h} must be below the inradius (~{rmin:.4g})")
    bpts, theta = _boundary_points(domain, h)
    nb = len(bpts)
    rng = np.random.default_rng(seed) if seed is not None else None
    lat = _hex_lattice(domain, h, rng, jitter)
    lat = lat[domain.boundary_distance(lat) > 0.55 * h]
    points = np.concatenate([bpts, lat])
    best = None
    for _ in range(SMOOTHING_PASSES + 1):
        tri = _triangulate_points(points, nb)
        ang = np.degrees(_angles(points, tri).min())
        if best is None or ang > best[0]:
            best = (ang, points, tri)
        if ang >= min_angle:
            break
        points = _relax(points, tri, nb, h, domain)
    ang, points, tri = best
    if ang < min_angle:
        raise MeshError(
            f"quality floor {min_angle} deg unreachable for h={h}: best minimum angle {ang:.2f} deg"
        )
    return _finalize(domain, points, tri, theta, h)


def tubular_band(mesh: Mesh, width: float) -> np.ndarray:
    """Indices of vertices closer than ``width`` to the boundary."""
    if not width > 0:
        raise ValueError(f"tube width must be positive, got {width}")
    return np.nonzero(mesh.boundary_distance < width)[0]


def _project_theta(domain: ConvexDomain, target: np.ndarray, theta0: np.ndarray) -> np.ndarray:
    """Normal angle of the boundary point nearest ``target`` (local Newton search)."""
    t = theta0.copy()
    for _ in range(30):
        x = domain.point(t)
        R = domain.radius_of_curvature(t)
        tang = np.column_stack([-np.sin(t), np.cos(t)])
        g = np.einsum("ij,ij->i", x - target, tang)
        step = g / R
        t = t - step
        if np.max(np.abs(step)) < 1e-15:
            break
    return t


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split each triangle in four; boundary midpoints are moved onto the curve."""
    t = mesh.triangles
    nv = mesh.n_vertices
    nb = mesh.n_boundary
    e = mesh.edges()
    ne = len(e)
    key = e[:, 0] * nv + e[:, 1]
    order = np.argsort(key)
    key_sorted = key[order]

    def edge_id(a, b):
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        return order[np.searchsorted(key_sorted, lo * nv + hi)]

    # boundary edges (i, i+1) keep the boundary-first ordering
    bid = edge_id(mesh.boundary_edges[:, 0], mesh.boundary_edges[:, 1])
    is_bedge = np.zeros(ne, dtype=bool)
    is_bedge[bid] = True
    old_v = mesh.vertices
    # new vertex numbering: boundary old/new interleaved, then interior old, then interior mids
    new_index_old = np.empty(nv, dtype=np.int64)
    new_index_old[:nb] = 2 * np.arange(nb)
    new_index_old[nb:] = 2 * nb + np.arange(nv - nb)
    new_index_mid = np.empty(ne, dtype=np.int64)
    new_index_mid[bid] = 2 * np.arange(nb) + 1
    inner_e = np.nonzero(~is_bedge)[0]
    new_index_mid[inner_e] = 2 * nb + (nv - nb) + np.arange(len(inner_e))

    mids = 0.5 * (old_v[e[:, 0]] + old_v[e[:, 1]])
    th0 = mesh.boundary_theta
    th1 = np.roll(th0, -1)
    th1 = np.where(th1 < th0, th1 + 2 * np.pi, th1)
    th_mid = _project_theta(mesh.domain, mids[bid], 0.5 * (th0 + th1))
    mids[bid] = mesh.domain.point(th_mid)

    n_new = nv + ne
    verts = np.empty((n_new, 2))
    verts[new_index_old] = old_v
    verts[new_index_mid] = mids
    theta = np.empty(2 * nb)
    theta[0::2] = th0
    theta[1::2] = np.mod(th_mid, 2 * np.pi)

    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    ab = new_index_mid[edge_id(a, b)]
    bc = new_index_mid[edge_id(b, c)]
    ca = new_index_mid[edge_id(c, a)]
    A, B, C = new_index_old[a], new_index_old[b], new_index_old[c]
    tri = np.concatenate(
        [
            np.column_stack([A, ab, ca]),
            np.column_stack([ab, B, bc]),
            np.column_stack([ca, bc, C]),
            np.column_stack([ab, bc, ca]),
        ]
    )
    return _finalize(mesh.domain, verts, tri, theta, mesh.h_target / 2.0)


def mesh_quality(mesh: Mesh) -> dict:
    L = mesh.edge_lengths()
    return {
        "n_vertices": mesh.n_vertices,
        "n_triangles": len(mesh.triangles),
        "min_angle_deg": mesh.min_angle(),
        "min_area": float(mesh.areas().min()),
        "edge_min": float(L.min()),
        "edge_max": float(L.max()),
    }
