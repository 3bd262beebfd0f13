"""Uniformly convex planar domains encoded by a trigonometric support function.

A domain is stored through the Fourier coefficients of its support function

    h(theta) = a0 + sum_k (a_k cos(k theta) + b_k sin(k theta)),

so that the radius of curvature at outward normal angle ``theta`` is
``h + h''`` and Minkowski addition is coefficient-wise addition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linprog, minimize, minimize_scalar

GRID_SIZE = 4096
THETA_TOL = 1e-10
_ELLIPSE_SAMPLES = 1024


class DomainError(ValueError):
    """Raised when a domain specification violates uniform convexity."""


def _theta_grid(n: int = GRID_SIZE) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n) / n


@dataclass(frozen=True)
class ConvexDomain:
    """Uniformly convex domain given by its support-function coefficients.

    Parameters
    ----------
    a0 : float
        Mean of the support function (perimeter / 2 pi).
    cos_coeffs, sin_coeffs : ndarray, shape (K,)
        Coefficients of cos(k theta), sin(k theta) for k = 1..K.
    """

    a0: float
    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        c = np.array(self.cos_coeffs, dtype=float).ravel()
        s = np.array(self.sin_coeffs, dtype=float).ravel()
        k = max(c.size, s.size)
        c = np.pad(c, (0, k - c.size))
        s = np.pad(s, (0, k - s.size))
        c.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "a0", float(self.a0))
        object.__setattr__(self, "cos_coeffs", c)
        object.__setattr__(self, "sin_coeffs", s)

    @property
    def max_order(self) -> int:
        return int(self.cos_coeffs.size)

    @property
    def support_coeffs(self) -> tuple[float, np.ndarray, np.ndarray]:
        return self.a0, self.cos_coeffs, self.sin_coeffs

    def support(self, theta, deriv: int = 0) -> np.ndarray:
        """Evaluate the ``deriv``-th derivative of h at ``theta``."""
        theta = np.asarray(theta, dtype=float)
        out = np.full(theta.shape, self.a0 if deriv == 0 else 0.0)
        if self.max_order == 0:
            return out
        k = np.arange(1, self.max_order + 1, dtype=float)
        arg = np.multiply.outer(theta, k)
        # d^j/dtheta^j cos(k theta) = k^j cos(k theta + j pi/2)
        shift = deriv * np.pi / 2.0
        kj = k**deriv
        out = out + np.cos(arg + shift) @ (kj * self.cos_coeffs)
        out = out + np.sin(arg + shift) @ (kj * self.sin_coeffs)
        return out

    def radius_of_curvature(self, theta, deriv: int = 0) -> np.ndarray:
        """``(h + h'')^{(deriv)}`` at the given normal angles."""
        return self.support(theta, deriv) + self.support(theta, deriv + 2)

    def curvature(self, theta) -> np.ndarray:
        return 1.0 / self.radius_of_curvature(theta)

    def point(self, theta) -> np.ndarray:
        """Boundary point with outward normal angle ``theta``; shape (..., 2)."""
        theta = np.asarray(theta, dtype=float)
        h = self.support(theta)
        dh = self.support(theta, 1)
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([h * c - dh * s, h * s + dh * c], axis=-1)

    def perimeter(self) -> float:
        return 2.0 * np.pi * self.a0

    def arc_length(self, theta) -> np.ndarray:
        """Arc length from normal angle 0 to ``theta`` (integral of h + h'')."""
        theta = np.asarray(theta, dtype=float)
        out = self.a0 * theta
        if self.max_order == 0:
            return out
        k = np.arange(1, self.max_order + 1, dtype=float)
        arg = np.multiply.outer(theta, k)
        w = (1.0 - k**2) / k
        out = out + np.sin(arg) @ (w * self.cos_coeffs)
        out = out - (np.cos(arg) - 1.0) @ (w * self.sin_coeffs)
        return out

    def theta_at_arc_length(self, s) -> np.ndarray:
        """Invert :meth:`arc_length` by Newton iteration."""
        s = np.asarray(s, dtype=float)
        grid = np.linspace(0.0, 2.0 * np.pi, GRID_SIZE + 1)
        theta = np.interp(s, self.arc_length(grid), grid)
        for _ in range(50):
            step = (self.arc_length(theta) - s) / self.radius_of_curvature(theta)
            theta = theta - step
            if np.max(np.abs(step), initial=0.0) < 1e-15:
                break
        return theta

    def scaled(self, factor: float) -> "ConvexDomain":
        """Dilation ``factor * Omega`` about the origin."""
        return ConvexDomain(
            factor * self.a0,
            factor * self.cos_coeffs,
            factor * self.sin_coeffs,
            name=f"{factor:g}*{self.name}",
        )

    def boundary_distance(self, points, n_dir: int = 1024) -> np.ndarray:
        """Distance to the boundary for points inside the domain.

        Uses ``dist(p) = min_theta (h(theta) - <p, n(theta)>)``, valid for
        interior points of a convex body; grid minimum refined by Newton steps.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        th = _theta_grid(n_dir)
        h = self.support(th)
        nrm = np.stack([np.cos(th), np.sin(th)])
        out = np.empty(len(pts))
        chunk = 4096
        for i in range(0, len(pts), chunk):
            p = pts[i : i + chunk]
            f = h[None, :] - p @ nrm
            j = np.argmin(f, axis=1)
            t = th[j]
            for _ in range(3):
                c, s = np.cos(t), np.sin(t)
                g1 = self.support(t, 1) - (-p[:, 0] * s + p[:, 1] * c)
                g2 = self.support(t, 2) + (p[:, 0] * c + p[:, 1] * s)
                t = t - g1 / np.where(g2 > 0, g2, 1.0)
            val = self.support(t) - (p[:, 0] * np.cos(t) + p[:, 1] * np.sin(t))
            out[i : i + chunk] = np.minimum(val, f[np.arange(len(p)), j])
        return out

    def contains(self, points, margin: float = 0.0) -> np.ndarray:
        return self.boundary_distance(points) > margin

    def min_radius_of_curvature(self, n: int = GRID_SIZE) -> tuple[float, float]:
        """Grid minimum of h + h'' and its location."""
        th = _theta_grid(n)
        r = self.radius_of_curvature(th)
        i = int(np.argmin(r))
        return float(r[i]), float(th[i])


def _check_convex(dom: ConvexDomain) -> None:
    rmin, tmin = dom.min_radius_of_curvature()
    if not rmin > 0.0:
        raise DomainError(
            f"support function is not uniformly convex: h + h'' = {rmin:.6g} "
            f"at theta = {tmin:.6f}"
        )
    hmin = float(np.min(dom.support(_theta_grid())))
    if not hmin > 0.0:
        raise DomainError(f"origin not interior: min h = {hmin:.6g}")


def from_coeffs(
    a0: float,
    cos: Sequence[float] = (),
    sin: Sequence[float] = (),
    name: str = "custom",
    recenter: bool = True,
) -> ConvexDomain:
    """Build a validated domain from raw coefficients.

    The Steiner point of the body is ``(a_1, b_1)``; recentering drops the
    first harmonic so the Steiner point sits at the origin.
    """
    cos = np.array(cos, dtype=float)
    sin = np.array(sin, dtype=float)
    if recenter:
        if cos.size:
            cos[0] = 0.0
        if sin.size:
            sin[0] = 0.0
    dom = ConvexDomain(a0, cos, sin, name=name)
    _check_convex(dom)
    return dom


def disk(R: float = 1.0) -> ConvexDomain:
    if not R > 0:
        raise DomainError(f"disk radius must be positive, got R={R}")
    return from_coeffs(R, name=f"disk({R:g})")


def ellipse(a: float, b: float) -> ConvexDomain:
    """Ellipse with semi-axes ``a`` (x) and ``b`` (y).

    ``h = sqrt(a^2 cos^2 + b^2 sin^2)`` is analytic, so its Fourier series is
    truncated once coefficients fall below roundoff.
    """
    if not (a > 0 and b > 0):
        raise DomainError(f"ellipse semi-axes must be positive, got a={a}, b={b}")
    n = _ELLIPSE_SAMPLES
    th = _theta_grid(n)
    h = np.sqrt((a * np.cos(th)) ** 2 + (b * np.sin(th)) ** 2)
    c = np.fft.rfft(h) / n
    a0 = c[0].real
    cos_c = 2.0 * c[1:].real
    sin_c = -2.0 * c[1:].imag
    big = np.nonzero(np.abs(cos_c) + np.abs(sin_c) > 1e-15 * a0)[0]
    K = int(big[-1]) + 1 if big.size else 0
    if K > n // 2 - 8:
        raise DomainError(f"ellipse({a}, {b}) too eccentric for Fourier encoding")
    cos_c, sin_c = cos_c[:K], np.zeros(K)
    return from_coeffs(a0, cos_c, sin_c, name=f"ellipse({a:g},{b:g})")


def perturbed_disk(R: float, eps: float, k: int) -> ConvexDomain:
    """``h = R + eps cos(k theta)``; convex iff ``R > eps (k^2 - 1)``."""
    k = int(k)
    if k < 0:
        raise DomainError(f"harmonic order must be >= 0, got k={k}")
    cos = np.zeros(max(k, 1))
    a0 = R
    if k == 0:
        a0 = R + eps
    else:
        cos[k - 1] = eps
    return from_coeffs(a0, cos, recenter=k != 1, name=f"perturbed_disk({R:g},{eps:g},{k})")


PRESETS = {"disk": disk, "ellipse": ellipse, "perturbed_disk": perturbed_disk}


def build_domain(spec: Mapping) -> ConvexDomain:
    """Build a domain from ``{"preset": ..., "params": {...}}`` or ``{"coeffs": ...}``."""
    if "preset" in spec:
        name = spec["preset"]
        if name not in PRESETS:
            raise DomainError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
        return PRESETS[name](**dict(spec.get("params", {})))
    if "coeffs" in spec:
        c = spec["coeffs"]
        return from_coeffs(float(c["a0"]), c.get("cos", ()), c.get("sin", ()), name=spec.get("name", "custom"))
    raise DomainError("domain spec needs a 'preset' or 'coeffs' entry")


# ---------------------------------------------------------------------------
# descriptors


@dataclass(frozen=True)
class GeometrySummary:
    diameter: float
    inradius: float
    interior_sphere_radius: float
    kappa_min: float
    kappa_max: float
    delta_m: Mapping[int, float]
    incenter: tuple[float, float] = (0.0, 0.0)


def _extremum(f, n: int = GRID_SIZE, which: str = "max") -> float:
    th = _theta_grid(n)
    vals = np.asarray(f(th), dtype=float)
    sign = -1.0 if which == "max" else 1.0
    i = int(np.argmin(sign * vals))
    dt = th[1] - th[0]
    try:
        res = minimize_scalar(
            lambda t: sign * float(f(np.array([t]))[0]),
            bracket=(th[i] - dt, th[i], th[i] + dt),
            method="golden",
            tol=THETA_TOL,
        )
        polished = sign * float(res.fun)
    except ValueError:
        polished = vals[i]
    # polishing may only improve on the grid value
    return max(polished, vals[i]) if which == "max" else min(polished, vals[i])


def _series_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    out = np.zeros_like(a)
    for i in range(n):
        out[..., i:] += a[..., i : i + 1] * b[..., : n - i]
    return out


def _series_recip(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    out = np.zeros_like(a)
    out[..., 0] = 1.0 / a[..., 0]
    for k in range(1, n):
        acc = np.zeros(a.shape[:-1])
        for j in range(1, k + 1):
            acc += a[..., j] * out[..., k - j]
        out[..., k] = -acc / a[..., 0]
    return out


def _series_deriv(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    out = np.zeros_like(a)
    out[..., : n - 1] = a[..., 1:] * np.arange(1, n)
    return out


def local_graph_derivatives(domain: ConvexDomain, theta, order: int) -> np.ndarray:
    """Derivatives ``phi^(j)(0)``, j = 0..order, of the local boundary graph.

    At the boundary point with normal angle ``theta0`` the boundary is the
    graph ``eta = phi(xi)`` over the tangent line, ``eta`` pointing inward.
    With ``psi = theta - theta0`` one has ``phi' = tan(psi)`` and
    ``d/dxi = 1 / (R(theta) cos(psi)) d/dpsi``; the derivatives are obtained
    by exact truncated power-series arithmetic in ``psi``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    n = order + 1
    fact = np.cumprod(np.r_[1.0, np.arange(1, n)])
    R = np.stack([domain.radius_of_curvature(theta, j) / fact[j] for j in range(n)], axis=-1)
    j = np.arange(n)
    cos_s = np.where(j % 2 == 0, (-1.0) ** (j // 2), 0.0) / fact
    sin_s = np.where(j % 2 == 1, (-1.0) ** (j // 2), 0.0) / fact
    cos_s = np.broadcast_to(cos_s, R.shape).copy()
    sin_s = np.broadcast_to(sin_s, R.shape).copy()
    inv_speed = _series_recip(_series_mul(R, cos_s))
    f = _series_mul(sin_s, _series_recip(cos_s))  # tan(psi)
    out = np.zeros(theta.shape + (n,))
    if order >= 1:
        out[..., 1] = f[..., 0]
    for m in range(2, n):
        f = _series_mul(_series_deriv(f), inv_speed)
        out[..., m] = f[..., 0]
    return out


def delta_m(domain: ConvexDomain, orders: Sequence[int] = (2, 3, 4), n: int = GRID_SIZE) -> dict[int, float]:
    """Regularity gauge: sum over j <= m of the boundary maxima of |phi^(j)(0)|."""
    top = max(orders)
    th = _theta_grid(n)
    d = np.abs(local_graph_derivatives(domain, th, top)).max(axis=0)
    d[:2] = 0.0
    # second order term is kappa_max, polished like the curvature extrema
    if top >= 2:
        d[2] = max(d[2], _extremum(domain.curvature, which="max"))
    cum = np.cumsum(d)
    return {int(m): float(cum[m]) for m in orders}


def inradius(domain: ConvexDomain, n: int = GRID_SIZE) -> tuple[float, np.ndarray]:
    """Largest inscribed disk: maximize r s.t. <c, n_i> + r <= h(theta_i)."""
    th = _theta_grid(n)
    A = np.column_stack([np.cos(th), np.sin(th), np.ones(n)])
    res = linprog(
        c=[0.0, 0.0, -1.0],
        A_ub=A,
        b_ub=domain.support(th),
        bounds=[(None, None), (None, None), (0, None)],
        method="highs",
    )
    if not res.success:  # pragma: no cover - LP is always feasible for valid domains
        raise DomainError(f"inradius LP failed: {res.message}")
    # the LP optimum over sampled directions is an upper bound; polish the
    # center against the exact ball-inclusion radius
    dist = lambda c: -float(domain.boundary_distance(np.asarray(c)[None, :], n_dir=GRID_SIZE)[0])
    pol = minimize(dist, res.x[:2], method="Nelder-Mead",
                   options={"xatol": 1e-13, "fatol": 1e-15, "maxiter": 400})
    center = pol.x if pol.fun <= dist(res.x[:2]) else res.x[:2]
    return -dist(center), np.asarray(center)


_SUMMARY_CACHE: dict = {}


def _key(domain: ConvexDomain, extra=()) -> tuple:
    return (domain.a0, domain.cos_coeffs.tobytes(), domain.sin_coeffs.tobytes(), tuple(extra))


def geometry_summary(domain: ConvexDomain, orders: Sequence[int] = (2, 3, 4)) -> GeometrySummary:
    """Diameter, inradius, curvature extrema and regularity gauges (memoized)."""
    key = _key(domain, orders)
    if key not in _SUMMARY_CACHE:
        if len(_SUMMARY_CACHE) > 256:
            _SUMMARY_CACHE.clear()
        _SUMMARY_CACHE[key] = _geometry_summary(domain, orders)
    return _SUMMARY_CACHE[key]


def _geometry_summary(domain: ConvexDomain, orders: Sequence[int]) -> GeometrySummary:
    diameter = _extremum(lambda t: domain.support(t) + domain.support(t + np.pi), which="max")
    kmin = _extremum(domain.curvature, which="min")
    kmax = _extremum(domain.curvature, which="max")
    r, center = inradius(domain)
    rho = float(np.nextafter(1.0 / kmax, 0.0))
    return GeometrySummary(
        diameter=float(diameter),
        inradius=r,
        interior_sphere_radius=rho,
        kappa_min=float(kmin),
        kappa_max=float(kmax),
        delta_m=delta_m(domain, orders),
        incenter=(float(center[0]), float(center[1])),
    )


def boundary_sample(domain: ConvexDomain, n: int):
    """Points, outward normals and curvatures at ``n`` uniform normal angles."""
    if n < 16:
        raise ValueError(f"boundary_sample needs n >= 16, got n={n}")
    th = _theta_grid(n)
    normals = np.column_stack([np.cos(th), np.sin(th)])
    return domain.point(th), normals, domain.curvature(th)


# ---------------------------------------------------------------------------
# Minkowski deformation


@dataclass(frozen=True)
class DeformationFamily:
    """``K_t = (1 - t) B + t Omega`` with B the disk of radius 1/kappa_min(Omega)."""

    target: ConvexDomain
    ball_radius: float
    t_grid: tuple[float, ...]

    def member(self, t: float) -> ConvexDomain:
        return minkowski_interpolate(self, t)


def deformation_family(target: ConvexDomain, n_t: int = 11) -> DeformationFamily:
    kmin = _extremum(target.curvature, which="min")
    t_grid = tuple(float(t) for t in np.linspace(0.0, 1.0, n_t))
    return DeformationFamily(target, 1.0 / kmin, t_grid)


def minkowski_interpolate(family: DeformationFamily, t: float) -> ConvexDomain:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"deformation parameter must lie in [0, 1], got t={t}")
    tgt = family.target
    if t == 1.0:
        return tgt
    dom = ConvexDomain(
        (1.0 - t) * family.ball_radius + t * tgt.a0,
        t * tgt.cos_coeffs,
        t * tgt.sin_coeffs,
        name=f"K_{t:.4g}[{tgt.name}]",
    )
    # radius of curvature is the convex combination of two positive functions
    rmin, _ = dom.min_radius_of_curvature()
    floor = (1.0 - t) * family.ball_radius + t * tgt.min_radius_of_curvature()[0]
    assert rmin >= floor - 1e-12 and rmin > 0.0
    return dom
