"""Closed-form disk solutions used as independent references."""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq
from scipy.special import j0, j1, jn_zeros, jnp_zeros, jvp

J01 = float(jn_zeros(0, 1)[0])
J11 = float(jn_zeros(1, 1)[0])
J11P = float(jnp_zeros(1, 1)[0])
# first Dirichlet eigenvalue of the unit disk
LAMBDA_D_UNIT_DISK = J01**2


def dirichlet_eig_disk(R: float = 1.0, k: int = 1) -> float:
    if k == 1:
        return (J01 / R) ** 2
    if k == 2:
        return (J11 / R) ** 2
    raise ValueError("only k in {1, 2} is tabulated")


def robin_eig_disk(beta: float, R: float = 1.0, k: int = 1) -> float:
    """Robin eigenvalue of the disk from the Bessel boundary relation.

    k = 1: radial mode, root of ``-s J1(sR) + beta J0(sR) = 0`` on (0, j01/R).
    k = 2: first angular mode, root of ``s J1'(sR) + beta J1(sR) = 0`` on
    (j'11/R, j11/R).
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if k == 1:
        f = lambda s: -s * j1(s * R) + beta * j0(s * R)
        lo, hi = 1e-14 / R, J01 / R
    elif k == 2:
        f = lambda s: s * jvp(1, s * R) + beta * j1(s * R)
        lo, hi = J11P / R, J11 / R
    else:
        raise ValueError("only k in {1, 2} is tabulated")
    s = brentq(f, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    return s * s


def robin_ground_state_disk(beta: float, R: float = 1.0):
    """L2-normalized radial Robin ground state ``r -> c J0(s r)``."""
    s = np.sqrt(robin_eig_disk(beta, R))
    # int_0^R J0(s r)^2 r dr = R^2/2 (J0(sR)^2 + J1(sR)^2)
    norm2 = 2 * np.pi * 0.5 * R**2 * (j0(s * R) ** 2 + j1(s * R) ** 2)
    c = 1.0 / np.sqrt(norm2)
    return lambda r: c * j0(s * np.asarray(r))


def dirichlet_ground_state_disk(R: float = 1.0):
    s = J01 / R
    c = 1.0 / (np.sqrt(np.pi) * R * abs(j1(J01)))
    return lambda r: c * j0(s * np.asarray(r))


def dirichlet_ground_state_boundary_gradient(R: float = 1.0) -> float:
    """|grad u^D| on the boundary of the disk for the L2-normalized ground state."""
    return J01 / (np.sqrt(np.pi) * R**2)


def robin_torsion_disk(beta: float, R: float = 1.0):
    """``u = (R^2 - r^2)/4 + R/(2 beta)`` solves -Lap u = 1, du/dn + beta u = 0."""
    return lambda r: (R**2 - np.asarray(r) ** 2) / 4.0 + R / (2.0 * beta)


def dirichlet_torsion_disk(R: float = 1.0):
    return lambda r: (R**2 - np.asarray(r) ** 2) / 4.0
