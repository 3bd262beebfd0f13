"""Empirical concavity thresholds in beta and continuity sweeps over K_t.

The predicate pipeline is mesh -> solve -> transform -> Hessian -> report.
``neg_log`` is checked on the Robin ground state, ``neg_sqrt`` on the Robin
torsion function. Nothing here assumes the passing set is an up-set in beta:
bisection is preceded by a coarse scan so that a pass below a fail is seen
and flagged.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .concavity import KINDS, ConcavityReport, analyze
from .geometry import ConvexDomain, _key, deformation_family
from .mesh import Mesh, triangulate
from .solver import FemSystem, assemble, solve_robin_eig, solve_robin_torsion

DEFAULT_RANGE = (0.1, 1e4)
TOL_FACTOR = 1.1
MESH_STABILITY_SLACK = 1.2
JITTER = 0.1

_MESH_CACHE: dict = {}


def mesh_and_system(domain: ConvexDomain, h: float, seed: Optional[int] = None) -> tuple[Mesh, FemSystem]:
    """Memoized mesh and assembly; a seed switches on lattice jitter."""
    key = _key(domain, (float(h), seed))
    if key not in _MESH_CACHE:
        if len(_MESH_CACHE) > 32:
            _MESH_CACHE.clear()
        jitter = JITTER if seed is not None else 0.0
        mesh = triangulate(domain, h, seed=seed, jitter=jitter)
        _MESH_CACHE[key] = (mesh, assemble(mesh))
    return _MESH_CACHE[key]


def _check_kind(kind: str) -> None:
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True)
class PredicateResult:
    beta: float
    kind: str
    passed: bool
    min_eig_global: float
    min_eig_tube: float
    sigma_tol: float
    lambda1: Optional[float]
    report: ConcavityReport = field(repr=False)

    def row(self) -> dict:
        return {
            "beta": self.beta,
            "lambda1": self.lambda1,
            "min_eig_global": self.min_eig_global,
            "min_eig_tube": self.min_eig_tube,
            "pass": self.passed,
        }


def concavity_predicate(
    domain: ConvexDomain,
    beta: float,
    kind: str,
    h: float,
    sigma_tol: Optional[float] = None,
    tube_width: Optional[float] = None,
    seed: Optional[int] = None,
) -> PredicateResult:
    """Pass iff the smallest Hessian eigenvalue of the transform is >= sigma_tol."""
    _check_kind(kind)
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    _, system = mesh_and_system(domain, h, seed)
    if kind == "neg_log":
        sol = solve_robin_eig(system, beta)
        lam = float(sol.eigenvalues[0])
    else:
        sol = solve_robin_torsion(system, beta)
        lam = None
    rep, _ = analyze(sol, kind, tube_width, sigma_tol)
    return PredicateResult(
        beta=float(beta),
        kind=kind,
        passed=rep.passed,
        min_eig_global=rep.min_eig_global,
        min_eig_tube=rep.min_eig_tube,
        sigma_tol=rep.sigma_tol,
        lambda1=lam,
        report=rep,
    )


def _pmap(fn: Callable, items: Sequence, workers: int) -> list:
    """Map preserving input order; a pool only when workers > 1."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


class _Pred:
    # picklable closure for the worker pool
    def __init__(self, domain, kind, h, sigma_tol, tube_width, seed):
        self.args = (domain, kind, h, sigma_tol, tube_width, seed)

    def __call__(self, beta):
        d, k, h, s, t, seed = self.args
        return concavity_predicate(d, beta, k, h, s, t, seed)


# ---------------------------------------------------------------------------
# bisection


@dataclass
class ThresholdResult:
    kind: str
    bracket: tuple[float, float]
    trace: list[PredicateResult]
    mesh_h: float
    sigma_tol: Optional[float]
    outcome: str  # bracketed | all_pass | all_fail
    beta_range: tuple[float, float]
    tol_factor: float
    non_monotone: bool = False
    witnesses: Optional[tuple[float, float]] = None  # (passing beta, larger failing beta)
    mesh_sensitive: Optional[bool] = None
    domain_name: str = ""

    @property
    def beta_star(self) -> float:
        """Geometric midpoint of the bracket (nan unless bracketed)."""
        lo, hi = self.bracket
        return math.sqrt(lo * hi) if self.outcome == "bracketed" else float("nan")

    def check_invariant(self) -> bool:
        """Bracket endpoints carry the verdicts they claim in the trace."""
        verdict = {p.beta: p.passed for p in self.trace}
        lo, hi = self.bracket
        if self.outcome == "all_pass":
            return lo == 0.0 and verdict.get(hi) is True
        if self.outcome == "all_fail":
            return verdict.get(lo) is False
        return verdict.get(lo) is False and verdict.get(hi) is True and hi / lo <= self.tol_factor

    def to_dict(self) -> dict:
        return {
            "domain": self.domain_name,
            "kind": self.kind,
            "outcome": self.outcome,
            "bracket": list(self.bracket),
            "beta_star": self.beta_star,
            "non_monotone": self.non_monotone,
            "witnesses": list(self.witnesses) if self.witnesses else None,
            "mesh_sensitive": self.mesh_sensitive,
            "mesh_h": self.mesh_h,
            "sigma_tol": self.sigma_tol,
            "beta_range": list(self.beta_range),
            "tol_factor": self.tol_factor,
            "trace": [p.row() | {"sigma_tol": p.sigma_tol} for p in sorted(self.trace, key=lambda p: p.beta)],
        }


def _scan_grid(lo: float, hi: float) -> list[float]:
    n = max(2, int(math.ceil(math.log10(hi / lo))) + 1)
    return [float(b) for b in np.geomspace(lo, hi, n)]


def _non_monotone_witness(trace: Sequence[PredicateResult]) -> Optional[tuple[float, float]]:
    pts = sorted(trace, key=lambda p: p.beta)
    for i, p in enumerate(pts):
        if p.passed:
            for q in pts[i + 1:]:
                if not q.passed:
                    return (p.beta, q.beta)
    return None


def bisect_threshold(
    domain: ConvexDomain,
    kind: str,
    beta_range: tuple[float, float] = DEFAULT_RANGE,
    tol_factor: float = TOL_FACTOR,
    h: float = 0.04,
    sigma_tol: Optional[float] = None,
    tube_width: Optional[float] = None,
    seed: Optional[int] = None,
    workers: int = 1,
) -> ThresholdResult:
    """Geometric bisection in beta for the concavity predicate.

    A one-point-per-decade scan runs first (in parallel when ``workers > 1``).
    The bracket refined is the one between the largest failing scan point
    and the smallest pass above it.
    """
    _check_kind(kind)
    lo, hi = (float(b) for b in beta_range)
    if not (lo > 0 and hi > lo):
        raise ValueError(f"beta_range must satisfy 0 < beta_min < beta_max, got {beta_range}")
    if hi / lo < 4.0:
        raise ValueError(f"beta_range must span a factor >= 4, got {hi / lo:.4g}")
    if not tol_factor > 1.0:
        raise ValueError(f"tol_factor must exceed 1, got {tol_factor}")

    pred = _Pred(domain, kind, h, sigma_tol, tube_width, seed)
    trace = _pmap(pred, _scan_grid(lo, hi), workers)
    base = dict(kind=kind, trace=trace, mesh_h=float(h), sigma_tol=sigma_tol,
                beta_range=(lo, hi), tol_factor=float(tol_factor), domain_name=domain.name)
    witness = _non_monotone_witness(trace)

    if all(p.passed for p in trace):
        return ThresholdResult(bracket=(0.0, lo), outcome="all_pass", **base)
    if not trace[-1].passed:
        return ThresholdResult(bracket=(hi, math.inf), outcome="all_fail",
                               non_monotone=witness is not None, witnesses=witness, **base)

    last_fail = max(i for i, p in enumerate(trace) if not p.passed)
    b_lo, b_hi = trace[last_fail].beta, trace[last_fail + 1].beta
    while b_hi / b_lo > tol_factor:
        mid = math.sqrt(b_lo * b_hi)
        p = pred(mid)
        trace.append(p)
        if p.passed:
            b_hi = mid
        else:
            b_lo = mid
    witness = _non_monotone_witness(trace)
    return ThresholdResult(bracket=(b_lo, b_hi), outcome="bracketed",
                           non_monotone=witness is not None, witnesses=witness, **base)


def brackets_agree(a: ThresholdResult, b: ThresholdResult, slack: float = MESH_STABILITY_SLACK) -> bool:
    """Overlap, or geometric distance between the brackets within ``slack``."""
    if a.outcome != b.outcome:
        return False
    if a.outcome != "bracketed":
        return True
    (alo, ahi), (blo, bhi) = a.bracket, b.bracket
    if alo <= bhi and blo <= ahi:
        return True
    gap = max(blo / ahi, alo / bhi)
    return gap <= slack


def mesh_stability(
    domain: ConvexDomain,
    kind: str,
    h: float,
    **kwargs,
) -> tuple[ThresholdResult, ThresholdResult]:
    """Thresholds at ``h`` and ``h/2``; both flagged when they disagree."""
    coarse = bisect_threshold(domain, kind, h=h, **kwargs)
    fine = bisect_threshold(domain, kind, h=h / 2.0, **kwargs)
    sensitive = not brackets_agree(coarse, fine)
    coarse.mesh_sensitive = fine.mesh_sensitive = sensitive
    return coarse, fine


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    domain_name: str
    beta: float
    kind: str
    t_grid: tuple[float, ...]
    reports: list[ConcavityReport]
    mesh_h: float

    @property
    def uniform_pass(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def failing_t(self) -> list[float]:
        return [t for t, r in zip(self.t_grid, self.reports) if not r.passed]

    def to_dict(self) -> dict:
        return {
            "domain": self.domain_name,
            "beta": self.beta,
            "kind": self.kind,
            "mesh_h": self.mesh_h,
            "uniform_pass": self.uniform_pass,
            "failing_t": self.failing_t,
            "members": [{"t": t} | r.to_dict() for t, r in zip(self.t_grid, self.reports)],
        }


class _Member:
    def __init__(self, beta, kind, h, sigma_tol, tube_width, seed):
        self.args = (beta, kind, h, sigma_tol, tube_width, seed)

    def __call__(self, dom):
        beta, kind, h, s, t, seed = self.args
        return concavity_predicate(dom, beta, kind, h, s, t, seed).report


def continuity_sweep(
    domain: ConvexDomain,
    beta: float,
    kind: str,
    n_t: int = 11,
    h: float = 0.04,
    sigma_tol: Optional[float] = None,
    tube_width: Optional[float] = None,
    seed: Optional[int] = None,
    workers: int = 1,
) -> SweepResult:
    """Predicate on every K_t of a uniform t grid containing 0 and 1.

    The t = 1 member is the target object itself, so its verdict matches a
    direct predicate call bit for bit.
    """
    if n_t < 5:
        raise ValueError(f"continuity sweep needs n_t >= 5, got {n_t}")
    fam = deformation_family(domain, n_t)
    members = [fam.member(t) for t in fam.t_grid]
    reports = _pmap(_Member(beta, kind, h, sigma_tol, tube_width, seed), members, workers)
    return SweepResult(domain.name, float(beta), kind, fam.t_grid, reports, float(h))


@dataclass(frozen=True)
class BetaTrace:
    kind: str
    mesh_h: float
    rows: list[PredicateResult]

    @property
    def crossings(self) -> int:
        """Sign changes of the verdict along increasing beta."""
        v = [r.passed for r in self.rows]
        return sum(a != b for a, b in zip(v, v[1:]))

    def table(self) -> list[dict]:
        return [r.row() for r in self.rows]


def beta_sweep(
    domain: ConvexDomain,
    kind: str,
    beta_list: Sequence[float],
    h: float = 0.04,
    sigma_tol: Optional[float] = None,
    tube_width: Optional[float] = None,
    seed: Optional[int] = None,
    workers: int = 1,
) -> BetaTrace:
    """Predicate over a list of beta, sorted ascending, with lambda_1 filled in."""
    _check_kind(kind)
    betas = sorted(float(b) for b in beta_list)
    rows = _pmap(_Pred(domain, kind, h, sigma_tol, tube_width, seed), betas, workers)
    if kind == "neg_sqrt":
        _, system = mesh_and_system(domain, h, seed)
        rows = [
            PredicateResult(**{**_fields(r), "lambda1": float(solve_robin_eig(system, r.beta).eigenvalues[0])})
            for r in rows
        ]
    return BetaTrace(kind, float(h), rows)


def _fields(r: PredicateResult) -> dict:
    return {k: getattr(r, k) for k in r.__dataclass_fields__}
