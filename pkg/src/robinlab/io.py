"""Bit-stable serialization: 17 significant digits, sorted keys, no timestamps."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .geometry import ConvexDomain, build_domain
from .mesh import Mesh
from .solver import Solution


def fmt(x: Any) -> str:
    """CSV cell text: floats at 17 significant digits, booleans lower case."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def clean(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars unwrapped, tuples listed, non-finite floats as strings."""
    if isinstance(obj, Mapping):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(clean(obj), sort_keys=True, indent=2) + "\n"


def config_hash(config: Mapping) -> str:
    return hashlib.sha256(json.dumps(clean(config), sort_keys=True).encode()).hexdigest()[:16]


def write_json(path: Path | str, obj: Mapping, meta: Mapping) -> Path:
    path = Path(path)
    path.write_text(dumps({"meta": dict(meta)} | dict(obj)))
    return path


def write_csv(path: Path | str, columns: Sequence[str], rows: Iterable[Mapping], meta: Mapping) -> Path:
    """Header row, '\\n' terminators; every row carries the meta columns."""
    path = Path(path)
    mcols = sorted(meta)
    lines = [",".join(list(columns) + mcols)]
    for r in rows:
        lines.append(",".join([fmt(r.get(c)) for c in columns] + [fmt(meta[c]) for c in mcols]))
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------------------
# domain, mesh, solution


def domain_to_dict(domain: ConvexDomain) -> dict:
    return {
        "name": domain.name,
        "coeffs": {
            "a0": float(domain.a0),
            "cos": [float(c) for c in domain.cos_coeffs],
            "sin": [float(c) for c in domain.sin_coeffs],
        },
    }


def save_domain(path: Path | str, domain: ConvexDomain) -> Path:
    path = Path(path)
    path.write_text(dumps(domain_to_dict(domain)))
    return path


def load_domain(source: Path | str) -> ConvexDomain:
    """Domain from a JSON file, or from inline JSON text starting with '{'."""
    text = str(source)
    spec = json.loads(text) if text.lstrip().startswith("{") else json.loads(Path(text).read_text())
    return build_domain(spec)


def write_mesh(path: Path | str, mesh: Mesh) -> Path:
    """Plain text: counts, then vertices (x y), triangles (i j k), boundary edges (i j)."""
    path = Path(path)
    out = [f"{mesh.n_vertices} {len(mesh.triangles)} {len(mesh.boundary_edges)} {fmt(mesh.h_target)}"]
    out += [f"{fmt(x)} {fmt(y)}" for x, y in mesh.vertices]
    out += [" ".join(str(int(i)) for i in t) for t in mesh.triangles]
    out += [" ".join(str(int(i)) for i in e) for e in mesh.boundary_edges]
    path.write_text("\n".join(out) + "\n")
    return path


def read_mesh_arrays(path: Path | str) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    lines = Path(path).read_text().splitlines()
    nv, nt, ne, h = lines[0].split()
    nv, nt, ne = int(nv), int(nt), int(ne)
    v = np.array([[float(a) for a in ln.split()] for ln in lines[1:1 + nv]])
    t = np.array([[int(a) for a in ln.split()] for ln in lines[1 + nv:1 + nv + nt]], dtype=int)
    e = np.array([[int(a) for a in ln.split()] for ln in lines[1 + nv + nt:1 + nv + nt + ne]], dtype=int)
    return v, t, e, float(h)


def write_solution(prefix: Path | str, sol: Solution, meta: Mapping, extra: Mapping | None = None) -> tuple[Path, Path]:
    """Nodal CSV (vertex_id, x, y, value, boundary) plus a JSON sidecar with the solve metadata."""
    prefix = Path(prefix)
    mesh = sol.mesh
    cols = ["vertex_id", "x", "y", "value", "boundary"]
    rows = (
        {"vertex_id": i, "x": x, "y": y, "value": u, "boundary": bool(b)}
        for i, ((x, y), u, b) in enumerate(zip(mesh.vertices, sol.field, mesh.is_boundary))
    )
    csv = write_csv(prefix.with_suffix(".csv"), cols, rows, meta)
    side = {
        "problem": sol.problem,
        "beta": sol.beta,
        "eigenvalues": list(sol.eigenvalues),
        "residuals": list(sol.residuals),
        "iterations": sol.iterations,
        "mesh_h": float(mesh.h_target),
        "n_vertices": mesh.n_vertices,
        "n_triangles": len(mesh.triangles),
        "domain": domain_to_dict(mesh.domain),
    } | dict(extra or {})
    js = write_json(prefix.with_suffix(".json"), side, meta)
    return csv, js
