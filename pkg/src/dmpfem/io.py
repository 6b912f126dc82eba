"""JSON/CSV serialization of meshes, patches, matrices and nodal data.

Floats are written with ``repr``, the shortest string that round-trips
exactly, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .mesh import Mesh, Subdomain, extract_subdomain


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        x = float(x)
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ------------------------------------------------------------------ meshes

def mesh_to_dict(mesh: Mesh) -> dict:
    d = {"vertices": mesh.vertices.tolist(), "triangles": mesh.triangles.tolist()}
    if mesh.labels is not None:
        d["labels"] = list(mesh.labels)
    return d


def mesh_from_dict(d: dict) -> Mesh:
    try:
        verts, tris = d["vertices"], d["triangles"]
    except (KeyError, TypeError) as exc:
        raise ValueError("mesh JSON needs 'vertices' and 'triangles'") from exc
    labels = d.get("labels")
    return Mesh(np.asarray(verts, dtype=float), np.asarray(tris, dtype=np.int64),
                tuple(labels) if labels is not None else None)


def write_mesh(path, mesh: Mesh, extra: dict | None = None) -> Path:
    d = mesh_to_dict(mesh)
    if extra:
        d.update(extra)
    return write_json(path, d)


def read_mesh(path) -> Mesh:
    return mesh_from_dict(read_json(path))


def patches_to_dict(patches: Sequence[Subdomain]) -> dict:
    return {"patches": [{"name": p.name, "triangles": sorted(int(t) for t in p.triangle_ids),
                         "leading": [int(v) for v in p.vertex_map[:1]]} for p in patches]}


def patches_from_dict(mesh: Mesh, d: dict) -> list[Subdomain]:
    out = []
    for i, p in enumerate(d["patches"]):
        out.append(extract_subdomain(mesh, p["triangles"], leading=p.get("leading", ()),
                                     name=p.get("name", f"patch{i}")))
    return out


def read_patches(mesh: Mesh, path) -> list[Subdomain]:
    return patches_from_dict(mesh, read_json(path))


# ------------------------------------------------------------------ tables

def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_matrix_csv(path, M: np.ndarray) -> Path:
    M = np.asarray(M, dtype=float)
    return write_csv(path, [f"c{j}" for j in range(M.shape[1])], M.tolist())


def write_solution_csv(path, mesh: Mesh, u: np.ndarray) -> Path:
    rows = ((i, float(x), float(y), float(v)) for i, ((x, y), v) in enumerate(zip(mesh.vertices, u)))
    return write_csv(path, ["vertex", "x", "y", "u"], rows)


def read_vector(spec: str, n: int) -> np.ndarray:
    """A scalar literal, a JSON list file or a CSV file with a 'u' or 'value' column."""
    try:
        return np.full(n, float(spec))
    except ValueError:
        pass
    path = Path(spec)
    if not path.exists():
        raise ValueError(f"not a number or existing file: {spec!r}")
    if path.suffix == ".json":
        data = read_json(path)
        if isinstance(data, dict):
            data = data.get("values", data.get("u"))
        vec = np.asarray(data, dtype=float)
    else:
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        key = next((k for k in ("u", "value") if rows and k in rows[0]), None)
        if key is None:
            raise ValueError(f"CSV {spec!r} needs a 'u' or 'value' column")
        vec = np.asarray([float(r[key]) for r in rows])
    if vec.shape != (n,):
        raise ValueError(f"{spec!r} has {vec.size} values, expected {n}")
    return vec
