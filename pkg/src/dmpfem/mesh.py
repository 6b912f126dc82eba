"""Triangular meshes, boundary classification, adjacency and discrete subdomains.

A :class:`Mesh` is immutable after construction.  Triangles are reoriented
counterclockwise on construction and validated (index range, distinct vertices,
positive area, no duplicate vertices, manifold edges).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

DUPLICATE_TOL = 1e-12
DEGENERATE_AREA_TOL = 1e-14


class MeshError(ValueError):
    """Structural problem with a mesh or a subdomain request."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """P1 triangulation of a polygonal domain.

    ``vertices`` is an (N, 2) float array, ``triangles`` an (T, 3) int array of
    vertex indices.  ``labels`` optionally names vertices (same length as
    ``vertices``, empty string for unnamed ones).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=float, copy=True)
        tris = np.array(self.triangles, dtype=np.int64, copy=True)
        if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) == 0:
            raise MeshError("vertices must be a nonempty (N, 2) array")
        if tris.ndim != 2 or tris.shape[1] != 3 or len(tris) == 0:
            raise MeshError("triangles must be a nonempty (T, 3) array")
        n = len(verts)
        if tris.min() < 0 or tris.max() >= n:
            raise MeshError("triangle vertex index out of range")
        if np.any((tris[:, 0] == tris[:, 1]) | (tris[:, 1] == tris[:, 2]) | (tris[:, 0] == tris[:, 2])):
            raise MeshError("triangle with repeated vertex index")
        if not np.all(np.isfinite(verts)):
            raise MeshError("non-finite vertex coordinates")

        diam = bbox_diameter(verts)
        if diam == 0.0:
            raise MeshError("all vertices coincide")
        pairs = cKDTree(verts).query_pairs(DUPLICATE_TOL * diam)
        if pairs:
            i, j = sorted(pairs)[0]
            raise MeshError(f"duplicate vertices {i} and {j}")

        area2 = _signed_area2(verts, tris)
        flip = area2 < 0
        tris[flip] = tris[flip][:, [0, 2, 1]]
        area2 = np.abs(area2)
        bad = np.flatnonzero(area2 / 2 <= DEGENERATE_AREA_TOL * diam**2)
        if len(bad):
            raise MeshError(f"degenerate triangle {int(bad[0])} (area {area2[bad[0]] / 2:.3e})")

        if self.labels is not None and len(self.labels) != n:
            raise MeshError("labels must match the vertex count")

        object.__setattr__(self, "vertices", _frozen(verts))
        object.__setattr__(self, "triangles", _frozen(tris))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
        # edge manifoldness is a construction invariant
        counts = self.edge_triangle_counts
        if counts.max() > 2:
            e = self.edges[int(np.argmax(counts))]
            raise MeshError(f"non-manifold edge ({e[0]}, {e[1]}) shared by {counts.max()} triangles")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def areas(self) -> np.ndarray:
        return _frozen(_signed_area2(self.vertices, self.triangles) / 2)

    @cached_property
    def _edge_data(self):
        t = self.triangles
        # local edge k is opposite local vertex k
        raw = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
        raw.sort(axis=1)
        edges, inverse, counts = np.unique(raw, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(3, -1).T  # (T, 3): edge id opposite each local vertex
        return _frozen(edges), _frozen(inverse), _frozen(counts)

    @property
    def edges(self) -> np.ndarray:
        """Sorted (E, 2) array of unique edges, each row (i, j) with i < j."""
        return self._edge_data[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """(T, 3) edge ids; column k is the edge opposite local vertex k."""
        return self._edge_data[1]

    @property
    def edge_triangle_counts(self) -> np.ndarray:
        return self._edge_data[2]

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {(int(i), int(j)): k for k, (i, j) in enumerate(self.edges)}

    def edge_id(self, i: int, j: int) -> int:
        return self.edge_index[(min(i, j), max(i, j))]

    @cached_property
    def edge_triangles(self) -> tuple[tuple[int, ...], ...]:
        """Incident triangle ids for each edge."""
        out: list[list[int]] = [[] for _ in range(len(self.edges))]
        for t, row in enumerate(self.triangle_edges):
            for e in row:
                out[e].append(t)
        return tuple(tuple(x) for x in out)

    @cached_property
    def vertex_triangles(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for t, row in enumerate(self.triangles):
            for v in row:
                out[v].append(t)
        return tuple(tuple(x) for x in out)

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        out: list[set[int]] = [set() for _ in range(self.n_vertices)]
        for i, j in self.edges:
            out[i].add(int(j))
            out[j].add(int(i))
        return tuple(tuple(sorted(s)) for s in out)

    @cached_property
    def angles(self) -> np.ndarray:
        """(T, 3) interior angles; column k is the angle at local vertex k."""
        p = self.vertices[self.triangles]
        out = np.empty(self.triangles.shape)
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
            out[:, k] = np.arctan2(np.abs(cross), np.einsum("ij,ij->i", u, v))
        return _frozen(out)

    @cached_property
    def h(self) -> float:
        """Mesh size: the maximum edge length."""
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.sqrt((d**2).sum(axis=1)).max())

    @cached_property
    def partition(self) -> "IndexPartition":
        return classify_boundary(self)

    def vertex_label(self, v: int) -> str:
        if self.labels and self.labels[v]:
            return self.labels[v]
        return str(v)

    def find_label(self, name: str) -> int:
        if self.labels is None or name not in self.labels:
            raise KeyError(f"no vertex labelled {name!r}")
        return self.labels.index(name)

    def scaled(self, s: float) -> "Mesh":
        return Mesh(self.vertices * s, self.triangles, self.labels)


@dataclass(frozen=True)
class IndexPartition:
    """Interior (``alpha``) and boundary (``beta``) vertex indices, both sorted."""

    alpha: tuple[int, ...]
    beta: tuple[int, ...]

    @property
    def interior(self) -> np.ndarray:
        return np.asarray(self.alpha, dtype=np.int64)

    @property
    def boundary(self) -> np.ndarray:
        return np.asarray(self.beta, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Subdomain:
    """A union of parent triangles, re-meshed with local numbering.

    ``vertex_map[local] == parent``.
    """

    mesh: Mesh
    triangle_ids: tuple[int, ...]
    vertex_map: np.ndarray
    name: str = ""
    parent_to_local: dict[int, int] = field(default_factory=dict, repr=False)

    def local(self, parent_vertex: int) -> int:
        return self.parent_to_local[parent_vertex]

    @property
    def interior_parent(self) -> tuple[int, ...]:
        """Parent indices of the vertices interior to this subdomain."""
        return tuple(int(self.vertex_map[i]) for i in self.mesh.partition.alpha)

    @property
    def boundary_parent(self) -> tuple[int, ...]:
        return tuple(int(self.vertex_map[i]) for i in self.mesh.partition.beta)


def bbox_diameter(verts: np.ndarray) -> float:
    return float(np.linalg.norm(verts.max(axis=0) - verts.min(axis=0)))


def _signed_area2(verts: np.ndarray, tris: np.ndarray) -> np.ndarray:
    p0, p1, p2 = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    return (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0])


def classify_boundary(mesh: Mesh) -> IndexPartition:
    """Boundary vertices are those on an edge with exactly one incident triangle."""
    counts = mesh.edge_triangle_counts
    if counts.max() > 2:
        raise MeshError("non-manifold edge")
    on_boundary = np.zeros(mesh.n_vertices, dtype=bool)
    on_boundary[mesh.edges[counts == 1].ravel()] = True
    beta = tuple(int(i) for i in np.flatnonzero(on_boundary))
    alpha = tuple(int(i) for i in np.flatnonzero(~on_boundary))
    return IndexPartition(alpha, beta)


def interior_graph_connected(mesh: Mesh, part: IndexPartition | None = None) -> bool:
    """Whether the graph of interior vertices (joined by mesh edges) is connected."""
    part = part or mesh.partition
    if not part.alpha:
        raise MeshError("mesh has no interior vertices")
    interior = set(part.alpha)
    start = part.alpha[0]
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in mesh.neighbors[v]:
            if w in interior and w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == len(interior)


def boundary_adjacent_to_interior(mesh: Mesh, part: IndexPartition | None = None) -> list[int]:
    """Boundary vertices with no interior neighbour (empty list: condition holds)."""
    part = part or mesh.partition
    interior = set(part.alpha)
    return [b for b in part.beta if not any(w in interior for w in mesh.neighbors[b])]


def extract_subdomain(
    mesh: Mesh, triangle_ids: Iterable[int], leading: Sequence[int] = (), name: str = ""
) -> Subdomain:
    """Sub-mesh made of the given parent triangles.

    Local vertices are numbered by increasing parent index, except that the
    parent vertices in ``leading`` (if any) come first, in the given order.
    """
    tids = sorted({int(t) for t in triangle_ids})
    if not tids:
        raise MeshError("empty triangle set")
    if tids[0] < 0 or tids[-1] >= mesh.n_triangles:
        raise MeshError("triangle id out of range")
    sub_tris = mesh.triangles[tids]
    used = np.unique(sub_tris)
    lead = [int(v) for v in leading]
    if not set(lead) <= set(used.tolist()):
        raise MeshError("leading vertices must belong to the subdomain")
    rest = [int(v) for v in used if int(v) not in set(lead)]
    vmap = np.array(lead + rest, dtype=np.int64)
    p2l = {int(p): i for i, p in enumerate(vmap)}
    local_tris = np.vectorize(p2l.__getitem__, otypes=[np.int64])(sub_tris)
    labels = tuple(mesh.labels[v] for v in vmap) if mesh.labels else None
    sub = Mesh(mesh.vertices[vmap], local_tris, labels)
    return Subdomain(sub, tuple(tids), _frozen(vmap), name, p2l)


def star(mesh: Mesh, vertex: int) -> Subdomain:
    """Union of the triangles containing an interior vertex."""
    if vertex in set(mesh.partition.beta):
        raise MeshError(f"vertex {vertex} is a boundary vertex")
    return extract_subdomain(mesh, mesh.vertex_triangles[vertex], leading=[vertex], name=f"star({vertex})")


def ring(mesh: Mesh, vertex: int, k: int) -> Subdomain:
    """k-ring patch: the star for k=1, then repeatedly the union of stars of all its vertices."""
    if k < 1:
        raise MeshError("ring order must be >= 1")
    verts = {vertex}
    tris: set[int] = set()
    for _ in range(k):
        tris = {t for v in verts for t in mesh.vertex_triangles[v]}
        verts = {int(v) for t in tris for v in mesh.triangles[t]}
    return extract_subdomain(mesh, tris, leading=[vertex], name=f"ring{k}({vertex})")


def covers_interior(mesh: Mesh, patches: Sequence[Subdomain]) -> list[int]:
    """Interior vertices of ``mesh`` not interior to any patch."""
    covered: set[int] = set()
    for p in patches:
        covered.update(p.interior_parent)
    return [v for v in mesh.partition.alpha if v not in covered]


def remove_triangles(mesh: Mesh, triangle_ids: Iterable[int]) -> tuple[Mesh, np.ndarray]:
    """Drop triangles and any vertices left unused; returns (mesh, old index of each new vertex)."""
    drop = set(int(t) for t in triangle_ids)
    keep = [t for t in range(mesh.n_triangles) if t not in drop]
    sub = extract_subdomain(mesh, keep)
    return sub.mesh, sub.vertex_map


def interior_edges(mesh: Mesh) -> np.ndarray:
    """Edge ids shared by two triangles."""
    return np.flatnonzero(mesh.edge_triangle_counts == 2)
