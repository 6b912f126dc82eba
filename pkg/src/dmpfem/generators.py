"""Structured mesh families: three-line squares, rhombus meshes, G_k defect
patches, defect-embedded rhombi and nearly degenerate triangles.

Grid numbering is lexicographic: the vertex at grid position (i, j) has index
``j * (n + 1) + i`` before any trimming, so with 1-based labels the corner
``(n, 0)`` is P_{n+1} and ``(0, n)`` is P_{n(n+1)+1}.  Trimming removes vertices
and renumbers the remaining ones in the same order; grid labels "i,j" are kept
in ``Mesh.labels``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .mesh import Mesh, MeshError, Subdomain, extract_subdomain, remove_triangles, star

Cut = Literal["S", "L"]


@dataclass(frozen=True)
class RhombusSpec:
    """Rhombus D(theta) split into n x n elemental rhombi.

    ``layout="corner"``: one corner at the origin, sides along (1, 0) and
    (cos theta, sin theta).  ``layout="centered"``: centred at the origin with the
    long diagonal on the x-axis and acute angle theta.  ``None`` picks
    "corner" for theta >= pi/2 and "centered" otherwise.

    ``cuts`` is an n x n array of "S"/"L" (short/long diagonal) indexed [i][j];
    ``None`` means all short.
    """

    theta: float
    n: int
    cuts: tuple[tuple[str, ...], ...] | None = None
    trim_corners: bool = False
    layout: Literal["corner", "centered"] | None = None

    def __post_init__(self):
        if not 0 < self.theta < math.pi:
            raise MeshError("theta must lie in (0, pi)")
        if self.n < 1:
            raise MeshError("n must be >= 1")
        layout = self.layout or ("corner" if self.theta >= math.pi / 2 else "centered")
        if layout == "centered" and self.theta > math.pi / 2:
            raise MeshError("centered layout needs theta <= pi/2 (acute angle on the x-axis)")
        object.__setattr__(self, "layout", layout)
        if self.cuts is not None:
            cuts = tuple(tuple(str(c) for c in row) for row in self.cuts)
            if len(cuts) != self.n or any(len(r) != self.n for r in cuts):
                raise MeshError("cuts must be an n x n array")
            if any(c not in ("S", "L") for r in cuts for c in r):
                raise MeshError("cuts entries must be 'S' or 'L'")
            object.__setattr__(self, "cuts", cuts)

    def cut(self, i: int, j: int) -> str:
        return "S" if self.cuts is None else self.cuts[i][j]


@dataclass(frozen=True)
class DefectPlacement:
    """A G_k block whose (k+2) x (k+2) cell footprint starts at cell ``anchor``."""

    block_k: int
    anchor: tuple[int, int]
    scale: int = 1

    def __post_init__(self):
        if self.block_k < 1:
            raise MeshError("block order must be >= 1")
        if self.scale != 1:
            raise MeshError("only unit-scale blocks are supported on a uniform grid")

    @property
    def size(self) -> int:
        return self.block_k + 2

    def footprint(self) -> set[tuple[int, int]]:
        i0, j0 = self.anchor
        return {(i0 + a, j0 + b) for a in range(self.size) for b in range(self.size)}

    def core(self) -> set[tuple[int, int]]:
        i0, j0 = self.anchor
        return {(i0 + 1 + a, j0 + 1 + b) for a in range(self.block_k) for b in range(self.block_k)}


@dataclass(frozen=True, eq=False)
class DefectMesh:
    mesh: Mesh
    blocks: tuple[Subdomain, ...]
    stars: tuple[Subdomain, ...]
    defect_edges: tuple[tuple[int, int], ...]

    @property
    def patches(self) -> tuple[Subdomain, ...]:
        return self.blocks + self.stars


def _grid_index(n: int, i: int, j: int) -> int:
    return j * (n + 1) + i


def three_line_mesh(n: int) -> Mesh:
    """Unit square, n x n cells, each split by its diagonal parallel to y = x."""
    if n < 1:
        raise MeshError("n must be >= 1")
    return rhombus_mesh(RhombusSpec(math.pi / 2, n, layout="corner"))


def _rhombus_grid(spec: RhombusSpec) -> tuple[np.ndarray, list[str]]:
    n, th = spec.n, spec.theta
    if spec.layout == "corner":
        a = np.array([1.0, 0.0])
        b = np.array([math.cos(th), math.sin(th)])
        origin = np.zeros(2)
        if abs(th - math.pi / 2) < 1e-15:
            b = np.array([0.0, 1.0])
    else:
        a = np.array([math.cos(th / 2), -math.sin(th / 2)])
        b = np.array([math.cos(th / 2), math.sin(th / 2)])
        origin = -(a + b) / 2
    verts = np.empty(((n + 1) ** 2, 2))
    labels = []
    for j in range(n + 1):
        for i in range(n + 1):
            verts[_grid_index(n, i, j)] = origin + (i * a + j * b) / n
            labels.append(f"{i},{j}")
    return verts, labels


def _main_diagonal_is_short(spec: RhombusSpec) -> bool:
    # the (i,j)-(i+1,j+1) diagonal is opposite the cell angle theta at (i,j)
    if abs(spec.theta - math.pi / 2) < 1e-15:
        return spec.layout == "corner"
    return spec.theta > math.pi / 2


def rhombus_mesh(spec: RhombusSpec) -> Mesh:
    """Triangulated rhombus; trimming removes the triangles at single-triangle corners."""
    n = spec.n
    verts, labels = _rhombus_grid(spec)
    main_short = _main_diagonal_is_short(spec)
    tris = []
    for j in range(n):
        for i in range(n):
            p00 = _grid_index(n, i, j)
            p10 = _grid_index(n, i + 1, j)
            p11 = _grid_index(n, i + 1, j + 1)
            p01 = _grid_index(n, i, j + 1)
            use_main = (spec.cut(i, j) == "S") == main_short
            if use_main:
                tris += [(p00, p10, p11), (p00, p11, p01)]
            else:
                tris += [(p00, p10, p01), (p10, p11, p01)]
    mesh = Mesh(verts, np.array(tris), tuple(labels))
    if spec.trim_corners:
        corners = [_grid_index(n, 0, 0), _grid_index(n, n, 0), _grid_index(n, 0, n), _grid_index(n, n, n)]
        drop = [mesh.vertex_triangles[c][0] for c in corners if len(mesh.vertex_triangles[c]) == 1]
        if len(drop) >= len(tris):
            raise MeshError("trimming would remove every triangle")
        mesh, _ = remove_triangles(mesh, drop)
    return mesh


def _gk_cuts(k: int) -> tuple[tuple[str, ...], ...]:
    n = k + 2
    return tuple(tuple("L" if 1 <= i <= k and 1 <= j <= k else "S" for j in range(n)) for i in range(n))


def gk_patch(k: int, theta: float) -> Mesh:
    """G_k(theta): a k x k block of long-diagonal cells, a one-cell short-diagonal
    lining, and the two x-axis corner triangles removed."""
    if k < 1:
        raise MeshError("k must be >= 1")
    if not 0 < theta <= math.pi / 2:
        raise MeshError("theta must lie in (0, pi/2]")
    return rhombus_mesh(RhombusSpec(theta, k + 2, _gk_cuts(k), trim_corners=True, layout="centered"))


def _triangle_cells(mesh: Mesh) -> list[tuple[int, int]]:
    """Grid cell (lower-left grid corner) of each triangle of a labelled grid mesh."""
    grid = [tuple(map(int, name.split(","))) for name in mesh.labels]
    out = []
    for tri in mesh.triangles:
        ij = [grid[int(v)] for v in tri]
        out.append((min(p[0] for p in ij), min(p[1] for p in ij)))
    return out


def _check_separation(n: int, placements: Sequence[DefectPlacement]) -> None:
    for p in placements:
        fp = p.footprint()
        if any(not (0 <= i < n and 0 <= j < n) for i, j in fp):
            raise MeshError(f"block at {p.anchor} does not fit inside the {n}x{n} grid")
    for a in range(len(placements)):
        for b in range(a + 1, len(placements)):
            pa, pb = placements[a], placements[b]
            # at least one short-diagonal cell between the two long-diagonal cores
            if pa.core() & pb.footprint() or pb.core() & pa.footprint():
                raise MeshError(f"blocks {a} and {b} are not separated (anchors {pa.anchor}, {pb.anchor})")


def defect_mesh(spec: RhombusSpec, placements: Sequence[DefectPlacement]) -> DefectMesh:
    """Trimmed centred rhombus with embedded G_k blocks.

    Returns the mesh, one patch per block (the block footprint without its two
    x-axis corner triangles, i.e. a copy of G_k), the stars of every interior
    vertex not interior to a block, and the list of long-diagonal defect edges.
    """
    if spec.layout != "centered":
        raise MeshError("defect meshes use the centred layout (theta < pi/2)")
    n = spec.n
    _check_separation(n, placements)
    cuts = [["S"] * n for _ in range(n)]
    for p in placements:
        for i, j in p.core():
            cuts[i][j] = "L"
    full = RhombusSpec(spec.theta, n, tuple(tuple(r) for r in cuts), trim_corners=True, layout="centered")
    mesh = rhombus_mesh(full)
    lab = {mesh.labels[v]: v for v in range(mesh.n_vertices)}

    cell_of = _triangle_cells(mesh)
    blocks = []
    for idx, p in enumerate(placements):
        i0, j0 = p.anchor
        s = p.size
        fp = p.footprint()
        corners = {lab.get(f"{i0},{j0}"), lab.get(f"{i0 + s},{j0 + s}")} - {None}
        tids = [
            t for t, cell in enumerate(cell_of)
            if cell in fp and not corners & set(mesh.triangles[t].tolist())
        ]
        if len(tids) != 2 * s * s - 2:
            raise MeshError(f"block {idx} at {p.anchor} overlaps a trimmed domain corner")
        blocks.append(extract_subdomain(mesh, tids, name=f"K{idx + 1}:G{p.block_k}"))

    in_block = set()
    for b in blocks:
        in_block.update(b.interior_parent)
    stars = tuple(star(mesh, v) for v in mesh.partition.alpha if v not in in_block)

    defects = []
    for p in placements:
        for i, j in sorted(p.core()):
            a, b = lab[f"{i},{j}"], lab[f"{i + 1},{j + 1}"]
            defects.append((min(a, b), max(a, b)))
    return DefectMesh(mesh, tuple(blocks), stars, tuple(defects))


# Reference defect configurations.  Any placement meeting the separation
# requirement is valid; these are the defaults.
FIG5_THETA = math.pi / 3
FIG5_N = 10
FIG5_PLACEMENTS = (
    DefectPlacement(1, (2, 2)),
    DefectPlacement(1, (5, 2)),
    DefectPlacement(1, (2, 5)),
    DefectPlacement(1, (5, 5)),
)
FIG6_THETA = 2 * math.pi / 5
FIG6_N = 14
FIG6_PLACEMENTS = (
    DefectPlacement(2, (1, 1)),
    DefectPlacement(1, (8, 2)),
    DefectPlacement(1, (2, 8)),
    DefectPlacement(2, (8, 8)),
)


def fig5_mesh() -> DefectMesh:
    return defect_mesh(RhombusSpec(FIG5_THETA, FIG5_N, layout="centered"), FIG5_PLACEMENTS)


def fig6_mesh() -> DefectMesh:
    return defect_mesh(RhombusSpec(FIG6_THETA, FIG6_N, layout="centered"), FIG6_PLACEMENTS)


# --- nearly degenerate triangle -------------------------------------------

DEGENERATE_NAMES = ("B", "C", "A", "M", "N", "P")


def _degenerate_points(alpha: float) -> dict[str, np.ndarray]:
    if not 0 < alpha < math.pi / 4:
        raise MeshError("alpha must lie in (0, pi/4) for a non-degenerate refinement")
    t = math.tan(alpha)
    # right angle at B; the refined points sit just above the edge BC
    return {
        "B": np.array([0.0, 0.0]),
        "C": np.array([1.0, 0.0]),
        "A": np.array([0.0, 1.0]),
        "M": np.array([0.5, 0.0]),
        "N": np.array([0.25, t / 4]),
        "P": np.array([0.75, t / 4]),
    }


# triangles inside ABC, in reference labels
_DEGENERATE_TRIS = (
    ("B", "M", "N"),  # T1
    ("N", "M", "P"),  # T2
    ("M", "C", "P"),  # T3
    ("B", "N", "A"),  # T6
    ("N", "P", "A"),  # T7
    ("P", "C", "A"),  # T8
)


def degenerate_triangle_mesh(alpha: float) -> Mesh:
    """Right triangle B=(0,0), C=(1,0), A=(0,1) refined with M, N, P near BC."""
    pts = _degenerate_points(alpha)
    order = {name: i for i, name in enumerate(DEGENERATE_NAMES)}
    verts = np.array([pts[name] for name in DEGENERATE_NAMES])
    tris = np.array([[order[a] for a in tri] for tri in _DEGENERATE_TRIS])
    return Mesh(verts, tris, DEGENERATE_NAMES)


@dataclass(frozen=True)
class DegenerateSpec:
    alpha: float
    placement: Literal["Standalone", "AtBoundary", "OneLayerInside"] = "OneLayerInside"
    n: int = 8
    column: int | None = None

    def __post_init__(self):
        if self.placement not in ("Standalone", "AtBoundary", "OneLayerInside"):
            raise MeshError(f"unknown placement {self.placement!r}")
        if not 0 < self.alpha < math.pi / 4:
            raise MeshError("alpha must lie in (0, pi/4)")
        if self.placement != "Standalone":
            need = 4 if self.placement == "OneLayerInside" else 3
            if self.n < need:
                raise MeshError(f"n must be >= {need} for placement {self.placement}")
            col = self.target_column
            if not 1 <= col <= self.n - 2:
                raise MeshError("the refined cell must be separated from the left/right boundary")

    @property
    def target_column(self) -> int:
        return self.column if self.column is not None else self.n // 2 - 1


def embed_degenerate(spec: DegenerateSpec) -> Mesh:
    """Three-line mesh with one cell triangle replaced by the refined triangle.

    The refined triangle is the lower triangle of cell (c, r) with c the target
    column; its legs are axis-parallel with the right angle B at the lower
    right, and the refined edge BC is the bottom edge of the cell.  r = 0 puts
    BC on the domain boundary; r = 1 leaves one row of triangles below it.
    The split edge's opposite triangle (third vertex A') is bisected by A'M.
    """
    if spec.placement == "Standalone":
        return degenerate_triangle_mesh(spec.alpha)
    n = spec.n
    base = three_line_mesh(n)
    c = spec.target_column
    r = 0 if spec.placement == "AtBoundary" else 1
    gi = lambda i, j: _grid_index(n, i, j)  # noqa: E731
    B, C, A = gi(c + 1, r), gi(c, r), gi(c + 1, r + 1)
    vb, vc, va = base.vertices[B], base.vertices[C], base.vertices[A]
    ref = _degenerate_points(spec.alpha)

    def place(p):
        return vb + p[0] * (vc - vb) + p[1] * (va - vb)

    verts = np.vstack([base.vertices, [place(ref[x]) for x in "MNP"]])
    idx = {"B": B, "C": C, "A": A, "M": len(base.vertices), "N": len(base.vertices) + 1, "P": len(base.vertices) + 2}
    tris = [tuple(t) for t in base.triangles.tolist()]
    target = next(t for t in tris if set(t) == {B, C, A})
    tris.remove(target)
    tris += [tuple(idx[x] for x in tri) for tri in _DEGENERATE_TRIS]
    labels = ["" for _ in range(len(verts))]
    for name in DEGENERATE_NAMES:
        labels[idx[name]] = name
    if r == 1:
        below = next(t for t in tris if {B, C} <= set(t) and A not in t and len(set(t) & {idx["M"], idx["N"], idx["P"]}) == 0)
        tris.remove(below)
        a_prime = next(v for v in below if v not in (B, C))
        tris += [(B, idx["M"], a_prime), (idx["M"], C, a_prime)]
        labels[a_prime] = "A'"
    return Mesh(verts, np.array(tris), tuple(labels))


def degenerate_patch(alpha: float, n: int = 8) -> Subdomain:
    """Patch E: union of the supports of B, C, A, M, N, P in the one-layer-inside
    embedding; its interior vertices come first, in the order B, C, A, M, N, P."""
    mesh = embed_degenerate(DegenerateSpec(alpha, "OneLayerInside", n))
    ids = [mesh.find_label(x) for x in DEGENERATE_NAMES]
    tris = {t for v in ids for t in mesh.vertex_triangles[v]}
    sub = extract_subdomain(mesh, tris, leading=ids, name="E")
    if sub.mesh.partition.alpha != tuple(range(6)):
        raise MeshError("patch E does not have exactly B, C, A, M, N, P as interior vertices")
    return sub
