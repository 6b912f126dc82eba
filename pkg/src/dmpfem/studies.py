"""Parameter sweeps and reproductions: G_k inverse signs, the nearly degenerate
patch, the hierarchical-basis limit and the Green's function comparison."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
import math
from typing import Callable, Sequence

import numpy as np

from .assembly import assemble, element_gradients, stiffness_laplace
from .generators import (
    DEGENERATE_NAMES,
    DegenerateSpec,
    degenerate_patch,
    embed_degenerate,
    gk_patch,
    three_line_mesh,
)
from .linalg import SingularMatrixError, invert, sign_test
from .solvers import DiscreteSolution, greens_column

BRACKET_TOL = 1e-4
ALPHA_MIN = 2.36e-4
FIG10_ALPHA = 0.05
FIG10_N = 8


@dataclass(frozen=True)
class SweepRecord:
    series: str
    parameter: float
    min_entry: float
    row: int
    col: int
    certified: bool

    def as_row(self) -> list:
        return [self.series, self.parameter, self.min_entry, self.row, self.col, self.certified]


SWEEP_COLUMNS = ["series", "parameter", "min_entry", "row", "col", "certified"]


@dataclass(frozen=True)
class SignChange:
    series: str
    lo: float
    hi: float
    min_lo: float
    min_hi: float


def _min_inverse_entry(K: np.ndarray) -> tuple[float, int, int, bool]:
    X = invert(K).inverse
    rep = sign_test(X, "positive")
    return rep.worst, rep.argworst[0], rep.argworst[1], rep.holds


def gk_min_entry(k: int, theta: float) -> tuple[float, int, int, bool]:
    """Smallest entry of the inverse interior stiffness block of G_k(theta)."""
    s = assemble(gk_patch(k, theta))
    Kaa, _ = s.blocks()
    return _min_inverse_entry(Kaa)


def bisect_sign_change(f: Callable[[float], float], lo: float, hi: float,
                       tol: float = BRACKET_TOL) -> tuple[float, float]:
    """Shrink [lo, hi] with f(lo) and f(hi) of opposite signs to width tol."""
    flo, fhi = f(lo), f(hi)
    if (flo > 0) == (fhi > 0):
        raise ValueError("no sign change in bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return lo, hi


def sweep_gk(k_list: Sequence[int], theta_grid: Sequence[float],
             tol: float = BRACKET_TOL) -> tuple[list[SweepRecord], list[SignChange]]:
    """Min inverse entry of G_k(theta) per (k, theta) plus refined sign changes."""
    grid = sorted(float(t) for t in theta_grid)
    if any(not 0 < t <= math.pi / 2 for t in grid):
        raise ValueError("theta grid must lie in (0, pi/2]")
    records: list[SweepRecord] = []
    changes: list[SignChange] = []
    for k in k_list:
        series = f"G{k}"
        vals = []
        for t in grid:
            try:
                m, r, c, ok = gk_min_entry(k, t)
            except SingularMatrixError:
                continue
            records.append(SweepRecord(series, t, m, r, c, ok))
            vals.append((t, m))
        for (t0, m0), (t1, m1) in zip(vals, vals[1:]):
            if (m0 > 0) != (m1 > 0):
                lo, hi = bisect_sign_change(lambda th: gk_min_entry(k, th)[0], t0, t1, tol)
                changes.append(SignChange(series, lo, hi, gk_min_entry(k, lo)[0], gk_min_entry(k, hi)[0]))
    return records, changes


def default_alpha_grid(n: int = 50) -> np.ndarray:
    """n log-spaced points in (ALPHA_MIN, pi/6]."""
    return np.geomspace(ALPHA_MIN, math.pi / 6, n + 1)[1:]


def patch_stiffness(alpha: float, n: int = FIG10_N) -> np.ndarray:
    """6x6 interior stiffness block S(alpha) of patch E, order B, C, A, M, N, P."""
    sub = degenerate_patch(alpha, n)
    return stiffness_laplace(sub.mesh)[:6, :6]


def sweep_degenerate(alpha_grid: Sequence[float] | None = None) -> list[SweepRecord]:
    grid = default_alpha_grid() if alpha_grid is None else sorted(float(a) for a in alpha_grid)
    out = []
    for a in grid:
        S = patch_stiffness(a)
        m, r, c, ok = _min_inverse_entry(S)
        out.append(SweepRecord("S", a, m, r, c, ok))
    return out


# --------------------------------------------------------- appendix matrices

def _F(rows) -> np.ndarray:
    return np.array([[Fraction(x) for x in row] for row in rows], dtype=object)


def _to_float(M) -> np.ndarray:
    return np.array([[float(x) for x in row] for row in M])


LIMIT_A = _F([[4, -1, -1], [-1, 4, 0], [-1, 0, 4]])
LIMIT_B = _F([[Fraction(1, 2), 0, 0], [Fraction(1, 2), 0, 0], [Fraction(-1, 2), 0, 0]])
LIMIT_C0 = _F([[Fraction(3, 2), -1, -1], [-1, Fraction(5, 4), Fraction(1, 4)], [-1, Fraction(1, 4), Fraction(5, 4)]])
LIMIT_R0 = _F([[Fraction(1, 2), Fraction(3, 4), Fraction(1, 4)],
               [Fraction(1, 2), Fraction(1, 4), Fraction(3, 4)],
               [0, 0, 0]])


def _exact_inverse(M) -> np.ndarray:
    """Gauss-Jordan on Fractions."""
    n = len(M)
    aug = [list(M[i]) + [Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    for col in range(n):
        piv = next(r for r in range(col, n) if aug[r][col] != 0)
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [x / p for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return np.array([row[n:] for row in aug], dtype=object)


def exact_limit_matrices() -> dict[str, np.ndarray]:
    """Exact rational limit blocks: A^-1, C0^-1, A^-1 R0, R0^T A^-1 R0, D0 and T0."""
    Ainv = _exact_inverse(LIMIT_A)
    C0inv = _exact_inverse(LIMIT_C0)
    AinvR0 = Ainv.dot(LIMIT_R0)
    R0tAinvR0 = LIMIT_R0.T.dot(AinvR0)
    D0 = -LIMIT_B.dot(C0inv)
    T0 = np.block([[Ainv, AinvR0], [AinvR0.T, R0tAinvR0]])
    return {"A_inv": Ainv, "C0_inv": C0inv, "A_inv_R0": AinvR0, "R0t_A_inv_R0": R0tAinvR0,
            "D0": D0, "T0": T0}


def limit_T0() -> np.ndarray:
    return _to_float(exact_limit_matrices()["T0"])


@dataclass
class AppendixBundle:
    alpha: float
    S: np.ndarray
    S_tilde: np.ndarray
    E: np.ndarray
    R: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    schur: np.ndarray
    C0: np.ndarray
    R0: np.ndarray
    D0: np.ndarray
    T0: np.ndarray
    S_inv: np.ndarray
    checks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"alpha": self.alpha, "order": list(DEGENERATE_NAMES), "checks": self.checks}
        for name in ("S", "S_tilde", "E", "R", "A", "B", "C", "D", "schur", "C0", "R0", "D0", "T0", "S_inv"):
            out[name] = getattr(self, name).tolist()
        return out


def _locate(verts: np.ndarray, tris: np.ndarray, p: np.ndarray) -> int:
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]

    def cross(u, v):
        return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

    d1 = cross(b - a, p - a)
    d2 = cross(c - b, p - b)
    d3 = cross(a - c, p - c)
    inside = (d1 >= -1e-14) & (d2 >= -1e-14) & (d3 >= -1e-14)
    return int(np.flatnonzero(inside)[0])


def _barycentric(tri_pts: np.ndarray, p: np.ndarray) -> np.ndarray:
    T = np.column_stack([tri_pts[1] - tri_pts[0], tri_pts[2] - tri_pts[0]])
    l12 = np.linalg.solve(T, p - tri_pts[0])
    return np.array([1 - l12.sum(), l12[0], l12[1]])


def hierarchical_stiffness(alpha: float, n: int = FIG10_N) -> tuple[np.ndarray, np.ndarray]:
    """S_tilde and R built from the coarse three-line mesh and fine hat gradients.

    Coarse hats of B, C, A are the hats of the unrefined mesh; the fine hats of
    M, N, P are those of the refined mesh.  Returns (S_tilde, R) with
    R[i, m] = coarse hat i evaluated at fine vertex m.
    """
    fine = embed_degenerate(DegenerateSpec(alpha, "OneLayerInside", n))
    coarse = three_line_mesh(n)
    big = [fine.find_label(x) for x in "BCA"]
    small = [fine.find_label(x) for x in "MNP"]
    Ac = stiffness_laplace(coarse)
    Ablk = Ac[np.ix_(big, big)]
    gc = element_gradients(coarse)
    gf = element_gradients(fine)
    Bblk = np.zeros((3, 3))
    Cblk = np.zeros((3, 3))
    small_pos = {v: q for q, v in enumerate(small)}
    for t, tri in enumerate(fine.triangles):
        present = [(q, small_pos[v]) for q, v in enumerate(tri) if v in small_pos]
        if not present:
            continue
        ct = _locate(coarse.vertices, coarse.triangles, fine.vertices[tri].mean(axis=0))
        ctri = list(coarse.triangles[ct])
        area = fine.areas[t]
        for i, v in enumerate(big):
            if v not in ctri:
                continue
            g_coarse = gc[ct, ctri.index(v)]
            for q, m in present:
                Bblk[i, m] += area * g_coarse @ gf[t, q]
        for q1, m1 in present:
            for q2, m2 in present:
                Cblk[m1, m2] += area * gf[t, q1] @ gf[t, q2]
    host = _locate(coarse.vertices, coarse.triangles,
                   coarse.vertices[big].mean(axis=0))
    host_tri = list(coarse.triangles[host])
    R = np.zeros((3, 3))
    for m, v in enumerate(small):
        lam = _barycentric(coarse.vertices[host_tri], fine.vertices[v])
        for i, b in enumerate(big):
            R[i, m] = lam[host_tri.index(b)] if b in host_tri else 0.0
    S_tilde = np.block([[Ablk, Bblk], [Bblk.T, Cblk]])
    return S_tilde, R


def appendix_matrices(alpha: float, n: int = FIG10_N) -> AppendixBundle:
    """Direct patch stiffness, hierarchical path, Schur inversion and the limit T0."""
    S = patch_stiffness(alpha, n)
    S_tilde, R = hierarchical_stiffness(alpha, n)
    E = np.block([[np.eye(3), -R], [np.zeros((3, 3)), np.eye(3)]])
    A, B, C = S_tilde[:3, :3], S_tilde[:3, 3:], S_tilde[3:, 3:]
    Cinv = invert(C).inverse
    schur = A - B @ Cinv @ B.T
    D = -B @ Cinv
    Sh_inv = invert(schur).inverse
    St_inv = np.block([[Sh_inv, Sh_inv @ D], [D.T @ Sh_inv, Cinv + D.T @ Sh_inv @ D]])
    Einv = np.block([[np.eye(3), R], [np.zeros((3, 3)), np.eye(3)]])
    S_inv_block = Einv.T @ St_inv @ Einv
    S_inv = invert(S).inverse
    exact = exact_limit_matrices()
    T0 = _to_float(exact["T0"])
    C0 = _to_float(LIMIT_C0)
    recon = E @ S_tilde @ E.T
    sv = np.linalg.svd(T0, compute_uv=False)
    checks = {
        "dual_path_rel_err": float(np.abs(recon - S).max() / np.abs(S).max()),
        "S_symmetric": bool(np.allclose(S, S.T, rtol=0, atol=1e-14 * np.abs(S).max())),
        "S_tilde_symmetric": bool(np.allclose(S_tilde, S_tilde.T, rtol=0, atol=1e-14 * np.abs(S_tilde).max())),
        "block_inverse_rel_err": float(np.abs(S_inv_block - S_inv).max() / np.abs(S_inv).max()),
        "alphaC_minus_C0": float(np.abs(alpha * C - C0).max()),
        "R_minus_R0": float(np.abs(R - _to_float(LIMIT_R0)).max()),
        "S_inv_minus_T0": float(np.abs(S_inv - T0).max()),
        "S_inv_min": float(S_inv.min()),
        "T0_min": float(T0.min()),
        "T0_sv_ratio": float(sv[-1] / sv[0]),
        "T0_rank": int(np.linalg.matrix_rank(T0)),
    }
    return AppendixBundle(alpha, S, S_tilde, E, R, A, B, C, D, schur, C0, _to_float(LIMIT_R0),
                          _to_float(exact["D0"]), T0, S_inv, checks)


def limit_rate(alphas: Sequence[float]) -> tuple[float, list[tuple[float, float]]]:
    """Least-squares log-log slope of |S^-1(alpha) - T0|_max against alpha."""
    T0 = limit_T0()
    pts = []
    for a in alphas:
        d = float(np.abs(invert(patch_stiffness(a)).inverse - T0).max())
        pts.append((float(a), d))
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    slope = float(np.polyfit(x, y, 1)[0])
    return slope, pts


# ------------------------------------------------------------ Green's functions

@dataclass
class GreenComparison:
    alpha: float
    n: int
    source: str
    inside: DiscreteSolution
    boundary: DiscreteSolution
    inside_min_interior: float
    boundary_value_at_N: float
    boundary_min_interior: float
    inside_positive: bool
    boundary_negative_at_N: bool
    meshes: tuple = ()

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "n": self.n, "source": self.source,
                "one_layer_inside": {"min_interior": self.inside_min_interior,
                                     "all_interior_positive": self.inside_positive},
                "at_boundary": {"value_at_N": self.boundary_value_at_N,
                                "min_interior": self.boundary_min_interior,
                                "negative_at_N": self.boundary_negative_at_N}}


def reproduce_green_comparison(alpha: float = FIG10_ALPHA, n: int = FIG10_N, source: str = "P",
                               tol: float = 1e-12) -> GreenComparison:
    """Green's function of the labelled source for both embeddings."""
    sols, meshes = [], []
    for placement in ("OneLayerInside", "AtBoundary"):
        mesh = embed_degenerate(DegenerateSpec(alpha, placement, n))
        system = assemble(mesh)
        sols.append(greens_column(system, mesh.find_label(source)))
        meshes.append(mesh)
    inside, bnd = sols
    a_in = meshes[0].partition.interior
    a_bd = meshes[1].partition.interior
    gmin_in = float(inside.u[a_in].min())
    g_n = float(bnd.u[meshes[1].find_label("N")])
    return GreenComparison(alpha, n, source, inside, bnd, gmin_in, g_n, float(bnd.u[a_bd].min()),
                           gmin_in > tol, g_n < -tol, tuple(meshes))
