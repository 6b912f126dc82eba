"""Matrix criteria for discrete maximum principles and their patch-wise globalization.

Modes:

* ``sDMP-A``  A_aa^{-1} > 0 and A_aa^{-1} A_ab < 0 (reaction free).
* ``sDMP-B``  the same with A replaced by A + C.
* ``wDMP-A``  per patch: A_aa^{-1} > 0 and A_ab <= 0, globalized over a cover.

A cover certifies the whole domain when the interior graph is connected,
every boundary vertex touches an interior vertex, every interior vertex is
interior to some patch and every patch passes its matrix test.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .assembly import AssembledSystem, assemble, mass_matrix, stiffness_laplace
from .linalg import DEFAULT_TOL_REL, SingularMatrixError, invert, sign_test
from .mesh import (
    Mesh,
    Subdomain,
    boundary_adjacent_to_interior,
    covers_interior,
    extract_subdomain,
    interior_edges,
    interior_graph_connected,
    remove_triangles,
    ring,
    star,
)

MODES = ("sDMP-A", "sDMP-B", "wDMP-A")
_MODE_ALIASES = {"sdmp-a": "sDMP-A", "sdmp-b": "sDMP-B", "wdmp-a": "wDMP-A"}
ANGLE_TOL = 1e-10
AUTO_COVER_CAP = 3
CLOSED_FORM_C_A = 1.0 / 48


def normalize_mode(mode: str) -> str:
    m = _MODE_ALIASES.get(mode.lower(), mode)
    if m not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    return m


@dataclass
class PatchReport:
    patch_id: int
    name: str
    interior: tuple[int, ...]
    criterion: str
    holds: bool
    checks: dict = field(default_factory=dict)
    reason: str = ""


@dataclass
class Certificate:
    mode: str
    holds: bool
    global_preconditions: dict = field(default_factory=dict)
    patch_reports: list[PatchReport] = field(default_factory=list)
    defect_edges: list[tuple[int, int]] = field(default_factory=list)
    parameters: dict = field(default_factory=dict)
    reasons: list[str] = field(default_factory=list)

    @property
    def status(self) -> str:
        # a failed wDMP-A certificate is not a disproof
        if self.holds:
            return "certified"
        return "not-certified" if self.mode == "wDMP-A" else "fails"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["status"] = self.status
        return _jsonable(d)

    def summary(self) -> str:
        lines = [f"{self.mode}: {self.status}"]
        for k, v in self.global_preconditions.items():
            lines.append(f"  {k}: {v}")
        if self.patch_reports:
            bad = [p for p in self.patch_reports if not p.holds]
            lines.append(f"  patches: {len(self.patch_reports)} checked, {len(bad)} failing")
            for p in bad[:10]:
                lines.append(f"    patch {p.patch_id} {p.name}: {p.reason}")
        for k, v in self.parameters.items():
            lines.append(f"  {k} = {v}")
        for r in self.reasons:
            lines.append(f"  reason: {r}")
        return "\n".join(lines)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# ---------------------------------------------------------------- angle audit

@dataclass(frozen=True)
class AngleAudit:
    defects: list[tuple[int, int]]
    borderline: list[tuple[int, int]]
    angle_sums: dict[tuple[int, int], float]


def angle_condition_audit(mesh: Mesh, tol: float = ANGLE_TOL) -> AngleAudit:
    """Interior edges whose two opposite angles sum to at least pi - tol.

    ``borderline`` holds the edges within tol of pi (stiffness entry ~ 0);
    those edges are also in ``defects``.
    """
    sums = {}
    defects, border = [], []
    ang = mesh.angles
    for eid in interior_edges(mesh):
        i, j = (int(v) for v in mesh.edges[eid])
        total = 0.0
        for t in mesh.edge_triangles[eid]:
            tri = list(mesh.triangles[t])
            k = next(q for q in range(3) if tri[q] not in (i, j))
            total += ang[t, k]
        sums[(i, j)] = total
        if total >= math.pi - tol:
            defects.append((i, j))
            if total <= math.pi + tol:
                border.append((i, j))
    return AngleAudit(defects, border, sums)


# ---------------------------------------------------------- matrix criteria

def _strong_checks(Kaa: np.ndarray, Kab: np.ndarray, tol_rel: float) -> tuple[bool, dict]:
    inv = invert(Kaa)
    X = inv.inverse
    r1 = sign_test(X, "positive", tol_rel)
    Y = X @ Kab
    scale = max(float(np.abs(Kaa).max()), float(np.abs(Kab).max()) if Kab.size else 0.0)
    tau = tol_rel * scale
    # a column g <= 0 with some negative entry gives A^{-1} g < 0 once A^{-1} > 0
    if Kab.size and r1.holds:
        shortcut = np.all(Kab <= tau, axis=0) & np.any(Kab < -tau, axis=0)
    else:
        shortcut = np.zeros(Kab.shape[1], dtype=bool)
    rest = ~shortcut
    direct_ok = True
    if rest.any():
        direct = sign_test(Y[:, rest], "negative", tol_rel, scale=float(np.abs(Y).max()))
        direct_ok = direct.holds
    yreport = sign_test(Y, "negative", tol_rel)
    second = bool(direct_ok)
    path = "shortcut" if not rest.any() else ("direct" if not shortcut.any() else "mixed")
    checks = {
        "inverse_positive": r1.to_dict(),
        "boundary_coupling_negative": {
            "holds": second,
            "path": path,
            "worst": yreport.worst,
            "argworst": list(yreport.argworst),
            "shortcut_columns": int(shortcut.sum()),
            "direct_columns": int(rest.sum()),
        },
        "inverse_residual": inv.residual,
    }
    return bool(r1.holds and second), checks


def _weak_checks(Kaa: np.ndarray, Kab: np.ndarray, Mab: np.ndarray, tol_rel: float) -> tuple[bool, str, dict]:
    inv = invert(Kaa)
    X = inv.inverse
    r1 = sign_test(X, "positive", tol_rel)
    scale = float(np.abs(Kaa).max())
    r2 = sign_test(Kab, "nonpositive", tol_rel, scale=scale)
    checks = {"inverse_positive": r1.to_dict(), "boundary_block_nonpositive": r2.to_dict(),
              "inverse_residual": inv.residual}
    coupled = bool(np.all(np.any(Mab > 0, axis=0))) if Mab.size else True
    checks["boundary_mass_coupled"] = coupled
    if r1.holds and r2.holds:
        return coupled, "relaxed", checks
    # perturbation fallback: A^{-1} A_ab <= 0 keeps the first-order epsilon term negative
    Y = X @ Kab
    r3 = sign_test(Y, "nonpositive", tol_rel)
    checks["coupling_nonpositive"] = r3.to_dict()
    return bool(r1.holds and r3.holds and coupled), "perturbation", checks


def _require_interior(system: AssembledSystem):
    if len(system.partition.alpha) == 0:
        raise ValueError("system has no interior vertices")


def _global_preconditions(mesh: Mesh) -> dict:
    part = mesh.partition
    return {
        "interior_connected": bool(interior_graph_connected(mesh, part)),
        "boundary_detached": boundary_adjacent_to_interior(mesh, part),
    }


def _direct_certificate(system: AssembledSystem, mode: str, tol_rel: float) -> Certificate:
    _require_interior(system)
    Kaa, Kab = system.blocks()
    cert = Certificate(mode, False, _global_preconditions(system.mesh),
                       parameters={"c_tilde": system.c_tilde, "tol_rel": tol_rel})
    try:
        ok, checks = _strong_checks(Kaa, Kab, tol_rel)
    except SingularMatrixError as exc:
        cert.reasons.append(f"singular interior block: {exc}")
        return cert
    rep = PatchReport(0, "domain", tuple(system.partition.alpha), mode, ok, checks)
    if not ok:
        rep.reason = _failure_reason(checks)
        cert.reasons.append(rep.reason)
    cert.patch_reports.append(rep)
    cert.holds = ok
    return cert


def _failure_reason(checks: dict) -> str:
    parts = []
    if not checks.get("inverse_positive", {}).get("verdict", "") in ("StrictlyPositive",):
        parts.append("inverse not strictly positive")
    bc = checks.get("boundary_coupling_negative")
    if bc is not None and not bc["holds"]:
        parts.append("boundary coupling not strictly negative")
    if "boundary_block_nonpositive" in checks and not checks["boundary_block_nonpositive"]["verdict"] == "Nonpositive":
        parts.append("positive interior-boundary entry")
    if "coupling_nonpositive" in checks and checks["coupling_nonpositive"]["verdict"] != "Nonpositive":
        parts.append("A_aa^-1 A_ab has positive entries")
    if checks.get("boundary_mass_coupled") is False:
        parts.append("patch boundary vertex without interior neighbour")
    return "; ".join(parts) or "criterion failed"


def check_sdmp_a(system: AssembledSystem, tol_rel: float = DEFAULT_TOL_REL) -> Certificate:
    """Full-domain sDMP-A criterion (necessary and sufficient)."""
    if system.c_tilde != 0:
        raise ValueError("sDMP-A requires c_tilde = 0")
    return _direct_certificate(system, "sDMP-A", tol_rel)


def check_sdmp_b(system: AssembledSystem, tol_rel: float = DEFAULT_TOL_REL) -> Certificate:
    """Full-domain sDMP-B criterion on A + C."""
    if system.c_tilde < 0:
        raise ValueError("sDMP-B requires c_tilde >= 0")
    return _direct_certificate(system, "sDMP-B", tol_rel)


def check_wdmp_a(system: AssembledSystem, patches: Sequence[Subdomain],
                 tol_rel: float = DEFAULT_TOL_REL) -> Certificate:
    if system.c_tilde != 0:
        raise ValueError("wDMP-A requires c_tilde = 0")
    return certify_cover(system.mesh, patches, "wDMP-A", 0.0, tol_rel)


def check_patch(sub: Subdomain, mode: str, c_tilde: float = 0.0,
                tol_rel: float = DEFAULT_TOL_REL, patch_id: int = 0) -> PatchReport:
    mode = normalize_mode(mode)
    m = sub.mesh
    part = m.partition
    a, b = part.interior, part.boundary
    rep = PatchReport(patch_id, sub.name, tuple(int(v) for v in sub.interior_parent), mode, False)
    if len(a) == 0:
        rep.reason = "patch has no interior vertex"
        return rep
    A = stiffness_laplace(m)
    ct = c_tilde if mode == "sDMP-B" else 0.0
    M = mass_matrix(m)
    K = A + ct * M if ct else A
    Kaa, Kab = K[np.ix_(a, a)], K[np.ix_(a, b)]
    try:
        if mode == "wDMP-A":
            ok, crit, checks = _weak_checks(Kaa, Kab, M[np.ix_(a, b)], tol_rel)
            rep.criterion = f"wDMP-A/{crit}"
        else:
            ok, checks = _strong_checks(Kaa, Kab, tol_rel)
    except SingularMatrixError as exc:
        rep.reason = f"singular patch block: {exc}"
        return rep
    rep.holds, rep.checks = ok, checks
    if not ok:
        rep.reason = _failure_reason(checks)
    return rep


def _trim_detached(mesh: Mesh) -> tuple[Mesh, np.ndarray, list[int]]:
    """Drop triangles holding boundary vertices with no interior neighbour.

    Such vertices never enter an interior equation, so the interior solution
    is unchanged.  Returns the trimmed mesh, the old-index map and the list of
    detached vertices (parent numbering).
    """
    detached_all: list[int] = []
    old = np.arange(mesh.n_vertices)
    while True:
        det = boundary_adjacent_to_interior(mesh)
        if not det:
            return mesh, old, detached_all
        detached_all.extend(int(old[v]) for v in det)
        dset = set(det)
        drop = [t for t in range(mesh.n_triangles) if dset & set(int(v) for v in mesh.triangles[t])]
        if len(drop) == mesh.n_triangles:
            return mesh, old, detached_all
        mesh, idx = remove_triangles(mesh, drop)
        old = old[idx]


def certify_cover(mesh: Mesh, patches: Sequence[Subdomain], mode: str,
                  c_tilde: float = 0.0, tol_rel: float = DEFAULT_TOL_REL) -> Certificate:
    """Globalize per-patch criteria over a cover of the interior vertices."""
    mode = normalize_mode(mode)
    if mode != "sDMP-B":
        c_tilde = 0.0
    cert = Certificate(mode, False, parameters={"c_tilde": c_tilde, "tol_rel": tol_rel,
                                                "n_patches": len(patches)})
    part = mesh.partition
    if len(part.alpha) == 0:
        cert.reasons.append("mesh has no interior vertices")
        return cert
    connected = bool(interior_graph_connected(mesh, part))
    detached = boundary_adjacent_to_interior(mesh, part)
    uncovered = covers_interior(mesh, patches)
    cert.global_preconditions = {
        "interior_connected": connected,
        "boundary_detached": detached,
        "uncovered": uncovered,
    }
    if not connected:
        cert.reasons.append("interior graph not connected")
    if detached:
        if mode == "wDMP-A":
            cert.global_preconditions["detached_handling"] = (
                "triangles with detached boundary vertices trimmed; interior solution unchanged")
        else:
            cert.reasons.append(f"boundary vertices without interior neighbour: {detached}")
    if not patches:
        cert.reasons.append("cover incomplete: no patches")
    elif uncovered:
        cert.reasons.append(f"cover incomplete: {len(uncovered)} interior vertices uncovered")
    for pid, sub in enumerate(patches):
        rep = check_patch(sub, mode, c_tilde, tol_rel, pid)
        cert.patch_reports.append(rep)
    bad = [p.patch_id for p in cert.patch_reports if not p.holds]
    if bad:
        cert.reasons.append(f"{len(bad)} patches fail: {bad[:20]}")
    cert.holds = not cert.reasons
    return cert


# -------------------------------------------------------------- auto cover

@dataclass
class AutoCover:
    patches: list[Subdomain]
    uncoverable: list[int]
    log: list[dict]


def _star_passes(mesh: Mesh, K: np.ndarray, v: int, tol_rel: float) -> bool:
    nb = list(mesh.neighbors[v])
    row = K[v, nb]
    return bool(np.all(row < -tol_rel * abs(K[v, v])))


def auto_cover(mesh: Mesh, mode: str = "sDMP-A", c_tilde: float = 0.0, cap: int = AUTO_COVER_CAP,
               tol_rel: float = DEFAULT_TOL_REL) -> AutoCover:
    """Stars where the star test passes, otherwise k-rings grown up to ``cap``."""
    mode = normalize_mode(mode)
    ct = c_tilde if mode == "sDMP-B" else 0.0
    A = stiffness_laplace(mesh)
    K = A + ct * mass_matrix(mesh) if ct else A
    patches, uncoverable, log = [], [], []
    for v in mesh.partition.alpha:
        if _star_passes(mesh, K, v, tol_rel):
            patches.append(star(mesh, v))
            log.append({"vertex": int(v), "k": 1, "result": "star"})
            continue
        found = False
        for k in range(1, cap + 1):
            sub = ring(mesh, v, k)
            if v not in sub.interior_parent:
                continue
            rep = check_patch(sub, mode, ct, tol_rel)
            if rep.holds:
                patches.append(sub)
                log.append({"vertex": int(v), "k": k, "result": "ring"})
                found = True
                break
            log.append({"vertex": int(v), "k": k, "result": "fail", "reason": rep.reason})
        if not found:
            uncoverable.append(int(v))
    return AutoCover(patches, uncoverable, log)


# ---------------------------------------------------------------- semilinear

@dataclass(frozen=True)
class SemilinearParams:
    L_c: float
    C_A: float
    h: float
    h_max: float

    def __post_init__(self):
        if not self.L_c > 0:
            raise ValueError("L_c must be positive")


def semilinear_condition(mesh: Mesh, L_c: float, tol_rel: float = DEFAULT_TOL_REL
                         ) -> tuple[SemilinearParams, Certificate]:
    """Sufficient condition for the semilinear strong principle.

    Every edge with an interior endpoint needs A_ij < 0; then
    C_A = max M_ij / (h^2 |A_ij|) and h_max = sqrt(1 / (L_c C_A)).
    """
    if not L_c > 0:
        raise ValueError("L_c must be positive")
    A = stiffness_laplace(mesh)
    M = mass_matrix(mesh)
    h = mesh.h
    tau = tol_rel * float(np.abs(A).max())
    interior = np.zeros(mesh.n_vertices, dtype=bool)
    interior[list(mesh.partition.alpha)] = True
    failing, ratios = [], []
    for i, j in mesh.edges:
        if not (interior[i] or interior[j]):
            continue
        if A[i, j] >= -tau:
            failing.append((int(i), int(j)))
        else:
            ratios.append(M[i, j] / (h * h * abs(A[i, j])))
    C_A = float(max(ratios)) if ratios else float("nan")
    h_max = math.sqrt(1.0 / (L_c * C_A)) if ratios and not failing else float("nan")
    params = SemilinearParams(float(L_c), C_A, float(h), h_max) if ratios else None
    cert = Certificate("semilinear-sDMP-B", False, _global_preconditions(mesh),
                       defect_edges=failing)
    min_angle = float(mesh.angles.min())
    cert.parameters = {"L_c": L_c, "C_A": C_A, "h": h, "h_max": h_max,
                       "closed_form_C_A": CLOSED_FORM_C_A,
                       "min_angle": min_angle, "max_angle": float(mesh.angles.max())}
    if failing:
        cert.reasons.append(f"{len(failing)} edges with A_ij >= 0")
    elif not h < h_max:
        cert.reasons.append(f"h = {h:.6g} is not below h_max = {h_max:.6g}")
    pre = cert.global_preconditions
    if not pre["interior_connected"]:
        cert.reasons.append("interior graph not connected")
    if pre["boundary_detached"]:
        cert.reasons.append("boundary vertices without interior neighbour")
    cert.holds = not cert.reasons
    return params, cert


# ------------------------------------------------------------- bisections

def _bisect(pred: Callable[[float], bool], lo: float, hi: float, rtol: float) -> tuple[float, float]:
    """pred(lo) True, pred(hi) False; shrink until hi/lo - 1 < rtol."""
    while hi - lo > rtol * lo:
        mid = math.sqrt(lo * hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi


@dataclass(frozen=True)
class Threshold:
    value: float
    bracket: tuple[float, float]
    found: bool


def find_h_max(mesh: Mesh, c_tilde: float, patches: Sequence[Subdomain] | None = None,
               rtol: float = 1e-3, max_doublings: int = 60) -> Threshold:
    """Largest mesh size (max edge length) for which sDMP-B certifies.

    The mesh is scaled by s; stiffness is scale invariant and mass scales with
    s^2.  With ``patches`` (given in the unscaled mesh) the cover test is used,
    otherwise the full-domain criterion.
    """
    A = stiffness_laplace(mesh)
    M = mass_matrix(mesh)
    h0 = mesh.h
    a, b = mesh.partition.interior, mesh.partition.boundary

    def holds(s: float) -> bool:
        if patches is None:
            K = A + c_tilde * s * s * M
            try:
                ok, _ = _strong_checks(K[np.ix_(a, a)], K[np.ix_(a, b)], DEFAULT_TOL_REL)
            except SingularMatrixError:
                return False
            return ok
        for sub in patches:
            scaled = Subdomain(sub.mesh.scaled(s), sub.triangle_ids, sub.vertex_map, sub.name,
                               sub.parent_to_local)
            if not check_patch(scaled, "sDMP-B", c_tilde).holds:
                return False
        return not covers_interior(mesh, patches)

    lo = 1.0
    n = 0
    while not holds(lo):
        lo /= 2
        n += 1
        if n > max_doublings:
            return Threshold(0.0, (0.0, lo * h0), False)
    hi = 2 * lo
    n = 0
    while holds(hi):
        lo, hi = hi, 2 * hi
        n += 1
        if n > max_doublings:
            return Threshold(float("inf"), (lo * h0, float("inf")), False)
    lo, hi = _bisect(holds, lo, hi, rtol)
    return Threshold(lo * h0, (lo * h0, hi * h0), True)


def c_tilde_threshold(mesh: Mesh, rtol: float = 1e-3, start: float = 1.0,
                      max_doublings: int = 80) -> Threshold:
    """Largest c_tilde for which the full-domain sDMP-B criterion holds."""
    A = stiffness_laplace(mesh)
    M = mass_matrix(mesh)
    a, b = mesh.partition.interior, mesh.partition.boundary

    def holds(c: float) -> bool:
        K = A + c * M
        try:
            ok, _ = _strong_checks(K[np.ix_(a, a)], K[np.ix_(a, b)], DEFAULT_TOL_REL)
        except SingularMatrixError:
            return False
        return ok

    if not holds(0.0):
        return Threshold(float("nan"), (float("nan"), float("nan")), False)
    hi = start
    n = 0
    while holds(hi):
        hi *= 2
        n += 1
        if n > max_doublings:
            return Threshold(float("inf"), (hi, float("inf")), False)
    lo = hi / 2
    while not holds(lo):
        hi, lo = lo, lo / 2
        if lo < 1e-300:
            return Threshold(0.0, (0.0, hi), False)
    lo, hi = _bisect(holds, lo, hi, rtol)
    return Threshold(lo, (lo, hi), True)
