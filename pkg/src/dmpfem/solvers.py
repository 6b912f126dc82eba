"""Linear and semilinear discrete solvers, Green's functions and randomized DMP trials."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math
import os
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .assembly import AssembledSystem, assemble
from .linalg import PIVOT_TOL_REL, SingularMatrixError, invert, lu_factor
from .mesh import Mesh, Subdomain

log = logging.getLogger(__name__)

NEWTON_MAX_ITER = 50
VIOLATION_TOL = 1e-10
ATTAIN_TOL = 1e-12
FD_STEP = 1e-6


class ConvergenceError(RuntimeError):
    pass


@dataclass
class DiscreteSolution:
    """Nodal solution u = u0 + ub; u0 vanishes on the boundary, ub on the interior."""

    u: np.ndarray
    u0: np.ndarray
    ub: np.ndarray
    residual: float
    iterations: int = 0
    residual_history: list[float] = field(default_factory=list)

    def restrict(self, sub: Subdomain) -> np.ndarray:
        return self.u[sub.vertex_map]


@dataclass
class ReactionFunction:
    """Nodal reaction c(x, u), vectorized over vertices.

    ``c(x, u)`` takes an (N, 2) coordinate array and a length-N vector.
    ``dc`` is its derivative in u; a central difference is used when absent.
    """

    c: Callable[[np.ndarray, np.ndarray], np.ndarray]
    L_c: float
    dc: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = "custom"

    def __call__(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.asarray(self.c(x, u), dtype=float)

    def derivative(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        if self.dc is not None:
            return np.asarray(self.dc(x, u), dtype=float)
        step = FD_STEP * (1 + np.abs(u))
        return (self.c(x, u + step) - self.c(x, u - step)) / (2 * step)

    def validate(self, x: np.ndarray, u_grid: np.ndarray | None = None, tol: float = 1e-12) -> None:
        """Spot-check c(x,0)=0, monotonicity and the Lipschitz bound at every vertex."""
        x = np.asarray(x, dtype=float)
        n = len(x)
        if u_grid is None:
            u_grid = np.linspace(-3, 3, 25)
        c0 = self(x, np.zeros(n))
        if np.abs(c0).max() > tol:
            raise ValueError("reaction must satisfy c(x, 0) = 0")
        vals = np.stack([self(x, np.full(n, u)) for u in u_grid])
        diffs = np.diff(vals, axis=0)
        if diffs.min() < -tol:
            raise ValueError("reaction must be nondecreasing in u")
        slopes = np.abs(diffs) / np.diff(u_grid)[:, None]
        if slopes.max() > self.L_c * (1 + 1e-9) + tol:
            raise ValueError(f"Lipschitz bound L_c = {self.L_c} violated (slope {slopes.max():.6g})")

    @classmethod
    def linear(cls, c_tilde: float) -> "ReactionFunction":
        return cls(lambda x, u: c_tilde * u, abs(c_tilde) or 1.0,
                   lambda x, u: np.full_like(u, c_tilde, dtype=float), f"linear({c_tilde})")

    @classmethod
    def tanh(cls, scale: float = 1.0) -> "ReactionFunction":
        return cls(lambda x, u: scale * np.tanh(u), scale,
                   lambda x, u: scale / np.cosh(u) ** 2, f"tanh({scale})")

    @classmethod
    def from_table(cls, us, cs) -> "ReactionFunction":
        """Piecewise linear c(u) through (us, cs), extended with the end slopes."""
        us = np.asarray(us, dtype=float)
        cs = np.asarray(cs, dtype=float)
        if us.ndim != 1 or us.shape != cs.shape or len(us) < 2 or np.any(np.diff(us) <= 0):
            raise ValueError("table needs at least two points with increasing u")
        slopes = np.diff(cs) / np.diff(us)

        def c(x, u):
            u = np.asarray(u, dtype=float)
            out = np.interp(u, us, cs)
            lo, hi = u < us[0], u > us[-1]
            out[lo] = cs[0] + slopes[0] * (u[lo] - us[0])
            out[hi] = cs[-1] + slopes[-1] * (u[hi] - us[-1])
            return out

        return cls(c, float(np.abs(slopes).max()), None, "table")


def _boundary_values(system: AssembledSystem, u_boundary) -> np.ndarray:
    part = system.partition
    n = system.mesh.n_vertices
    ub = np.asarray(u_boundary, dtype=float)
    if ub.ndim == 0:
        return np.full(len(part.beta), float(ub))
    if ub.shape == (n,):
        return ub[part.boundary]
    if ub.shape == (len(part.beta),):
        return ub
    raise ValueError(f"boundary data must have length {len(part.beta)} or {n}, got {ub.shape}")


def _interior_load(system: AssembledSystem, F) -> np.ndarray:
    part = system.partition
    n = system.mesh.n_vertices
    F = np.asarray(F, dtype=float)
    if F.ndim == 0:
        return np.full(len(part.alpha), float(F))
    if F.shape == (n,):
        return F[part.interior]
    if F.shape == (len(part.alpha),):
        return F
    raise ValueError(f"load must have length {len(part.alpha)} or {n}, got {F.shape}")


def _assemble_solution(system: AssembledSystem, ua: np.ndarray, ub: np.ndarray,
                       residual: float, iterations: int = 0, history=None) -> DiscreteSolution:
    part = system.partition
    n = system.mesh.n_vertices
    u0 = np.zeros(n)
    u0[part.interior] = ua
    uB = np.zeros(n)
    uB[part.boundary] = ub
    return DiscreteSolution(u0 + uB, u0, uB, residual, iterations, list(history or []))


class LinearSolver:
    """Factor the interior block of A + C once and reuse it."""

    def __init__(self, system: AssembledSystem):
        self.system = system
        Kaa, Kab = system.blocks()
        if Kaa.shape[0] == 0:
            raise ValueError("system has no interior vertices")
        self.Kaa, self.Kab = Kaa, Kab
        self.lu = lu_factor(Kaa)
        if np.abs(np.diag(self.lu[0])).min() <= PIVOT_TOL_REL * np.abs(Kaa).max():
            raise SingularMatrixError("interior block singular to working precision")

    def solve(self, F, u_boundary) -> DiscreteSolution:
        Fa = _interior_load(self.system, F)
        ub = _boundary_values(self.system, u_boundary)
        ua = sla.lu_solve(self.lu, Fa - self.Kab @ ub, check_finite=False)
        res = float(np.abs(self.Kaa @ ua + self.Kab @ ub - Fa).max()) if len(ua) else 0.0
        return _assemble_solution(self.system, ua, ub, res)


def solve_linear(system: AssembledSystem, F, u_boundary) -> DiscreteSolution:
    """(A_aa + C_aa) u_a + (A_ab + C_ab) u_b = F_a.

    ``F`` is a dual vector (full length or interior only); ``u_boundary`` is
    full length, boundary-only or a scalar.
    """
    return LinearSolver(system).solve(F, u_boundary)


def greens_column(system: AssembledSystem, source_vertex: int) -> DiscreteSolution:
    """Solution for the unit dual source at an interior vertex and zero boundary data."""
    part = system.partition
    if source_vertex not in set(part.alpha):
        raise ValueError(f"source vertex {source_vertex} is not interior")
    F = np.zeros(system.mesh.n_vertices)
    F[source_vertex] = 1.0
    return solve_linear(system, F, 0.0)


def boundary_influence(system: AssembledSystem) -> np.ndarray:
    """-(A_aa + C_aa)^{-1}(A_ab + C_ab): interior values from boundary values."""
    Kaa, Kab = system.blocks()
    return -invert(Kaa).inverse @ Kab


def solve_semilinear(system: AssembledSystem, c: ReactionFunction, F, u_boundary,
                     tol: float = 1e-12, max_iter: int = NEWTON_MAX_ITER,
                     u_init: np.ndarray | None = None) -> DiscreteSolution:
    """Damped Newton for A_aa U_a + A_ab U_b + [M c(P, U)]_a = F_a.

    The reaction is interpolated nodally; ``system.c_tilde`` is ignored.
    Converged when the max-norm residual drops below tol * (1 + |F|_max).
    """
    part = system.partition
    a, b = part.interior, part.boundary
    A, M = system.A, system.M
    x = system.mesh.vertices
    Fa = _interior_load(system, F)
    ub = _boundary_values(system, u_boundary)
    Aaa, Aab = A[np.ix_(a, a)], A[np.ix_(a, b)]
    Ma = M[a, :]
    Maa = M[np.ix_(a, a)]
    u = np.zeros(system.mesh.n_vertices)
    u[b] = ub
    if u_init is not None:
        u[a] = np.asarray(u_init, dtype=float)[a]
    const = Aab @ ub - Fa

    def residual(uvec):
        return Aaa @ uvec[a] + const + Ma @ c(x, uvec)

    target = tol * (1 + (np.abs(Fa).max() if len(Fa) else 0.0))
    r = residual(u)
    rn = float(np.abs(r).max())
    history = [rn]
    it = 0
    while rn >= target:
        if it >= max_iter:
            raise ConvergenceError(f"Newton did not converge in {max_iter} iterations (residual {rn:.3e})")
        it += 1
        J = Aaa + Maa * c.derivative(x[a], u[a])[None, :]
        try:
            lu = lu_factor(J)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise SingularMatrixError(str(exc)) from exc
        if np.abs(np.diag(lu[0])).min() <= PIVOT_TOL_REL * np.abs(J).max():
            raise SingularMatrixError("Newton Jacobian singular")
        du = sla.lu_solve(lu, -r, check_finite=False)
        lam = 1.0
        while True:
            trial = u.copy()
            trial[a] += lam * du
            rt = residual(trial)
            rtn = float(np.abs(rt).max())
            if rtn < rn or lam < 1e-10:
                break
            lam /= 2
        u, r, rn = trial, rt, rtn
        history.append(rn)
    if len(history) >= 4:
        log.debug("newton residuals %s", history)
    return _assemble_solution(system, u[a], ub, rn, it, history)


def picard_semilinear(system: AssembledSystem, c: ReactionFunction, F, u_boundary,
                      tol: float = 1e-13, max_iter: int = 10000) -> np.ndarray:
    """Fixed-point iteration (A_aa + s M_aa) U = F - A_ab U_b - M_a c(U) + s M_aa U.

    Independent of Newton; s = L_c makes the map monotone.  Used as a test oracle.
    """
    part = system.partition
    a, b = part.interior, part.boundary
    A, M = system.A, system.M
    x = system.mesh.vertices
    Fa = _interior_load(system, F)
    ub = _boundary_values(system, u_boundary)
    s = c.L_c
    K = A[np.ix_(a, a)] + s * M[np.ix_(a, a)]
    lu = lu_factor(K)
    u = np.zeros(system.mesh.n_vertices)
    u[b] = ub
    base = Fa - A[np.ix_(a, b)] @ ub
    for _ in range(max_iter):
        rhs = base - M[a, :] @ c(x, u) + s * M[np.ix_(a, a)] @ u[a]
        new = sla.lu_solve(lu, rhs)
        delta = float(np.abs(new - u[a]).max())
        u[a] = new
        if delta < tol:
            return u
    raise ConvergenceError("Picard iteration did not converge")


# ------------------------------------------------------------- restriction

def subdomain_system(system: AssembledSystem, sub: Subdomain) -> AssembledSystem:
    return assemble(sub.mesh, system.c_tilde)


def restrict_and_solve(system: AssembledSystem, sub: Subdomain, solution: DiscreteSolution,
                       F, reaction: ReactionFunction | None = None) -> DiscreteSolution:
    """Solve on a subdomain with boundary data taken from a parent solution.

    ``F`` is the parent dual vector; interior rows of the subdomain coincide
    with parent rows because the support of an interior basis function lies in
    the subdomain.
    """
    local = subdomain_system(system, sub)
    F = np.asarray(F, dtype=float)
    if F.ndim == 0:
        F = np.full(system.mesh.n_vertices, float(F))
    Floc = F[sub.vertex_map]
    uloc = solution.u[sub.vertex_map]
    if reaction is None:
        return solve_linear(local, Floc, uloc)
    return solve_semilinear(local, reaction, Floc, uloc)


# --------------------------------------------------------- empirical tests

EMPIRICAL_MODES = ("sDMP-A", "wDMP-A", "sDMP-B", "wDMP-B")


@dataclass
class Violation:
    trial: int
    kind: str
    amount: float
    seed: tuple
    data: dict = field(default_factory=dict)


@dataclass
class EmpiricalReport:
    mode: str
    trials: int
    adversarial_trials: int
    seed: int
    violations: list[Violation] = field(default_factory=list)
    solver_failures: list[dict] = field(default_factory=list)
    worst_margin: float = math.inf

    @property
    def holds(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "trials": self.trials, "adversarial_trials": self.adversarial_trials,
            "seed": self.seed, "n_violations": len(self.violations),
            "violations": [{"trial": v.trial, "kind": v.kind, "amount": v.amount,
                            "seed": list(v.seed), **v.data} for v in self.violations[:50]],
            "solver_failures": self.solver_failures[:50],
            "worst_margin": self.worst_margin if math.isfinite(self.worst_margin) else None,
        }


def _trial_data(trial: int, seed: int, na: int, nb: int):
    rng = np.random.default_rng([seed, trial])
    Fa = np.zeros(na) if trial % 4 == 3 else rng.uniform(0.0, 1.0, na)
    if trial % 8 == 7:
        ub = np.full(nb, rng.uniform(-1.0, 1.0))
    else:
        ub = rng.uniform(-1.0, 1.0, nb)
    return Fa, ub


def check_min_principle(u: np.ndarray, part, ub: np.ndarray, mode: str,
                        tol: float = VIOLATION_TOL, attain_tol: float = ATTAIN_TOL) -> tuple[list[tuple[str, float]], float]:
    """Returns (violations, margin) of one nodal solution for a mode."""
    ua = u[part.interior]
    if mode.endswith("A"):
        bound = float(ub.min())
    else:
        bound = -float(np.maximum(-ub, 0.0).max())
    umin = float(u.min())
    margin = float(ua.min()) - bound if len(ua) else math.inf
    out = []
    if umin < bound - tol:
        out.append(("inequality", bound - umin))
    if mode.startswith("s"):
        attained = len(ua) and ua.min() <= umin + attain_tol
        if mode.endswith("B"):
            attained = attained and umin <= attain_tol
        spread = float(u.max() - umin)
        if attained and spread > attain_tol:
            out.append(("strong", spread))
    return out, margin


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("DMPFEM_THREADS", "1")))
    except ValueError:
        return 1


def empirical_dmp_test(system_or_mesh, mode: str, trials: int = 1000, seed: int = 0,
                       adversarial: bool = False, reaction: ReactionFunction | None = None,
                       c_tilde: float | None = None, workers: int | None = None) -> EmpiricalReport:
    """Seeded randomized min-principle trials.

    Trial t draws F_a uniform in [0, 1] (zero when t % 4 == 3) and boundary
    values uniform in [-1, 1] (a single constant when t % 8 == 7), from the
    generator seeded with (seed, t).  With ``adversarial`` every unit source
    with zero boundary data and every unit boundary vector with zero source is
    also tried.  With ``reaction`` the semilinear solver is used and B-mode
    bounds apply.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if mode not in EMPIRICAL_MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {EMPIRICAL_MODES}")
    if isinstance(system_or_mesh, Mesh):
        system = assemble(system_or_mesh, c_tilde or 0.0)
    else:
        system = system_or_mesh if c_tilde is None else system_or_mesh.with_c_tilde(c_tilde)
    if mode.endswith("A") and (system.c_tilde != 0 or reaction is not None):
        raise ValueError("A modes are reaction free")
    part = system.partition
    na, nb = len(part.alpha), len(part.beta)
    solver = LinearSolver(system) if reaction is None else None

    def run(data):
        Fa, ub = data
        if solver is not None:
            return solver.solve(Fa, ub).u
        return solve_semilinear(system, reaction, Fa, ub).u

    cases = [_trial_data(t, seed, na, nb) for t in range(trials)]
    n_adv = 0
    if adversarial:
        for i in range(na):
            e = np.zeros(na)
            e[i] = 1.0
            cases.append((e, np.zeros(nb)))
        for j in range(nb):
            e = np.zeros(nb)
            e[j] = 1.0
            cases.append((np.zeros(na), e))
        n_adv = na + nb
    report = EmpiricalReport(mode, trials, n_adv, seed)

    def one(idx):
        try:
            return idx, run(cases[idx]), None
        except (ConvergenceError, SingularMatrixError, np.linalg.LinAlgError) as exc:
            return idx, None, str(exc)

    nw = workers or _workers()
    if nw > 1:
        with ThreadPoolExecutor(nw) as ex:
            results = list(ex.map(one, range(len(cases))))
    else:
        results = [one(i) for i in range(len(cases))]
    for idx, u, err in results:
        if err is not None:
            report.solver_failures.append({"trial": idx, "error": err})
            continue
        viol, margin = check_min_principle(u, part, cases[idx][1], mode)
        report.worst_margin = min(report.worst_margin, margin)
        for kind, amount in viol:
            vdata = {"adversarial": idx >= trials}
            if idx >= trials:
                k = idx - trials
                vdata["case"] = f"source {int(part.alpha[k])}" if k < na else f"boundary {int(part.beta[k - na])}"
            vdata["argmin"] = int(np.argmin(u))
            report.violations.append(Violation(idx, kind, amount, (seed, idx), vdata))
    return report
