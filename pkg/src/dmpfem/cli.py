"""Command line entry point.

Every subcommand writes its outputs and a ``manifest.json`` into ``--out``.
Exit codes: 0 success, 1 certificate or principle not held, 2 usage error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import io
from .assembly import assemble, load_vector, stiffness_cotangent, stiffness_gradient
from .certify import (
    auto_cover,
    certify_cover,
    check_sdmp_a,
    check_sdmp_b,
    normalize_mode,
    semilinear_condition,
    angle_condition_audit,
)
from .generators import (
    FIG5_N,
    FIG5_PLACEMENTS,
    FIG5_THETA,
    FIG6_N,
    FIG6_PLACEMENTS,
    FIG6_THETA,
    DefectPlacement,
    DegenerateSpec,
    RhombusSpec,
    defect_mesh,
    degenerate_triangle_mesh,
    embed_degenerate,
    gk_patch,
    rhombus_mesh,
    three_line_mesh,
)
from .linalg import SingularMatrixError
from .mesh import MeshError
from .solvers import (
    ConvergenceError,
    ReactionFunction,
    empirical_dmp_test,
    greens_column,
    solve_linear,
    solve_semilinear,
)
from . import studies

VERSION = "0.1.0"
EXIT_OK, EXIT_NOT_HELD, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("dmpfem")


class UsageError(Exception):
    pass


_ANGLE = re.compile(r"^\s*([0-9.eE+-]*)\s*\*?\s*pi\s*(?:/\s*([0-9.eE+]+))?\s*$")


def parse_angle(text: str) -> float:
    """Radians from '1.2', 'pi/3', '2pi/5', '0.3pi' or '0.3*pi'."""
    try:
        return float(text)
    except ValueError:
        pass
    m = _ANGLE.match(text)
    if not m:
        raise argparse.ArgumentTypeError(f"cannot parse angle {text!r}")
    coef = float(m.group(1)) if m.group(1) not in ("", "+") else 1.0
    if m.group(1) == "-":
        coef = -1.0
    den = float(m.group(2)) if m.group(2) else 1.0
    return coef * math.pi / den


def parse_angle_list(text: str) -> list[float]:
    return [parse_angle(t) for t in text.split(",") if t.strip()]


def parse_float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def parse_int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


# ---------------------------------------------------------------- manifest

class Run:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.inputs: dict[str, str] = {}

    def input(self, path) -> Path:
        p = Path(path)
        if not p.exists():
            raise UsageError(f"input file not found: {path}")
        self.inputs[str(path)] = io.sha256_file(p)
        return p

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def manifest(self):
        flags = {k: v for k, v in sorted(vars(self.args).items()) if k not in ("func",)}
        io.write_json(self.out / "manifest.json", {
            "tool": "dmpfem",
            "version": VERSION,
            "subcommand": flags.pop("command", None),
            "flags": flags,
            "inputs": self.inputs,
            "seed": flags.get("seed"),
            "outputs": sorted(set(self.outputs)),
        })


# ---------------------------------------------------------------- handlers

def _emit_mesh(run: Run, mesh, extra=None, patches=None) -> int:
    io.write_mesh(run.path("mesh.json"), mesh, extra)
    if patches is not None:
        io.write_json(run.path("patches.json"), io.patches_to_dict(patches))
    print(f"mesh: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles, "
          f"{len(mesh.partition.alpha)} interior")
    return EXIT_OK


def cmd_mesh_gen(run: Run) -> int:
    a = run.args
    kind = a.kind
    if kind == "three-line":
        return _emit_mesh(run, three_line_mesh(a.n))
    if kind == "rhombus":
        return _emit_mesh(run, rhombus_mesh(RhombusSpec(a.theta, a.n, trim_corners=a.trim_corners,
                                                        layout=a.layout)))
    if kind == "gk":
        return _emit_mesh(run, gk_patch(a.k, a.theta))
    if kind == "defect":
        if a.preset:
            if a.preset == "fig5":
                spec, places = RhombusSpec(FIG5_THETA, FIG5_N, layout="centered"), FIG5_PLACEMENTS
            else:
                spec, places = RhombusSpec(FIG6_THETA, FIG6_N, layout="centered"), FIG6_PLACEMENTS
        else:
            if a.theta is None or a.n is None or not a.block:
                raise UsageError("defect needs --preset or --theta, --n and --block")
            spec = RhombusSpec(a.theta, a.n)
            places = []
            for b in a.block:
                k, i, j = parse_int_list(b)
                places.append(DefectPlacement(k, (i, j)))
        d = defect_mesh(spec, places)
        extra = {"defect_edges": [list(e) for e in d.defect_edges]}
        return _emit_mesh(run, d.mesh, extra, list(d.patches))
    if kind == "degenerate":
        return _emit_mesh(run, degenerate_triangle_mesh(a.alpha))
    if kind == "embed-degenerate":
        return _emit_mesh(run, embed_degenerate(DegenerateSpec(a.alpha, a.placement, a.n, a.column)))
    raise UsageError(f"unknown mesh kind {kind}")


def cmd_assemble(run: Run) -> int:
    a = run.args
    mesh = io.read_mesh(run.input(a.mesh))
    s = assemble(mesh, a.c_tilde)
    mats = {"A": s.A, "M": s.M, "C": s.C}
    if a.format == "json":
        io.write_json(run.path("matrices.json"), {
            "n": mesh.n_vertices, "c_tilde": s.c_tilde, "h": s.h,
            "interior": list(s.partition.alpha), "boundary": list(s.partition.beta),
            **{k: v.tolist() for k, v in mats.items()}})
    else:
        for k, v in mats.items():
            io.write_matrix_csv(run.path(f"{k}.csv"), v)
    status = EXIT_OK
    if a.check_cotangent:
        g, c = stiffness_gradient(mesh), stiffness_cotangent(mesh)
        err = float(np.abs(g - c).max() / max(np.abs(g).max(), 1e-300))
        ok = err <= 1e-12
        io.write_json(run.path("cotangent_check.json"), {"max_rel_diff": err, "agree": ok})
        print(f"cotangent vs gradient: max relative difference {err:.3e} ({'ok' if ok else 'MISMATCH'})")
        status = EXIT_OK if ok else EXIT_NUMERIC
    print(f"assembled {mesh.n_vertices}x{mesh.n_vertices}, h = {s.h:.6g}")
    return status


def cmd_certify(run: Run) -> int:
    a = run.args
    mesh = io.read_mesh(run.input(a.mesh))
    if a.mode == "semilinear":
        if a.lc is None:
            raise UsageError("--lc is required for --mode semilinear")
        params, cert = semilinear_condition(mesh, a.lc, a.tol)
    else:
        mode = normalize_mode(a.mode)
        patches_opt = a.patches or ("auto" if mode == "wDMP-A" else "direct")
        c_tilde = a.c_tilde if mode == "sDMP-B" else 0.0
        if patches_opt == "direct":
            if mode == "wDMP-A":
                raise UsageError("wDMP-A needs a patch cover (--patches auto or FILE)")
            s = assemble(mesh, c_tilde)
            cert = check_sdmp_a(s, a.tol) if mode == "sDMP-A" else check_sdmp_b(s, a.tol)
        else:
            if patches_opt == "auto":
                cover = auto_cover(mesh, mode, c_tilde, tol_rel=a.tol)
                patches = cover.patches
            else:
                patches = io.read_patches(mesh, run.input(patches_opt))
            cert = certify_cover(mesh, patches, mode, c_tilde, a.tol)
            if patches_opt == "auto":
                cert.parameters["uncoverable"] = cover.uncoverable
        cert.defect_edges = angle_condition_audit(mesh).defects
    io.write_json(run.path("certificate.json"), cert.to_dict())
    print(cert.summary())
    return EXIT_OK if cert.holds else EXIT_NOT_HELD


def _reaction(a) -> ReactionFunction | None:
    if a.reaction is None:
        return None
    if a.reaction == "linear":
        return ReactionFunction.linear(a.c_tilde)
    if a.reaction == "tanh":
        return ReactionFunction.tanh(a.lc if a.lc is not None else 1.0)
    if a.reaction == "custom-table":
        if not a.table:
            raise UsageError("--reaction custom-table needs --table FILE (CSV columns u,c)")
        import csv
        with open(a.table) as fh:
            rows = list(csv.DictReader(fh))
        return ReactionFunction.from_table([float(r["u"]) for r in rows], [float(r["c"]) for r in rows])
    raise UsageError(f"unknown reaction {a.reaction}")


def _load(mesh, s, spec: str, dual: bool) -> np.ndarray:
    vec = io.read_vector(spec, mesh.n_vertices)
    return load_vector(s, dual=vec) if dual else load_vector(s, f_nodal=vec)


def cmd_solve(run: Run) -> int:
    a = run.args
    mesh = io.read_mesh(run.input(a.mesh))
    for spec in (a.bc, a.f):
        if Path(spec).exists():
            run.input(spec)
    reaction = _reaction(a)
    s = assemble(mesh, 0.0 if reaction is not None else a.c_tilde)
    F = _load(mesh, s, a.f, a.dual)
    ub = io.read_vector(a.bc, mesh.n_vertices)
    sol = solve_linear(s, F, ub) if reaction is None else solve_semilinear(s, reaction, F, ub)
    io.write_solution_csv(run.path("solution.csv"), mesh, sol.u)
    io.write_json(run.path("solve.json"), {"residual": sol.residual, "iterations": sol.iterations,
                                           "min": float(sol.u.min()), "max": float(sol.u.max())})
    print(f"solved: residual {sol.residual:.3e}, iterations {sol.iterations}")
    return EXIT_OK


def _vertex(mesh, token: str) -> int:
    try:
        return int(token)
    except ValueError:
        try:
            return mesh.find_label(token)
        except (KeyError, ValueError) as exc:
            raise UsageError(f"unknown vertex {token!r}") from exc


def cmd_green(run: Run) -> int:
    a = run.args
    mesh = io.read_mesh(run.input(a.mesh))
    s = assemble(mesh, a.c_tilde)
    v = _vertex(mesh, a.source)
    try:
        sol = greens_column(s, v)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    io.write_solution_csv(run.path("green.csv"), mesh, sol.u)
    inter = sol.u[s.partition.interior]
    summary = {"source": v, "min_interior": float(inter.min()),
               "argmin": int(s.partition.interior[int(np.argmin(inter))]),
               "all_interior_positive": bool(inter.min() > 1e-12)}
    io.write_json(run.path("green.json"), summary)
    print(f"green's function from {v}: min interior {summary['min_interior']:.6g} at {summary['argmin']}")
    return EXIT_OK


def cmd_dmp_test(run: Run) -> int:
    a = run.args
    mesh = io.read_mesh(run.input(a.mesh))
    reaction = _reaction(a)
    mode = {"sdmp-a": "sDMP-A", "wdmp-a": "wDMP-A", "sdmp-b": "sDMP-B", "wdmp-b": "wDMP-B"}[a.mode]
    s = assemble(mesh, 0.0 if reaction is not None or mode.endswith("A") else a.c_tilde)
    rep = empirical_dmp_test(s, mode, a.trials, a.seed, adversarial=a.adversarial, reaction=reaction)
    io.write_json(run.path("dmp_test.json"), rep.to_dict())
    print(f"{mode}: {rep.trials} trials (+{rep.adversarial_trials} adversarial), "
          f"{len(rep.violations)} violations, {len(rep.solver_failures)} solver failures")
    return EXIT_OK if rep.holds else EXIT_NOT_HELD


def cmd_study(run: Run) -> int:
    a = run.args
    name = a.study
    if name == "fig4":
        grid = a.theta_grid or list(np.linspace(0.30 * math.pi, 0.49 * math.pi, 20))
        recs, changes = studies.sweep_gk(a.k, grid)
        io.write_csv(run.path("fig4.csv"), studies.SWEEP_COLUMNS, (r.as_row() for r in recs))
        io.write_json(run.path("fig4.json"), {"sign_changes": [vars(c) for c in changes],
                                             "bracket_tol": studies.BRACKET_TOL})
        for c in changes:
            print(f"{c.series}: sign change in [{c.lo / math.pi:.5f}pi, {c.hi / math.pi:.5f}pi]")
    elif name == "fig8":
        grid = a.alpha_grid or list(studies.default_alpha_grid())
        recs = studies.sweep_degenerate(grid)
        io.write_csv(run.path("fig8.csv"), studies.SWEEP_COLUMNS, (r.as_row() for r in recs))
        worst = min(recs, key=lambda r: r.min_entry)
        io.write_json(run.path("fig8.json"), {"min_over_grid": worst.min_entry, "at_alpha": worst.parameter,
                                             "all_positive": all(r.certified for r in recs)})
        print(f"smallest entry over grid: {worst.min_entry:.6g} at alpha = {worst.parameter:.4g}")
    elif name == "appendix":
        b = studies.appendix_matrices(a.alpha)
        io.write_json(run.path("appendix.json"), b.to_dict())
        ex = studies.exact_limit_matrices()
        io.write_json(run.path("exact_fractions.json"),
                      {k: [[str(x) for x in row] for row in v] for k, v in ex.items()})
        for k, v in b.checks.items():
            print(f"{k}: {v}")
    elif name == "fig10":
        g = studies.reproduce_green_comparison(a.alpha, a.n, a.source)
        io.write_json(run.path("fig10.json"), g.to_dict())
        io.write_solution_csv(run.path("green_one_layer_inside.csv"), g.meshes[0], g.inside.u)
        io.write_solution_csv(run.path("green_at_boundary.csv"), g.meshes[1], g.boundary.u)
        print(f"one layer inside: min interior {g.inside_min_interior:.6g}; "
              f"at boundary: value at N {g.boundary_value_at_N:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dmpfem", description="Discrete maximum principle certification for P1 finite elements.")
    p.add_argument("--version", action="version", version=f"dmpfem {VERSION}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--out", default="out", help="output directory (default: out)")

    g = sub.add_parser("mesh-gen", help="generate a mesh; writes mesh.json (+ patches.json for defect meshes)")
    gs = g.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    x = gs.add_parser("three-line", help="uniform square mesh with one diagonal family")
    x.add_argument("--n", type=positive_int, required=True)
    x = gs.add_parser("rhombus", help="uniform rhombus mesh")
    x.add_argument("--theta", type=parse_angle, required=True, help="angle, e.g. pi/3")
    x.add_argument("--n", type=positive_int, required=True)
    x.add_argument("--trim-corners", action="store_true")
    x.add_argument("--layout", choices=["corner", "centered"])
    x = gs.add_parser("gk", help="G_k(theta) macro patch")
    x.add_argument("--k", type=positive_int, required=True)
    x.add_argument("--theta", type=parse_angle, required=True)
    x = gs.add_parser("defect", help="rhombus mesh with G_k defect blocks")
    x.add_argument("--preset", choices=["fig5", "fig6"])
    x.add_argument("--theta", type=parse_angle)
    x.add_argument("--n", type=positive_int)
    x.add_argument("--block", action="append", help="k,i,j (repeatable)")
    x = gs.add_parser("degenerate", help="standalone refined right triangle")
    x.add_argument("--alpha", type=float, required=True)
    x = gs.add_parser("embed-degenerate", help="three-line mesh with an embedded refined triangle")
    x.add_argument("--alpha", type=float, required=True)
    x.add_argument("--placement", choices=["OneLayerInside", "AtBoundary", "Standalone"], default="OneLayerInside")
    x.add_argument("--n", type=positive_int, default=8)
    x.add_argument("--column", type=int)
    for sp in gs.choices.values():
        common(sp)
    g.set_defaults(func=cmd_mesh_gen)

    x = sub.add_parser("assemble", help="write A, M, C as matrices.json or A.csv/M.csv/C.csv")
    x.add_argument("--mesh", required=True)
    x.add_argument("--c-tilde", type=float, default=0.0)
    x.add_argument("--format", choices=["json", "csv"], default="json")
    x.add_argument("--check-cotangent", action="store_true",
                   help="compare gradient and cotangent stiffness; writes cotangent_check.json")
    common(x)
    x.set_defaults(func=cmd_assemble)

    x = sub.add_parser("certify", help="write certificate.json; exit 0 iff the certificate holds")
    x.add_argument("--mesh", required=True)
    x.add_argument("--mode", choices=["sdmp-a", "sdmp-b", "wdmp-a", "semilinear"], required=True)
    x.add_argument("--c-tilde", type=float, default=0.0)
    x.add_argument("--lc", type=float, help="Lipschitz constant of the reaction (semilinear)")
    x.add_argument("--patches", help="direct | auto | patches.json (default: direct, auto for wdmp-a)")
    x.add_argument("--tol", type=float, default=1e-12, help="relative sign-test tolerance")
    common(x)
    x.set_defaults(func=cmd_certify)

    def reaction_flags(sp):
        sp.add_argument("--c-tilde", type=float, default=0.0)
        sp.add_argument("--reaction", choices=["linear", "tanh", "custom-table"])
        sp.add_argument("--lc", type=float, help="scale L of L*tanh(u)")
        sp.add_argument("--table", help="CSV with columns u,c for custom-table")

    x = sub.add_parser("solve", help="write solution.csv (vertex,x,y,u) and solve.json")
    x.add_argument("--mesh", required=True)
    reaction_flags(x)
    x.add_argument("--bc", default="0", help="boundary values: number, JSON list or CSV")
    x.add_argument("--f", default="0", help="source: number, JSON list or CSV (nodal values)")
    x.add_argument("--dual", action="store_true", help="treat --f as the dual load vector")
    common(x)
    x.set_defaults(func=cmd_solve)

    x = sub.add_parser("green", help="write green.csv and green.json for one source vertex")
    x.add_argument("--mesh", required=True)
    x.add_argument("--source", required=True, help="vertex index or label")
    x.add_argument("--c-tilde", type=float, default=0.0)
    common(x)
    x.set_defaults(func=cmd_green)

    x = sub.add_parser("dmp-test", help="randomized min-principle trials; writes dmp_test.json")
    x.add_argument("--mesh", required=True)
    x.add_argument("--mode", choices=["sdmp-a", "wdmp-a", "sdmp-b", "wdmp-b"], required=True)
    x.add_argument("--trials", type=positive_int, default=1000)
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--adversarial", action="store_true")
    reaction_flags(x)
    common(x)
    x.set_defaults(func=cmd_dmp_test)

    x = sub.add_parser("study", help="reproduction studies; CSV + JSON outputs")
    ss = x.add_subparsers(dest="study", required=True, parser_class=_Parser)
    y = ss.add_parser("fig4", help="min entry of G_k inverses over theta")
    y.add_argument("--k", type=parse_int_list, default=[1, 2, 3, 4])
    y.add_argument("--theta-grid", type=parse_angle_list)
    y = ss.add_parser("fig8", help="min entry of S(alpha)^-1 over alpha")
    y.add_argument("--alpha-grid", type=parse_float_list)
    y = ss.add_parser("appendix", help="hierarchical-basis matrices at one alpha")
    y.add_argument("--alpha", type=float, default=1e-2)
    y = ss.add_parser("fig10", help="Green's functions for both embeddings")
    y.add_argument("--alpha", type=float, default=studies.FIG10_ALPHA)
    y.add_argument("--n", type=positive_int, default=studies.FIG10_N)
    y.add_argument("--source", default="P")
    for sp in ss.choices.values():
        common(sp)
    x.set_defaults(func=cmd_study)
    return p


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"dmpfem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        run = Run(args)
        code = args.func(run)
        run.manifest()
        return code
    except (UsageError, MeshError, argparse.ArgumentTypeError) as exc:
        print(f"dmpfem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SingularMatrixError, ConvergenceError, np.linalg.LinAlgError) as exc:
        print(f"dmpfem: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"dmpfem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
