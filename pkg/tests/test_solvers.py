import math

import numpy as np
import pytest

from dmpfem.assembly import assemble
from dmpfem.generators import RhombusSpec, embed_degenerate, DegenerateSpec, rhombus_mesh, three_line_mesh
from dmpfem.linalg import invert
from dmpfem.mesh import ring
from dmpfem.solvers import (
    ConvergenceError,
    LinearSolver,
    ReactionFunction,
    boundary_influence,
    check_min_principle,
    empirical_dmp_test,
    greens_column,
    picard_semilinear,
    restrict_and_solve,
    solve_linear,
    solve_semilinear,
)
from oracles import perturbed_grid_mesh


def equilateral_rhombus(n=6):
    return rhombus_mesh(RhombusSpec(math.pi / 3, n, trim_corners=True, layout="centered"))


class TestLinear:
    def test_matches_dense_solve(self, rng):
        s = assemble(perturbed_grid_mesh(rng), c_tilde=0.5)
        n = s.mesh.n_vertices
        a, b = s.partition.interior, s.partition.boundary
        F = rng.uniform(0, 1, n)
        g = rng.uniform(-1, 1, n)
        sol = solve_linear(s, F, g)
        ref = np.linalg.solve(s.K[np.ix_(a, a)], F[a] - s.K[np.ix_(a, b)] @ g[b])
        np.testing.assert_allclose(sol.u[a], ref, atol=1e-12)
        np.testing.assert_array_equal(sol.u[b], g[b])
        np.testing.assert_allclose(sol.u0 + sol.ub, sol.u)
        assert sol.residual < 1e-12

    def test_scalar_boundary_and_constant_solution(self):
        s = assemble(three_line_mesh(4))
        sol = solve_linear(s, 0.0, 2.5)
        np.testing.assert_allclose(sol.u, 2.5, atol=1e-13)

    def test_green_column_is_inverse_column(self):
        s = assemble(three_line_mesh(4))
        a = s.partition.interior
        X = invert(s.blocks()[0]).inverse
        k = 3
        g = greens_column(s, int(a[k]))
        np.testing.assert_allclose(g.u[a], X[:, k], atol=1e-14)
        with pytest.raises(ValueError):
            greens_column(s, int(s.partition.boundary[0]))

    def test_boundary_influence_rows(self):
        s = assemble(three_line_mesh(5))
        H = boundary_influence(s)
        np.testing.assert_allclose(H.sum(axis=1), 1.0, atol=1e-12)
        assert H.min() >= -1e-14

    def test_corner_insensitivity(self, rng):
        m = three_line_mesh(5)
        s = assemble(m)
        solver = LinearSolver(s)
        b = s.partition.boundary
        corners = [v for v in range(m.n_vertices) if set(m.vertices[v]) <= {0.0, 1.0}]
        assert len(corners) == 4
        g = np.zeros(m.n_vertices)
        g[b] = rng.uniform(-1, 1, len(b))
        u1 = solver.solve(np.zeros(m.n_vertices), g).u0
        g[corners] = rng.uniform(-5, 5, 4)
        u2 = solver.solve(np.zeros(m.n_vertices), g).u0
        np.testing.assert_allclose(u1, u2, atol=1e-12)


class TestReaction:
    def test_validate(self):
        x = np.zeros((3, 2))
        ReactionFunction.tanh().validate(x)
        with pytest.raises(ValueError):
            ReactionFunction(lambda x, u: u + 1, 1.0).validate(x)
        with pytest.raises(ValueError):
            ReactionFunction(lambda x, u: -u, 1.0).validate(x)
        with pytest.raises(ValueError):
            ReactionFunction(lambda x, u: 3 * u, 1.0).validate(x)

    def test_fd_derivative(self):
        r = ReactionFunction(lambda x, u: np.tanh(u), 1.0)
        u = np.linspace(-2, 2, 7)
        np.testing.assert_allclose(r.derivative(None, u), 1 / np.cosh(u) ** 2, atol=1e-8)

    def test_table(self):
        r = ReactionFunction.from_table([-1, 0, 2], [-2, 0, 1])
        np.testing.assert_allclose(r(None, np.array([-2.0, -0.5, 1.0, 4.0])), [-4, -1, 0.5, 2])
        assert r.L_c == 2
        with pytest.raises(ValueError):
            ReactionFunction.from_table([0, 0], [0, 1])


class TestSemilinear:
    def test_newton_matches_picard(self, rng):
        s = assemble(equilateral_rhombus())
        n = s.mesh.n_vertices
        c = ReactionFunction.tanh()
        F = rng.uniform(0, 1, n)
        g = rng.uniform(-1, 1, n)
        newton = solve_semilinear(s, c, F, g)
        picard = picard_semilinear(s, c, F, g)
        np.testing.assert_allclose(newton.u, picard, atol=1e-11)
        assert newton.iterations <= 6

    def test_quadratic_convergence(self, rng):
        s = assemble(equilateral_rhombus())
        n = s.mesh.n_vertices
        sol = solve_semilinear(s, ReactionFunction.tanh(), 100 * rng.uniform(0, 1, n), 0.0)
        h = [r for r in sol.residual_history if r > 1e-13]
        # the error exponent roughly doubles once in the asymptotic regime
        if len(h) >= 3:
            assert math.log(h[-1]) / math.log(h[-2]) > 1.5 or h[-1] < 1e-10

    def test_linear_reduction(self, rng):
        ct = 0.7
        s = assemble(equilateral_rhombus(), c_tilde=ct)
        n = s.mesh.n_vertices
        F = rng.uniform(0, 1, n)
        g = rng.uniform(-1, 1, n)
        semi = solve_semilinear(s, ReactionFunction.linear(ct), F, g)
        lin = solve_linear(s, F, g)
        np.testing.assert_allclose(semi.u, lin.u, atol=1e-10)

    def test_nonconvergence_reported(self):
        s = assemble(equilateral_rhombus())
        with pytest.raises(ConvergenceError):
            solve_semilinear(s, ReactionFunction.tanh(), np.ones(s.mesh.n_vertices), 0.0, max_iter=0)


class TestRestriction:
    @pytest.mark.parametrize("reaction", [None, ReactionFunction.tanh()])
    def test_restrict_then_solve(self, rng, reaction):
        m = perturbed_grid_mesh(rng, n=6, jitter=0.15)
        s = assemble(m)
        n = m.n_vertices
        F = rng.uniform(0, 1, n)
        g = rng.uniform(-1, 1, n)
        sol = solve_linear(s, F, g) if reaction is None else solve_semilinear(s, reaction, F, g)
        v = int(m.partition.alpha[len(m.partition.alpha) // 2])
        sub = ring(m, v, 2)
        local = restrict_and_solve(s, sub, sol, F, reaction)
        np.testing.assert_allclose(local.u, sol.u[sub.vertex_map], atol=1e-10)


class TestEmpirical:
    def test_deterministic(self):
        m = equilateral_rhombus(4)
        r1 = empirical_dmp_test(m, "sDMP-A", trials=40, seed=3)
        r2 = empirical_dmp_test(m, "sDMP-A", trials=40, seed=3, workers=4)
        assert r1.to_dict() == r2.to_dict()
        assert r1.holds

    def test_detects_three_line_strong_failure(self):
        rep = empirical_dmp_test(three_line_mesh(5), "sDMP-A", trials=50, adversarial=True)
        assert not rep.holds
        assert all(v.kind == "strong" for v in rep.violations)
        assert empirical_dmp_test(three_line_mesh(5), "wDMP-A", trials=50, adversarial=True).holds

    def test_detects_weak_failure_near_boundary_defect(self):
        m = embed_degenerate(DegenerateSpec(0.05, "AtBoundary"))
        rep = empirical_dmp_test(m, "wDMP-A", trials=10, adversarial=True)
        assert any(v.kind == "inequality" for v in rep.violations)

    def test_check_min_principle(self):
        from dmpfem.mesh import IndexPartition

        part = IndexPartition((1,), (0, 2))
        ub = np.array([0.0, 1.0])
        viol, margin = check_min_principle(np.array([0.0, -0.5, 1.0]), part, ub, "wDMP-A")
        assert viol == [("inequality", 0.5)] and margin == -0.5
        viol, _ = check_min_principle(np.array([0.0, 0.0, 1.0]), part, ub, "sDMP-A")
        assert viol and viol[0][0] == "strong"
        viol, _ = check_min_principle(np.array([1.0, 0.5, 1.0]), part, np.array([1.0, 1.0]), "sDMP-B")
        assert viol == []

    def test_bad_args(self):
        m = equilateral_rhombus(3)
        with pytest.raises(ValueError):
            empirical_dmp_test(m, "sDMP-Z")
        with pytest.raises(ValueError):
            empirical_dmp_test(m, "sDMP-A", trials=0)
        with pytest.raises(ValueError):
            empirical_dmp_test(m, "sDMP-A", c_tilde=1.0)
