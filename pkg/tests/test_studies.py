import math
from fractions import Fraction as Fr

import numpy as np
import pytest

from dmpfem.studies import (
    BRACKET_TOL,
    SWEEP_COLUMNS,
    appendix_matrices,
    bisect_sign_change,
    default_alpha_grid,
    exact_limit_matrices,
    gk_min_entry,
    limit_rate,
    limit_T0,
    patch_stiffness,
    reproduce_green_comparison,
    sweep_degenerate,
    sweep_gk,
)

# exact limit blocks
A_INV = [[Fr(2, 7), Fr(1, 14), Fr(1, 14)], [Fr(1, 14), Fr(15, 56), Fr(1, 56)], [Fr(1, 14), Fr(1, 56), Fr(15, 56)]]
C0_INV = [[6, 4, 4], [4, Fr(7, 2), Fr(5, 2)], [4, Fr(5, 2), Fr(7, 2)]]
A_INV_R0 = [[Fr(5, 28), Fr(13, 56), Fr(1, 8)], [Fr(19, 112), Fr(27, 224), Fr(7, 32)],
            [Fr(5, 112), Fr(13, 224), Fr(1, 32)]]
R0T_A_INV_R0 = [[Fr(39, 224), Fr(79, 448), Fr(11, 64)], [Fr(79, 448), Fr(183, 896), Fr(19, 128)],
                [Fr(11, 64), Fr(19, 128), Fr(25, 128)]]
D0 = [[-3, -2, -2], [-3, -2, -2], [3, 2, 2]]


class TestExactLimit:
    @pytest.mark.parametrize("key,expected", [("A_inv", A_INV), ("C0_inv", C0_INV), ("A_inv_R0", A_INV_R0),
                                              ("R0t_A_inv_R0", R0T_A_INV_R0), ("D0", D0)])
    def test_fractions(self, key, expected):
        got = exact_limit_matrices()[key]
        assert [[Fr(x) for x in row] for row in got] == [[Fr(x) for x in row] for row in expected]

    def test_t0_positive_singular(self):
        T0 = limit_T0()
        assert T0.min() > 0
        sv = np.linalg.svd(T0, compute_uv=False)
        assert sv[-1] / sv[0] < 1e-12
        # the lower blocks are R0^T times the upper ones, so rank equals that of A^-1
        assert np.linalg.matrix_rank(T0) == 3


class TestAppendix:
    @pytest.mark.parametrize("alpha", [1e-1, 1e-2, 1e-3])
    def test_two_paths_agree(self, alpha):
        b = appendix_matrices(alpha)
        assert b.checks["dual_path_rel_err"] < 1e-10
        assert b.checks["block_inverse_rel_err"] < 1e-10
        assert b.checks["S_symmetric"] and b.checks["S_tilde_symmetric"]
        np.testing.assert_allclose(b.E @ b.S_tilde @ b.E.T, b.S, rtol=0, atol=1e-10 * np.abs(b.S).max())

    def test_limit_blocks(self):
        b = appendix_matrices(1e-3)
        np.testing.assert_allclose(b.B, [[0.5, 0, 0], [0.5, 0, 0], [-0.5, 0, 0]], atol=1e-12)
        assert b.checks["R_minus_R0"] < 1e-3
        assert b.checks["alphaC_minus_C0"] < 1e-2
        np.testing.assert_allclose(b.A, [[4, -1, -1], [-1, 4, 0], [-1, 0, 4]], atol=1e-12)

    def test_alpha_c_converges_linearly(self):
        d1 = appendix_matrices(1e-2).checks["alphaC_minus_C0"]
        d2 = appendix_matrices(1e-3).checks["alphaC_minus_C0"]
        assert d2 / d1 == pytest.approx(0.1, rel=0.2)

    def test_limit_rate(self):
        slope, pts = limit_rate(np.geomspace(1e-4, 1e-2, 7))
        assert abs(slope - 1) <= 0.2
        assert pts[0][1] < pts[-1][1]


class TestDegenerateSweep:
    def test_grid(self):
        g = default_alpha_grid()
        assert len(g) == 50 and g[0] > 2.36e-4 and g[-1] == pytest.approx(math.pi / 6)

    def test_inverse_positive(self):
        recs = sweep_degenerate(default_alpha_grid(10))
        assert all(r.certified and r.min_entry > 0 for r in recs)

    def test_patch_stiffness_symmetric(self):
        S = patch_stiffness(0.2)
        np.testing.assert_allclose(S, S.T, atol=1e-14)


class TestGkSweep:
    def test_sign_pattern_g1(self):
        assert gk_min_entry(1, 0.30 * math.pi)[0] < 0
        assert gk_min_entry(1, 0.49 * math.pi)[0] > 0

    def test_bisection_g1(self):
        lo, hi = bisect_sign_change(lambda t: gk_min_entry(1, t)[0], 0.30 * math.pi, 0.49 * math.pi)
        assert hi - lo <= BRACKET_TOL
        assert 0.944 < lo < hi < 0.946

    def test_bisect_needs_sign_change(self):
        with pytest.raises(ValueError):
            bisect_sign_change(lambda t: 1.0, 0, 1)

    def test_sweep_records(self):
        recs, changes = sweep_gk([1], np.linspace(0.3, 0.49, 5) * math.pi)
        assert len(recs) == 5 and len(changes) == 1
        assert len(recs[0].as_row()) == len(SWEEP_COLUMNS)
        c = changes[0]
        assert c.min_lo < 0 < c.min_hi

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            sweep_gk([1], [2.0])


class TestGreen:
    def test_comparison(self):
        g = reproduce_green_comparison()
        assert g.inside_positive and g.inside_min_interior > 1e-12
        assert g.boundary_negative_at_N and g.boundary_value_at_N < -1e-12
        assert g.to_dict()["at_boundary"]["negative_at_N"] is True
