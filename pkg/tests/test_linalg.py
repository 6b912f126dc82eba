import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dmpfem.linalg import SingularMatrixError, invert, sign_test, solve, submatrix


def stieltjes(n, rng):
    """Random irreducible symmetric M-matrix (tridiagonal skeleton plus extra couplings)."""
    off = -rng.uniform(0.1, 1.0, (n, n))
    mask = rng.random((n, n)) < 0.3
    mask |= np.eye(n, k=1, dtype=bool)
    off = np.where(mask, off, 0.0)
    off = np.triu(off, 1)
    off = off + off.T
    return off + np.diag(-off.sum(axis=1) + rng.uniform(0.01, 0.5, n))


class TestInvert:
    def test_known_inverse(self):
        B = np.array([[4.0, -1, -1], [-1, 4, 0], [-1, 0, 4]])
        X = invert(B).inverse
        assert X[0, 0] == pytest.approx(2 / 7, abs=1e-15)
        assert X.min() == pytest.approx(1 / 56, abs=1e-15)

    def test_residual_reported(self, rng):
        B = rng.normal(size=(6, 6)) + 6 * np.eye(6)
        res = invert(B)
        assert res.residual < 1e-13
        np.testing.assert_allclose(res.inverse @ B, np.eye(6), atol=1e-13)

    def test_singular(self):
        with pytest.raises(SingularMatrixError):
            invert(np.ones((3, 3)))
        with pytest.raises(SingularMatrixError):
            solve(np.zeros((2, 2)) + [[1, 1], [1, 1]], np.ones(2))

    def test_shape_and_finite(self):
        with pytest.raises(ValueError):
            invert(np.ones((2, 3)))
        with pytest.raises(ValueError):
            invert(np.array([[1.0, np.nan], [0, 1]]))

    def test_empty(self):
        assert invert(np.zeros((0, 0))).inverse.shape == (0, 0)

    def test_stieltjes_inverse_positive(self, rng):
        for n in (3, 7, 15):
            X = invert(stieltjes(n, rng)).inverse
            assert sign_test(X, "positive").holds

    def test_solve_matches(self, rng):
        B = stieltjes(8, rng)
        b = rng.normal(size=8)
        np.testing.assert_allclose(B @ solve(B, b), b, atol=1e-12)

    def test_submatrix(self):
        B = np.arange(16.0).reshape(4, 4)
        np.testing.assert_array_equal(submatrix(B, [1, 3], [0, 2]), [[4, 6], [12, 14]])


class TestSignTest:
    def test_positive(self):
        r = sign_test(np.array([[1.0, 2.0], [3.0, 0.5]]), "positive")
        assert r.verdict == "StrictlyPositive" and r.worst == 0.5 and r.argworst == (1, 1)

    def test_zero_entry_strict_vs_weak(self):
        B = np.array([[-1.0, 0.0], [-2.0, -3.0]])
        assert sign_test(B, "negative").verdict == "Indefinite"
        assert sign_test(B, "nonpositive").verdict == "Nonpositive"
        assert sign_test(B, "neg").n_violations == 1

    def test_tolerance_band(self):
        B = np.array([[1.0, 1e-14]])
        assert sign_test(B, "positive").verdict == "Indefinite"
        assert sign_test(-B, "nonpositive", tol_rel=0).verdict == "Nonpositive"
        assert sign_test(np.array([[1.0, -1e-14]]), "nonnegative").holds
        assert not sign_test(np.array([[1.0, -1e-14]]), "nonnegative", tol_rel=0).holds

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            sign_test(np.eye(2), "bogus")

    def test_margin_and_dict(self):
        r = sign_test(-np.ones((2, 2)), "negative")
        assert r.margin == 1.0
        assert r.to_dict()["verdict"] == "StrictlyNegative"

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, (4, 4), elements=st.floats(-10, 10)),
           st.floats(0, 1e-3), st.floats(0, 1e-3))
    def test_weak_tolerance_monotone(self, B, t1, t2):
        lo, hi = sorted((t1, t2))
        for mode in ("nonnegative", "nonpositive"):
            if sign_test(B, mode, lo).holds:
                assert sign_test(B, mode, hi).holds

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, (3, 5), elements=st.floats(-10, 10)), st.floats(0, 1e-3))
    def test_strict_implies_weak(self, B, tol):
        assert not sign_test(B, "positive", tol).holds or sign_test(B, "nonnegative", tol).holds
        assert not sign_test(B, "negative", tol).holds or sign_test(B, "nonpositive", tol).holds
