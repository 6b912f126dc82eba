"""Dense inversion, submatrix extraction and entrywise sign tests."""

from __future__ import annotations

from dataclasses import dataclass
import warnings
from typing import Literal, Sequence

import numpy as np
import scipy.linalg as sla

DEFAULT_TOL_REL = 1e-12
PIVOT_TOL_REL = 1e-13


def lu_factor(B: np.ndarray):
    """scipy LU without its singularity warning; callers check pivots themselves."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        return sla.lu_factor(B, check_finite=False)


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class InverseResult:
    inverse: np.ndarray
    residual: float  # max |B X - I|
    min_pivot: float


def invert(B: np.ndarray) -> InverseResult:
    """Inverse by partially pivoted LU.  Raises if a pivot is negligible."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError(f"square matrix required, got shape {B.shape}")
    n = B.shape[0]
    if n == 0:
        return InverseResult(np.zeros((0, 0)), 0.0, np.inf)
    if not np.all(np.isfinite(B)):
        raise ValueError("matrix has non-finite entries")
    scale = np.abs(B).max()
    if scale == 0:
        raise SingularMatrixError("zero matrix")
    lu, piv = lu_factor(B)
    pivots = np.abs(np.diag(lu))
    min_pivot = float(pivots.min())
    if min_pivot <= PIVOT_TOL_REL * scale:
        raise SingularMatrixError(f"negligible pivot {min_pivot:.3e} (scale {scale:.3e})")
    X = sla.lu_solve((lu, piv), np.eye(n), check_finite=False)
    residual = float(np.abs(B @ X - np.eye(n)).max())
    return InverseResult(X, residual, min_pivot)


def solve(B: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.shape[0] == 0:
        return np.zeros_like(np.asarray(rhs, dtype=float))
    lu, piv = lu_factor(B)
    if np.abs(np.diag(lu)).min() <= PIVOT_TOL_REL * np.abs(B).max():
        raise SingularMatrixError("negligible pivot")
    return sla.lu_solve((lu, piv), rhs, check_finite=False)


def submatrix(B: np.ndarray, rows: Sequence[int], cols: Sequence[int]) -> np.ndarray:
    return np.asarray(B)[np.ix_(np.asarray(rows, dtype=int), np.asarray(cols, dtype=int))]


Mode = Literal["positive", "negative", "nonnegative", "nonpositive"]

_VERDICT = {
    "positive": "StrictlyPositive",
    "negative": "StrictlyNegative",
    "nonnegative": "Nonnegative",
    "nonpositive": "Nonpositive",
}
_ALIASES = {"pos": "positive", "neg": "negative", "nonneg": "nonnegative", "nonpos": "nonpositive"}


@dataclass(frozen=True)
class SignReport:
    """Outcome of an entrywise sign test.

    ``verdict`` is the requested sign class when every entry passes and
    ``"Indefinite"`` otherwise.  ``worst`` is the entry closest to violating
    the requested sign (the minimum for positive modes, the maximum for
    negative ones) and ``argworst`` its (row, col).
    """

    mode: str
    verdict: str
    worst: float
    argworst: tuple[int, int]
    tol: float
    n_violations: int

    @property
    def holds(self) -> bool:
        return self.verdict != "Indefinite"

    @property
    def margin(self) -> float:
        """Worst entry measured in the requested direction; positive means satisfied."""
        return self.worst if self.mode in ("positive", "nonnegative") else -self.worst

    def to_dict(self) -> dict:
        return {"mode": self.mode, "verdict": self.verdict, "worst": self.worst,
                "argworst": list(self.argworst), "tol": self.tol,
                "n_violations": self.n_violations}


def sign_test(B: np.ndarray, mode: str, tol_rel: float = DEFAULT_TOL_REL,
              scale: float | None = None) -> SignReport:
    """Entrywise sign test.

    Strict modes need every entry beyond ``tol`` in the requested direction;
    weak modes allow entries within ``tol`` of zero.  ``tol = tol_rel * scale``
    with ``scale`` defaulting to max |B|.
    """
    mode = _ALIASES.get(mode, mode)
    if mode not in _VERDICT:
        raise ValueError(f"unknown mode {mode!r}")
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.size == 0:
        return SignReport(mode, _VERDICT[mode], float("nan"), (-1, -1), 0.0, 0)
    if scale is None:
        scale = float(np.abs(B).max())
    tol = tol_rel * scale
    signed = B if mode in ("positive", "nonnegative") else -B
    idx = np.unravel_index(int(np.argmin(signed)), B.shape)
    bad = signed <= tol if mode in ("positive", "negative") else signed < -tol
    nbad = int(bad.sum())
    verdict = _VERDICT[mode] if nbad == 0 else "Indefinite"
    return SignReport(mode, verdict, float(B[idx]), (int(idx[0]), int(idx[1])), tol, nbad)
