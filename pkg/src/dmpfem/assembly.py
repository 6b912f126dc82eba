"""P1 assembly of stiffness (Laplacian), mass, reaction and load terms.

Two independent stiffness paths are provided: integration of constant element
gradients (:func:`stiffness_gradient`) and the per-triangle cotangent/sine
formulas (:func:`stiffness_cotangent`).  All matrices are dense.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import math

import numpy as np

from .mesh import IndexPartition, Mesh


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    """Dense matrices of a mesh with constant reaction coefficient ``c_tilde``."""

    mesh: Mesh
    A: np.ndarray
    M: np.ndarray
    c_tilde: float = 0.0

    @cached_property
    def C(self) -> np.ndarray:
        return reaction_matrix(self.M, self.c_tilde)

    @property
    def partition(self) -> IndexPartition:
        return self.mesh.partition

    @property
    def h(self) -> float:
        return self.mesh.h

    @property
    def K(self) -> np.ndarray:
        """A + C, the operator of the linear problem."""
        return self.A + self.C if self.c_tilde else self.A

    def blocks(self) -> tuple[np.ndarray, np.ndarray]:
        """Interior-interior and interior-boundary blocks of A + C."""
        a, b = self.partition.interior, self.partition.boundary
        K = self.K
        return K[np.ix_(a, a)], K[np.ix_(a, b)]

    def with_c_tilde(self, c_tilde: float) -> "AssembledSystem":
        return AssembledSystem(self.mesh, self.A, self.M, c_tilde)


def assemble(mesh: Mesh, c_tilde: float = 0.0) -> AssembledSystem:
    return AssembledSystem(mesh, stiffness_laplace(mesh), mass_matrix(mesh), float(c_tilde))


def _scatter(mesh: Mesh, local: np.ndarray) -> np.ndarray:
    n = mesh.n_vertices
    out = np.zeros((n, n))
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1)
    cols = np.tile(t, (1, 3))
    np.add.at(out, (rows.ravel(), cols.ravel()), local.reshape(len(t), 9).ravel())
    return out


def element_gradients(mesh: Mesh) -> np.ndarray:
    """(T, 3, 2) constant gradients of the three barycentric basis functions."""
    p = mesh.vertices[mesh.triangles]
    area2 = 2 * mesh.areas
    grads = np.empty((len(p), 3, 2))
    for k in range(3):
        e = p[:, (k + 2) % 3] - p[:, (k + 1) % 3]  # edge opposite vertex k, counterclockwise
        grads[:, k, 0] = -e[:, 1] / area2
        grads[:, k, 1] = e[:, 0] / area2
    return grads


def stiffness_gradient(mesh: Mesh) -> np.ndarray:
    g = element_gradients(mesh)
    local = np.einsum("tid,tjd->tij", g, g) * mesh.areas[:, None, None]
    return _scatter(mesh, local)


def stiffness_cotangent(mesh: Mesh) -> np.ndarray:
    """Per triangle: sin(t_i) / (2 sin t_j sin t_k) on the diagonal,
    -cot(t_k) / 2 for the pair (i, j) opposite angle t_k."""
    th = mesh.angles
    s = np.sin(th)
    cot = np.cos(th) / s
    local = np.empty((len(th), 3, 3))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        local[:, i, i] = s[:, i] / (2 * s[:, j] * s[:, k])
        local[:, j, k] = local[:, k, j] = -cot[:, i] / 2
    return _scatter(mesh, local)


def stiffness_laplace(mesh: Mesh) -> np.ndarray:
    """Laplacian stiffness matrix (gradient path)."""
    return stiffness_gradient(mesh)


def offdiag_two_triangles(theta1: float, theta2: float) -> float:
    """Stiffness entry of an interior edge from its two opposite angles."""
    if not (0 < theta1 < math.pi and 0 < theta2 < math.pi):
        raise ValueError("angles must lie in (0, pi)")
    return -math.sin(theta1 + theta2) / (2 * math.sin(theta1) * math.sin(theta2))


def mass_matrix(mesh: Mesh) -> np.ndarray:
    """Consistent P1 mass matrix: area/6 on the diagonal, area/12 off it, per triangle."""
    ref = np.full((3, 3), 1.0 / 12) + np.eye(3) / 12
    local = mesh.areas[:, None, None] * ref
    return _scatter(mesh, local)


def reaction_matrix(M: np.ndarray, c_tilde: float) -> np.ndarray:
    return float(c_tilde) * M


def load_vector(system_or_mesh, f_nodal=None, dual=None) -> np.ndarray:
    """Load vector F_i = <f, phi_i>.

    Either ``f_nodal`` (nodal values, consistent-mass quadrature F = M f) or an
    explicit ``dual`` vector is given.
    """
    if (f_nodal is None) == (dual is None):
        raise ValueError("give exactly one of f_nodal or dual")
    if isinstance(system_or_mesh, AssembledSystem):
        mesh, M = system_or_mesh.mesh, system_or_mesh.M
    else:
        mesh, M = system_or_mesh, None
    n = mesh.n_vertices
    vec = np.asarray(f_nodal if dual is None else dual, dtype=float)
    if vec.shape != (n,):
        raise ValueError(f"expected a vector of length {n}, got shape {vec.shape}")
    if dual is not None:
        return vec.copy()
    if M is None:
        M = mass_matrix(mesh)
    return M @ vec


def is_nonnegative_load(F: np.ndarray, partition: IndexPartition, tol: float = 0.0) -> bool:
    return bool(np.all(F[partition.interior] >= -tol))
