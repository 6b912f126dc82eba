"""Brute-force reference computations independent of the package's formulas."""

import numpy as np
from scipy.spatial import Delaunay

from dmpfem.mesh import Mesh


def perturbed_grid_mesh(rng, n=None, jitter=0.25):
    """Delaunay triangulation of a jittered n x n grid on a random rectangle."""
    if n is None:
        n = int(rng.integers(3, 8))
    hx, hy = rng.uniform(0.5, 2.0, 2)
    xs, ys = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    pts = np.column_stack([xs.ravel(), ys.ravel()]).astype(float)
    inner = (pts[:, 0] > 0) & (pts[:, 0] < n) & (pts[:, 1] > 0) & (pts[:, 1] < n)
    pts[inner] += rng.uniform(-jitter, jitter, (inner.sum(), 2))
    pts *= [hx / n, hy / n]
    tri = Delaunay(pts)
    return Mesh(pts, tri.simplices)


def hat_coefficients(p):
    """Coefficients (a, b, c) of the three linear hats a*x + b*y + c on triangle p (3x2)."""
    V = np.column_stack([p, np.ones(3)])
    return np.linalg.solve(V, np.eye(3))  # column k: hat of vertex k


def stiffness_bruteforce(vertices, triangles):
    n = len(vertices)
    A = np.zeros((n, n))
    for t in triangles:
        p = vertices[t]
        coef = hat_coefficients(p)
        area = 0.5 * abs(np.linalg.det(np.column_stack([p[1] - p[0], p[2] - p[0]])))
        grads = coef[:2].T
        for a in range(3):
            for b in range(3):
                A[t[a], t[b]] += area * grads[a] @ grads[b]
    return A


def mass_bruteforce(vertices, triangles):
    """Edge-midpoint quadrature (exact for quadratics)."""
    n = len(vertices)
    M = np.zeros((n, n))
    for t in triangles:
        p = vertices[t]
        coef = hat_coefficients(p)
        area = 0.5 * abs(np.linalg.det(np.column_stack([p[1] - p[0], p[2] - p[0]])))
        mids = [(p[0] + p[1]) / 2, (p[1] + p[2]) / 2, (p[2] + p[0]) / 2]
        vals = np.array([[coef[0, k] * q[0] + coef[1, k] * q[1] + coef[2, k] for k in range(3)] for q in mids])
        local = area / 3 * vals.T @ vals
        for a in range(3):
            for b in range(3):
                M[t[a], t[b]] += local[a, b]
    return M
