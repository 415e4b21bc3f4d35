"""
Conical-product (Stroud) quadrature on the reference tetrahedron and triangle.

Each rule collapses the simplex onto a cube and takes Gauss-Jacobi nodes per direction, so
n points per direction integrate polynomials of total degree 2n - 1 exactly. Rules are
returned in barycentric form with weights summing to one; multiply by the element measure.
"""
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.special import roots_jacobi


def _jacobi01(n: int, a: float) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on [0, 1] for the weight (1 - t)^a"""
    x, w = roots_jacobi(n, a, 0.0)
    return (1.0 + x) / 2.0, w / 2.0 ** (a + 1.0)


def _points_for(degree: int) -> int:
    return max(1, (int(degree) + 2) // 2)


@lru_cache(maxsize=None)
def tet_rule(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """Barycentric points (Q, 4) and weights (Q,) exact to the given total degree"""
    n = _points_for(degree)
    t1, w1 = _jacobi01(n, 2.0)
    t2, w2 = _jacobi01(n, 1.0)
    t3, w3 = _jacobi01(n, 0.0)
    s1, s2, s3 = np.meshgrid(t1, t2, t3, indexing="ij")
    W = np.einsum("i,j,k->ijk", w1, w2, w3).ravel()
    l1 = s1.ravel()
    l2 = ((1.0 - s1) * s2).ravel()
    l3 = ((1.0 - s1) * (1.0 - s2) * s3).ravel()
    bary = np.stack([1.0 - l1 - l2 - l3, l1, l2, l3], axis=1)
    W = W / W.sum()
    bary.setflags(write=False)
    W.setflags(write=False)
    return bary, W


@lru_cache(maxsize=None)
def tri_rule(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """Barycentric points (Q, 3) and weights (Q,) on a triangle"""
    n = _points_for(degree)
    t1, w1 = _jacobi01(n, 1.0)
    t2, w2 = _jacobi01(n, 0.0)
    s1, s2 = np.meshgrid(t1, t2, indexing="ij")
    W = np.outer(w1, w2).ravel()
    l1 = s1.ravel()
    l2 = ((1.0 - s1) * s2).ravel()
    bary = np.stack([1.0 - l1 - l2, l1, l2], axis=1)
    W = W / W.sum()
    bary.setflags(write=False)
    W.setflags(write=False)
    return bary, W
