"""
Free-space Laplace Green's function G(x, z) = 1 / (4 pi |x - z|) and its derivative tensors

Derivatives of |r|^-1 follow the closed form over pairings of the q slots:

  d^q |r|^-1 = sum_k (-1)^(q-k) (2q-2k-1)!! |r|^-(2q-2k+1) sum_{k pairings} delta ... delta r ... r
"""
from functools import lru_cache
from typing import List, Tuple

import numpy as np

from .errors import CoincidentPoints, OrderTooLarge
from .tensorcore import DenseTensor


Q_MAX = 6
COINCIDENT_TOL = 1e-14
FOUR_PI = 4.0 * np.pi
_LETTERS = "abcdefghijkl"


def _double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def _pairings(slots: Tuple[int, ...], k: int) -> List[Tuple[Tuple[Tuple[int, int], ...], Tuple[int, ...]]]:
    """Every way to pick k disjoint unordered pairs from slots; returns (pairs, leftover)"""
    if k == 0:
        return [((), slots)]
    if len(slots) < 2 * k:
        return []
    first, rest = slots[0], slots[1:]
    out = []
    # first slot paired with some later slot
    for n, partner in enumerate(rest):
        remaining = rest[:n] + rest[n + 1:]
        for pairs, left in _pairings(remaining, k - 1):
            out.append((((first, partner),) + pairs, left))
    # first slot left unpaired
    for pairs, left in _pairings(rest, k):
        out.append((pairs, (first,) + left))
    return out


@lru_cache(maxsize=None)
def _patterns(q: int) -> Tuple[Tuple[int, float, Tuple[str, ...]], ...]:
    """Per k: (power of |r|, coefficient, einsum subscripts of each delta-r product)"""
    out = []
    out_sub = _LETTERS[:q]
    for k in range(q // 2 + 1):
        coeff = (-1) ** (q - k) * _double_factorial(2 * q - 2 * k - 1)
        subs = []
        for pairs, left in _pairings(tuple(range(q)), k):
            terms = ["z" + _LETTERS[a] + _LETTERS[b] for a, b in pairs]
            terms += ["z" + _LETTERS[c] for c in left]
            subs.append(",".join(terms) + "->z" + out_sub)
        out.append((2 * q - 2 * k + 1, float(coeff), tuple(subs)))
    return tuple(out)


def inverse_distance_derivs(r: np.ndarray, q: int) -> np.ndarray:
    """q-th derivative tensor of |r|^-1 for a batch r of shape (N, 3); returns (N,) + (3,)*q"""
    r = np.atleast_2d(np.asarray(r, dtype=float))
    dist = np.linalg.norm(r, axis=1)
    n = r.shape[0]
    if q == 0:
        return 1.0 / dist
    eye = np.broadcast_to(np.eye(3), (n, 3, 3))
    out = np.zeros((n,) + (3,) * q)
    for power, coeff, subs in _patterns(q):
        scale = coeff / dist ** power
        acc = np.zeros_like(out)
        for sub in subs:
            operands = [eye if len(t) == 3 else r for t in sub.split("->")[0].split(",")]
            acc += np.einsum(sub, *operands)
        out += scale.reshape((n,) + (1,) * q) * acc
    return out


def green_batch(x, zs: np.ndarray, q: int, q_max: int = Q_MAX) -> np.ndarray:
    """D_x^q G(x, z) for one x against many source points zs (N, 3)"""
    if q > q_max:
        raise OrderTooLarge(f"derivative order {q} exceeds q_max={q_max}")
    r = np.asarray(x, dtype=float)[None, :] - np.atleast_2d(zs)
    if np.min(np.linalg.norm(r, axis=1)) < COINCIDENT_TOL:
        raise CoincidentPoints("evaluation point coincides with a source point")
    return inverse_distance_derivs(r, q) / FOUR_PI


def green(x, z) -> float:
    r = np.asarray(x, dtype=float) - np.asarray(z, dtype=float)
    d = float(np.linalg.norm(r))
    if d < COINCIDENT_TOL:
        raise CoincidentPoints(f"|x - z| = {d:.3e}")
    return 1.0 / (FOUR_PI * d)


def green_hessian(x, z) -> DenseTensor:
    """(3 r^ r^ - I) / (4 pi |r|^3)"""
    r = np.asarray(x, dtype=float) - np.asarray(z, dtype=float)
    d = float(np.linalg.norm(r))
    if d < COINCIDENT_TOL:
        raise CoincidentPoints(f"|x - z| = {d:.3e}")
    rhat = r / d
    return DenseTensor((3.0 * np.outer(rhat, rhat) - np.eye(3)) / (FOUR_PI * d ** 3))


def green_deriv(x, z, q: int, q_max: int = Q_MAX) -> DenseTensor:
    """Exact rank-q tensor of x-derivatives of G(x, z)
    """
    if q > q_max:
        raise OrderTooLarge(f"derivative order {q} exceeds q_max={q_max}")
    r = np.asarray(x, dtype=float) - np.asarray(z, dtype=float)
    d = float(np.linalg.norm(r))
    if d < COINCIDENT_TOL:
        raise CoincidentPoints(f"|x - z| = {d:.3e}")
    return DenseTensor(inverse_distance_derivs(r[None, :], q)[0] / FOUR_PI)
