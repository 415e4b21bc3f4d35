"""
Multi-index bookkeeping and dense complex tensors over R^3

Usage:
  from tensormod import DenseTensor, MultiIndex, transform, contract_skew
  T = DenseTensor.zeros(2)
  T2 = transform(T, Q)

Axis labels are 1, 2, 3 in every public signature and map to offsets 0, 1, 2 in storage.
Slots are stored row-major in lexicographic multi-index order.
"""
from itertools import permutations, product
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .errors import NonOrthogonal, SlotOutOfRange


ORTHO_TOL = 1e-12


def _levi_civita() -> np.ndarray:
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[i, k, j] = -1.0
    return eps


LEVI_CIVITA = _levi_civita()
LEVI_CIVITA.setflags(write=False)


class MultiIndex(tuple):
    """Ordered tuple of axis labels in {1, 2, 3}; the empty tuple is allowed.
    """
    def __new__(cls, entries: Iterable[int] = ()):
        entries = tuple(int(e) for e in entries)
        for e in entries:
            if e not in (1, 2, 3):
                raise SlotOutOfRange(f"axis label {e} is not in (1, 2, 3)")
        return super().__new__(cls, entries)

    def __repr__(self) -> str:
        return "MultiIndex(" + ",".join(str(e) for e in self) + ")"

    @property
    def offsets(self) -> tuple:
        return tuple(e - 1 for e in self)

    @property
    def head(self) -> int:
        """Vector label j of a theta index J(p+1)"""
        return self[0]

    @property
    def tail(self) -> "MultiIndex":
        return MultiIndex(self[1:])

    def counts(self) -> tuple:
        """Exponents (a, b, c) of the monomial xi_1^a xi_2^b xi_3^c"""
        return tuple(self.count(axis) for axis in (1, 2, 3))

    def label(self) -> str:
        return "".join(str(e) for e in self) or "0"

    @classmethod
    def parse(cls, text: str) -> "MultiIndex":
        return cls(()) if text in ("", "0") else cls(int(c) for c in text)


def alternating(i: int, j: int, k: int) -> int:
    """Alternating symbol on axis labels: +1 cyclic, -1 anti-cyclic, 0 on repeats
    """
    return int(LEVI_CIVITA[MultiIndex((i, j, k)).offsets])


def monomial(xi: Sequence[float], J: Sequence[int]) -> float:
    """Product of the coordinates of xi over J; 1 for the empty tuple
    """
    xi = np.asarray(xi)
    out = 1.0
    for e in MultiIndex(J):
        out = out * xi[..., e - 1]
    return out


def monomials(points: np.ndarray, J: Sequence[int]) -> np.ndarray:
    """Vectorized monomial over an (N, 3) array of points"""
    points = np.asarray(points, dtype=float)
    out = np.ones(points.shape[0])
    for e in MultiIndex(J):
        out = out * points[:, e - 1]
    return out


def enumerate_multiindices(p: int) -> List[MultiIndex]:
    if p < 0:
        raise SlotOutOfRange(f"multi-index length must be non-negative, got {p}")
    return [MultiIndex(t) for t in product((1, 2, 3), repeat=p)]


class DenseTensor:
    """Rank-r complex array over 3^r slots.

    The backing array is read-only once constructed, so tensors can be shared freely
    between threads.

    Params
      data : array-like of shape (3,)*rank, or a flat array of 3^rank values
      rank : required when data is flat
    """
    __slots__ = ("_data",)

    def __init__(self, data, rank: Optional[int] = None):
        arr = np.array(data, dtype=complex)
        if rank is not None:
            if arr.size != 3 ** rank:
                raise SlotOutOfRange(f"rank {rank} tensor needs {3 ** rank} values, got {arr.size}")
            arr = arr.reshape((3,) * rank)
        elif any(n != 3 for n in arr.shape):
            raise SlotOutOfRange(f"every slot must have extent 3, got shape {arr.shape}")
        arr.setflags(write=False)
        self._data = arr

    @classmethod
    def zeros(cls, rank: int) -> "DenseTensor":
        return cls(np.zeros((3,) * rank, dtype=complex))

    @property
    def rank(self) -> int:
        return self._data.ndim

    @property
    def data(self) -> np.ndarray:
        return self._data

    def flat(self) -> np.ndarray:
        return self._data.reshape(-1)

    def __getitem__(self, index: Sequence[int]) -> complex:
        index = MultiIndex(index)
        if len(index) != self.rank:
            raise SlotOutOfRange(f"rank {self.rank} tensor addressed with {len(index)} labels")
        return complex(self._data[index.offsets])

    def __add__(self, other: "DenseTensor") -> "DenseTensor":
        return DenseTensor(self._data + other.data)

    def __sub__(self, other: "DenseTensor") -> "DenseTensor":
        return DenseTensor(self._data - other.data)

    def __neg__(self) -> "DenseTensor":
        return DenseTensor(-self._data)

    def __mul__(self, scalar) -> "DenseTensor":
        return DenseTensor(self._data * scalar)

    __rmul__ = __mul__

    def conj(self) -> "DenseTensor":
        return DenseTensor(np.conj(self._data))

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self._data))) if self._data.size else 0.0

    def allclose(self, other: "DenseTensor", rtol: float = 1e-12, atol: float = 0.0) -> bool:
        return self.rank == other.rank and np.allclose(self._data, other.data, rtol=rtol, atol=atol)

    def symmetrize(self, slots: Sequence[int]) -> "DenseTensor":
        """Average over every permutation of the given slot positions"""
        slots = list(slots)
        if len(slots) < 2:
            return self
        acc = np.zeros_like(self._data)
        perms = list(permutations(slots))
        for perm in perms:
            axes = list(range(self.rank))
            for src, dst in zip(slots, perm):
                axes[src] = dst
            acc = acc + np.transpose(self._data, axes)
        return DenseTensor(acc / len(perms))

    def to_json(self) -> dict:
        return {"rank": self.rank,
                "data": [[float(v.real), float(v.imag)] for v in self.flat()]}

    @classmethod
    def from_json(cls, obj: dict) -> "DenseTensor":
        pairs = np.asarray(obj["data"], dtype=float).reshape(-1, 2)
        return cls(pairs[:, 0] + 1j * pairs[:, 1], rank=int(obj["rank"]))

    def __repr__(self) -> str:
        return f"DenseTensor(rank={self.rank}, max_abs={self.max_abs():.3e})"


def check_orthogonal(Q, tol: float = ORTHO_TOL) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (3, 3):
        raise NonOrthogonal(f"expected a 3x3 matrix, got shape {Q.shape}")
    dev = float(np.max(np.abs(Q.T @ Q - np.eye(3))))
    if dev > tol:
        raise NonOrthogonal(f"Q^T Q deviates from I by {dev:.3e} (tolerance {tol:.0e})")
    return Q


def transform(T: DenseTensor, Q) -> DenseTensor:
    """Contract every slot of T with one copy of Q: T'_I = prod_r Q_{i_r i'_r} T_I'
    """
    Q = check_orthogonal(Q)
    out = T.data
    for axis in range(T.rank):
        out = np.moveaxis(np.tensordot(Q, out, axes=([1], [axis])), 0, axis)
    return DenseTensor(out)


def _check_slots(rank: int, slot_a: int, slot_b: int) -> None:
    if rank < 2:
        raise SlotOutOfRange(f"skew contraction needs rank >= 2, got {rank}")
    for s in (slot_a, slot_b):
        if not 0 <= s < rank:
            raise SlotOutOfRange(f"slot {s} out of range for rank {rank}")
    if slot_a == slot_b:
        raise SlotOutOfRange("skew contraction needs two distinct slots")


def contract_skew(T: DenseTensor, slot_a: int, slot_b: int, eps: Optional[np.ndarray] = None) -> DenseTensor:
    """Half alternating-symbol contraction of two slots.

    out[..r..] = 1/2 sum_{i,k} eps_{r i k} T[..i@slot_a..k@slot_b..], with the new slot r placed at
    min(slot_a, slot_b) and every other slot kept in order. Slots are 0-based.
    """
    _check_slots(T.rank, slot_a, slot_b)
    eps = LEVI_CIVITA if eps is None else np.asarray(eps)
    moved = np.moveaxis(T.data, (slot_a, slot_b), (0, 1))
    v = 0.5 * np.tensordot(eps, moved, axes=([1, 2], [0, 1]))
    return DenseTensor(np.moveaxis(v, 0, min(slot_a, slot_b)))


def expand_skew(T: DenseTensor, slot: int, eps: Optional[np.ndarray] = None) -> DenseTensor:
    """Inverse of contract_skew(., slot, slot + 1) on tensors skew in that slot pair.

    out[..i@slot, k@slot+1..] = sum_r eps_{i k r} T[..r@slot..]
    """
    if not 0 <= slot < max(T.rank, 1):
        raise SlotOutOfRange(f"slot {slot} out of range for rank {T.rank}")
    eps = LEVI_CIVITA if eps is None else np.asarray(eps)
    moved = np.moveaxis(T.data, slot, 0)
    out = np.tensordot(eps, moved, axes=([2], [0]))
    return DenseTensor(np.moveaxis(out, (0, 1), (slot, slot + 1)))


def skew_deviation(T: DenseTensor, slot_a: int, slot_b: int) -> float:
    """Relative size of the part of T symmetric in the two slots"""
    _check_slots(T.rank, slot_a, slot_b)
    swapped = np.swapaxes(T.data, slot_a, slot_b)
    scale = max(T.max_abs(), 1e-300)
    return float(np.max(np.abs(T.data + swapped))) / scale

