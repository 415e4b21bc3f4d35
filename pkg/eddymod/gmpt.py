"""
Generalised magnetic polarizability tensor coefficients.

Block (m, p) is stored with slot layout [k, K(m), j, J(p)] (rank 2 + m + p). With
w = theta_{j J(p)} + Pi_{J(p)} e_j x xi:

  C[k,K,j,J] = -i nu alpha^{3+m+p} s_m / (2 (m+1)! p! (p+2)) . e_k . int_B xi x Pi_K w
  N[k,K,j,J] = c alpha^{3+m+p} s_m / (p! m!) . int_B Pi_K (e_k . curl(theta)/(p+2) + Pi_J delta_kj)

where s_m = (-1)^m and c = 1 - 1/mu_r. The combined tensor is -C + N. The rank 4+m+p array A
(slot layout [i, l, k, K(m), j, J(p)], skew in i, k) is an audit route back to C.

Usage:
  from eddymod.gmpt import assemble_set
  gset = assemble_set(spec, M=2)
  gset.mpt(0, 1)
"""
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import permutations
from math import factorial
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
from loguru import logger

from tensormod.errors import MissingIndex, NotSkew, OrderExceeded
from tensormod.tensorcore import (LEVI_CIVITA, DenseTensor, MultiIndex, contract_skew, enumerate_multiindices,
                                  skew_deviation, transform)

from .mesh import ObjectSpec, apply_orthogonal
from .staticlimit import polya_szego_tensor
from .transmission import (SolveConfig, ThetaSolution, moment_array, monomial_table, solve_batch,
                           source_field, volume_moment, volume_quadrature)


SKEW_TOL = 1e-10

Thetas = Dict[MultiIndex, ThetaSolution]


def block_degree(m: int, p: int) -> int:
    """Quadrature degree that integrates every block (m, p) moment exactly"""
    return m + p + 2


def _require(thetas: Thetas, p: int) -> None:
    for J in enumerate_multiindices(p + 1):
        if J not in thetas:
            raise MissingIndex(f"theta_{J.label()} is needed for p={p}")


def _sign(m: int, sign: Optional[int]) -> int:
    return (-1) ** m if sign is None else int(sign)


def _stack(per_j: Dict[MultiIndex, np.ndarray], p: int, lead: int) -> np.ndarray:
    """Stack arrays of shape (3,)*lead + (3,) keyed by J(p+1) into (3,)*lead + [q, j, J]"""
    out = np.zeros((3,) * (lead + 1) + (3,) * (p + 1), dtype=complex)
    for J, arr in per_j.items():
        out[(Ellipsis,) + J.offsets] = arr
    return out


def assemble_C(thetas: Thetas, spec: ObjectSpec, m: int, p: int, sign: Optional[int] = None) -> DenseTensor:
    """C block (m, p) from cross moments of theta + source
    """
    _require(thetas, p)
    if spec.nu == 0.0:
        return DenseTensor.zeros(2 + m + p)
    degree = block_degree(m, p)
    per_j = {J: moment_array(thetas[J], m, "cross", degree, source_field(J))
             for J in enumerate_multiindices(p + 1)}
    raw = _stack(per_j, p, m)                              # [K..., k, j, J...]
    raw = np.moveaxis(raw, m, 0)                           # [k, K..., j, J...]
    pref = -1j * spec.nu * spec.alpha ** (3 + m + p) * _sign(m, sign) / (
        2 * factorial(m + 1) * factorial(p) * (p + 2))
    return DenseTensor(pref * raw)


def assemble_N(thetas: Thetas, spec: ObjectSpec, m: int, p: int, sign: Optional[int] = None) -> DenseTensor:
    """N block (m, p): curl moments over (p+2) plus the monomial identity term
    """
    _require(thetas, p)
    if spec.contrast == 0.0:
        return DenseTensor.zeros(2 + m + p)
    degree = block_degree(m, p)
    per_j = {J: moment_array(thetas[J], m, "curl", degree) / (p + 2) for J in enumerate_multiindices(p + 1)}
    raw = np.moveaxis(_stack(per_j, p, m), m, 0)           # [k, K..., j, J...]

    # int_B Pi_K Pi_J delta_kj
    quad = volume_quadrature(spec.mesh, degree)
    pts = quad.flat_points
    mono = (monomial_table(pts, m) * quad.flat_weights) @ monomial_table(pts, p).T
    ident = np.einsum("kj,ab->kajb", np.eye(3), mono).reshape((3,) * (2 + m + p))
    pref = spec.contrast * spec.alpha ** (3 + m + p) * _sign(m, sign) / (factorial(p) * factorial(m))
    return DenseTensor(pref * (raw + ident))


def assemble_A(thetas: Thetas, spec: ObjectSpec, m: int, p: int, sign: Optional[int] = None) -> DenseTensor:
    """A block (m, p), rank 4 + m + p, slot layout [i, l, k, K(m), j, J(p)]
    """
    _require(thetas, p)
    if spec.nu == 0.0:
        return DenseTensor.zeros(4 + m + p)
    degree = block_degree(m, p)
    per_j = {J: moment_array(thetas[J], m + 1, "field", degree, source_field(J))
             for J in enumerate_multiindices(p + 1)}
    v = np.moveaxis(_stack(per_j, p, m + 1), m + 1, -1)   # [l, K..., j, J..., q]
    pref = -1j * spec.nu * _sign(m, sign) * spec.alpha ** (3 + m + p) / (
        factorial(p) * factorial(m + 1) * (p + 2))
    A = np.tensordot(LEVI_CIVITA, v, axes=([2], [v.ndim - 1]))   # [i, k, l, K..., j, J...]
    return DenseTensor(pref * np.swapaxes(A, 1, 2))


def reduce_A_to_C(A: DenseTensor, eps: Optional[np.ndarray] = None) -> DenseTensor:
    """Two half epsilon-contractions: first over (i, k), then over the result and l"""
    if A.rank < 4:
        raise NotSkew(f"A blocks have rank >= 4, got {A.rank}")
    if A.max_abs() == 0.0:
        return DenseTensor.zeros(A.rank - 2)
    dev = skew_deviation(A, 0, 2)
    if dev > SKEW_TOL:
        raise NotSkew(f"A deviates from skew symmetry in slots (0, 2) by {dev:.3e}")
    return contract_skew(contract_skew(A, 0, 2, eps), 1, 0, eps)


def assemble_C_via_A(thetas: Thetas, spec: ObjectSpec, m: int, p: int,
                     eps: Optional[np.ndarray] = None) -> DenseTensor:
    return reduce_A_to_C(assemble_A(thetas, spec, m, p), eps)


def mpt_from_thetas(thetas: Thetas, spec: ObjectSpec) -> DenseTensor:
    """Rank-2 MPT straight from the p = 0 solutions"""
    _require(thetas, 0)
    C = np.zeros((3, 3), dtype=complex)
    N = np.zeros((3, 3), dtype=complex)
    a3 = spec.alpha ** 3
    for J in enumerate_multiindices(1):
        j = J.offsets[0]
        theta = thetas[J]
        if spec.nu != 0.0:
            C[:, j] = -1j * spec.nu * a3 / 4.0 * volume_moment(theta, (), "cross", 2, source_field(J)).data
        if spec.contrast != 0.0:
            N[:, j] = spec.contrast * a3 * (np.eye(3)[j] * spec.mesh.object_volume
                                           + 0.5 * volume_moment(theta, (), "curl", 2).data)
    return DenseTensor(-C + N)


def mpt(spec: ObjectSpec, cfg: Optional[SolveConfig] = None, thetas: Optional[Thetas] = None,
        cache_dir=None) -> DenseTensor:
    """Rank-2 MPT -C + N at m = p = 0"""
    if thetas is None:
        thetas = solve_batch(spec, 0, cfg, cache_dir)
    return mpt_from_thetas(thetas, spec)


@dataclass
class GmptSet:
    """All blocks (m, p) with m + p <= order - 1

    Params
      order  : expansion order M
      blocks : (m, p) -> (C, N)
      meta   : ObjectSpec metadata and the solver config digest
    """
    order: int
    blocks: Dict[Tuple[int, int], Tuple[DenseTensor, DenseTensor]]
    meta: dict = field(default_factory=dict)

    @staticmethod
    def labels(order: int):
        return [(m, p) for m in range(order) for p in range(order - m)]

    def block(self, m: int, p: int) -> Tuple[DenseTensor, DenseTensor]:
        if (m, p) not in self.blocks:
            raise OrderExceeded(f"block ({m}, {p}) is outside a set of order {self.order}")
        return self.blocks[(m, p)]

    def mpt(self, m: int = 0, p: int = 0) -> DenseTensor:
        """Combined tensor -C + N of block (m, p)"""
        C, N = self.block(m, p)
        return -C + N

    def transform(self, Q) -> "GmptSet":
        return GmptSet(self.order, {key: (transform(C, Q), transform(N, Q)) for key, (C, N) in self.blocks.items()},
                       dict(self.meta))

    def to_json(self) -> dict:
        blocks = [{"m": m, "p": p, "C": C.to_json(), "N": N.to_json()}
                  for (m, p), (C, N) in sorted(self.blocks.items())]
        return {"meta": dict(sorted(self.meta.items())), "order": self.order, "blocks": blocks}

    @classmethod
    def from_json(cls, obj: dict) -> "GmptSet":
        blocks = {(int(b["m"]), int(b["p"])): (DenseTensor.from_json(b["C"]), DenseTensor.from_json(b["N"]))
                  for b in obj["blocks"]}
        order = int(obj.get("order", 1 + max(m + p for m, p in blocks)))
        for m, p in blocks:
            if blocks[(m, p)][0].rank != 2 + m + p:
                raise MissingIndex(f"block ({m}, {p}) has rank {blocks[(m, p)][0].rank}, expected {2 + m + p}")
        return cls(order, blocks, dict(obj.get("meta", {})))

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "GmptSet":
        return cls.from_json(json.loads(Path(path).read_text()))


def assemble_from_thetas(thetas: Thetas, spec: ObjectSpec, order: int, cfg: Optional[SolveConfig] = None,
                         sign: Optional[int] = None) -> GmptSet:
    cfg = cfg or SolveConfig()
    if order < 1:
        raise OrderExceeded(f"expansion order must be >= 1, got {order}")

    def one(label):
        m, p = label
        try:
            return label, (assemble_C(thetas, spec, m, p, sign), assemble_N(thetas, spec, m, p, sign))
        except MissingIndex as err:
            raise MissingIndex(f"block ({m}, {p}): {err}") from err

    labels = GmptSet.labels(order)
    jobs = cfg.jobs or 1
    if jobs == 1:
        blocks = dict(one(label) for label in labels)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            blocks = dict(pool.map(one, labels))
    meta = dict(spec.meta(), solver=cfg.digest(), order=order)
    logger.debug(f"Assembled {len(blocks)} GMPT blocks up to order {order}")
    return GmptSet(order, blocks, meta)


def assemble_set(spec: ObjectSpec, M: int, cfg: Optional[SolveConfig] = None, thetas: Optional[Thetas] = None,
                 cache_dir=None) -> GmptSet:
    """Solve (or reuse) theta for p <= M - 1 and assemble every block (m, p), m + p <= M - 1
    """
    if M < 1:
        raise OrderExceeded(f"expansion order must be >= 1, got {M}")
    if thetas is None:
        thetas = solve_batch(spec, M - 1, cfg, cache_dir)
    return assemble_from_thetas(thetas, spec, M, cfg)


def block_deviation(a: DenseTensor, b: DenseTensor) -> float:
    """max |a - b| relative to max |b| (absolute when b vanishes)"""
    scale = b.max_abs()
    diff = (a - b).max_abs()
    return diff / scale if scale > 0 else diff


@dataclass
class EquivarianceReport:
    deviations: Dict[Tuple[int, int], float]

    @property
    def max_deviation(self) -> float:
        return max(self.deviations.values()) if self.deviations else 0.0

    def passed(self, tol: float) -> bool:
        return self.max_deviation <= tol


def check_frame_equivariance(spec: ObjectSpec, Q, M: int, cfg: Optional[SolveConfig] = None,
                             reference: Optional[GmptSet] = None) -> EquivarianceReport:
    """Assemble on the mapped mesh and compare with the transformed set of the original"""
    reference = reference or assemble_set(spec, M, cfg)
    mapped = assemble_set(spec.replace(mesh=apply_orthogonal(spec.mesh, Q)), M, cfg)
    expected = reference.transform(Q)
    deviations = {}
    for label in GmptSet.labels(M):
        deviations[label] = max(block_deviation(mapped.blocks[label][0], expected.blocks[label][0]),
                                block_deviation(mapped.blocks[label][1], expected.blocks[label][1]))
    report = EquivarianceReport(deviations)
    logger.info(f"Frame equivariance: max block deviation {report.max_deviation:.3e}")
    return report


def polya_szego(spec: ObjectSpec, kappa: Optional[float] = None) -> DenseTensor:
    """alpha^3 T(kappa) of the physical object; kappa defaults to mu_r"""
    kappa = spec.mu_r if kappa is None else kappa
    return polya_szego_tensor(spec.mesh, kappa) * spec.alpha ** 3


@dataclass
class StaticLimit:
    mpt: DenseTensor
    polya_szego: DenseTensor

    @property
    def deviation(self) -> float:
        """Worst coefficient error relative to the largest Polya-Szego entry"""
        return block_deviation(self.mpt, self.polya_szego)


def static_limit(spec: ObjectSpec, cfg: Optional[SolveConfig] = None) -> StaticLimit:
    """MPT at omega = 0 against the independent scalar solve with kappa = mu_r"""
    static = spec.replace(omega=0.0)
    return StaticLimit(mpt(static, cfg), polya_szego(static))


def _symmetric_part(arr: np.ndarray, n: int) -> np.ndarray:
    """Average over every permutation of the leading n axes"""
    perms = list(permutations(range(n)))
    rest = list(range(n, arr.ndim))
    return sum(np.transpose(arr, list(perm) + rest) for perm in perms) / len(perms)


def gauge_residual(thetas: Thetas, spec: ObjectSpec, p: int) -> float:
    """int_B (theta_{jJ} + Pi_J e_j x xi) contracted with symmetric arrays over (j, J),
    relative to int_B |theta + source|. Vanishes up to the gauge mass for nu != 0.
    """
    _require(thetas, p)
    degree = block_degree(0, p)
    quad = volume_quadrature(spec.mesh, degree)
    per_j, size = {}, 0.0
    for J in enumerate_multiindices(p + 1):
        src = source_field(J)
        per_j[J] = moment_array(thetas[J], 0, "field", degree, src)
        values, _ = thetas[J].sample(quad)
        size += float(quad.flat_weights @ np.linalg.norm(values + src(quad.flat_points), axis=1))
    v = np.moveaxis(_stack(per_j, p, 0), 0, -1)            # [j, J..., q]
    sym = _symmetric_part(v, p + 1)
    return float(np.linalg.norm(sym)) / max(size / 3 ** (p + 1), 1e-300)


def _monomial_gradients(points: np.ndarray, J: MultiIndex) -> np.ndarray:
    """grad Pi_J at points, shape (N, 3)"""
    out = np.zeros((len(points), 3))
    for t in range(len(J)):
        rest = MultiIndex(J[:t] + J[t + 1:])
        out[:, J.offsets[t]] += np.prod(points[:, list(rest.offsets)], axis=1)
    return out


def curl_cancellation(spec: ObjectSpec, m: int, p: int) -> float:
    """int_B (grad Pi_J x e_j) . e_r xi_l Pi_K, contracted with arrays symmetric in (j, J).

    Returns the norm of the symmetric part relative to the unsymmetrised norm; zero up to
    roundoff since sum_{j,J} S_{jJ} grad Pi_J x e_j = 0 pointwise.
    """
    if p < 1:
        return 0.0
    degree = m + p + 1
    quad = volume_quadrature(spec.mesh, degree)
    pts = quad.flat_points
    weights = monomial_table(pts, m + 1) * quad.flat_weights        # [(l, K), N]
    arr = np.zeros((3,) * (p + 1) + (3 ** (m + 1), 3))
    for J in enumerate_multiindices(p + 1):
        g = np.cross(_monomial_gradients(pts, J.tail), np.eye(3)[J.head - 1])
        arr[J.offsets] = weights @ g
    total = float(np.linalg.norm(arr))
    if total == 0.0:
        return 0.0
    return float(np.linalg.norm(_symmetric_part(arr, p + 1))) / total
