"""
Edge-element solves of the theta transmission problems and of the scaled reduced potential.

Dimensionless weak form (everything multiplied by mu0), for theta = theta_{j J(p)}:

  int mu_r^-1 curl(theta) . curl(v) - i nu int_B theta . v + eps int_ext theta . v
      = i nu int_B Pi_J(xi) (e_j x xi) . v  -  (p + 2) c int_Gamma Pi_J(xi) (n x e_j) . v

with c = 1 - 1/mu_r, n pointing out of B and n x theta = 0 on the FAR truncation.
eps is a small exterior mass term standing in for the divergence gauge (also added in B when
nu = 0). Lowest-order Whitney edge elements; global edges run from lower to higher vertex id.
"""
import hashlib
import inspect
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from functools import cached_property, lru_cache
from math import factorial
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from loguru import logger
from scipy.sparse.linalg import LinearOperator, bicgstab, gmres, spilu, splu

from tensormod.errors import InvalidConfig, MeshTooCoarse, MissingIndex, NonConvergence, IntegrityError
from tensormod.polyfield import PolyField, uncurl
from tensormod.tensorcore import DenseTensor, MultiIndex, enumerate_multiindices, monomials

from .mesh import LOCAL_EDGES, LOCAL_FACES, ObjectSpec, TetMesh
from .quadrature import tet_rule, tri_rule


CACHE_MAGIC = b"GMPTTHETA 1\n"
COARSE_RATIO = 0.75


@dataclass(frozen=True)
class SolveConfig:
    """Discretisation and linear-solver knobs.

    Params
      epsilon          : exterior gauge mass, relative to the stiffness/mass scale
      tol              : Krylov relative-residual tolerance
      maxiter          : Krylov iteration cap
      r_far            : truncation half-width in object diameters (fixtures)
      quad_order       : minimum quadrature degree for loads and moments
      direct_threshold : largest free-dof count factorised directly
      krylov           : "gmres" or "bicgstab"
      jobs             : worker threads for right-hand sides (None = 1)
      strict           : raise advisory errors instead of logging them
    """
    epsilon: float = 1e-8
    tol: float = 1e-10
    maxiter: int = 2000
    r_far: float = 5.0
    quad_order: int = 4
    direct_threshold: int = 200000
    krylov: str = "gmres"
    jobs: Optional[int] = None
    strict: bool = False

    def __post_init__(self):
        for name in ("epsilon", "tol", "maxiter", "r_far", "quad_order", "direct_threshold"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"SolveConfig.{name} must be positive, got {getattr(self, name)}")
        if self.krylov not in ("gmres", "bicgstab"):
            raise InvalidConfig(f"Invalid krylov '{self.krylov}'. Accepted values are ['gmres', 'bicgstab']")
        if self.jobs is not None and self.jobs < 1:
            raise InvalidConfig(f"jobs must be >= 1, got {self.jobs}")

    def replace(self, **kwargs) -> "SolveConfig":
        kws = asdict(self)
        for _k, _v in kwargs.items():
            if _k not in kws:
                raise InvalidConfig(f"Invalid option '{_k}'. Accepted options are {list(kws)}")
            kws[_k] = _v
        return SolveConfig(**kws)

    def digest(self) -> str:
        """Hash of the options that change the discrete solution"""
        key = f"eps={self.epsilon!r};tol={self.tol!r};thr={self.direct_threshold};kry={self.krylov}"
        return hashlib.sha256(key.encode()).hexdigest()[:16]


# ------------------------------------------------------------ Whitney basis #

def whitney(grads: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Local basis lambda_a grad(lambda_b) - lambda_b grad(lambda_a).

    grads (T, 4, 3) and bary (T, Q, 4) or (Q, 4); returns (T, Q, 6, 3)
    """
    a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    if bary.ndim == 2:
        bary = np.broadcast_to(bary, (grads.shape[0],) + bary.shape)
    return (bary[:, :, a, None] * grads[:, None, b, :]
            - bary[:, :, b, None] * grads[:, None, a, :])


def whitney_curls(grads: np.ndarray) -> np.ndarray:
    """Constant curls 2 grad(lambda_a) x grad(lambda_b), shape (T, 6, 3)"""
    a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    return 2.0 * np.cross(grads[:, a, :], grads[:, b, :])


def element_matrices(mesh: TetMesh):
    """Per-tet curl-curl and mass matrices in the local (unsigned) basis, (M, 6, 6) each"""
    vol = mesh.volumes
    curls = whitney_curls(mesh.grads)
    K = np.einsum("tid,tjd->tij", curls, curls) * vol[:, None, None]
    g = np.einsum("tad,tbd->tab", mesh.grads, mesh.grads)
    L = (np.ones((4, 4)) + np.eye(4)) / 20.0
    a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    ai, aj = a[:, None], a[None, :]
    bi, bj = b[:, None], b[None, :]
    M = (L[ai, aj] * g[:, bi, bj] - L[ai, bj] * g[:, bi, aj]
         - L[bi, aj] * g[:, ai, bj] + L[bi, bj] * g[:, ai, aj]) * vol[:, None, None]
    return K, M


def _assemble(mesh: TetMesh, local: np.ndarray, weights: np.ndarray) -> sp.csr_matrix:
    s = mesh.tet_signs
    data = local * (s[:, :, None] * s[:, None, :]) * weights[:, None, None]
    rows = np.repeat(mesh.tet_edges, 6, axis=1).ravel()
    cols = np.tile(mesh.tet_edges, (1, 6)).ravel()
    n = len(mesh.edges)
    return sp.coo_matrix((data.ravel(), (rows, cols)), shape=(n, n)).tocsr()


# ----------------------------------------------------------- quadrature data #

class VolumeQuadrature:
    """Quadrature points of the object region with the Whitney basis sampled on them"""
    def __init__(self, mesh: TetMesh, degree: int):
        bary, w = tet_rule(degree)
        tets = np.nonzero(mesh.object_mask)[0]
        self.degree = degree
        self.tets = tets
        verts = mesh.vertices[mesh.tets[tets]]                           # (T, 4, 3)
        self.points = np.einsum("qa,tad->tqd", bary, verts)              # (T, Q, 3)
        self.weights = mesh.volumes[tets][:, None] * w[None, :]          # (T, Q)
        self.basis = whitney(mesh.grads[tets], bary)                    # (T, Q, 6, 3)
        self.curls = whitney_curls(mesh.grads[tets])                    # (T, 6, 3)
        self.edges = mesh.tet_edges[tets]
        self.signs = mesh.tet_signs[tets]

    @cached_property
    def flat_points(self) -> np.ndarray:
        return self.points.reshape(-1, 3)

    @cached_property
    def flat_weights(self) -> np.ndarray:
        return self.weights.reshape(-1)


class SurfaceQuadrature:
    """Quadrature on Gamma, sampled from the object-side (or exterior-side) tets"""
    def __init__(self, mesh: TetMesh, degree: int, side: str = "inner"):
        tri, w = tri_rule(degree)
        gamma = mesh.gamma
        tets = gamma["tet"] if side == "inner" else gamma["outer_tet"]
        local = gamma["local"] if side == "inner" else gamma["outer_local"]
        G, Q = len(tets), len(w)
        bary = np.zeros((G, Q, 4))
        bary[np.arange(G)[:, None, None], np.arange(Q)[None, :, None], LOCAL_FACES[local][:, None, :]] = tri[None, :, :]
        verts = mesh.vertices[mesh.tets[tets]]
        self.points = np.einsum("gqa,gad->gqd", bary, verts)
        self.weights = gamma["area"][:, None] * w[None, :]
        self.normals = gamma["normal"]
        self.basis = whitney(mesh.grads[tets], bary)
        self.edges = mesh.tet_edges[tets]
        self.signs = mesh.tet_signs[tets]


@lru_cache(maxsize=16)
def volume_quadrature(mesh: TetMesh, degree: int) -> VolumeQuadrature:
    return VolumeQuadrature(mesh, degree)


@lru_cache(maxsize=16)
def surface_quadrature(mesh: TetMesh, degree: int, side: str = "inner") -> SurfaceQuadrature:
    return SurfaceQuadrature(mesh, degree, side)


def _scatter(n: int, edges: np.ndarray, signs: np.ndarray, local: np.ndarray) -> np.ndarray:
    out = np.zeros(n, dtype=complex)
    np.add.at(out, edges.ravel(), (signs * local).ravel())
    return out


def volume_load(mesh: TetMesh, source: Callable[[np.ndarray], np.ndarray], degree: int) -> np.ndarray:
    """int_B f . w_e for every edge; source maps (N, 3) points to (N, 3) vectors"""
    quad = volume_quadrature(mesh, degree)
    T, Q = quad.weights.shape
    f = np.asarray(source(quad.flat_points)).reshape(T, Q, 3)
    local = np.einsum("tq,tqd,tqed->te", quad.weights, f, quad.basis)
    return _scatter(len(mesh.edges), quad.edges, quad.signs, local)


def surface_load(mesh: TetMesh, source: Callable[[np.ndarray, np.ndarray], np.ndarray], degree: int) -> np.ndarray:
    """int_Gamma g . w_e; source maps (points (N, 3), normals (N, 3)) to (N, 3) vectors"""
    quad = surface_quadrature(mesh, degree)
    G, Q = quad.weights.shape
    normals = np.repeat(quad.normals, Q, axis=0)
    g = np.asarray(source(quad.points.reshape(-1, 3), normals)).reshape(G, Q, 3)
    local = np.einsum("gq,gqd,gqed->ge", quad.weights, g, quad.basis)
    return _scatter(len(mesh.edges), quad.edges, quad.signs, local)


def theta_load(spec: ObjectSpec, J: MultiIndex, cfg: SolveConfig) -> np.ndarray:
    """Right-hand side of the theta_{J(p+1)} problem"""
    j, tail = J.head - 1, J.tail
    p = len(tail)
    e_j = np.eye(3)[j]
    rhs = np.zeros(len(spec.mesh.edges), dtype=complex)
    if spec.nu != 0.0:
        rhs += 1j * spec.nu * volume_load(spec.mesh, source_field(J), max(cfg.quad_order, p + 2))
    if spec.contrast != 0.0:
        surf = lambda x, n: monomials(x, tail)[:, None] * np.cross(n, e_j)
        rhs -= (p + 2) * spec.contrast * surface_load(spec.mesh, surf, max(cfg.quad_order, p + 1))
    return rhs


# ------------------------------------------------------------------ fields #

class EdgeField:
    """Complex edge-element field on a mesh"""
    def __init__(self, mesh: TetMesh, dofs: np.ndarray):
        self.mesh = mesh
        self.dofs = np.array(dofs, dtype=complex)
        self.dofs.setflags(write=False)
        self._samples = {}

    def local_dofs(self, tets: np.ndarray) -> np.ndarray:
        return self.mesh.tet_signs[tets] * self.dofs[self.mesh.tet_edges[tets]]

    def curls(self, tets: Optional[np.ndarray] = None) -> np.ndarray:
        """Constant curl per tet, (T, 3)"""
        tets = np.arange(len(self.mesh.tets)) if tets is None else tets
        return np.einsum("te,ted->td", self.local_dofs(tets), whitney_curls(self.mesh.grads[tets]))

    def sample(self, quad: VolumeQuadrature):
        """Field and curl at the object quadrature points, both (N, 3)"""
        if quad.degree in self._samples:
            return self._samples[quad.degree]
        u = self.local_dofs(quad.tets)
        values = np.einsum("te,tqed->tqd", u, quad.basis).reshape(-1, 3)
        curls = np.einsum("te,ted->td", u, quad.curls)
        curls = np.repeat(curls, quad.points.shape[1], axis=0)
        self._samples[quad.degree] = (values, curls)
        return values, curls

    def __add__(self, other: "EdgeField") -> "EdgeField":
        return EdgeField(self.mesh, self.dofs + other.dofs)

    def __mul__(self, scalar) -> "EdgeField":
        return EdgeField(self.mesh, self.dofs * scalar)

    __rmul__ = __mul__


class ThetaSolution(EdgeField):
    """theta_{J(p+1)} on the mesh of an ObjectSpec; index J = (j, J(p))"""
    def __init__(self, mesh: TetMesh, dofs: np.ndarray, index: MultiIndex, spec: ObjectSpec,
                 residual: float = 0.0):
        super().__init__(mesh, dofs)
        self.index = MultiIndex(index)
        self.spec = spec
        self.residual = float(residual)

    def __repr__(self) -> str:
        return f"ThetaSolution({self.index.label()}, ndof={len(self.dofs)}, residual={self.residual:.2e})"


class AdeltaField(EdgeField):
    """Discrete scaled reduced potential A_Delta with the background data it was built from"""
    def __init__(self, mesh: TetMesh, dofs: np.ndarray, h0: PolyField, spec: ObjectSpec, degree: int):
        super().__init__(mesh, dofs)
        self.h0 = h0
        self.spec = spec
        self.degree = degree


# ---------------------------------------------------------------- operator #

def _krylov_tol_kwargs(solver, tol: float) -> dict:
    params = inspect.signature(solver).parameters
    return {"rtol": tol, "atol": 0.0} if "rtol" in params else {"tol": tol, "atol": 0.0}


class TransmissionOperator:
    """Assembled and factorised system for one (mesh, nu, mu_r); shared by every right-hand side
    """
    def __init__(self, spec: ObjectSpec, cfg: SolveConfig):
        self.spec = spec
        self.cfg = cfg
        mesh = spec.mesh
        Kloc, Mloc = element_matrices(mesh)
        obj = mesh.object_mask.astype(float)
        ext = 1.0 - obj
        inv_mu = np.where(mesh.object_mask, 1.0 / spec.mu_r, 1.0)
        K = _assemble(mesh, Kloc, inv_mu)
        M_obj = _assemble(mesh, Mloc, obj)
        M_ext = _assemble(mesh, Mloc, ext)
        self.eps = cfg.epsilon * np.abs(Kloc).max() / np.abs(Mloc).max()
        A = K.astype(complex) + self.eps * M_ext
        if spec.nu != 0.0:
            A = A - 1j * spec.nu * M_obj
        else:
            A = A + self.eps * M_obj
        self.free = np.setdiff1d(np.arange(len(mesh.edges)), mesh.far_edges)
        self.A = A[self.free][:, self.free].tocsc()
        self._lu = None
        self._ilu = None
        self.direct = len(self.free) <= cfg.direct_threshold
        logger.debug(f"Transmission operator: {len(self.free)} free dofs, nu={spec.nu:.4g}, "
                     f"mu_r={spec.mu_r:.4g}, eps={self.eps:.3e}, {'direct' if self.direct else cfg.krylov}")
        if mesh.mesh_size > COARSE_RATIO * mesh.diameter:
            message = f"object resolved by edges of length {mesh.mesh_size:.3g} against diameter {mesh.diameter:.3g}"
            if cfg.strict:
                raise MeshTooCoarse(message)
            logger.warning(message)

    def _factor(self):
        if self.direct and self._lu is None:
            self._lu = splu(self.A)
        elif not self.direct and self._ilu is None:
            self._ilu = spilu(self.A, drop_tol=1e-5, fill_factor=20)

    def solve(self, rhs: np.ndarray, index=None):
        """Returns (full dof vector, relative residual)"""
        self._factor()
        b = rhs[self.free]
        norm_b = np.linalg.norm(b)
        x = np.zeros(len(self.spec.mesh.edges), dtype=complex)
        if norm_b == 0.0:
            return x, 0.0
        if self.direct:
            xf = self._lu.solve(b)
        else:
            solver = gmres if self.cfg.krylov == "gmres" else bicgstab
            count = [0]
            kwargs = _krylov_tol_kwargs(solver, self.cfg.tol)

            def tick(_):
                count[0] += 1

            precond = LinearOperator(self.A.shape, self._ilu.solve, dtype=complex)
            xf, info = solver(self.A, b, M=precond, maxiter=self.cfg.maxiter, callback=tick, **kwargs)
            if info != 0:
                res = float(np.linalg.norm(self.A @ xf - b) / norm_b)
                raise NonConvergence(count[0], res, index)
        x[self.free] = xf
        residual = float(np.linalg.norm(self.A @ xf - b) / norm_b)
        return x, residual

    def solve_many(self, rhs_list: Sequence[np.ndarray], labels: Optional[Sequence] = None):
        self._factor()
        labels = list(labels) if labels is not None else [None] * len(rhs_list)
        jobs = self.cfg.jobs or 1
        if jobs == 1:
            return [self.solve(b, lab) for b, lab in zip(rhs_list, labels)]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(self.solve, rhs_list, labels))


# ------------------------------------------------------------------ caching #

def cache_key(spec: ObjectSpec, cfg: SolveConfig) -> str:
    return hashlib.sha256((spec.material_key() + cfg.digest()).encode()).hexdigest()


def cache_file(cache_dir: Union[str, Path], spec: ObjectSpec, cfg: SolveConfig, J: MultiIndex) -> Path:
    return Path(cache_dir) / cache_key(spec, cfg)[:16] / f"theta_{J.label()}.bin"


def save_theta(path: Union[str, Path], theta: ThetaSolution, key: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"spec": key, "index": theta.index.label(), "ndof": len(theta.dofs), "residual": theta.residual}
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(np.ascontiguousarray(theta.dofs, dtype="<c16").tobytes())


def load_theta(path: Union[str, Path], spec: ObjectSpec, key: str) -> Optional[ThetaSolution]:
    """Cached theta, or None when the file is absent or keyed to another mesh/material"""
    path = Path(path)
    if not path.exists():
        return None
    with open(path, "rb") as fh:
        if fh.readline() != CACHE_MAGIC:
            raise IntegrityError(f"{path} is not a theta cache file")
        header = json.loads(fh.readline())
        raw = fh.read()
    if header.get("spec") != key or header.get("ndof") != len(spec.mesh.edges):
        logger.info(f"Stale theta cache {path.name}; recomputing")
        return None
    dofs = np.frombuffer(raw, dtype="<c16")
    if len(dofs) != header["ndof"]:
        raise IntegrityError(f"{path} is truncated: {len(dofs)} of {header['ndof']} dofs")
    return ThetaSolution(spec.mesh, dofs, MultiIndex.parse(header["index"]), spec, header["residual"])


# --------------------------------------------------------------- operations #

def solve_theta(spec: ObjectSpec, J: Sequence[int], cfg: Optional[SolveConfig] = None,
                operator: Optional[TransmissionOperator] = None) -> ThetaSolution:
    """Weak solution theta_{J(p+1)} on the truncated domain
    """
    cfg = cfg or SolveConfig()
    J = MultiIndex(J)
    if len(J) < 1:
        raise MissingIndex("theta problems are indexed by J(p+1) with p + 1 >= 1")
    op = operator or TransmissionOperator(spec, cfg)
    dofs, residual = op.solve(theta_load(spec, J, cfg), J)
    logger.debug(f"theta_{J.label()}: residual {residual:.2e}")
    return ThetaSolution(spec.mesh, dofs, J, spec, residual)


def solve_batch(spec: ObjectSpec, max_p: int, cfg: Optional[SolveConfig] = None,
                cache_dir: Optional[Union[str, Path]] = None) -> Dict[MultiIndex, ThetaSolution]:
    """All theta_{J(p+1)} for p = 0..max_p against one factorisation
    """
    cfg = cfg or SolveConfig()
    if max_p < 0:
        raise MissingIndex(f"max_p must be non-negative, got {max_p}")
    key = cache_key(spec, cfg)
    out: Dict[MultiIndex, ThetaSolution] = {}
    todo: List[MultiIndex] = []
    for p in range(max_p + 1):
        for J in enumerate_multiindices(p + 1):
            cached = load_theta(cache_file(cache_dir, spec, cfg, J), spec, key) if cache_dir else None
            if cached is not None:
                out[J] = cached
            else:
                todo.append(J)
    if cache_dir and not todo:
        logger.info(f"Theta cache hit for all {len(out)} indices")
    if todo:
        op = TransmissionOperator(spec, cfg)
        results = op.solve_many([theta_load(spec, J, cfg) for J in todo], todo)
        for J, (dofs, residual) in zip(todo, results):
            theta = ThetaSolution(spec.mesh, dofs, J, spec, residual)
            out[J] = theta
            if cache_dir:
                save_theta(cache_file(cache_dir, spec, cfg, J), theta, key)
        logger.info(f"Solved {len(todo)} theta problems (max residual {max(r for _, r in results):.2e})")
    return {J: out[J] for p in range(max_p + 1) for J in enumerate_multiindices(p + 1)}


def load_batch(spec: ObjectSpec, max_p: int, cfg: Optional[SolveConfig] = None,
               cache_dir: Union[str, Path] = ".") -> Dict[MultiIndex, ThetaSolution]:
    """Cached solutions only; any absent index raises MissingIndex"""
    cfg = cfg or SolveConfig()
    key = cache_key(spec, cfg)
    out = {}
    for p in range(max_p + 1):
        for J in enumerate_multiindices(p + 1):
            theta = load_theta(cache_file(cache_dir, spec, cfg, J), spec, key)
            if theta is None:
                raise MissingIndex(f"theta_{J.label()} is not cached in {cache_dir}; run `gmpt solve` first")
            out[J] = theta
    return out


def adelta_weight(p: int, alpha: float, mu0: float) -> float:
    return mu0 * alpha ** p / (factorial(p) * (p + 2))


def superpose_adelta(thetas: Dict[MultiIndex, ThetaSolution], H0: PolyField, spec: ObjectSpec,
                     P: int) -> AdeltaField:
    """A_Delta = sum_p mu0 alpha^p / (p! (p+2)) (D^p H0(z))_{J(p+1)} theta_{J(p+1)}
    """
    dofs = np.zeros(len(spec.mesh.edges), dtype=complex)
    for p in range(P + 1):
        coeff = H0.tensor(p).data
        w = adelta_weight(p, spec.alpha, spec.mu0)
        for J in enumerate_multiindices(p + 1):
            c = coeff[J.offsets]
            if c == 0:
                continue
            if J not in thetas:
                raise MissingIndex(f"theta_{J.label()} is needed for background order {p}")
            dofs += w * c * thetas[J].dofs
    return AdeltaField(spec.mesh, dofs, H0, spec, P)


def solve_adelta_direct(spec: ObjectSpec, H0: PolyField, P: int, cfg: Optional[SolveConfig] = None) -> AdeltaField:
    """One solve of the reduced-potential problem with the combined polynomial data:
    source i nu mu0 t(xi) in B with curl t = H0(z + alpha xi), interface load -c mu0 n x H0(z + alpha xi)
    """
    cfg = cfg or SolveConfig()
    s = H0.truncate(P).scaled(spec.alpha)
    t = uncurl(s)
    mesh = spec.mesh
    rhs = np.zeros(len(mesh.edges), dtype=complex)
    if spec.nu != 0.0:
        rhs += 1j * spec.nu * spec.mu0 * volume_load(mesh, t.eval, max(cfg.quad_order, P + 2))
    if spec.contrast != 0.0:
        surf = lambda x, n: np.cross(n, s.eval(x))
        rhs -= spec.contrast * spec.mu0 * surface_load(mesh, surf, max(cfg.quad_order, P + 1))
    dofs, residual = TransmissionOperator(spec, cfg).solve(rhs)
    logger.debug(f"Direct A_Delta solve: residual {residual:.2e}")
    return AdeltaField(mesh, dofs, H0, spec, P)


MOMENT_KINDS = ("field", "curl", "cross")


def monomial_table(points: np.ndarray, m: int) -> np.ndarray:
    """Pi_K(points) for every K(m) in lexicographic order, shape (3^m, N)"""
    return np.stack([monomials(points, K) for K in enumerate_multiindices(m)])


def moment_array(theta: EdgeField, m: int, kind: str, degree: Optional[int] = None,
                 source: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """Every volume_moment of order m at once, shape (3,)*m + (3,).

    source, if given, is a closed-form field added to theta before the moment is taken
    (field and cross kinds only).
    """
    if kind not in MOMENT_KINDS:
        raise InvalidConfig(f"Invalid kind '{kind}'. Accepted kinds are {list(MOMENT_KINDS)}")
    degree = degree if degree is not None else m + 2
    quad = volume_quadrature(theta.mesh, degree)
    values, curls = theta.sample(quad)
    pts = quad.flat_points
    if source is not None and kind != "curl":
        values = values + source(pts)
    integrand = {"field": values, "curl": curls}.get(kind)
    if integrand is None:
        integrand = np.cross(pts, values)
    w = monomial_table(pts, m) * quad.flat_weights[None, :]
    return (w @ integrand).reshape((3,) * m + (3,))


def volume_moment(theta: EdgeField, K: Sequence[int], kind: str, degree: Optional[int] = None,
                  source: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> DenseTensor:
    """int_B Pi_K(xi) {theta | curl theta | xi x theta} dxi over the object region
    """
    K = MultiIndex(K)
    return DenseTensor(moment_array(theta, len(K), kind, degree, source)[K.offsets])


def source_field(J: Sequence[int]) -> Callable[[np.ndarray], np.ndarray]:
    """xi -> Pi_{J(p)}(xi) e_j x xi for a theta index J = (j, J(p))"""
    J = MultiIndex(J)
    e_j = np.eye(3)[J.head - 1]
    return lambda x: monomials(x, J.tail)[:, None] * np.cross(e_j, x)


def gamma_flux(theta: EdgeField, degree: int = 2):
    """int_Gamma n . theta from the exterior side, and int_Gamma |n . theta| as its scale"""
    quad = surface_quadrature(theta.mesh, degree, "outer")
    u = theta.local_dofs(theta.mesh.gamma["outer_tet"])
    values = np.einsum("ge,gqed->gqd", u, quad.basis)
    normal = np.einsum("gqd,gd->gq", values, quad.normals)
    return complex(np.sum(quad.weights * normal)), float(np.sum(quad.weights * np.abs(normal)))
