"""
Tetrahedral meshes of the unit-scale object B inside a truncated exterior region

Usage:
  from eddymod.mesh import load_mesh, ObjectSpec
  mesh = load_mesh("sphere.gmptmesh")
  spec = ObjectSpec(mesh, alpha=0.01, z=(0, 0, 0), sigma=5.96e7, mu_star=1.5 * MU0, omega=1e4)

File format (ASCII, whitespace separated, vertex ids 0-based):
  GMPTMESH 1
  VERTICES n      then n lines "x y z"
  TETS m          then m lines "v0 v1 v2 v3 region"    region 1 = object, 0 = exterior
  TRIFACES f      then f lines "v0 v1 v2 tag"          tag GAMMA (object surface) or FAR (truncation)
"""
import hashlib
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from loguru import logger
from scipy.spatial import ConvexHull

from tensormod.errors import DegenerateTensor, InvariantViolation, ParseError
from tensormod.tensorcore import DenseTensor, check_orthogonal


MU0 = 4e-7 * np.pi
OBJECT = 1
EXTERIOR = 0
GAMMA = "GAMMA"
FAR = "FAR"
MAGIC = "GMPTMESH 1"

# local edge (a, b) and local face (opposite vertex k) tables
LOCAL_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
LOCAL_FACES = np.array([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)])


def _face_keys(*face_sets: np.ndarray) -> Tuple[np.ndarray, list]:
    """Common ids for sorted vertex triplets across several face arrays"""
    stacked = np.concatenate([np.sort(f, axis=1) for f in face_sets], axis=0)
    unique, inverse = np.unique(stacked, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    splits = np.cumsum([len(f) for f in face_sets])[:-1]
    return unique, np.split(inverse, splits)


class TetMesh:
    """Immutable tetrahedral mesh with region and boundary tags.

    Params
      vertices  : (N, 3) coordinates in the unit-scale frame xi
      tets      : (M, 4) vertex ids
      regions   : (M,) 1 for object tets, 0 for exterior tets
      faces     : (F, 3) tagged boundary triangles
      face_tags : (F,) "GAMMA" or "FAR"
    """
    def __init__(self, vertices, tets, regions, faces, face_tags, validate: bool = True):
        self.vertices = np.array(vertices, dtype=float).reshape(-1, 3)
        self.tets = np.array(tets, dtype=np.int64).reshape(-1, 4)
        self.regions = np.array(regions, dtype=np.int64).reshape(-1)
        self.faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
        self.face_tags = np.array([str(t) for t in face_tags], dtype=object)
        for arr in (self.vertices, self.tets, self.regions, self.faces):
            arr.setflags(write=False)
        if validate:
            validate_mesh(self)

    def __repr__(self) -> str:
        return (f"TetMesh(vertices={len(self.vertices)}, tets={len(self.tets)} "
                f"[object {int(self.object_mask.sum())}], edges={len(self.edges)})")

    # -------------------------------------------------------- geometry #

    @cached_property
    def jacobians(self) -> np.ndarray:
        v = self.vertices[self.tets]
        return np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]], axis=1)

    @cached_property
    def volumes(self) -> np.ndarray:
        """Signed tet volumes"""
        return np.linalg.det(self.jacobians) / 6.0

    @cached_property
    def grads(self) -> np.ndarray:
        """Gradients of the four barycentric coordinates per tet, shape (M, 4, 3)"""
        inv = np.linalg.inv(self.jacobians)
        g123 = np.transpose(inv, (0, 2, 1))
        g0 = -g123.sum(axis=1, keepdims=True)
        return np.concatenate([g0, g123], axis=1)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.tets].mean(axis=1)

    @cached_property
    def object_mask(self) -> np.ndarray:
        return self.regions == OBJECT

    @cached_property
    def object_volume(self) -> float:
        return float(self.volumes[self.object_mask].sum())

    @cached_property
    def center_of_mass(self) -> np.ndarray:
        vol = self.volumes[self.object_mask]
        return (self.centroids[self.object_mask] * vol[:, None]).sum(axis=0) / vol.sum()

    @cached_property
    def object_vertices(self) -> np.ndarray:
        return self.vertices[np.unique(self.tets[self.object_mask])]

    @cached_property
    def diameter(self) -> float:
        pts = self.object_vertices
        hull = pts[ConvexHull(pts).vertices]
        diff = hull[:, None, :] - hull[None, :, :]
        return float(np.sqrt((diff ** 2).sum(axis=-1)).max())

    @cached_property
    def circumradius(self) -> float:
        """Radius of the sphere about the center of mass enclosing the object"""
        return float(np.linalg.norm(self.object_vertices - self.center_of_mass, axis=1).max())

    @cached_property
    def mesh_size(self) -> float:
        """Longest object edge"""
        e = self.edges[np.unique(self.tet_edges[self.object_mask])]
        return float(np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1).max())

    # -------------------------------------------------------- topology #

    @cached_property
    def _edge_table(self):
        local = self.tets[:, LOCAL_EDGES]                    # (M, 6, 2)
        signs = np.where(local[..., 0] < local[..., 1], 1.0, -1.0)
        ordered = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(ordered, axis=0, return_inverse=True)
        return edges, inverse.reshape(-1, 6), signs

    @property
    def edges(self) -> np.ndarray:
        """Global edges oriented from the lower to the higher vertex id"""
        return self._edge_table[0]

    @property
    def tet_edges(self) -> np.ndarray:
        return self._edge_table[1]

    @property
    def tet_signs(self) -> np.ndarray:
        return self._edge_table[2]

    @cached_property
    def _face_table(self):
        tet_faces = self.tets[:, LOCAL_FACES].reshape(-1, 3)
        if len(self.faces):
            unique, (tet_ids, tag_ids) = _face_keys(tet_faces, self.faces)
        else:
            unique, (tet_ids,) = _face_keys(tet_faces)
            tag_ids = np.zeros(0, dtype=np.int64)
        return unique, tet_ids.reshape(-1, 4), tag_ids

    @cached_property
    def face_owners(self) -> np.ndarray:
        """(U, 2) tets sharing each unique face, -1 where absent"""
        unique, tet_face_ids, _ = self._face_table
        owners = -np.ones((len(unique), 2), dtype=np.int64)
        flat = tet_face_ids.reshape(-1)
        order = np.argsort(flat, kind="stable")
        tet_of = order // 4
        ids = flat[order]
        first = np.ones(len(ids), dtype=bool)
        first[1:] = ids[1:] != ids[:-1]
        owners[ids[first], 0] = tet_of[first]
        second = ~first
        owners[ids[second], 1] = tet_of[second]
        return owners

    @cached_property
    def face_counts(self) -> np.ndarray:
        unique, tet_face_ids, _ = self._face_table
        return np.bincount(tet_face_ids.reshape(-1), minlength=len(unique))

    @cached_property
    def gamma(self) -> dict:
        """Object-side data for every GAMMA face: tet, local face, outward unit normal, area"""
        _, tet_face_ids, tag_ids = self._face_table
        sel = np.nonzero(self.face_tags == GAMMA)[0]
        owners = self.face_owners[tag_ids[sel]]
        inner_first = self.regions[owners[:, 0]] == OBJECT
        obj_tet = np.where(inner_first, owners[:, 0], owners[:, 1])
        out_tet = np.where(inner_first, owners[:, 1], owners[:, 0])
        local = np.argmax(tet_face_ids[obj_tet] == tag_ids[sel][:, None], axis=1)
        out_local = np.argmax(tet_face_ids[out_tet] == tag_ids[sel][:, None], axis=1)
        tri = self.vertices[self.tets[obj_tet[:, None], LOCAL_FACES[local]]]
        normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        area = 0.5 * np.linalg.norm(normal, axis=1)
        normal = normal / (2.0 * area[:, None])
        opposite = self.vertices[self.tets[obj_tet, local]]
        flip = np.einsum("ij,ij->i", normal, opposite - tri[:, 0]) > 0
        normal[flip] *= -1.0
        return {"tet": obj_tet, "local": local, "outer_tet": out_tet, "outer_local": out_local,
                "normal": normal, "area": area}

    @cached_property
    def far_edges(self) -> np.ndarray:
        """Edge ids lying on FAR faces"""
        far = self.faces[self.face_tags == FAR]
        if not len(far):
            return np.zeros(0, dtype=np.int64)
        pairs = np.sort(np.concatenate([far[:, [0, 1]], far[:, [0, 2]], far[:, [1, 2]]]), axis=1)
        pairs = np.unique(pairs, axis=0)
        edges = self.edges
        key = edges[:, 0] * (len(self.vertices) + 1) + edges[:, 1]
        want = pairs[:, 0] * (len(self.vertices) + 1) + pairs[:, 1]
        return np.nonzero(np.isin(key, want))[0]

    @cached_property
    def far_vertices(self) -> np.ndarray:
        return np.unique(self.faces[self.face_tags == FAR])

    @cached_property
    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.vertices, self.tets, self.regions, self.faces):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(",".join(self.face_tags).encode())
        return h.hexdigest()

    def with_vertices(self, vertices, tets=None) -> "TetMesh":
        return TetMesh(vertices, self.tets if tets is None else tets, self.regions, self.faces, self.face_tags)


def validate_mesh(mesh: TetMesh) -> None:
    """Raise InvariantViolation naming the first failed structural check"""
    vols = mesh.volumes
    if np.any(vols <= 0):
        bad = int(np.argmax(vols <= 0))
        raise InvariantViolation("negative volume", f"tet {bad} has volume {vols[bad]:.3e}")
    if not np.any(mesh.object_mask):
        raise InvariantViolation("empty object", "no tet carries region 1")
    if set(np.unique(mesh.regions)) - {OBJECT, EXTERIOR}:
        raise InvariantViolation("unknown region", f"regions {sorted(set(mesh.regions))}")
    if set(mesh.face_tags) - {GAMMA, FAR}:
        raise InvariantViolation("unknown face tag", f"tags {sorted(set(mesh.face_tags))}")

    counts = mesh.face_counts
    if np.any(counts > 2):
        raise InvariantViolation("nonconforming", "a face is shared by more than two tets")
    _, _, tag_ids = mesh._face_table
    owners = mesh.face_owners
    if len(tag_ids) and np.any(counts[tag_ids] == 0):
        raise InvariantViolation("unknown face", "a tagged triangle is not a face of any tet")

    far_ids = tag_ids[mesh.face_tags == FAR]
    if np.any(counts[far_ids] != 1):
        raise InvariantViolation("far face interior", "a FAR face is shared by two tets")
    if np.any(mesh.regions[owners[far_ids, 0]] == OBJECT):
        raise InvariantViolation("far face on object", "a FAR face belongs to an object tet")
    boundary = np.nonzero(counts == 1)[0]
    if len(np.setdiff1d(boundary, far_ids)):
        raise InvariantViolation("nonconforming", "an outer boundary face is not tagged FAR (hanging face)")

    gamma_ids = tag_ids[mesh.face_tags == GAMMA]
    pair = owners[gamma_ids]
    if np.any(pair[:, 1] < 0) or np.any(mesh.regions[pair[:, 0]] == mesh.regions[pair[:, 1]]):
        raise InvariantViolation("gamma face adjacency", "a GAMMA face is not between an object and an exterior tet")
    inner = np.nonzero(counts == 2)[0]
    interface = inner[mesh.regions[owners[inner, 0]] != mesh.regions[owners[inner, 1]]]
    if len(np.setdiff1d(interface, gamma_ids)):
        raise InvariantViolation("non-watertight gamma", "object/exterior faces missing the GAMMA tag")
    gfaces = mesh.faces[mesh.face_tags == GAMMA]
    if len(gfaces):
        e = np.sort(np.concatenate([gfaces[:, [0, 1]], gfaces[:, [0, 2]], gfaces[:, [1, 2]]]), axis=1)
        _, ecount = np.unique(e, axis=0, return_counts=True)
        if np.any(ecount % 2):
            raise InvariantViolation("non-watertight gamma", "GAMMA surface has an open edge")


def load_mesh(path: Union[str, Path]) -> TetMesh:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"mesh file {path} does not exist")
    lines = [(n + 1, raw.strip()) for n, raw in enumerate(path.read_text().splitlines())]
    lines = [(n, s) for n, s in lines if s and not s.startswith("#")]
    if not lines or lines[0][1] != MAGIC:
        raise ParseError(f"expected header '{MAGIC}'", lines[0][0] if lines else 1)
    cursor = 1

    def section(name: str, width: int):
        nonlocal cursor
        if cursor >= len(lines):
            raise ParseError(f"missing section {name}", lines[-1][0] + 1)
        lineno, text = lines[cursor]
        parts = text.split()
        if len(parts) != 2 or parts[0] != name:
            raise ParseError(f"expected '{name} <count>'", lineno)
        try:
            count = int(parts[1])
        except ValueError:
            raise ParseError(f"bad count '{parts[1]}'", lineno)
        rows = []
        for lineno, text in lines[cursor + 1: cursor + 1 + count]:
            parts = text.split()
            if len(parts) != width:
                raise ParseError(f"{name} row needs {width} fields, got {len(parts)}", lineno)
            rows.append((lineno, parts))
        if len(rows) != count:
            raise ParseError(f"{name} declares {count} rows, found {len(rows)}", lines[-1][0])
        cursor += 1 + count
        return rows

    def numbers(rows, cast, cols):
        out = []
        for lineno, parts in rows:
            try:
                out.append([cast(p) for p in parts[:cols]])
            except ValueError:
                raise ParseError(f"non-numeric field in '{' '.join(parts)}'", lineno)
        return out

    vrows = section("VERTICES", 3)
    trows = section("TETS", 5)
    frows = section("TRIFACES", 4)
    vertices = np.array(numbers(vrows, float, 3), dtype=float).reshape(-1, 3)
    tets = np.array(numbers(trows, int, 5), dtype=np.int64).reshape(-1, 5)
    faces = np.array(numbers(frows, int, 3), dtype=np.int64).reshape(-1, 3)
    tags = [parts[3] for _, parts in frows]
    for (lineno, parts), row in zip(trows + frows, list(tets[:, :4]) + list(faces)):
        if np.any(row < 0) or np.any(row >= len(vertices)):
            raise ParseError(f"vertex id out of range in '{' '.join(parts)}'", lineno)
    for (lineno, _), tag in zip(frows, tags):
        if tag not in (GAMMA, FAR):
            raise ParseError(f"unknown face tag '{tag}'", lineno)

    mesh = TetMesh(vertices, tets[:, :4], tets[:, 4], faces, tags)
    logger.info(f"Loaded {path.name}: {mesh}")
    return mesh


def save_mesh(mesh: TetMesh, path: Union[str, Path]) -> None:
    out = [MAGIC, f"VERTICES {len(mesh.vertices)}"]
    out += [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    out.append(f"TETS {len(mesh.tets)}")
    out += [f"{a} {b} {c} {d} {r}" for (a, b, c, d), r in zip(mesh.tets.tolist(), mesh.regions.tolist())]
    out.append(f"TRIFACES {len(mesh.faces)}")
    out += [f"{a} {b} {c} {t}" for (a, b, c), t in zip(mesh.faces.tolist(), mesh.face_tags)]
    Path(path).write_text("\n".join(out) + "\n")


def apply_orthogonal(mesh: TetMesh, Q) -> TetMesh:
    """Map every vertex by Q; reflections swap two vertices per tet to keep volumes positive
    """
    Q = check_orthogonal(Q)
    tets = mesh.tets
    if np.linalg.det(Q) < 0:
        tets = tets[:, [0, 1, 3, 2]]
    return mesh.with_vertices(mesh.vertices @ Q.T, tets)


@dataclass(frozen=True, eq=False)
class ObjectSpec:
    """Object B_alpha = z + alpha B with its material data (SI units)
    """
    mesh: TetMesh
    alpha: float
    z: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sigma: float = 0.0
    mu_star: float = MU0
    omega: float = 0.0
    mu0: float = MU0

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float).reshape(3))
        if not self.alpha > 0:
            raise InvariantViolation("alpha", f"length scale must be positive, got {self.alpha}")
        if not self.mu_star > 0:
            raise InvariantViolation("mu_r", f"permeability must be positive, got {self.mu_star}")
        if self.sigma < 0:
            raise InvariantViolation("sigma", f"conductivity must be non-negative, got {self.sigma}")
        if not np.isfinite(self.nu):
            raise InvariantViolation("nu", "omega mu0 sigma alpha^2 is not finite")

    @property
    def nu(self) -> float:
        return self.omega * self.mu0 * self.sigma * self.alpha ** 2

    @property
    def mu_r(self) -> float:
        return self.mu_star / self.mu0

    @property
    def contrast(self) -> float:
        """Jump of the relative inverse permeability across Gamma, 1 - 1/mu_r"""
        return 1.0 - 1.0 / self.mu_r

    def replace(self, **changes) -> "ObjectSpec":
        return replace(self, **changes)

    def material_key(self) -> str:
        """Hash of everything the theta problems depend on: mesh, nu and mu_r"""
        h = hashlib.sha256(self.mesh.digest.encode())
        h.update(np.array([self.nu, self.mu_r]).tobytes())
        return h.hexdigest()

    def digest(self) -> str:
        h = hashlib.sha256(self.mesh.digest.encode())
        h.update(np.array([self.alpha, *self.z, self.sigma, self.mu_star, self.omega, self.mu0]).tobytes())
        return h.hexdigest()

    def meta(self) -> dict:
        return {"alpha": self.alpha, "z": [float(v) for v in self.z], "sigma": self.sigma,
                "mu_star": self.mu_star, "mu0": self.mu0, "omega": self.omega,
                "nu": self.nu, "mu_r": self.mu_r, "mesh_sha256": self.mesh.digest}


@dataclass(frozen=True)
class CanonicalTransform:
    """xi_canonical = scale * (xi + translation)"""
    translation: np.ndarray
    scale: float

    def is_identity(self, tol: float = 1e-9) -> bool:
        return bool(np.all(np.abs(self.translation) < tol) and abs(self.scale - 1.0) < tol)

    def to_json(self) -> dict:
        return {"translation": [float(v) for v in self.translation], "scale": float(self.scale)}


def canonicalize(spec: ObjectSpec, polya_szego) -> Tuple[ObjectSpec, CanonicalTransform]:
    """Center the object at its center of mass and rescale so det(T) = 1.

    The physical object z + alpha B is unchanged: alpha and z absorb the scale and shift.
    """
    T = polya_szego.data if isinstance(polya_szego, DenseTensor) else np.asarray(polya_szego)
    T = np.real(T)
    det = float(np.linalg.det(T))
    if not det > 0:
        raise DegenerateTensor(f"Polya-Szego tensor has det {det:.3e}")
    com = spec.mesh.center_of_mass
    scale = det ** (-1.0 / 9.0)
    mesh = spec.mesh.with_vertices(scale * (spec.mesh.vertices - com))
    record = CanonicalTransform(-com, scale)
    logger.debug(f"Canonical transform: shift {record.translation}, scale {scale:.6f}")
    return spec.replace(mesh=mesh, alpha=spec.alpha / scale, z=spec.z + spec.alpha * com), record
