"""
Structured tetrahedral fixtures: an object region inside a graded box truncation.

Every hexahedral cell of a rectilinear grid is split either into 24 tets (cell center + face
centers, which keeps the full octahedral symmetry of a symmetric grid) or into the 6 Kuhn
tets along the main diagonal. Tets are tagged by their centroid.

Usage:
  from eddymod.fixtures import cube_mesh, sphere_mesh, box_mesh, medium_sphere_mesh
  mesh = sphere_mesh(radius=1.0, cells=2, outer_cells=2)
"""
from itertools import permutations
from typing import Callable, Sequence

import numpy as np
from loguru import logger

from tensormod.errors import InputError

from .mesh import EXTERIOR, FAR, GAMMA, LOCAL_FACES, OBJECT, TetMesh


def graded_axis(inner_half: float, cells: int, r_far: float, outer_cells: int) -> np.ndarray:
    """Symmetric 1-D coordinates: uniform on [-inner_half, inner_half], geometric out to r_far

    Params
      inner_half  : half-width of the uniformly meshed core
      cells       : uniform cells on each side of the origin
      r_far       : truncation half-width
      outer_cells : graded cells on each side beyond the core
    """
    inner = np.linspace(0.0, inner_half, cells + 1)
    outer = np.geomspace(inner_half, r_far, outer_cells + 1)[1:] if outer_cells else np.zeros(0)
    half = np.concatenate([inner, outer])
    return np.concatenate([-half[:0:-1], half])


def _cell_faces(i, j, k):
    """Corner index triples (cyclic) and face-center keys for the six faces of cell (i, j, k)"""
    out = []
    for axis in range(3):
        for side in (0, 1):
            base = [i, j, k]
            base[axis] = base[axis] + side
            u, w = [a for a in range(3) if a != axis]
            corners = []
            for du, dw in ((0, 0), (1, 0), (1, 1), (0, 1)):
                c = list(base)
                c[u] = c[u] + du
                c[w] = c[w] + dw
                corners.append(tuple(c))
            out.append((axis, tuple(base), corners))
    return out


def structured_mesh(xs: Sequence[float], ys: Sequence[float], zs: Sequence[float],
                    inside: Callable[[np.ndarray], np.ndarray], split: str = "symmetric") -> TetMesh:
    """Tet mesh of the box xs x ys x zs with object tets selected by inside(centroids)
    """
    xs, ys, zs = (np.asarray(a, dtype=float) for a in (xs, ys, zs))
    nx, ny, nz = len(xs) - 1, len(ys) - 1, len(zs) - 1
    I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()

    def gid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    verts = [np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)]
    n_grid = len(verts[0])

    if split == "kuhn":
        tets = []
        for perm in permutations(range(3)):
            path = [np.zeros(3, dtype=int)]
            for axis in perm:
                step = path[-1].copy()
                step[axis] += 1
                path.append(step)
            tets.append(np.stack([gid(I + p[0], J + p[1], K + p[2]) for p in path], axis=1))
        tets = np.concatenate(tets)
    elif split == "symmetric":
        mid = lambda a: 0.5 * (a[:-1] + a[1:])
        cx, cy, cz = np.meshgrid(mid(xs), mid(ys), mid(zs), indexing="ij")
        centers = np.stack([cx.ravel(), cy.ravel(), cz.ravel()], axis=1)
        c_off = n_grid
        verts.append(centers)
        # face centers, one block per normal axis
        axes = (xs, ys, zs)
        dims = (nx, ny, nz)
        f_off, f_shape = [], []
        offset = c_off + len(centers)
        for axis in range(3):
            coords = [axes[a] if a == axis else mid(axes[a]) for a in range(3)]
            shape = tuple(dims[a] + (1 if a == axis else 0) for a in range(3))
            fx, fy, fz = np.meshgrid(*coords, indexing="ij")
            verts.append(np.stack([fx.ravel(), fy.ravel(), fz.ravel()], axis=1))
            f_off.append(offset)
            f_shape.append(shape)
            offset += int(np.prod(shape))
        cell_center = c_off + (I * ny + J) * nz + K
        tets = []
        for axis, base, corners in _cell_faces(I, J, K):
            shape = f_shape[axis]
            face_center = f_off[axis] + (base[0] * shape[1] + base[1]) * shape[2] + base[2]
            ring = [gid(*c) for c in corners]
            for n in range(4):
                tets.append(np.stack([cell_center, face_center, ring[n], ring[(n + 1) % 4]], axis=1))
        tets = np.concatenate(tets)
    else:
        raise InputError(f"Invalid split '{split}'. Accepted splits are ['symmetric', 'kuhn']")

    vertices = np.concatenate(verts)
    # orient every tet positively
    v = vertices[tets]
    vol = np.einsum("ij,ij->i", v[:, 1] - v[:, 0], np.cross(v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]))
    tets[vol < 0] = tets[vol < 0][:, [0, 1, 3, 2]]

    regions = np.where(inside(vertices[tets].mean(axis=1)), OBJECT, EXTERIOR)
    faces, tags = _tag_faces(tets, regions)
    mesh = TetMesh(vertices, tets, regions, faces, tags)
    logger.debug(f"Structured fixture ({split}): {mesh}")
    return mesh


def _tag_faces(tets: np.ndarray, regions: np.ndarray):
    all_faces = tets[:, LOCAL_FACES].reshape(-1, 3)
    owner = np.repeat(np.arange(len(tets)), 4)
    keys = np.sort(all_faces, axis=1)
    unique, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    far = counts[inverse] == 1
    region_sum = np.bincount(inverse, weights=regions[owner], minlength=len(unique))
    gamma_ids = np.nonzero((counts == 2) & (region_sum == 1))[0]
    # one row per gamma face, taken from its object-side tet
    rows = np.nonzero(np.isin(inverse, gamma_ids) & (regions[owner] == OBJECT))[0]
    _, pick = np.unique(inverse[rows], return_index=True)
    gamma_rows = rows[pick]
    faces = np.concatenate([all_faces[far], all_faces[gamma_rows]])
    tags = [FAR] * int(far.sum()) + [GAMMA] * len(gamma_rows)
    return faces, tags


def cube_mesh(half: float = 0.5, cells: int = 1, outer_cells: int = 2, r_far_factor: float = 5.0,
              split: str = "symmetric") -> TetMesh:
    """Cube [-half, half]^3 resolved by `cells` layers per side; truncation at r_far_factor * diam"""
    r_far = r_far_factor * 2.0 * np.sqrt(3.0) * half
    axis = graded_axis(half, cells, r_far, outer_cells)
    inside = lambda c: np.all(np.abs(c) < half, axis=1)
    return structured_mesh(axis, axis, axis, inside, split)


def sphere_mesh(radius: float = 1.0, cells: int = 2, outer_cells: int = 2, r_far_factor: float = 5.0,
                split: str = "symmetric") -> TetMesh:
    """Voxelized ball: tets whose centroid lies inside the sphere form the object"""
    core = 1.2 * radius
    axis = graded_axis(core, cells, r_far_factor * 2.0 * radius, outer_cells)
    inside = lambda c: np.linalg.norm(c, axis=1) < radius
    return structured_mesh(axis, axis, axis, inside, split)


def box_mesh(halves=(1.0, 0.5, 0.3), cells: int = 1, outer_cells: int = 2, r_far_factor: float = 5.0,
             split: str = "symmetric") -> TetMesh:
    """Axis-aligned box with distinct side lengths (distinct principal values)"""
    halves = np.asarray(halves, dtype=float)
    r_far = r_far_factor * 2.0 * float(np.linalg.norm(halves))
    axes = [graded_axis(h, cells, r_far, outer_cells) for h in halves]
    inside = lambda c: np.all(np.abs(c) < halves, axis=1)
    return structured_mesh(*axes, inside, split)


def medium_sphere_mesh(radius: float = 1.0) -> TetMesh:
    """Reference sphere for the static-limit comparison: finer core and a denser graded exterior"""
    return sphere_mesh(radius, cells=3, outer_cells=5, r_far_factor=3.0)
