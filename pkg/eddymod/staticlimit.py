"""
Independent scalar solver for the Polya-Szego tensor T(kappa) of the object region.

Piecewise-linear (P1) finite elements on the same tet mesh, kept apart from the edge-element
code path. For each direction j:

  int a grad(phi_j) . grad(v) = (1 - kappa) int_B d_j v,   a = kappa in B, 1 outside,
  phi_j = 0 on the FAR boundary

and T_ij = (kappa - 1) (|B| delta_ij + int_B d_i phi_j). The unit ball gives 3 (kappa - 1) / (kappa + 2) |B|.
"""
import numpy as np
import scipy.sparse as sp
from loguru import logger
from scipy.sparse.linalg import splu

from tensormod.errors import InputError
from tensormod.tensorcore import DenseTensor

from .mesh import TetMesh


def polya_szego_tensor(mesh: TetMesh, kappa: float) -> DenseTensor:
    """Rank-2 Polya-Szego tensor of the object region of `mesh` at contrast kappa (unit scale)
    """
    if not kappa > 0:
        raise InputError(f"contrast must be positive, got {kappa}")
    vol = mesh.volumes
    grads = mesh.grads
    obj = mesh.object_mask
    coef = np.where(obj, kappa, 1.0)

    local = np.einsum("tad,tbd->tab", grads, grads) * (coef * vol)[:, None, None]
    rows = np.repeat(mesh.tets, 4, axis=1).ravel()
    cols = np.tile(mesh.tets, (1, 4)).ravel()
    n = len(mesh.vertices)
    K = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    # (1 - kappa) int_B d_j v  ->  one column per direction
    load = np.zeros((n, 3))
    contrib = (1.0 - kappa) * grads[obj] * vol[obj][:, None, None]        # (T, 4, 3)
    np.add.at(load, mesh.tets[obj].ravel(), contrib.reshape(-1, 3))

    free = np.setdiff1d(np.arange(n), mesh.far_vertices)
    lu = splu(K[free][:, free].tocsc())
    phi = np.zeros((n, 3))
    for j in range(3):
        phi[free, j] = lu.solve(load[free, j])

    # int_B d_i phi_j
    gphi = np.einsum("tad,taj->tdj", grads[obj], phi[mesh.tets[obj]])
    integral = np.einsum("t,tij->ij", vol[obj], gphi)
    T = (kappa - 1.0) * (mesh.object_volume * np.eye(3) + integral)
    logger.debug(f"Polya-Szego tensor at kappa={kappa}: diag {np.diag(T)}")
    return DenseTensor(T)
