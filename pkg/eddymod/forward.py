"""
Perturbed-field evaluation: the order-M asymptotic formula, the volume-integral oracle that
the formula is checked against, and the point-dipole coil voltage.

Usage:
  from eddymod.forward import eval_expansion, oracle_field
  res = eval_expansion(gset, H0, x, M=2)
  res.H, res.terms[(0, 1)]
"""
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import statsmodels.api as sm
from loguru import logger

from tensormod.errors import InputError, OrderExceeded, PointTooClose
from tensormod.kernels import green_batch, green_deriv, green_hessian
from tensormod.polyfield import BackgroundModel, PolyField, taylor_background, uncurl
from tensormod.tensorcore import DenseTensor

from .gmpt import GmptSet, Thetas, assemble_C_via_A, assemble_N, assemble_from_thetas
from .mesh import ObjectSpec
from .transmission import AdeltaField, SolveConfig, gamma_flux, solve_batch, superpose_adelta, volume_quadrature


EXCLUSION_FACTOR = 1.5


@dataclass
class ExpansionResult:
    """H_alpha - H0 at x with the contribution of every block (m, p)"""
    x: np.ndarray
    order: int
    H: np.ndarray
    terms: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)

    def by_m(self, m: int) -> np.ndarray:
        return sum((v for (mm, _), v in self.terms.items() if mm == m), np.zeros(3, dtype=complex))


def block_term(G: np.ndarray, block: np.ndarray, dH: np.ndarray) -> np.ndarray:
    """D^{2+m}G[i,k,K] M[k,K,j,J] D^pH0[j,J] -> 3-vector"""
    inner = np.tensordot(G, block, axes=G.ndim - 1)                  # [i, j, J...]
    return np.tensordot(inner, dH, axes=dH.ndim)


def eval_expansion(gset: GmptSet, H0: PolyField, x, M: Optional[int] = None) -> ExpansionResult:
    """Order-M formula about z = H0.center
    """
    M = gset.order if M is None else M
    if M < 1 or M > gset.order:
        raise OrderExceeded(f"order {M} requested from a set of order {gset.order}")
    x = np.asarray(x, dtype=float)
    z = H0.center
    G = {m: green_deriv(x, z, 2 + m).data for m in range(M)}
    terms = {}
    for m, p in GmptSet.labels(M):
        terms[(m, p)] = block_term(G[m], gset.mpt(m, p).data, H0.tensor(p).data)
    H = sum(terms.values(), np.zeros(3, dtype=complex))
    return ExpansionResult(x, M, H, terms)


def eval_mpt(mpt: DenseTensor, H0z, x, z) -> np.ndarray:
    """Rank-2 formula D^2G(x, z) M H0(z)"""
    return green_hessian(x, z).data @ (mpt.data @ np.asarray(H0z))


def eval_expansion_via_A(thetas: Thetas, spec: ObjectSpec, H0: PolyField, x, M: int) -> ExpansionResult:
    """Same formula with every C block rebuilt from the rank 4+m+p A arrays"""
    blocks = {(m, p): (assemble_C_via_A(thetas, spec, m, p), assemble_N(thetas, spec, m, p))
              for m, p in GmptSet.labels(M)}
    return eval_expansion(GmptSet(M, blocks), H0, x, M)


def scattered_dipole(mpt: DenseTensor, H0z) -> np.ndarray:
    """Equivalent dipole moment M H0(z) of the object"""
    return mpt.data @ np.asarray(H0z, dtype=complex)


def voltage(m_m, x, m_e, y, z, mpt: DenseTensor) -> complex:
    """m_m . D^2G(x, z) M D^2G(z, y) m_e"""
    m_m = np.asarray(m_m, dtype=float)
    m_e = np.asarray(m_e, dtype=float)
    if not np.any(m_m) or not np.any(m_e):
        return 0j
    H0z = green_hessian(z, y).data @ m_e
    return complex(m_m @ eval_mpt(mpt, H0z, x, z))


def oracle_field(adelta: AdeltaField, spec: ObjectSpec, x, degree: int = 4) -> np.ndarray:
    """Volume-integral representation of H_alpha - H0 at x from the discrete A_Delta.

    With xi in B, y = z + alpha xi and A0 = mu0 alpha t(xi), curl_xi t = H0(z + alpha xi):

      I  = i omega sigma alpha^3 int_B grad_x G(x, y) x (A0 + alpha A_Delta)
      II = -(1 - mu_r) alpha^3 int_B D^2_x G(x, y) (H0(y) + curl_xi A_Delta / mu0) / mu_r
    """
    x = np.asarray(x, dtype=float)
    mesh = spec.mesh
    center = spec.z + spec.alpha * mesh.center_of_mass
    limit = EXCLUSION_FACTOR * spec.alpha * mesh.circumradius
    dist = float(np.linalg.norm(x - center))
    if dist < limit:
        raise PointTooClose(f"|x - center| = {dist:.4g} is inside the exclusion radius {limit:.4g}")
    quad = volume_quadrature(mesh, degree)
    xi = quad.flat_points
    w = quad.flat_weights
    y = spec.z + spec.alpha * xi
    a3 = spec.alpha ** 3
    h0 = adelta.h0.truncate(adelta.degree)
    values, curls = adelta.sample(quad)
    out = np.zeros(3, dtype=complex)
    if spec.sigma != 0.0 and spec.omega != 0.0:
        A0 = spec.mu0 * spec.alpha * uncurl(h0.scaled(spec.alpha)).eval(xi)
        dG = green_batch(x, y, 1)
        out += 1j * spec.omega * spec.sigma * a3 * (w @ np.cross(dG, A0 + spec.alpha * values))
    if spec.mu_r != 1.0:
        D2G = green_batch(x, y, 2)
        Hin = (h0.eval(y) + curls / spec.mu0) / spec.mu_r
        out += -(1.0 - spec.mu_r) * a3 * np.einsum("n,nij,nj->i", w, D2G, Hin)
    return out


def flux_report(thetas: Thetas) -> pd.DataFrame:
    """int_Gamma n . theta for every solution (not constrained by the discrete problem)"""
    rows = []
    for J, theta in thetas.items():
        flux, scale = gamma_flux(theta)
        rows.append({"index": J.label(), "flux": abs(flux), "relative": abs(flux) / scale if scale > 0 else 0.0})
    return pd.DataFrame(rows, columns=["index", "flux", "relative"])


def fit_slope(alphas: Sequence[float], errors: Sequence[float]):
    """OLS slope (and its standard error) of log(error) against log(alpha)"""
    X = sm.add_constant(np.log(np.asarray(alphas, dtype=float)))
    model = sm.OLS(np.log(np.asarray(errors, dtype=float)), X).fit()
    return float(model.params[1]), float(model.bse[1])


def scaled_family(spec: ObjectSpec, alpha: float) -> ObjectSpec:
    """Same object at length scale alpha with sigma adjusted so nu stays fixed"""
    if spec.omega == 0.0 or spec.sigma == 0.0:
        return spec.replace(alpha=alpha)
    return spec.replace(alpha=alpha, sigma=spec.sigma * (spec.alpha / alpha) ** 2)


def default_points(spec: ObjectSpec, alphas: Sequence[float], factor: float = 5.0, count: int = 6) -> np.ndarray:
    """count points at factor * max(alpha) * diam from z along the coordinate axes"""
    r = factor * max(alphas) * spec.mesh.diameter
    dirs = np.concatenate([np.eye(3), -np.eye(3)])[:count]
    dirs = dirs + 0.25 * np.roll(dirs, 1, axis=1)
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    return spec.z + r * dirs


def convergence_study(spec: ObjectSpec, background: BackgroundModel, alphas: Sequence[float], Ms: Sequence[int],
                      cfg: Optional[SolveConfig] = None, points: Optional[np.ndarray] = None,
                      oracle_degree: int = 4, thetas: Optional[Thetas] = None) -> pd.DataFrame:
    """|oracle - expansion| over an alpha family at fixed nu, with the log-log slope per M
    """
    if not len(alphas) or not len(Ms):
        raise InputError("convergence study needs at least one alpha and one M")
    cfg = cfg or SolveConfig()
    M_max = max(Ms)
    if background.kind == "polynomial":
        P = background.field.degree
    elif background.kind == "uniform":
        P = 0
    else:
        P = M_max
    points = default_points(spec, alphas) if points is None else np.atleast_2d(points)
    if thetas is None:
        # theta depends on alpha only through nu, which is fixed along the family
        thetas = solve_batch(spec, max(M_max - 1, P), cfg)
    scale = max(float(np.max(np.linalg.norm(background.eval(points), axis=1))), 1e-300)

    rows = []
    for alpha in alphas:
        member = scaled_family(spec, alpha)
        gset = assemble_from_thetas(thetas, member, M_max, cfg)
        H0 = taylor_background(background, member.z, max(M_max - 1, P))
        adelta = superpose_adelta(thetas, H0, member, P)
        oracle = np.array([oracle_field(adelta, member, x, oracle_degree) for x in points])
        for M in Ms:
            approx = np.array([eval_expansion(gset, H0, x, M).H for x in points])
            err = float(np.max(np.linalg.norm(oracle - approx, axis=1)))
            rows.append({"alpha": alpha, "M": M, "abs_err": err, "rel_err": err / scale, "slope": np.nan})
    table = pd.DataFrame(rows, columns=["alpha", "M", "abs_err", "rel_err", "slope"])

    for M, group in table.groupby("M", sort=True):
        if group["alpha"].nunique() < 2 or (group["abs_err"] <= 0).any():
            continue
        slope, se = fit_slope(group["alpha"], group["abs_err"])
        table.loc[group.index[-1], "slope"] = slope
        logger.info(f"M={M}: fitted slope {slope:.3f} +/- {se:.3f} (expected {3 + M})")
    return table
