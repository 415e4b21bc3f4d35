"""
Polynomial vector fields in Taylor form, the uncurling formula, and background fields

A PolyField of degree P stores, for every p <= P, the tensor (D_z^p s(z))_{j J(p)} with the
vector component first and the p differentiation slots after it:

  s(x) = sum_p 1/p! (D^p s)_{j J(p)} Pi(x - z)_{J(p)} e_j

Exact polynomial calculus (curl, divergence, identity checks) runs on monomial coefficient
cubes of shape (3, n, n, n) in the shifted variable d = x - z, via numpy.polynomial.
"""
from dataclasses import dataclass, field
from itertools import product
from math import factorial
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly
from sklearn.linear_model import LinearRegression
from sklearn.preprocessing import PolynomialFeatures

from .errors import NotDivergenceFree, SingularBackground, InputError
from .kernels import green_deriv
from .tensorcore import LEVI_CIVITA, DenseTensor


DIV_FREE_TOL = 1e-10
P_MAX = 5
SINGULAR_TOL = 1e-9


def _contract_points(coeff: np.ndarray, d: np.ndarray) -> np.ndarray:
    """coeff[j, J(p)] Pi(d)_{J(p)} for every row of d; returns (N, 3)"""
    out = np.broadcast_to(coeff, (d.shape[0],) + coeff.shape)
    for _ in range(coeff.ndim - 1):
        out = np.einsum("n...k,nk->n...", out, d)
    return out


def _symmetrize_tail(arr: np.ndarray) -> np.ndarray:
    p = arr.ndim - 1
    if p < 2:
        return arr
    return DenseTensor(arr).symmetrize(range(1, p + 1)).data


def _pad_cube(cube: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((cube.shape[0], n, n, n), dtype=cube.dtype)
    m = [min(s, n) for s in cube.shape[1:]]
    out[:, :m[0], :m[1], :m[2]] = cube[:, :m[0], :m[1], :m[2]]
    return out


def curl_cube(cube: np.ndarray) -> np.ndarray:
    """Exact curl of a monomial coefficient cube"""
    n = cube.shape[1]
    out = np.zeros_like(cube)
    for i, a, b in zip(*np.nonzero(LEVI_CIVITA)):
        deriv = npoly.polyder(cube[b], axis=a)
        out[i] += LEVI_CIVITA[i, a, b] * _pad_cube(deriv[None], n)[0]
    return out


def divergence_cube(cube: np.ndarray) -> np.ndarray:
    n = cube.shape[1]
    out = np.zeros(cube.shape[1:], dtype=cube.dtype)
    for a in range(3):
        out += _pad_cube(npoly.polyder(cube[a], axis=a)[None], n)[0]
    return out


def eval_cube(cube: np.ndarray, points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(points)
    return np.stack([npoly.polyval3d(points[:, 0], points[:, 1], points[:, 2], cube[j]) for j in range(3)], axis=1)


@dataclass(frozen=True)
class PolyField:
    """Divergence-free (or general) polynomial vector field around a center z.

    Params
      coeffs : per-order arrays; coeffs[p] has shape (3,)*(p+1)
      center : expansion point z
    """
    coeffs: tuple
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        blocks = []
        for p, c in enumerate(self.coeffs):
            arr = np.array(c.data if isinstance(c, DenseTensor) else c, dtype=complex)
            if arr.shape != (3,) * (p + 1):
                raise InputError(f"order {p} coefficient must have shape {(3,) * (p + 1)}, got {arr.shape}")
            arr = _symmetrize_tail(arr)
            arr.setflags(write=False)
            blocks.append(arr)
        object.__setattr__(self, "coeffs", tuple(blocks))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))

    @classmethod
    def uniform(cls, vector: Sequence[float], center=None, degree: int = 0) -> "PolyField":
        coeffs = [np.asarray(vector, dtype=complex)] + [np.zeros((3,) * (p + 1)) for p in range(1, degree + 1)]
        return cls(tuple(coeffs), np.zeros(3) if center is None else center)

    @classmethod
    def zero(cls, degree: int = 0, center=None) -> "PolyField":
        return cls.uniform(np.zeros(3), center, degree)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def tensor(self, p: int) -> DenseTensor:
        if p > self.degree:
            return DenseTensor.zeros(p + 1)
        return DenseTensor(self.coeffs[p])

    def truncate(self, degree: int) -> "PolyField":
        blocks = list(self.coeffs[:degree + 1])
        blocks += [np.zeros((3,) * (p + 1)) for p in range(len(blocks), degree + 1)]
        return PolyField(tuple(blocks), self.center)

    def eval(self, x) -> np.ndarray:
        """Taylor-form evaluation; x is one point or an (N, 3) array"""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        d = np.atleast_2d(x) - self.center
        out = np.zeros((d.shape[0], 3), dtype=complex)
        for p, c in enumerate(self.coeffs):
            out += _contract_points(c, d) / factorial(p)
        return out[0] if single else out

    __call__ = eval

    def divergence_residual(self) -> float:
        worst = 0.0
        for c in self.coeffs[1:]:
            worst = max(worst, float(np.max(np.abs(np.trace(c, axis1=0, axis2=1)))))
        return worst

    def is_divergence_free(self, tol: float = DIV_FREE_TOL) -> bool:
        return self.divergence_residual() <= tol

    def scaled(self, alpha: float) -> "PolyField":
        """The field xi -> s(z + alpha xi) as a PolyField centered at the origin"""
        return PolyField(tuple(alpha ** p * c for p, c in enumerate(self.coeffs)), np.zeros(3))

    def recenter(self, z) -> "PolyField":
        """Re-expand around a new center, keeping the degree"""
        shift = np.asarray(z, dtype=float) - self.center
        if not np.any(shift):
            return self
        blocks = []
        P = self.degree
        for p in range(P + 1):
            acc = np.zeros((3,) * (p + 1), dtype=complex)
            for q in range(p, P + 1):
                c = self.coeffs[q]
                for _ in range(q - p):
                    c = c @ shift
                acc = acc + c / factorial(q - p)
            blocks.append(acc)
        return PolyField(tuple(blocks), np.asarray(z, dtype=float))

    def to_cube(self, n: Optional[int] = None) -> np.ndarray:
        """Monomial coefficients in d = x - z, shape (3, n, n, n)"""
        n = self.degree + 1 if n is None else n
        cube = np.zeros((3, n, n, n), dtype=complex)
        for p, c in enumerate(self.coeffs):
            for J in product(range(3), repeat=p):
                a, b, e = (J.count(0), J.count(1), J.count(2))
                cube[:, a, b, e] += c[(slice(None),) + J] / factorial(p)
        return cube

    @classmethod
    def from_cube(cls, cube: np.ndarray, center=None) -> "PolyField":
        n = cube.shape[1]
        nonzero = [a + b + e for a, b, e in zip(*np.nonzero(np.any(cube != 0, axis=0)))]
        degree = max(nonzero) if nonzero else 0
        blocks = []
        for p in range(degree + 1):
            c = np.zeros((3,) * (p + 1), dtype=complex)
            for J in product(range(3), repeat=p):
                a, b, e = (J.count(0), J.count(1), J.count(2))
                if max(a, b, e) < n:
                    c[(slice(None),) + J] = factorial(a) * factorial(b) * factorial(e) * cube[:, a, b, e]
            blocks.append(c)
        return cls(tuple(blocks), np.zeros(3) if center is None else center)

    def to_json(self) -> dict:
        return {"center": [float(v) for v in self.center],
                "blocks": [DenseTensor(c).to_json() for c in self.coeffs]}

    @classmethod
    def from_json(cls, obj: dict) -> "PolyField":
        return cls(tuple(DenseTensor.from_json(b).data for b in obj["blocks"]), np.asarray(obj["center"]))


def evaluate(field: PolyField, x, z=None) -> np.ndarray:
    """Evaluate a PolyField, optionally re-expanded about z first"""
    if z is not None:
        field = field.recenter(z)
    return field.eval(x)


class PolyPotential:
    """Vector potential t with curl t = s, built by the uncurling formula:

      t(x) = sum_p 1/(p!(p+2)) (D^p s)_{j J(p)} Pi(x - z)_{J(p)} e_j x (x - z)
    """
    def __init__(self, field: PolyField):
        self.field = field
        self.center = field.center

    @staticmethod
    def weight(p: int) -> float:
        return 1.0 / (factorial(p) * (p + 2))

    def eval(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        d = np.atleast_2d(x) - self.center
        inner = np.zeros((d.shape[0], 3), dtype=complex)
        for p, c in enumerate(self.field.coeffs):
            inner += self.weight(p) * _contract_points(c, d)
        out = np.cross(inner, d)
        return out[0] if single else out

    __call__ = eval

    def to_cube(self) -> np.ndarray:
        n = self.field.degree + 2
        cube = np.zeros((3, n, n, n), dtype=complex)
        for p, c in enumerate(self.field.coeffs):
            w = self.weight(p)
            for JJ in product(range(3), repeat=p + 1):
                val = c[JJ]
                if val == 0:
                    continue
                j, J = JJ[0], JJ[1:]
                counts = [J.count(0), J.count(1), J.count(2)]
                for i, l in product(range(3), repeat=2):
                    sign = LEVI_CIVITA[i, j, l]
                    if sign == 0:
                        continue
                    expo = list(counts)
                    expo[l] += 1
                    cube[i, expo[0], expo[1], expo[2]] += w * sign * val
        return cube

    def curl_residual(self) -> float:
        """Coefficient-wise max |curl t - s|"""
        t = self.to_cube()
        s = self.field.to_cube(t.shape[1])
        return float(np.max(np.abs(curl_cube(t) - s)))


def uncurl(field: PolyField, z=None, tol: float = DIV_FREE_TOL) -> PolyPotential:
    if z is not None:
        field = field.recenter(z)
    residual = field.divergence_residual()
    if residual > tol:
        raise NotDivergenceFree(f"trace of derivative coefficients is {residual:.3e} (tolerance {tol:.0e})")
    return PolyPotential(field)


def random_divergence_free(degree: int, rng: np.random.Generator, center=None) -> PolyField:
    """Random field s = curl u for a random real polynomial u of degree+1"""
    n = degree + 2
    u = rng.standard_normal((3, n, n, n))
    # keep total degree <= degree + 1
    a, b, c = np.meshgrid(range(n), range(n), range(n), indexing="ij")
    u[:, (a + b + c) > degree + 1] = 0.0
    s = curl_cube(u.astype(complex))
    return PolyField.from_cube(s[:, :degree + 1, :degree + 1, :degree + 1], center).truncate(degree)


def dipole_field(y, m_e, x) -> np.ndarray:
    """H0(x)_i = (D^2 G(x, y))_ij m_j"""
    return green_deriv(x, y, 2).data.real @ np.asarray(m_e, dtype=float)


@dataclass(frozen=True)
class BackgroundModel:
    """Background magnetic field H0 near the object.

    Params
      kind   : "uniform", "dipole" or "polynomial"
      vector : uniform field value (uniform kind)
      y      : coil position (dipole kind)
      moment : coil moment m^e (dipole kind)
      field  : explicit PolyField (polynomial kind)
    """
    kind: str
    vector: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    moment: Optional[np.ndarray] = None
    field: Optional[PolyField] = None

    def __post_init__(self):
        kinds = ("uniform", "dipole", "polynomial")
        if self.kind not in kinds:
            raise InputError(f"Invalid background kind '{self.kind}'. Accepted kinds are {list(kinds)}")
        required = {"uniform": ("vector",), "dipole": ("y", "moment"), "polynomial": ("field",)}[self.kind]
        for name in required:
            if getattr(self, name) is None:
                raise InputError(f"{self.kind} background needs '{name}'")

    @classmethod
    def uniform(cls, vector) -> "BackgroundModel":
        return cls("uniform", vector=np.asarray(vector, dtype=float))

    @classmethod
    def dipole(cls, y, moment) -> "BackgroundModel":
        return cls("dipole", y=np.asarray(y, dtype=float), moment=np.asarray(moment, dtype=float))

    @classmethod
    def polynomial(cls, field: PolyField) -> "BackgroundModel":
        return cls("polynomial", field=field)

    def eval(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            return np.broadcast_to(self.vector.astype(complex), x.shape).copy()
        if self.kind == "dipole":
            if x.ndim == 1:
                return dipole_field(self.y, self.moment, x).astype(complex)
            return np.array([dipole_field(self.y, self.moment, p) for p in x], dtype=complex)
        return self.field.eval(x)

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "uniform":
            out["vector"] = [float(v) for v in self.vector]
        elif self.kind == "dipole":
            out["y"] = [float(v) for v in self.y]
            out["moment"] = [float(v) for v in self.moment]
        else:
            out["field"] = self.field.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "BackgroundModel":
        kind = obj["kind"]
        if kind == "uniform":
            return cls.uniform(obj["vector"])
        if kind == "dipole":
            return cls.dipole(obj["y"], obj["moment"])
        return cls.polynomial(PolyField.from_json(obj["field"]))


def taylor_background(bg: BackgroundModel, z, P: int, q_max: Optional[int] = None) -> PolyField:
    """Derivative tensors (D_z^p H0(z)) for p <= P as a PolyField centered at z
    """
    z = np.asarray(z, dtype=float)
    if bg.kind == "uniform":
        return PolyField.uniform(bg.vector, z, P)
    if bg.kind == "polynomial":
        return bg.field.recenter(z).truncate(P)
    if np.linalg.norm(z - bg.y) < SINGULAR_TOL:
        raise SingularBackground(f"expansion point is within {SINGULAR_TOL:.0e} of the dipole at {bg.y}")
    blocks = []
    for p in range(P + 1):
        kwargs = {} if q_max is None else {"q_max": q_max}
        G = green_deriv(z, bg.y, 2 + p, **kwargs).data.real
        blocks.append(np.tensordot(G, bg.moment, axes=([1], [0])))
    return PolyField(tuple(blocks), z)


def fit_polynomial(points: np.ndarray, values: np.ndarray, center, degree: int) -> PolyField:
    """Least-squares polynomial PolyField through sampled vector values.

    The monomial coefficients c_abc come from sklearn's PolynomialFeatures +
    LinearRegression(fit_intercept=False); derivative tensors follow as a! b! c! c_abc.
    """
    center = np.asarray(center, dtype=float)
    d = np.atleast_2d(points) - center
    values = np.asarray(values)
    features = PolynomialFeatures(degree=degree, include_bias=True)
    X = features.fit_transform(d)
    cube = np.zeros((3, degree + 1, degree + 1, degree + 1), dtype=complex)
    for part, unit in ((values.real, 1.0), (np.imag(values), 1j)):
        if not np.any(part):
            continue
        model = LinearRegression(fit_intercept=False).fit(X, part)
        for col, (a, b, e) in enumerate(features.powers_):
            cube[:, a, b, e] += unit * model.coef_[:, col]
    return PolyField.from_cube(cube, center).truncate(degree)
