"""
GMPT dictionary: offline construction from canonical objects and online identification.

Online fitting uses the rank-2 model H(x_s) = D^2G(x_s, z) Q M Q^T H0(z): a grid of 576
rotations (octahedral group x 24 local perturbations) screened at the prior position, then
BFGS on (z, rotation vector) from the best seeds. The objective is a plain (optionally
noise-weighted) sum of squares.

Usage:
  from detecty.dictionary import build_dictionary, classify
  entries, failures = build_dictionary({"ball": spec}, [1e4], M=1)
  ranking = classify([measurement], Dictionary(entries))
"""
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy.optimize import minimize, minimize_scalar
from scipy.spatial.transform import Rotation

from eddymod.forward import eval_expansion
from eddymod.gmpt import GmptSet, assemble_set
from eddymod.mesh import ObjectSpec, canonicalize
from eddymod.staticlimit import polya_szego_tensor
from eddymod.transmission import SolveConfig
from tensormod.errors import (EmptyMeasurement, FrequencyMismatch, GmptError, InputError, IntegrityError,
                              NoConvergence)
from tensormod.kernels import green_batch
from tensormod.polyfield import BackgroundModel, taylor_background

REFERENCE_CONTRAST = 2.0
FREQ_RTOL = 1e-9
SEEDS = 8
PERTURBATION_DEG = 15.0
DEGENERATE_TOL = 1e-300


@dataclass
class DictEntry:
    """One canonical object sampled at several frequencies"""
    object_id: str
    spec_hash: str
    frequencies: List[float]
    sets: List[GmptSet]
    transform: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def set_for(self, omega: float) -> GmptSet:
        for w, gset in zip(self.frequencies, self.sets):
            if abs(w - omega) <= FREQ_RTOL * max(abs(w), abs(omega), 1.0):
                return gset
        raise FrequencyMismatch(f"entry '{self.object_id}' has no sample at omega={omega}; has {self.frequencies}")

    def static_set(self) -> GmptSet:
        """Lowest-frequency sample"""
        return self.sets[int(np.argmin(self.frequencies))]

    def to_json(self) -> dict:
        return {"object_id": self.object_id, "spec_hash": self.spec_hash,
                "frequencies": [float(w) for w in self.frequencies],
                "sets": [s.to_json() for s in self.sets],
                "transform": self.transform, "provenance": dict(sorted(self.provenance.items()))}

    @classmethod
    def from_json(cls, obj: dict) -> "DictEntry":
        return cls(obj["object_id"], obj["spec_hash"], [float(w) for w in obj["frequencies"]],
                   [GmptSet.from_json(s) for s in obj["sets"]], obj.get("transform", {}), obj.get("provenance", {}))


@dataclass
class Measurement:
    """Observed perturbation vectors at sensor positions for one background and frequency

    Params
      positions  : sensor positions (S, 3)
      background : BackgroundModel driving the object
      observed   : complex H_alpha - H0 at the sensors (S, 3)
      omega      : angular frequency
      noise      : optional standard deviation; residuals are divided by it
      z_prior    : start position of the search (defaults to the sensor centroid)
    """
    positions: np.ndarray
    background: BackgroundModel
    observed: np.ndarray
    omega: float
    noise: Optional[float] = None
    z_prior: Optional[np.ndarray] = None

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.observed = np.atleast_2d(np.asarray(self.observed, dtype=complex))
        if self.positions.size == 0:
            raise EmptyMeasurement("measurement has no sensors")
        if self.observed.shape != self.positions.shape:
            raise InputError(f"observed shape {self.observed.shape} does not match sensors {self.positions.shape}")
        if self.noise is not None and not self.noise > 0:
            raise InputError(f"noise level must be positive, got {self.noise}")

    @property
    def prior(self) -> np.ndarray:
        return self.positions.mean(axis=0) if self.z_prior is None else np.asarray(self.z_prior, dtype=float)

    def to_json(self) -> dict:
        out = {"positions": self.positions.tolist(), "background": self.background.to_json(),
               "observed": [[[float(v.real), float(v.imag)] for v in row] for row in self.observed],
               "omega": float(self.omega), "noise": self.noise}
        if self.z_prior is not None:
            out["z_prior"] = [float(v) for v in self.z_prior]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Measurement":
        pairs = np.asarray(obj["observed"], dtype=float)
        if pairs.size == 0:
            raise EmptyMeasurement("measurement has no sensors")
        return cls(obj["positions"], BackgroundModel.from_json(obj["background"]), pairs[..., 0] + 1j * pairs[..., 1],
                   float(obj["omega"]), obj.get("noise"), obj.get("z_prior"))


def load_measurements(path: Union[str, Path]) -> List[Measurement]:
    """A JSON file holding one measurement object or a list of them"""
    obj = json.loads(Path(path).read_text())
    items = obj if isinstance(obj, list) else [obj]
    if not items:
        raise EmptyMeasurement(f"{path} holds no measurements")
    return [Measurement.from_json(item) for item in items]


def planted_measurement(entry: DictEntry, omega: float, positions, background: BackgroundModel, z, Q,
                        noise: float = 0.0, rng: Optional[np.random.Generator] = None, **kwargs) -> Measurement:
    """Synthetic rank-2 data from an entry placed at (z, Q), with optional relative Gaussian noise"""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    z = np.asarray(z, dtype=float)
    Q = np.asarray(Q, dtype=float)
    M = entry.set_for(omega).mpt().data
    G = green_batch(z, positions, 2)
    observed = np.einsum("sij,j->si", G, Q @ M @ Q.T @ background.eval(z))
    if noise:
        rng = rng or np.random.default_rng(0)
        level = noise * np.sqrt(np.mean(np.abs(observed) ** 2))
        observed = observed + level * (rng.standard_normal(observed.shape) + 1j * rng.standard_normal(observed.shape))
    return Measurement(positions, background, observed, omega, **kwargs)


@dataclass
class FitResult:
    object_id: str
    residual: float
    z: np.ndarray
    Q: np.ndarray
    converged: bool = True
    ill_posed: bool = False
    degenerate: bool = False

    def to_json(self) -> dict:
        return {"object_id": self.object_id, "residual": self.residual, "z": [float(v) for v in self.z],
                "Q": np.asarray(self.Q).tolist(), "converged": self.converged, "ill_posed": self.ill_posed,
                "degenerate": self.degenerate}


# ------------------------------------------------------------------ offline #

def build_dictionary(specs: Dict[str, ObjectSpec], frequencies: Sequence[float], M: int = 1,
                     cfg: Optional[SolveConfig] = None, cache_dir=None) -> Tuple[List[DictEntry], Dict[str, str]]:
    """Canonicalize, solve and assemble every object at every frequency.

    Returns the entries sorted by id and a map of failed ids to their error messages.
    """
    cfg = cfg or SolveConfig()
    entries, failures = [], {}
    for object_id in sorted(specs):
        spec = specs[object_id]
        try:
            canonical, record = canonicalize(spec, polya_szego_tensor(spec.mesh, REFERENCE_CONTRAST))
            sets = [assemble_set(canonical.replace(omega=float(w)), M, cfg, cache_dir=cache_dir)
                    for w in frequencies]
        except GmptError as err:
            logger.warning(f"Dictionary entry '{object_id}' failed: {err}")
            failures[object_id] = str(err)
            continue
        provenance = {"mesh_sha256": spec.mesh.digest, "solver": cfg.digest(), "order": M}
        entries.append(DictEntry(object_id, canonical.replace(omega=0.0).digest(), [float(w) for w in frequencies],
                                 sets, record.to_json(), provenance))
        logger.info(f"Dictionary entry '{object_id}': {len(frequencies)} frequencies, order {M}")
    return entries, failures


class Dictionary:
    """Entries persisted as entries/<id>.json plus index.json with sha256 hashes"""
    INDEX = "index.json"

    def __init__(self, entries: Sequence[DictEntry] = ()):
        self.entries = sorted(entries, key=lambda e: e.object_id)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def get(self, object_id: str) -> DictEntry:
        for e in self.entries:
            if e.object_id == object_id:
                return e
        raise KeyError(object_id)

    def save(self, directory: Union[str, Path], provenance: Optional[dict] = None) -> Path:
        directory = Path(directory)
        (directory / "entries").mkdir(parents=True, exist_ok=True)
        index = []
        for e in self.entries:
            text = json.dumps(e.to_json(), indent=1, sort_keys=True)
            rel = f"entries/{e.object_id}.json"
            (directory / rel).write_text(text)
            index.append({"id": e.object_id, "file": rel, "sha256": hashlib.sha256(text.encode()).hexdigest()})
        body = {"entries": index, "provenance": provenance or {}}
        (directory / self.INDEX).write_text(json.dumps(body, indent=1, sort_keys=True))
        return directory

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "Dictionary":
        """Load and verify every entry hash; any mismatch raises IntegrityError"""
        directory = Path(directory)
        index_path = directory / cls.INDEX
        if not index_path.exists():
            raise IntegrityError(f"{directory} has no {cls.INDEX}")
        index = json.loads(index_path.read_text())
        entries = []
        for item in index["entries"]:
            path = directory / item["file"]
            if not path.exists():
                raise IntegrityError(f"dictionary entry '{item['id']}' is missing ({path})")
            text = path.read_text()
            digest = hashlib.sha256(text.encode()).hexdigest()
            if digest != item["sha256"]:
                raise IntegrityError(f"dictionary entry '{item['id']}' hash mismatch")
            entries.append(DictEntry.from_json(json.loads(text)))
        logger.info(f"Loaded {len(entries)} verified dictionary entries from {directory}")
        return cls(entries)


# ------------------------------------------------------------------- online #

def _fibonacci_directions(n: int) -> np.ndarray:
    k = np.arange(n) + 0.5
    polar = np.arccos(1.0 - 2.0 * k / n)
    azim = np.pi * (1.0 + 5 ** 0.5) * k
    return np.stack([np.cos(azim) * np.sin(polar), np.sin(azim) * np.sin(polar), np.cos(polar)], axis=1)


@lru_cache(maxsize=1)
def rotation_grid(perturbation_deg: float = PERTURBATION_DEG) -> Rotation:
    """24 octahedral rotations, each composed with the identity and 23 small tilts (576 total)"""
    group = Rotation.create_group("O")
    tilts = np.concatenate([np.zeros((1, 3)), np.deg2rad(perturbation_deg) * _fibonacci_directions(23)])
    local = Rotation.from_rotvec(tilts)
    mats = np.einsum("gij,kjl->gkil", group.as_matrix(), local.as_matrix()).reshape(-1, 3, 3)
    return Rotation.from_matrix(mats)


def _as_list(measurements) -> List[Measurement]:
    if isinstance(measurements, Measurement):
        return [measurements]
    out = list(measurements)
    if not out:
        raise EmptyMeasurement("no measurements given")
    return out


class _Objective:
    """Joint sum of squares over several measurements for one entry"""
    def __init__(self, entry: DictEntry, measurements: List[Measurement], order: int = 1):
        self.sets = [entry.set_for(m.omega) for m in measurements]
        self.mpts = [s.mpt().data for s in self.sets]
        self.measurements = measurements
        self.order = order

    def predict(self, k: int, z, Q) -> np.ndarray:
        meas = self.measurements[k]
        if self.order == 1:
            G = green_batch(z, meas.positions, 2)                 # symmetric in x <-> z
            h = meas.background.eval(np.asarray(z, dtype=float))
            return np.einsum("sij,j->si", G, Q @ self.mpts[k] @ Q.T @ h)
        H0 = taylor_background(meas.background, z, self.order - 1)
        rotated = self.sets[k].transform(Q)
        return np.array([eval_expansion(rotated, H0, x, self.order).H for x in meas.positions])

    def residual(self, z, Q) -> float:
        total = 0.0
        for k, meas in enumerate(self.measurements):
            diff = self.predict(k, z, Q) - meas.observed
            if meas.noise is not None:
                diff = diff / meas.noise
            total += float(np.sum(np.abs(diff) ** 2))
        return total

    def screen(self, z, grid: Rotation) -> np.ndarray:
        """Residual of every grid rotation at fixed z"""
        Qs = grid.as_matrix()
        total = np.zeros(len(Qs))
        for k, meas in enumerate(self.measurements):
            G = green_batch(z, meas.positions, 2)
            h = meas.background.eval(np.asarray(z, dtype=float))
            v = np.einsum("rjk,kl,rml,m->rj", Qs, self.mpts[k], Qs, h)
            diff = np.einsum("sij,rj->rsi", G, v) - meas.observed[None]
            if meas.noise is not None:
                diff = diff / meas.noise
            total += np.sum(np.abs(diff) ** 2, axis=(1, 2))
        return total


def fit_position(measurements, entry: DictEntry, grid: Optional[Rotation] = None, order: int = 1,
                 seeds: int = SEEDS, raise_on_failure: bool = False) -> FitResult:
    """Best (z, Q) for one entry by rotation screening and local least-squares refinement
    """
    measurements = _as_list(measurements)
    grid = rotation_grid() if grid is None else grid
    objective = _Objective(entry, measurements, 1)
    z0 = measurements[0].prior
    n_eq = 3 * sum(len(m.positions) for m in measurements)
    ill_posed = n_eq < 6
    if ill_posed:
        logger.warning(f"'{entry.object_id}': {n_eq} equations for 6 unknowns; fit is ill-posed")
    observed_norm = sum(float(np.sum(np.abs(m.observed) ** 2)) for m in measurements)
    degenerate = observed_norm <= DEGENERATE_TOL

    screened = objective.screen(z0, grid)
    order_idx = np.argsort(screened, kind="stable")
    best_Q = grid[int(order_idx[0])].as_matrix()
    if degenerate:
        logger.warning(f"'{entry.object_id}': observed data vanish; returning the screening optimum")
        return FitResult(entry.object_id, float(screened[order_idx[0]]), z0, best_Q, True, ill_posed, True)

    scale = max(observed_norm, float(screened[order_idx[0]]), 1e-300)
    objective.order = order
    best = None
    for idx in order_idx[:seeds]:
        seed = grid[int(idx)]

        def loss(params, seed=seed):
            Q = (Rotation.from_rotvec(params[3:]) * seed).as_matrix()
            return objective.residual(params[:3], Q) / scale

        res = minimize(loss, np.concatenate([z0, np.zeros(3)]), method="BFGS")
        if best is None or res.fun < best[0].fun:
            best = (res, seed)
    res, seed = best
    Q = (Rotation.from_rotvec(res.x[3:]) * seed).as_matrix()
    result = FitResult(entry.object_id, float(res.fun * scale), res.x[:3], Q, bool(res.success), ill_posed, False)
    if not res.success:
        message = f"'{entry.object_id}': refinement stopped early ({res.message}); best residual {result.residual:.3e}"
        if raise_on_failure:
            raise NoConvergence(message, best=result)
        logger.warning(message)
    logger.debug(f"'{entry.object_id}': residual {result.residual:.3e} at z={np.round(result.z, 6)}")
    return result


def fit_scale(measurements, entry: DictEntry, z, Q, bounds=(0.2, 5.0)) -> Tuple[float, float]:
    """Size factor s of the static sample (M_s = s^3 M) minimising the residual at fixed (z, Q)"""
    measurements = _as_list(measurements)
    static = entry.static_set().mpt().data
    z = np.asarray(z, dtype=float)
    Q = np.asarray(Q, dtype=float)

    def loss(s):
        total = 0.0
        for meas in measurements:
            G = green_batch(z, meas.positions, 2)
            h = meas.background.eval(z)
            pred = np.einsum("sij,j->si", G, s ** 3 * (Q @ static @ Q.T @ h))
            total += float(np.sum(np.abs(pred - meas.observed) ** 2))
        return total

    res = minimize_scalar(loss, bounds=bounds, method="bounded")
    return float(res.x), float(res.fun)


def classify(measurements, dictionary: Union[Dictionary, Sequence[DictEntry]], grid: Optional[Rotation] = None,
             order: int = 1, jobs: Optional[int] = None) -> List[FitResult]:
    """Fit every entry and rank by (residual, object id)"""
    measurements = _as_list(measurements)
    entries = list(dictionary)
    if not entries:
        raise InputError("dictionary is empty")
    grid = rotation_grid() if grid is None else grid
    fit = lambda e: fit_position(measurements, e, grid, order)
    if (jobs or 1) == 1:
        results = [fit(e) for e in entries]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(fit, entries))
    ranked = sorted(results, key=lambda r: (r.residual, r.object_id))
    logger.info("Ranking: " + ", ".join(f"{r.object_id} ({r.residual:.3e})" for r in ranked))
    return ranked
