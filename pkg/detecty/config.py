"""
Run configuration: defaults < key=value file < GMPT_CACHE_DIR < command-line flags.

Config file format, one option per line:

  # comment
  alpha = 0.01
  sigma = 5.96e7
  order = 2
"""
import hashlib
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

from loguru import logger

from eddymod.mesh import MU0
from eddymod.transmission import SolveConfig
from tensormod.errors import InvalidConfig, ParseError
from tensormod.kernels import Q_MAX

CACHE_ENV = "GMPT_CACHE_DIR"
DEFAULT_CACHE = ".gmpt-cache"

# flag/file key -> (RunConfig or SolveConfig attribute, type)
KEYS = {
    "alpha": ("alpha", float), "sigma": ("sigma", float), "mur": ("mur", float), "omega": ("omega", float),
    "mu0": ("mu0", float), "order": ("order", int), "q_max": ("q_max", int), "seed": ("seed", int),
    "out": ("out", str), "cache_dir": ("cache_dir", str), "mesh": ("mesh", str),
    "epsilon": ("epsilon", float), "tol": ("tol", float), "maxiter": ("maxiter", int), "rfar": ("r_far", float),
    "quad_order": ("quad_order", int), "direct_threshold": ("direct_threshold", int), "krylov": ("krylov", str),
    "jobs": ("jobs", int), "strict": ("strict", bool),
}
SOLVER_KEYS = {f.name for f in fields(SolveConfig)}


@dataclass
class RunConfig:
    """Everything a command needs besides its positional inputs

    Params
      alpha, sigma, mur, omega, mu0 : object scale and material (SI; mur is mu_*/mu0)
      order                         : expansion order M
      q_max                         : Green derivative order cap
      out, cache_dir                : output path and theta cache directory
      solver                        : SolveConfig
    """
    mesh: Optional[str] = None
    alpha: float = 0.01
    sigma: float = 0.0
    mur: float = 1.0
    omega: float = 0.0
    mu0: float = MU0
    order: int = 1
    q_max: int = Q_MAX
    seed: int = 0
    out: Optional[str] = None
    cache_dir: str = DEFAULT_CACHE
    solver: SolveConfig = field(default_factory=SolveConfig)

    def __post_init__(self):
        positive = {"alpha": self.alpha, "mur": self.mur, "mu0": self.mu0, "order": self.order, "q_max": self.q_max}
        for name, value in positive.items():
            if not value > 0:
                raise InvalidConfig(f"{name} must be positive, got {value}")
        for name in ("sigma", "omega"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.order + 1 > self.q_max:
            raise InvalidConfig(f"order {self.order} needs Green derivatives up to {self.order + 1} > q_max={self.q_max}")

    def rendered(self) -> str:
        """Stable key=value rendering (sorted keys)"""
        flat = {k: v for k, v in asdict(self).items() if k != "solver"}
        flat.update({f"solver.{k}": v for k, v in asdict(self.solver).items()})
        return "\n".join(f"{k}={flat[k]!r}" for k in sorted(flat))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.rendered().encode()).hexdigest()


def _cast(key: str, raw, kind, line: Optional[int] = None):
    if raw is None or isinstance(raw, kind) and not isinstance(raw, str):
        return raw
    text = str(raw).strip()
    try:
        if kind is bool:
            if text.lower() not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("1", "true", "yes")
        return kind(text)
    except ValueError:
        raise ParseError(f"option '{key}' expects {kind.__name__}, got '{text}'", line) from None


def read_config_file(path: Union[str, Path]) -> dict:
    """Parse a key=value file into {key: typed value}"""
    out = {}
    for number, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got '{raw.strip()}'", number)
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ParseError(f"unknown option '{key}'. Accepted options are {sorted(KEYS)}", number)
        out[key] = _cast(key, value, KEYS[key][1], number)
    logger.debug(f"Read {len(out)} options from {path}")
    return out


def build_config(file_values: Optional[dict] = None, flag_values: Optional[dict] = None,
                 env: Optional[dict] = None) -> RunConfig:
    """Layer file values, the cache environment variable and flags (None flags are unset)"""
    env = os.environ if env is None else env
    merged = dict(file_values or {})
    if env.get(CACHE_ENV):
        merged["cache_dir"] = env[CACHE_ENV]
    for key, value in (flag_values or {}).items():
        if value is not None:
            merged[key] = value
    run_kws, solver_kws = {}, {}
    for key, value in merged.items():
        if key not in KEYS:
            raise InvalidConfig(f"Invalid option '{key}'. Accepted options are {sorted(KEYS)}")
        attr, kind = KEYS[key]
        value = _cast(key, value, kind)
        (solver_kws if attr in SOLVER_KEYS else run_kws)[attr] = value
    return RunConfig(solver=SolveConfig(**solver_kws), **run_kws)
