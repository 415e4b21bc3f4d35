"""
Command-line surface:

  gmpt solve    --mesh fixture:cube --alpha 0.01 --sigma 1e6 --mur 2 --omega 1e4 --order 2
  gmpt assemble --mesh fixture:cube ... --order 2 --out gmpt.json
  gmpt verify   [--inject sign|epsilon] [--out report.csv]
  gmpt study    --mesh fixture:sphere ... --alphas 0.01,0.02,0.04 --orders 1,2 --out study.csv [--plot study.png]
  gmpt dict build --fixtures sphere,cube,box --freqs 1e4 --out dictdir
  gmpt dict match --dict dictdir --measurement meas.json [--out ranking.json]

Exit codes: 0 success, 1 verification failure, 2 numerical failure, 3 input error, 4 integrity error.
"""
import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from loguru import logger

from eddymod.fixtures import box_mesh, cube_mesh, sphere_mesh
from eddymod.forward import convergence_study
from eddymod.gmpt import assemble_from_thetas
from eddymod.mesh import ObjectSpec, TetMesh, load_mesh
from eddymod.transmission import load_batch, solve_batch
from tensormod.errors import EXIT_NUMERICAL, EXIT_OK, GmptError, InputError, VerificationFailed
from tensormod.polyfield import BackgroundModel, PolyField

from .config import KEYS, RunConfig, build_config, read_config_file
from .dictionary import Dictionary, build_dictionary, classify, load_measurements
from .plotutils import study_png
from .verify import INJECTIONS, VerifySuite

FIXTURES = {"cube": cube_mesh, "sphere": sphere_mesh, "box": box_mesh}


def package_version() -> str:
    try:
        from importlib.metadata import version
        return version("gmptkit")
    except Exception:
        return "0.1.0"


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def provenance(cfg: RunConfig, inputs: Optional[dict] = None) -> dict:
    return {"version": package_version(), "config_hash": cfg.config_hash, "inputs": dict(sorted((inputs or {}).items()))}


def resolve_mesh(text: Optional[str], r_far: float = 5.0) -> TetMesh:
    """A mesh file path, or fixture:<cube|sphere|box>"""
    if not text:
        raise InputError("a mesh is required (--mesh PATH or --mesh fixture:NAME)")
    if text.startswith("fixture:"):
        name = text.split(":", 1)[1]
        if name not in FIXTURES:
            raise InputError(f"Invalid fixture '{name}'. Accepted fixtures are {sorted(FIXTURES)}")
        return FIXTURES[name](r_far_factor=r_far)
    return load_mesh(text)


def mesh_inputs(text: str) -> dict:
    return {} if text.startswith("fixture:") else {text: file_sha256(text)}


def object_spec(cfg: RunConfig) -> ObjectSpec:
    mesh = resolve_mesh(cfg.mesh, cfg.solver.r_far)
    return ObjectSpec(mesh, cfg.alpha, sigma=cfg.sigma, mu_star=cfg.mur * cfg.mu0, omega=cfg.omega, mu0=cfg.mu0)


def study_background(name: str) -> BackgroundModel:
    if name == "uniform":
        return BackgroundModel.uniform([0.0, 0.0, 1.0])
    if name == "linear":
        grad = np.array([[0.5, 0.2, 0.0], [0.2, -0.3, 0.1], [0.0, 0.1, -0.2]])
        return BackgroundModel.polynomial(PolyField((np.array([0.0, 0.0, 1.0]), grad)))
    if name == "dipole":
        return BackgroundModel.dipole([0.0, 0.0, 1.0], [0.0, 0.0, 1.0])
    raise InputError(f"Invalid background '{name}'. Accepted values are ['uniform', 'linear', 'dipole']")


def float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from None


def int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from None


# ----------------------------------------------------------------- commands #

def cmd_solve(args, cfg: RunConfig) -> int:
    spec = object_spec(cfg)
    thetas = solve_batch(spec, cfg.order - 1, cfg.solver, cfg.cache_dir)
    record = dict(provenance(cfg, mesh_inputs(cfg.mesh)), spec=spec.meta(), solutions=sorted(J.label() for J in thetas))
    out = Path(cfg.out) if cfg.out else Path(cfg.cache_dir) / "solve.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(record, indent=1, sort_keys=True))
    logger.info(f"{len(thetas)} theta solutions available in {cfg.cache_dir}")
    return EXIT_OK


def cmd_assemble(args, cfg: RunConfig) -> int:
    spec = object_spec(cfg)
    thetas = load_batch(spec, cfg.order - 1, cfg.solver, cfg.cache_dir)
    gset = assemble_from_thetas(thetas, spec, cfg.order, cfg.solver)
    gset.meta["provenance"] = provenance(cfg, mesh_inputs(cfg.mesh))
    out = Path(cfg.out or "gmpt.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    gset.save(out)
    logger.info(f"Wrote {len(gset.blocks)} blocks to {out}")
    return EXIT_OK


def cmd_verify(args, cfg: RunConfig) -> int:
    table = VerifySuite(cfg.solver, args.inject, cfg.seed).run()
    print(table.to_string(index=False))
    if cfg.out:
        write_csv(table, cfg.out, provenance(cfg))
    failed = table.loc[~table["passed"], "check"].tolist()
    if failed:
        raise VerificationFailed(failed)
    return EXIT_OK


def write_csv(table, path, record: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for key, value in record.items():
            fh.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
        table.to_csv(fh, index=False)


def cmd_study(args, cfg: RunConfig) -> int:
    spec = object_spec(cfg)
    table = convergence_study(spec, study_background(args.background), args.alphas, args.orders, cfg.solver)
    print(table.to_string(index=False))
    out = cfg.out or "study.csv"
    write_csv(table, out, provenance(cfg, mesh_inputs(cfg.mesh)))
    if args.plot:
        study_png(table, args.plot)
    return EXIT_OK


def cmd_dict_build(args, cfg: RunConfig) -> int:
    specs = {}
    for name in (n.strip() for n in args.fixtures.split(",") if n.strip()):
        object_id, text = (name, f"fixture:{name}") if name in FIXTURES else (Path(name).stem, name)
        specs[object_id] = ObjectSpec(resolve_mesh(text, cfg.solver.r_far), cfg.alpha, sigma=cfg.sigma,
                                      mu_star=cfg.mur * cfg.mu0, mu0=cfg.mu0)
    entries, failures = build_dictionary(specs, args.freqs, cfg.order, cfg.solver, cfg.cache_dir)
    out = Dictionary(entries).save(cfg.out or "dictionary", provenance(cfg))
    logger.info(f"Dictionary with {len(entries)} entries written to {out}")
    if failures:
        for object_id, message in failures.items():
            logger.error(f"{object_id}: {message}")
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_dict_match(args, cfg: RunConfig) -> int:
    dictionary = Dictionary.load(args.dict)
    measurements = load_measurements(args.measurement)
    ranking = classify(measurements, dictionary, order=cfg.order if args.refine else 1, jobs=cfg.solver.jobs)
    body = {"ranking": [r.to_json() for r in ranking],
            "provenance": provenance(cfg, {str(args.measurement): file_sha256(args.measurement)})}
    for n, r in enumerate(ranking, start=1):
        print(f"{n}. {r.object_id}  residual={r.residual:.4e}  z={np.round(r.z, 6).tolist()}")
    if cfg.out:
        Path(cfg.out).write_text(json.dumps(body, indent=1, sort_keys=True))
    return EXIT_OK


# ------------------------------------------------------------------ parser #

def add_common(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("run options")
    g.add_argument("--config", type=str, default=None, help="key = value config file (flags take precedence)")
    g.add_argument("--mesh", type=str, default=None, help="mesh file or fixture:<cube|sphere|box>")
    g.add_argument("--alpha", type=float, default=None, help="object size alpha [m]")
    g.add_argument("--sigma", type=float, default=None, help="conductivity sigma* [S/m]")
    g.add_argument("--mur", type=float, default=None, help="relative permeability mu*/mu0")
    g.add_argument("--omega", type=float, default=None, help="angular frequency [rad/s]")
    g.add_argument("--order", type=int, default=None, help="expansion order M")
    g.add_argument("--rfar", type=float, default=None, help="truncation half-width in object diameters")
    g.add_argument("--tol", type=float, default=None, help="Krylov relative residual tolerance")
    g.add_argument("--jobs", type=int, default=None, help="worker thread cap")
    g.add_argument("--out", type=str, default=None, help="output file or directory")
    g.add_argument("--cache-dir", dest="cache_dir", type=str, default=None, help="theta cache directory")
    g.add_argument("--seed", type=int, default=None, help="seed of randomized checks")
    g.add_argument("--verbose", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmpt", description="Generalised magnetic polarizability tensors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve and cache every theta up to order M")
    add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("assemble", help="assemble the GMPT set from cached solutions")
    add_common(p)
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("verify", help="run the numerical invariant suite")
    add_common(p)
    p.add_argument("--inject", choices=INJECTIONS, default=None, help="fault injection")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("study", help="remainder convergence over an alpha family")
    add_common(p)
    p.add_argument("--alphas", type=float_list, default=[0.01, 0.02, 0.04, 0.08])
    p.add_argument("--orders", type=int_list, default=[1, 2])
    p.add_argument("--background", type=str, default="linear", help="uniform, linear or dipole")
    p.add_argument("--plot", type=str, default=None, help="optional PNG path")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("dict", help="dictionary build and match")
    dsub = p.add_subparsers(dest="action", required=True)
    b = dsub.add_parser("build")
    add_common(b)
    b.add_argument("--fixtures", type=str, default="sphere,cube,box", help="fixture names or mesh paths")
    b.add_argument("--freqs", type=float_list, default=[1e4])
    b.set_defaults(func=cmd_dict_build)
    mt = dsub.add_parser("match")
    add_common(mt)
    mt.add_argument("--dict", type=str, required=True)
    mt.add_argument("--measurement", type=str, required=True)
    mt.add_argument("--refine", action="store_true", help="refine with the order-M model")
    mt.set_defaults(func=cmd_dict_match)
    return parser


def configure_logging(verbose: bool) -> None:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "INFO",
               format="<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {message}")


def run_config(args) -> RunConfig:
    flags = {key: getattr(args, key, None) for key in KEYS if hasattr(args, key)}
    file_values = read_config_file(args.config) if args.config else {}
    return build_config(file_values, flags)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    try:
        cfg = run_config(args)
        return args.func(args, cfg)
    except GmptError as err:
        logger.error(f"{type(err).__name__}: {err}")
        return err.exit_code
    except OSError as err:
        logger.error(f"{type(err).__name__}: {err}")
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
