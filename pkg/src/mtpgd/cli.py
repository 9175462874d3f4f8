"""Command-line entry point ``mtpgd``.

Exit codes: 0 success, 2 configuration error, 3 convergence failure,
4 I/O error. ``MTPGD_THREADS`` caps the BLAS thread pool.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import warnings
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import driver, hodmd
from .driver import RunConfig
from .errors import ArgumentError, ConvergenceError, MTPGDError
from .mesh import dog_bone, rectangular_bar, write_mesh
from .separated import export_modes, mtpgd_decompose

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_IO = 0, 2, 3, 4
THREADS_ENV = "MTPGD_THREADS"


def _config_parent():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("configuration")
    g.add_argument("--config", type=Path, help="INI file with a [run] section")
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one key")
    for f in dataclasses.fields(RunConfig):
        g.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, default=None, metavar="V")
    return p


def _raw_overrides(args):
    raw = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ArgumentError(f"--set expects KEY=VALUE, got {item!r}")
        raw[key.strip().replace("-", "_")] = value.strip()
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, "cfg_" + f.name)
        if v is not None:
            raw[f.name] = v
    return raw


def _build_config(args):
    overrides = _raw_overrides(args)
    if args.config is not None:
        if not args.config.is_file():
            raise ArgumentError(f"config file {str(args.config)!r} not found")
        cfg = RunConfig.load(args.config, overrides)
    else:
        cfg = RunConfig.from_mapping(overrides)
    return cfg.validate()


def _output(args, cfg, default):
    out = args.output or cfg.output_dir or default
    return Path(out)


def cmd_generate_mesh(args):
    if args.kind == "dogbone":
        gauge_w = args.gauge_width if args.gauge_width else 0.5 * args.width
        gauge_l = args.gauge_length if args.gauge_length else 0.4 * args.length
        mesh = dog_bone(args.length, args.width, gauge_w, gauge_l, args.nx, args.ny, not args.free)
    else:
        mesh = rectangular_bar(args.length, args.width, args.nx, args.ny, not args.free)
    write_mesh(mesh, args.output)
    print(f"{args.output}: {mesh.n_nodes} nodes, {mesh.n_elements} elements")


def cmd_run_reference(args):
    cfg = _build_config(args)
    out = _output(args, cfg, "run")
    problem = driver.Problem(cfg)
    ref = driver.run_reference(cfg, problem)
    driver.save_reference(ref, out / "reference")
    print(f"reference: {ref.report.iterations} outer passes, residual {ref.report.equilibrium_residual:.3e}")
    if args.extend:
        ext = driver.run_extended_reference(cfg, ref, problem)
        driver.save_reference(ext, out / "extended")
        print(f"extended: {ext.report.iterations} outer passes, residual {ext.report.equilibrium_residual:.3e}")


def cmd_run_datadriven(args):
    ref = driver.load_reference(args.reference)
    cfg = ref.config
    changes = _build_overrides(args)
    if changes:
        cfg = cfg.replace(**changes).validate()
        ref = dataclasses.replace(ref, config=cfg)
    truth = driver.load_reference(args.truth, "extended-reference") if args.truth else None
    res = driver.run_datadriven(cfg, ref, truth=truth)
    out = Path(args.output or cfg.output_dir or "run") / "datadriven"
    driver.save_datadriven(res, out)
    r = res.report
    print(f"data-driven: {r.iterations} outer passes, rank {r.rank} -> {r.rank_star}, "
          f"residual {r.equilibrium_residual:.3e}, sampled error {r.eps_hat_star_sampled:.3e}")
    if truth is not None:
        print(f"eps_hat {r.eps_hat:.4e}  eps_hat_star {r.eps_hat_star:.4e}")


def _build_overrides(args):
    raw = {}
    if args.config is not None:
        raw.update(RunConfig.load(args.config).to_dict())
    raw.update(_raw_overrides(args))
    parsed = RunConfig.from_mapping(raw)
    return {k: getattr(parsed, k) for k in raw}


def cmd_forecast(args):
    ref = driver.load_reference(args.reference)
    cfg = ref.config
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        try:
            base = mtpgd_decompose(ref.snapshot, ref.grid, cfg.decompose_tol, cfg.decompose_max_rank,
                                   weights=driver.Problem(cfg).row_weights)
        except ConvergenceError as exc:
            base = exc.best
    models = driver.fit_macro_models(base, cfg)
    horizon = args.horizon or cfg.target_cycles - cfg.training_cycles
    pred = driver.forecast_macro(models, base, horizon, cfg)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    hodmd.write_model_csv(out / "hodmd_models.csv", models)
    with open(out / "macro_forecast.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["cycle [-]"] + [f"mode_{k} [-]" for k in range(pred.rank)])
        first = cfg.training_cycles
        for j in range(horizon):
            wr.writerow([first + j + 1] + [repr(float(v)) for v in pred.macro[:, j]])
    radius = [float(m.spectral_radius()) for m in models]
    print(f"forecast of {pred.rank} macro modes over {horizon} cycles; spectral radii "
          + ", ".join(f"{r:.4f}" for r in radius))


def cmd_compare(args):
    ref = driver.load_run(args.reference)
    dd = driver.load_run(args.datadriven)
    table = driver.compare_runs(ref, dd, args.output)
    for k, v in table.items():
        print(f"{k:30s} {v}")


def cmd_export_modes(args):
    run = Path(args.run)
    manifest = json.loads((run / "manifest.json").read_text())
    if manifest.get("kind") == "data-driven":
        stored = driver._load_field(run / args.field)
        cfg = RunConfig.load(run / "config.ini")
        grid = cfg.training_grid() if args.field == "base.npz" else cfg.forecast_grid()
    else:
        ref = driver.load_reference(run, manifest.get("kind"))
        cfg, grid = ref.config, ref.grid
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            try:
                stored = mtpgd_decompose(ref.snapshot, grid, cfg.decompose_tol, args.rank or cfg.decompose_max_rank,
                                         weights=driver.Problem(cfg).row_weights)
            except ConvergenceError as exc:
                stored = exc.best
    export_modes(stored, args.output, args.prefix, grid)
    print(f"exported {stored.rank} modes to {args.output}")


def build_parser():
    parser = argparse.ArgumentParser(prog="mtpgd", description="Multi-time PGD cyclic elasto-plasticity.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    cfgp = _config_parent()

    p = sub.add_parser("generate-mesh", help="write a bar or dog-bone mesh file")
    p.add_argument("output", type=Path)
    p.add_argument("--kind", choices=("bar", "dogbone"), default="bar")
    p.add_argument("--length", type=float, default=100.0)
    p.add_argument("--width", type=float, default=20.0)
    p.add_argument("--gauge-width", type=float, default=0.0)
    p.add_argument("--gauge-length", type=float, default=0.0)
    p.add_argument("--nx", type=int, default=10)
    p.add_argument("--ny", type=int, default=5)
    p.add_argument("--free", action="store_true", help="axial grips only (no transverse clamp)")
    p.set_defaults(func=cmd_generate_mesh)

    p = sub.add_parser("run-reference", parents=[cfgp], help="full integration over the training window")
    p.add_argument("-o", "--output", type=Path)
    p.add_argument("--extend", action="store_true", help="also integrate the forecast window")
    p.set_defaults(func=cmd_run_reference)

    p = sub.add_parser("run-datadriven", parents=[cfgp], help="forecast, correct and solve the extension")
    p.add_argument("reference", type=Path, help="stored reference run directory")
    p.add_argument("--truth", type=Path, help="stored extended reference, for error reporting")
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(func=cmd_run_datadriven)

    p = sub.add_parser("forecast", help="HODMD forecast of the training macro modes")
    p.add_argument("reference", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--horizon", type=int, default=0)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("compare", help="compare an extended reference with a data-driven run")
    p.add_argument("reference", type=Path)
    p.add_argument("datadriven", type=Path)
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export-modes", help="write separated modes as CSV")
    p.add_argument("run", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--field", default="base.npz", help="field file of a data-driven run")
    p.add_argument("--rank", type=int, default=0, help="decomposition rank for reference runs")
    p.add_argument("--prefix", default="modes")
    p.set_defaults(func=cmd_export_modes)
    return parser


def _threads():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError as exc:
        raise ArgumentError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ArgumentError(f"{THREADS_ENV} must be >= 1")
    return n


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        with threadpool_limits(limits=_threads()):
            args.func(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.history:
            print("residual trace: " + " ".join(f"{h:.3e}" for h in exc.history[-10:]), file=sys.stderr)
        return EXIT_CONVERGENCE
    except driver.PhaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, ConvergenceError):
            return EXIT_CONVERGENCE
        if isinstance(exc.cause, OSError):
            return EXIT_IO
        return EXIT_CONFIG
    except (ArgumentError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MTPGDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
