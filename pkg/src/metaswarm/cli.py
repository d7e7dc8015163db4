"""Command-line entry point.

Subcommands: run (execute a configured mode), validate (run experiment
suites, nonzero exit on failure), list-experiments, print-schema.
Exit codes: 0 success, 1 experiment failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import io, metadyn, particles, pde, quasisteady, validate
from .config import SCHEMA, RunConfig, parse_config
from .errors import ConfigurationError, MetaswarmError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metaswarm",
        description="aggregation-with-noise simulators and validation suites",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute the mode configured in a file")
    run.add_argument("--config", required=True, help="path to JSON config")
    run.add_argument("--seed", type=int, default=None,
                     help="override the config seed")
    run.add_argument("--output", default=None, help="override output_dir")

    val = sub.add_parser("validate", help="run validation experiments")
    val.add_argument("--experiment", default="all",
                     help="experiment name or 'all'")
    val.add_argument("--config", default=None,
                     help="optional JSON config (experiment mode)")
    val.add_argument("--seed", type=int, default=0)
    val.add_argument("--output", default=None)

    sub.add_parser("list-experiments", help="print available experiment names")
    sub.add_parser("print-schema", help="print the config JSON schema")
    return parser


def _run_particles(cfg: RunConfig) -> int:
    sec = cfg.section
    k = cfg.kernel.build()
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    init = sec["initial"]
    if init["kind"] == "two_cluster":
        x0 = np.concatenate([
            rng.normal(init["centers"][0], init["spread"], init["n_left"]),
            rng.normal(init["centers"][1], init["spread"], init["n_right"]),
        ])
    else:
        x0 = rng.uniform(init["low"], init["high"], init["n"])
    ens = particles.ParticleEnsemble(x0)
    scfg = particles.SdeConfig(sigma=sec["sigma"], dt=sec["dt"],
                               steps=sec["steps"], seed=cfg.seed)
    srng = scfg.make_rng()
    ens0 = ens
    ens, snaps = particles.simulate(ens, k, scfg,
                                    record_every=sec["record_stride"],
                                    rng=srng)
    snaps = [ens0] + snaps
    out = io.ensure_dir(cfg.output_dir)
    if sec["output"] == "full":
        io.write_particles_csv(
            os.path.join(out, "particles.csv"),
            [s.time for s in snaps],
            np.array([s.positions for s in snaps]))
    split = sec["split_point"]
    masses = np.array([particles.cluster_masses(s, split) for s in snaps])
    traj = metadyn.MassTrajectory(np.array([s.time for s in snaps]),
                                  masses[:, 0], masses[:, 1])
    io.write_trajectory_csv(os.path.join(out, "masses.csv"), traj)
    with open(os.path.join(out, "run_metadata.json"), "w") as fh:
        json.dump({"prng": particles.PRNG_ALGORITHM, "seed": cfg.seed,
                   "mode": "particles"}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def _run_pde(cfg: RunConfig) -> int:
    sec = cfg.section
    k = cfg.kernel.build()
    g = sec["grid"]
    grid = pde.Grid(g["x_left"], g["x_right"], g["n_cells"])
    eps2 = sec["eps2"]
    init = sec["initial"]
    x1 = None
    initial_masses = None
    if init["kind"] == "two_spike":
        eps = float(np.sqrt(eps2))
        rho = quasisteady.build_two_spike(init["M1"], init["M2"], init["x1"],
                                          k, eps, grid)
        x1 = init["x1"]
        initial_masses = (init["M1"], init["M2"])
    else:
        xc = grid.centers()
        values = np.exp(-0.5 * ((xc - init["center"]) / init["width"]) ** 2)
        values *= init["mass"] / (values.sum() * grid.dx)
        rho = pde.DensityField(grid, values)
    pcfg = pde.PdeConfig(eps2=eps2, dt=sec["dt"], t_end=sec["t_end"],
                         output_times=np.asarray(sec["output_times"]))
    traj, final = pde.run_to(rho, k, pcfg, x1=x1,
                             initial_masses=initial_masses)
    out = io.ensure_dir(cfg.output_dir)
    io.write_trajectory_csv(os.path.join(out, "masses.csv"), traj)
    io.write_profile_csv(os.path.join(out, "profile.csv"), final)
    return EXIT_OK


def _run_asymptotic(cfg: RunConfig) -> int:
    sec = cfg.section
    k = cfg.kernel.build()
    eps = float(np.sqrt(sec["eps2"]))
    traj = metadyn.integrate_masses(sec["M1_0"], sec["total_mass"], k, eps,
                                    sec["t_end"])
    out = io.ensure_dir(cfg.output_dir)
    io.write_trajectory_csv(os.path.join(out, "masses.csv"), traj)
    return EXIT_OK


def _run_experiments(names, seed, output_dir, overrides=None) -> int:
    any_failed = False
    for name in names:
        fn = validate.EXPERIMENTS[name]
        kwargs = {"config": (overrides or {}).get(name),
                  "output_dir": output_dir}
        if name in ("gaussian", "particle_equilibration"):
            kwargs["seed"] = seed
        report = fn(**kwargs)
        status = "PASS" if report.passed else "FAIL"
        print(f"[{status}] {name}")
        for key in sorted(report.metrics):
            print(f"    {key} = {report.metrics[key]:.6g}")
        any_failed |= not report.passed
    return EXIT_FAILURE if any_failed else EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "print-schema":
            print(json.dumps(SCHEMA, indent=2))
            return EXIT_OK
        if args.command == "list-experiments":
            for name in validate.EXPERIMENTS:
                print(name)
            return EXIT_OK
        if args.command == "run":
            cfg = parse_config(args.config)
            if args.seed is not None:
                cfg.seed = args.seed
            if args.output is not None:
                cfg.output_dir = args.output
            if cfg.mode == "particles":
                return _run_particles(cfg)
            if cfg.mode == "pde":
                return _run_pde(cfg)
            if cfg.mode == "asymptotic":
                return _run_asymptotic(cfg)
            sec = cfg.section
            return _run_experiments([sec["name"]], cfg.seed,
                                    args.output or cfg.output_dir,
                                    {sec["name"]: sec["config"]})
        if args.command == "validate":
            overrides = None
            seed = args.seed
            output_dir = args.output
            if args.config is not None:
                cfg = parse_config(args.config)
                if cfg.mode != "experiment":
                    raise ConfigurationError(
                        "validate requires an experiment-mode config")
                overrides = {cfg.section["name"]: cfg.section["config"]}
                seed = cfg.seed if args.seed == 0 else args.seed
                output_dir = output_dir or cfg.output_dir
            if args.experiment == "all":
                names = list(validate.EXPERIMENTS)
            elif args.experiment in validate.EXPERIMENTS:
                names = [args.experiment]
            else:
                raise ConfigurationError(
                    f"unknown experiment {args.experiment!r}; see "
                    "list-experiments")
            return _run_experiments(names, seed, output_dir, overrides)
        raise ConfigurationError(f"unknown command {args.command!r}")
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MetaswarmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
