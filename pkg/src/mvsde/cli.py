"""Command-line entry point: ``mvsde <subcommand> --config <path>``.

Exit codes: 0 pass, 1 assertion failure, 2 configuration or validation
error, 3 certification refusal, 4 numerical instability.
"""

import argparse
from importlib import resources
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from . import config as cfgmod
from .convergence_lab import (SequenceSystem, certify_uniform, invariant_convergence_experiment,
                              penalization_experiment, solution_convergence_experiment)
from .ergodicity_lab import (contraction_experiment, ergodicity_bound_experiment,
                             estimate_invariant_measure, reference_quantiles,
                             require_dissipative, uniform_moment_experiment, w2_to_reference)
from .errors import CertificationError, ConfigError, MvsdeError, SimulationInstability
from .measures import cloud_to_csv_rows
from .particle_solver import initial_cloud, k_variation_csv, simulate, snapshot_csv
from .reports import OutputSet
from .rng import derive_seed

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_REFUSED, EXIT_UNSTABLE = 0, 1, 2, 3, 4
BENCHMARKS = "benchmarks"


def bundled_names():
    folder = resources.files("mvsde") / BENCHMARKS
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def load_bundled_raw(name):
    stem = name[:-5] if name.endswith(".json") else name
    res = resources.files("mvsde") / BENCHMARKS / f"{stem}.json"
    if not res.is_file():
        raise ConfigError("--config", f"no such file or bundled benchmark: {name}")
    return json.loads(res.read_text())


def resolve_config(arg, seed):
    if arg is None:
        raise ConfigError("--config", "a configuration is required")
    if os.path.exists(arg):
        return cfgmod.load_config(arg, seed)
    return cfgmod.parse_config(load_bundled_raw(arg), seed)


class Run:
    """Shared state for one subcommand invocation."""

    def __init__(self, args, cfg, command):
        self.args = args
        self.cfg = cfg
        self.threads = args.threads
        folder = args.out or cfg.output or os.path.join("mvsde-out", command)
        self.out = OutputSet(folder, cfg.raw, cfg.seed, command)
        self.checks = []
        self.metrics = {}
        self.figures = not args.no_figures

    def say(self, text):
        if not self.args.quiet:
            print(text)

    def check(self, name, ok, detail=""):
        ok = bool(ok)
        self.checks.append({"name": name, "passed": ok, "detail": detail})
        self.say(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return ok

    def csv(self, name, text):
        self.out.write(name, text)

    def plot(self, fn, *a, **kw):
        if not self.figures:
            return
        from . import plotting
        for name in fn(plotting)(*a, self.out.folder, **kw):
            self.out.register(name)

    def finish(self):
        passed = all(c["passed"] for c in self.checks)
        self.out.finish("pass" if passed else "fail",
                        {"checks": self.checks, "metrics": self.metrics,
                         "threads": self.threads})
        return EXIT_PASS if passed else EXIT_FAIL


# -- subcommands ---------------------------------------------------------------


def cmd_simulate(run):
    cfg = run.cfg
    ens = simulate(cfg.system, cfg.solver, run.threads)
    run.csv("snapshots.csv", snapshot_csv(ens))
    run.csv("k_variation.csv", k_variation_csv(ens))
    run.say(f"simulated {cfg.solver.N} particles over {ens.n_records} records")
    run.plot(lambda p: p.snapshots, ens)


def _constants(cfg):
    if cfg.constants is None:
        raise ConfigError("coefficients.constants", "declared constants are required here")
    return cfg.constants


def cmd_contraction(run):
    cfg = run.cfg
    constants = _constants(cfg)
    require_dissipative(cfg.system, constants)
    d, n, seed = cfg.operator.dimension, cfg.solver.N, cfg.seed
    mu0 = initial_cloud(cfgmod.exp_initial(cfg, "mu0"), n, d, seed)
    nu0 = initial_cloud(cfgmod.exp_initial(cfg, "nu0"), n, d, derive_seed(seed, "nu0"))
    window = cfgmod.exp_numbers(cfg, "fit_window", [0.5, 3.0])
    if len(window) != 2 or window[0] >= window[1]:
        raise ConfigError("experiment.fit_window", "expected [start, end] with start < end")
    rep = contraction_experiment(
        cfg.system, mu0, nu0, cfg.solver, constants, fit_window=tuple(window),
        tolerance=cfgmod.exp_number(cfg, "tolerance", 0.5),
        floor_fraction=cfgmod.exp_number(cfg, "floor_fraction", 0.25),
        max_fitted_slope=cfgmod.exp_number(cfg, "max_fitted_slope", None),
        threads=run.threads, certify=False)
    run.csv("contraction.csv", rep.csv())
    run.metrics.update(noise_floor=rep.noise_floor, fitted_slope=rep.fitted_rate)
    n_checked = int(rep.checked.sum())
    run.check("pointwise bound above noise floor", bool(np.all(rep.bound_ok[rep.checked])),
              f"{n_checked}/{rep.times.size} times checked, lambda = {rep.declared_lambda:g}, "
              f"floor = {rep.noise_floor:.4g}")
    if rep.max_fitted_slope is not None:
        run.check("fitted slope", rep.slope_ok,
                  f"{rep.fitted_rate:.4f} <= {rep.max_fitted_slope:g}")
    run.plot(lambda p: p.contraction, rep)


def cmd_ergodicity(run):
    cfg = run.cfg
    constants = _constants(cfg)
    require_dissipative(cfg.system, constants)
    burn_in = cfgmod.exp_number(cfg, "burn_in")
    pooled = bool(cfgmod.exp_value(cfg, "pooled", False))
    est = estimate_invariant_measure(cfg.system, cfg.solver, burn_in, pooled=pooled,
                                     threads=run.threads)
    run.csv("invariant.csv", "\n".join(cloud_to_csv_rows(est.cloud)) + "\n")
    sidecar = dict(est.sidecar(), seed=cfg.seed)
    run.csv("invariant.json", json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    reference = None
    law = cfgmod.exp_value(cfg, "reference_law", None)
    if law is not None:
        if not isinstance(law, dict) or law.get("kind") not in ("half_normal", "normal") or \
                not isinstance(law.get("scale"), (int, float)) or not law["scale"] > 0:
            raise ConfigError("experiment.reference_law",
                              "expected {kind: half_normal|normal, scale > 0}")
        if cfg.operator.dimension != 1:
            raise ConfigError("experiment.reference_law", "reference laws are one-dimensional")
        limit = cfgmod.exp_number(cfg, "max_reference_w2")
        dist = w2_to_reference(est, law)
        reference = reference_quantiles(law, est.n)
        run.metrics["reference_w2"] = dist
        run.check("W2 to reference law", dist <= limit, f"{dist:.5f} <= {limit:g}")
    rep = None
    nu0 = cfgmod.exp_initial(cfg, "nu0", None)
    if nu0 is not None:
        rep = ergodicity_bound_experiment(
            cfg.system, nu0, cfg.solver, est, constants,
            tolerance=cfgmod.exp_number(cfg, "tolerance", 0.5),
            floor_fraction=cfgmod.exp_number(cfg, "floor_fraction", 0.25),
            burn_in=burn_in, threads=run.threads, certify=False)
        run.csv("ergodicity.csv", rep.csv())
        run.metrics["noise_floor"] = rep.noise_floor
        run.check("ergodic bound above noise floor", rep.passed,
                  f"{int(rep.checked.sum())}/{rep.times.size} times checked, "
                  f"floor = {rep.noise_floor:.4g}")
    horizons = cfgmod.exp_numbers(cfg, "horizons", None)
    if horizons is not None:
        mom = uniform_moment_experiment(cfg.system, cfg.solver, horizons, constants,
                                        tolerance=cfgmod.exp_number(cfg, "moment_tolerance",
                                                                    0.2),
                                        threads=run.threads, certify=False)
        run.csv("moments.csv", mom.csv())
        run.check("uniform second moment", mom.passed,
                  ", ".join(f"T={t:g}: {s:.4f}" for t, s in zip(mom.horizons, mom.sups)))
        run.plot(lambda p: p.moments, mom)
    if rep is not None:
        run.plot(lambda p: p.ergodicity, rep)
    run.plot(lambda p: p.invariant, est, reference=reference)
    if not run.checks:
        raise ConfigError("experiment", "nothing to check: give reference_law, nu0 or horizons")


def _sequence(cfg):
    return SequenceSystem(cfgmod.exp_operator_family(cfg), cfg.coefficients, cfg.initial,
                          cfgmod.exp_indices(cfg))


def _trend_checks(run, name, xs, gaps, slack, ratio, cap, label):
    from .convergence_lab import nonincreasing
    run.check(f"{name} nonincreasing", nonincreasing(gaps, slack),
              ", ".join(f"{label}={x:g}: {g:.4e}" for x, g in zip(xs, gaps)))
    if ratio is not None:
        run.check(f"{name} final/first ratio", gaps[-1] <= gaps[0] * ratio,
                  f"{gaps[-1]:.4e} <= {gaps[0]:.4e} * {ratio:.4g}")
    if cap is not None:
        run.check(f"{name} final gap cap", gaps[-1] <= cap, f"{gaps[-1]:.4e} <= {cap:g}")


def cmd_converge_solutions(run):
    cfg = run.cfg
    seq = _sequence(cfg)
    certify_uniform(seq, _constants(cfg))
    slack = cfgmod.exp_number(cfg, "slack", 0.1)
    rep = solution_convergence_experiment(
        seq, cfg.solver, cfg.constants, slack=slack,
        final_ratio=cfgmod.exp_number(cfg, "final_ratio", None),
        max_final_gap=cfgmod.exp_number(cfg, "max_final_gap", None),
        threads=run.threads, certify=False)
    run.csv("solutions.csv", rep.csv())
    _trend_checks(run, "sup mean-square gap", rep.indices, rep.sup_mse, slack,
                  rep.final_ratio, rep.max_final_gap, "n")
    run.plot(lambda p: p.index_gaps, rep.indices, rep.sup_mse, "sup mean-square gap",
             "solution convergence", name="solutions.png")


def cmd_penalization(run):
    cfg = run.cfg
    eps = cfgmod.exp_numbers(cfg, "epsilons")
    if any(e <= 0 for e in eps):
        raise ConfigError("experiment.epsilons", "must be positive")
    h = cfgmod.exp_number(cfg, "h", None)
    ratio = cfgmod.exp_number(cfg, "h_over_epsilon", None)
    if ratio is not None and not 0 < ratio <= 0.5:
        raise ConfigError("experiment.h_over_epsilon", "must lie in (0, 1/2]")
    for e in eps:
        step = h if h is not None else (e * ratio if ratio is not None else None)
        if step is not None:
            n_steps = cfg.solver.T / step
            if abs(round(n_steps) - n_steps) > 1e-9 * max(1.0, n_steps):
                raise ConfigError("experiment.epsilons",
                                  f"step {step:g} does not divide T for epsilon = {e:g}")
    slack = cfgmod.exp_number(cfg, "slack", 0.1)
    rep = penalization_experiment(cfg.system, eps, cfg.solver, h=h, h_over_epsilon=ratio,
                                  slack=slack,
                                  final_ratio=cfgmod.exp_number(cfg, "final_ratio", None),
                                  max_final_gap=cfgmod.exp_number(cfg, "max_final_gap", None),
                                  threads=run.threads)
    run.csv("penalization.csv", rep.csv())
    _trend_checks(run, "penalized gap", rep.epsilons, rep.sup_mse, slack, rep.final_ratio,
                  rep.max_final_gap, "eps")
    run.plot(lambda p: p.penalization, rep)


def cmd_converge_invariants(run):
    cfg = run.cfg
    seq = _sequence(cfg)
    constants = _constants(cfg)
    certify_uniform(seq, constants, dissipative=True)
    require_dissipative(seq.limit(), constants)
    slack = cfgmod.exp_number(cfg, "slack", 0.1)
    rep = invariant_convergence_experiment(
        seq, cfg.solver, cfgmod.exp_number(cfg, "burn_in"), constants, slack=slack,
        floor_multiple=cfgmod.exp_number(cfg, "floor_multiple", 2.0),
        moment_factor=cfgmod.exp_number(cfg, "moment_factor", 4.0),
        moment_offset=cfgmod.exp_number(cfg, "moment_offset", 1.0),
        threads=run.threads, certify=False)
    run.csv("invariants.csv", rep.csv())
    run.metrics.update(monte_carlo_floor=rep.floor,
                       limit_second_moment=rep.limit_second_moment)
    run.check("W2 gap nonincreasing", rep.monotone_ok,
              ", ".join(f"n={n}: {g:.4e}" for n, g in zip(rep.indices, rep.w2_gap)))
    run.check("final gap within Monte-Carlo floor", rep.floor_ok,
              f"{rep.w2_gap[-1]:.4e} <= {rep.floor_multiple:g} * {rep.floor:.4e}")
    run.check("uniform second moment", rep.moment_ok,
              f"{max(rep.second_moment):.4f} <= {rep.moment_bound:.4f}")
    run.plot(lambda p: p.invariant_convergence, rep)


COMMANDS = {
    "simulate": cmd_simulate,
    "contraction": cmd_contraction,
    "ergodicity": cmd_ergodicity,
    "converge-solutions": cmd_converge_solutions,
    "converge-invariants": cmd_converge_invariants,
    "penalization": cmd_penalization,
}


def cmd_selftest(args):
    from . import selftest
    import io
    buf = io.StringIO()

    def emit(line):
        buf.write(line + "\n")
        if not args.quiet:
            print(line)

    start = time.perf_counter()
    try:
        results = selftest.run(fault=args.inject_fault, emit=emit)
    except ValueError as exc:
        raise ConfigError("--inject-fault", str(exc)) from exc
    if not args.quiet:
        print(f"elapsed {time.perf_counter() - start:.1f} s", file=sys.stderr)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        from .reports import atomic_write
        atomic_write(os.path.join(args.out, "selftest.txt"), buf.getvalue())
    return EXIT_PASS if all(r.passed for r in results) else EXIT_FAIL


# -- entry point ---------------------------------------------------------------


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError("seed must be an integer") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _threads(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("threads must be an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config path or bundled benchmark name")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seed", type=_u64, help="override the config seed")
    common.add_argument("--threads", type=_threads, default=1,
                        help="worker threads inside the solver; results do not depend on it")
    common.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    common.add_argument("--quiet", action="store_true", help="suppress progress lines")
    parser = argparse.ArgumentParser(prog="mvsde", description=__doc__.splitlines()[0],
                                     parents=[common])
    parser.add_argument("--version", action="version", version=f"mvsde {__version__}")
    parser.add_argument("--list-benchmarks", action="store_true",
                        help="print bundled benchmark names and exit")
    sub = parser.add_subparsers(dest="command")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    st = sub.add_parser("selftest", parents=[common])
    st.add_argument("--inject-fault", choices=["resolvent"], default=None,
                    help="corrupt the resolvent to confirm the suite catches it")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_PASS
    if args.list_benchmarks:
        print("\n".join(bundled_names()))
        return EXIT_PASS
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "selftest":
            return cmd_selftest(args)
        cfg = resolve_config(args.config, args.seed)
        run = Run(args, cfg, args.command)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                COMMANDS[args.command](run)
        except CertificationError as exc:
            run.out.write("certification.json", json.dumps(
                {"message": str(exc), "witness": _jsonable(exc.witness)}, indent=2) + "\n")
            run.out.finish("refused")
            raise
        except SimulationInstability:
            run.out.finish("unstable")
            raise
        return run.finish()
    except MvsdeError as exc:
        print(f"mvsde: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, TypeError) as exc:
        print(f"mvsde: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


if __name__ == "__main__":
    sys.exit(main())
