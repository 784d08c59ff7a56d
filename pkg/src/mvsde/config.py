"""JSON experiment configuration.

Top-level keys::

    operator      {"kind": ..., "dimension": d, ...}
    coefficients  {"drift": {...}, "diffusion": {...}, "constants": {...},
                   "perturbation": {"c_b": ..., "c_sigma": ...}}
    initial       {"kind": "point_mass" | "uniform_box" | "grid" | "cloud", ...}
    solver        {"scheme", "h", "N", "T", "record_stride", "epsilon"}
    seed          unsigned 64-bit integer
    experiment    subcommand-specific block
    output        default output directory

Unbounded box sides are written as ``null``, ``"inf"`` or ``"-inf"``.
Every validation error names the JSON path of the offending value.
"""

from dataclasses import dataclass
import hashlib
import json
import math

import numpy as np

from . import monotone_ops as ops
from .coefficients import (AssumptionConstants, CoefficientSpec, ConstantDiffusion,
                           KernelIntegral, MeanFieldLinear, MeasureLipschitz, Perturbation,
                           StateLinear)
from .errors import ConfigError, MvsdeError
from .measures import ParticleCloud
from .particle_solver import (CloudLiteral, PointMass, SdeSystem, SolverConfig, UniformGrid,
                              UniformOnBox)

U64 = (1 << 64) - 1


def _get(obj, key, path, kind=None, default=...):
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected an object")
    if key not in obj:
        if default is ...:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return default
    value = obj[key]
    if kind == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or \
                not math.isfinite(value):
            raise ConfigError(f"{path}.{key}", "expected a finite number")
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}.{key}", "expected an integer")
        return value
    return value


def _bound(value, path, sign):
    if value is None:
        return sign * math.inf
    if isinstance(value, str) and value.lower() in ("inf", "+inf", "-inf"):
        return -math.inf if value.startswith("-") else math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, "expected a number, null or 'inf'")
    return float(value)


def _vector(value, path, d=None, bound_sign=None):
    if not isinstance(value, list):
        value = [value]
    if bound_sign is None:
        out = []
        for i, v in enumerate(value):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"{path}[{i}]", "expected a finite number")
            out.append(float(v))
    else:
        out = [_bound(v, f"{path}[{i}]", bound_sign) for i, v in enumerate(value)]
    if d is not None and len(out) != d:
        raise ConfigError(path, f"expected {d} entries, got {len(out)}")
    return np.array(out)


def _wrap(path, fn, *args):
    try:
        return fn(*args)
    except ConfigError:
        raise
    except (MvsdeError, ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from exc


def parse_set(obj, d, path):
    kind = _get(obj, "type", path)
    if kind == "box":
        lo = _vector(_get(obj, "lower", path), f"{path}.lower", d, -1)
        hi = _vector(_get(obj, "upper", path), f"{path}.upper", d, +1)
        return _wrap(path, ops.Box, lo, hi)
    if kind == "ball":
        c = _vector(_get(obj, "center", path), f"{path}.center", d)
        return _wrap(path, ops.Ball, c, _get(obj, "radius", path, "number"))
    if kind == "half_space":
        n = _vector(_get(obj, "normal", path), f"{path}.normal", d)
        return _wrap(path, ops.HalfSpace, n, _get(obj, "offset", path, "number"))
    raise ConfigError(f"{path}.type", f"unknown convex set {kind!r}")


def parse_operator(obj, path="operator"):
    kind = _get(obj, "kind", path)
    d = _get(obj, "dimension", path, "int")
    if d < 1:
        raise ConfigError(f"{path}.dimension", "must be positive")
    if kind == "zero":
        return ops.Zero(d)
    if kind == "linear":
        m = _get(obj, "matrix", path)
        try:
            arr = np.array(m, dtype=float).reshape(d, d)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{path}.matrix", f"expected a {d}x{d} matrix") from exc
        return _wrap(f"{path}.matrix", ops.Linear, arr)
    if kind == "normal_cone":
        return _wrap(path, ops.NormalCone, parse_set(_get(obj, "set", path), d, f"{path}.set"))
    if kind == "subdiff_abs":
        return _wrap(path, ops.SubdiffAbs, _get(obj, "weight", path, "number"), d)
    if kind == "normal_cone_plus_linear":
        c = parse_set(_get(obj, "set", path), d, f"{path}.set")
        return _wrap(path, ops.NormalConePlusLinear, c, _get(obj, "beta", path, "number"))
    raise ConfigError(f"{path}.kind", f"unknown operator kind {kind!r}")


def parse_coefficients(obj, d, path="coefficients"):
    dr = _get(obj, "drift", path)
    dpath = f"{path}.drift"
    dkind = _get(dr, "kind", dpath)
    kinds = {"mean_field_linear": MeanFieldLinear, "kernel_integral": KernelIntegral}
    if dkind not in kinds:
        raise ConfigError(f"{dpath}.kind", f"unknown drift kind {dkind!r}")
    drift = _wrap(dpath, kinds[dkind], _get(dr, "theta", dpath, "number"),
                  _get(dr, "a_mf", dpath, "number"))
    df = _get(obj, "diffusion", path)
    spath = f"{path}.diffusion"
    skind = _get(df, "kind", spath)
    if skind == "constant":
        s = _get(df, "s", spath)
        try:
            arr = np.array(s, dtype=float)
            arr = arr.reshape(d, -1) if arr.ndim < 2 else arr
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{spath}.s", "expected a number or a d x m matrix") from exc
        diffusion = ConstantDiffusion(arr)
    elif skind == "state_linear":
        diffusion = StateLinear(_get(df, "s0", spath, "number"), _get(df, "s1", spath, "number"))
    elif skind == "measure_lipschitz":
        diffusion = MeasureLipschitz(_get(df, "s0", spath, "number"),
                                     _get(df, "s2", spath, "number"))
    else:
        raise ConfigError(f"{spath}.kind", f"unknown diffusion kind {skind!r}")
    pert = _get(obj, "perturbation", path, default={})
    ppath = f"{path}.perturbation"
    perturbation = _wrap(ppath, Perturbation, _get(pert, "c_b", ppath, "number", 0.0),
                         _get(pert, "c_sigma", ppath, "number", 0.0))
    spec = _wrap(path, CoefficientSpec, drift, diffusion, d, perturbation)
    cst = _get(obj, "constants", path, default=None)
    constants = None
    if cst is not None:
        cpath = f"{path}.constants"
        vals = {k: _get(cst, k, cpath, "number", 0.0 if k in ("L3", "L4") else ...)
                for k in ("L_bsigma", "L1", "L2", "L3", "L4")}
        for k, v in vals.items():
            if v < 0:
                raise ConfigError(f"{cpath}.{k}", "constants must be nonnegative")
        constants = AssumptionConstants(**vals)
    return spec, constants


def parse_initial(obj, d, path="initial"):
    kind = _get(obj, "kind", path)
    if kind == "point_mass":
        return PointMass(_vector(_get(obj, "x0", path), f"{path}.x0", d))
    if kind == "uniform_box":
        lo = _vector(_get(obj, "lower", path), f"{path}.lower", d)
        hi = _vector(_get(obj, "upper", path), f"{path}.upper", d)
        return _wrap(path, UniformOnBox, lo, hi)
    if kind == "grid":
        if d != 1:
            raise ConfigError(f"{path}.kind", "grid initial law is one-dimensional")
        return _wrap(path, UniformGrid, _get(obj, "lower", path, "number"),
                     _get(obj, "upper", path, "number"))
    if kind == "cloud":
        pts = _get(obj, "points", path)
        return CloudLiteral(_wrap(f"{path}.points", ParticleCloud, pts))
    raise ConfigError(f"{path}.kind", f"unknown initial law {kind!r}")


def check_initial_in_domain(initial, operator, path):
    if isinstance(initial, PointMass):
        pts = initial.x0[None, :]
    elif isinstance(initial, UniformGrid):
        pts = np.array([[initial.lower], [initial.upper]])
    elif isinstance(initial, UniformOnBox):
        corners = np.array(np.meshgrid(*zip(initial.lower, initial.upper))).reshape(
            initial.lower.size, -1).T
        pts = corners  # C is convex, so containing the corners suffices
    else:
        pts = initial.cloud.points
    if not np.all(ops.in_domain(operator, pts)):
        raise ConfigError(path, "initial law must be supported in the closure of D(A)")


def parse_solver(obj, seed, path="solver"):
    def field_(key, kind, default=...):
        return _get(obj, key, path, kind, default)

    eps = field_("epsilon", None, None)
    if eps is not None:
        eps = _get(obj, "epsilon", path, "number")
    return SolverConfig(
        scheme=field_("scheme", None, "resolvent-implicit"),
        h=field_("h", "number"),
        N=field_("N", "int"),
        T=field_("T", "number"),
        seed=seed,
        record_stride=field_("record_stride", "int", 1),
        epsilon=eps,
    )


@dataclass
class ExperimentConfig:
    raw: dict
    operator: object
    coefficients: CoefficientSpec
    constants: object
    initial: object
    solver: SolverConfig
    experiment: dict
    seed: int
    output: object

    @property
    def system(self):
        return SdeSystem(self.operator, self.coefficients, self.initial)

    def canonical(self):
        return canonical_json(self.raw)

    def digest(self):
        return config_hash(self.raw)


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(raw):
    return hashlib.sha256(canonical_json(raw).encode()).hexdigest()


def parse_config(raw, seed_override=None):
    if not isinstance(raw, dict):
        raise ConfigError("$", "configuration must be a JSON object")
    raw = json.loads(json.dumps(raw))
    if seed_override is not None:
        raw["seed"] = seed_override
    seed = _get(raw, "seed", "$", "int", 0)
    if not 0 <= seed <= U64:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    op = parse_operator(_get(raw, "operator", "$"))
    d = op.dimension
    coef, constants = parse_coefficients(_get(raw, "coefficients", "$"), d)
    initial = parse_initial(_get(raw, "initial", "$", default={"kind": "point_mass",
                                                                   "x0": [0.0] * d}), d)
    check_initial_in_domain(initial, op, "initial")
    solver_obj = _get(raw, "solver", "$")
    solver = _wrap_solver(solver_obj, seed)
    if isinstance(initial, CloudLiteral) and initial.cloud.n != solver.N:
        raise ConfigError("initial.points", f"cloud must have solver.N = {solver.N} points")
    exp = _get(raw, "experiment", "$", default={})
    if not isinstance(exp, dict):
        raise ConfigError("experiment", "expected an object")
    return ExperimentConfig(raw=raw, operator=op, coefficients=coef, constants=constants,
                            initial=initial, solver=solver, experiment=exp, seed=seed,
                            output=raw.get("output"))


def _wrap_solver(obj, seed):
    try:
        return parse_solver(obj, seed)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError("solver", str(exc)) from exc


def load_config(path, seed_override=None):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"malformed JSON: {exc}") from exc
    except OSError as exc:
        raise ConfigError("$", f"cannot read {path}: {exc}") from exc
    return parse_config(raw, seed_override)


# -- experiment block helpers ------------------------------------------------


def exp_number(cfg, key, default=...):
    return _get(cfg.experiment, key, "experiment", "number", default)


def exp_int(cfg, key, default=...):
    return _get(cfg.experiment, key, "experiment", "int", default)


def exp_value(cfg, key, default=...):
    return _get(cfg.experiment, key, "experiment", None, default)


def exp_numbers(cfg, key, default=...):
    value = _get(cfg.experiment, key, "experiment", None, default)
    if value is default and default is not ...:
        return value
    vec = _vector(value, f"experiment.{key}")
    if vec.size == 0:
        raise ConfigError(f"experiment.{key}", "must not be empty")
    return [float(v) for v in vec]


def exp_initial(cfg, key, default=...):
    obj = _get(cfg.experiment, key, "experiment", None, default)
    if obj is default and default is not ...:
        return obj
    initial = parse_initial(obj, cfg.operator.dimension, f"experiment.{key}")
    check_initial_in_domain(initial, cfg.operator, f"experiment.{key}")
    return initial


def exp_operator_family(cfg, key="operator_family"):
    obj = _get(cfg.experiment, key, "experiment", None, {})
    path = f"experiment.{key}"
    rule = _get(obj, "rule", path, None, "linear_shift")
    c = _get(obj, "c", path, "number", 1.0 if rule == "linear_shift" else 0.0)
    kappa = _get(obj, "kappa", path, "number", 1.0)
    return _wrap(path, ops.OperatorSequence, cfg.operator, c, rule, kappa)


def exp_indices(cfg, default=(1, 2, 4, 8, 16)):
    value = _get(cfg.experiment, "indices", "experiment", None, list(default))
    if not isinstance(value, list) or not value or \
            any(isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in value):
        raise ConfigError("experiment.indices", "expected a list of positive integers")
    if value != sorted(set(value)):
        raise ConfigError("experiment.indices", "indices must be strictly increasing")
    return tuple(value)
