"""Interacting-particle time stepping for multivalued McKean-Vlasov SDEs.

The law of the solution is replaced by the empirical measure of N particles,
frozen at the start of every step.  Two schemes are available:

``yosida-explicit``
    Euler-Maruyama for the penalized equation with ``A`` replaced by ``A_eps``.
``resolvent-implicit``
    Euler step for drift and noise followed by the resolvent ``J_h``; for a
    normal cone this is the projection scheme and never leaves the set.

Brownian increments are keyed by ``(seed, particle, step)`` so two systems
run with the same seed are synchronously coupled.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import math

import numpy as np

from . import monotone_ops as ops
from .coefficients import diffusion_field, drift_field, eval_diffusion, eval_drift
from .errors import ConfigError, InputError, SimulationInstability
from .measures import ParticleCloud
from .rng import INITIAL, NOISE, CounterNormal, splitmix64

SCHEMES = ("yosida-explicit", "resolvent-implicit")


# -- initial laws ------------------------------------------------------------


@dataclass(frozen=True)
class PointMass:
    x0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(-1))


@dataclass(frozen=True)
class UniformOnBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape or np.any(lo > hi) or not np.all(np.isfinite(lo + hi)):
            raise InputError("uniform initial law needs finite lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


@dataclass(frozen=True)
class UniformGrid:
    """Deterministic midpoint grid ``lower + (upper - lower)(i + 1/2)/N`` in 1-D."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)) or \
                self.lower > self.upper:
            raise InputError("grid initial law needs finite lower <= upper")


@dataclass(frozen=True)
class CloudLiteral:
    cloud: ParticleCloud

    def __post_init__(self):
        if not isinstance(self.cloud, ParticleCloud):
            object.__setattr__(self, "cloud", ParticleCloud(self.cloud))


def initial_cloud(initial, n, d, seed):
    """Draw the time-zero cloud; uniform draws use their own counter stream."""
    if isinstance(initial, PointMass):
        if initial.x0.size != d:
            raise InputError("initial point has the wrong dimension")
        return np.tile(initial.x0, (n, 1))
    if isinstance(initial, UniformOnBox):
        if initial.lower.size != d:
            raise InputError("initial box has the wrong dimension")
        u = CounterNormal(seed, INITIAL).uniforms(0, np.arange(n * d, dtype=np.uint64))
        return initial.lower + (initial.upper - initial.lower) * u.reshape(n, d)
    if isinstance(initial, UniformGrid):
        if d != 1:
            raise InputError("grid initial law is one-dimensional")
        levels = (np.arange(n) + 0.5) / n
        return (initial.lower + (initial.upper - initial.lower) * levels)[:, None]
    if isinstance(initial, CloudLiteral):
        pts = initial.cloud.points
        if pts.shape != (n, d):
            raise InputError(f"literal cloud has shape {pts.shape}, expected {(n, d)}")
        return np.array(pts)
    raise InputError(f"unknown initial law {initial!r}")


# -- problem description -----------------------------------------------------


@dataclass(frozen=True)
class SdeSystem:
    operator: object
    coefficients: object
    initial: object

    def __post_init__(self):
        if self.operator.dimension != self.coefficients.dimension:
            raise InputError("operator and coefficients disagree on the dimension")

    @property
    def dimension(self):
        return self.operator.dimension

    def with_initial(self, initial):
        return replace(self, initial=initial)


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = "resolvent-implicit"
    h: float = 1e-3
    N: int = 1000
    T: float = 1.0
    seed: int = 0
    record_stride: int = 1
    epsilon: object = None

    def __post_init__(self):
        validate_config(self)

    @property
    def n_steps(self):
        return 0 if self.T == 0 else int(round(self.T / self.h))


def validate_config(cfg, prefix="solver"):
    if cfg.scheme not in SCHEMES:
        raise ConfigError(f"{prefix}.scheme", f"must be one of {SCHEMES}")
    if not cfg.h > 0:
        raise ConfigError(f"{prefix}.h", "time step must be positive")
    if not cfg.T >= 0:
        raise ConfigError(f"{prefix}.T", "horizon must be nonnegative")
    if cfg.T > 0 and cfg.h > cfg.T * (1 + 1e-12):
        raise ConfigError(f"{prefix}.h", "time step exceeds the horizon")
    if cfg.T > 0 and abs(round(cfg.T / cfg.h) * cfg.h - cfg.T) > 1e-9 * cfg.T:
        raise ConfigError(f"{prefix}.h", "horizon must be an integer number of steps")
    if not (isinstance(cfg.N, (int, np.integer)) and cfg.N >= 1):
        raise ConfigError(f"{prefix}.N", "particle count must be a positive integer")
    if not (isinstance(cfg.record_stride, (int, np.integer)) and cfg.record_stride >= 1):
        raise ConfigError(f"{prefix}.record_stride", "must be a positive integer")
    if cfg.scheme == "yosida-explicit":
        if cfg.epsilon is None or not cfg.epsilon > 0:
            raise ConfigError(f"{prefix}.epsilon", "yosida-explicit needs epsilon > 0")
        if cfg.h > cfg.epsilon / 2 * (1 + 1e-12):
            raise ConfigError(f"{prefix}.h", "yosida-explicit requires h <= epsilon/2")


# -- results -----------------------------------------------------------------


@dataclass
class TrajectoryEnsemble:
    times: np.ndarray
    states: np.ndarray
    k_variation: np.ndarray
    config: SolverConfig
    system: SdeSystem = field(repr=False, default=None)

    @property
    def n_records(self):
        return self.times.size

    def cloud(self, k=-1):
        return ParticleCloud(self.states[k])

    @property
    def terminal(self):
        return self.cloud(-1)


@dataclass
class CoupledRun:
    a: TrajectoryEnsemble
    b: TrajectoryEnsemble


# -- steps -------------------------------------------------------------------


def _noise_term(spec, x, dw, fsig):
    sig = eval_diffusion(spec, x, None, field_=fsig)
    out = np.zeros_like(x)
    # fixed summation order over noise components
    for j in range(dw.shape[1]):
        out = out + sig[..., j] * dw[:, j, None]
    return out


def _euler_part(system, x, h, dw, fb, fsig):
    spec = system.coefficients
    return x + eval_drift(spec, x, None, field_=fb) * h + _noise_term(spec, x, dw, fsig)


def _fields(system, x):
    spec = system.coefficients
    return drift_field(spec, x), diffusion_field(spec, x)


def step_yosida_explicit(x, system, eps, h, dw):
    """``X' = X - A_eps(X) h + b(X, mu) h + sigma(X, mu) dW`` with mu frozen at X."""
    if h > eps / 2 * (1 + 1e-12):
        raise ConfigError("solver.h", "yosida-explicit requires h <= epsilon/2")
    x = np.asarray(x, dtype=float)
    fb, fs = _fields(system, x)
    return _euler_part(system, x, h, dw, fb, fs) - ops.yosida(system.operator, eps, x) * h


def step_resolvent_implicit(x, system, h, dw):
    """``X' = J_h(X + b(X, mu) h + sigma(X, mu) dW)`` with mu frozen at X."""
    x = np.asarray(x, dtype=float)
    fb, fs = _fields(system, x)
    return ops.resolvent(system.operator, h, _euler_part(system, x, h, dw, fb, fs))


# -- driver ------------------------------------------------------------------


def _chunks(n, k):
    k = max(1, min(int(k), n))
    edges = np.linspace(0, n, k + 1).astype(int)
    return [slice(edges[i], edges[i + 1]) for i in range(k)]


def simulate(system, config, threads=1):
    """Run the configured scheme from t = 0 to T.

    Snapshots are kept every ``record_stride`` steps plus the final step.
    The per-particle reflection variation accumulates ``|pre - post
    resolvent|`` (implicit) or ``|A_eps(X)| h`` (explicit).
    """
    cfg = config
    d = system.dimension
    m = system.coefficients.noise_dimension
    n = cfg.N
    x = initial_cloud(system.initial, n, d, cfg.seed)
    if not np.all(ops.in_domain(system.operator, x)):
        raise InputError("initial points must lie in the closure of D(A)")
    steps = cfg.n_steps
    rec_idx = sorted(set(range(0, steps + 1, cfg.record_stride)) | {steps})
    states = np.empty((len(rec_idx), n, d))
    states[0] = x
    times = np.array([k * cfg.h for k in rec_idx], dtype=float)
    kvar = np.zeros(n)
    gen = CounterNormal(cfg.seed, NOISE)
    mixed = splitmix64(np.arange(n * m, dtype=np.uint64)).reshape(n, m)
    sqrt_h = math.sqrt(cfg.h)
    spec_op = system.operator
    parts = _chunks(n, threads)
    pool = ThreadPoolExecutor(len(parts)) if len(parts) > 1 else None

    def update(sl, step, fb, fs):
        u = gen.uniforms_mixed(step, mixed[sl].reshape(-1))
        dw = sqrt_h * gen.to_normal(u).reshape(-1, m)
        xs = x[sl]
        pre = _euler_part(system, xs, cfg.h, dw, fb, fs)
        if cfg.scheme == "resolvent-implicit":
            post = ops.resolvent(spec_op, cfg.h, pre)
            dk = np.linalg.norm(pre - post, axis=1)
        else:
            ae = ops.yosida(spec_op, cfg.epsilon, xs)
            post = pre - ae * cfg.h
            dk = np.linalg.norm(ae, axis=1) * cfg.h
        return sl, post, dk

    try:
        slot = 1
        for step in range(steps):
            fb, fs = _fields(system, x)
            if pool is None:
                results = [update(parts[0], step, fb, fs)]
            else:
                results = list(pool.map(lambda sl: update(sl, step, fb, fs), parts))
            new = np.empty_like(x)
            for sl, post, dk in results:
                new[sl] = post
                kvar[sl] += dk
            if not np.all(np.isfinite(new)):
                raise SimulationInstability(step + 1)
            x = new
            if slot < len(rec_idx) and rec_idx[slot] == step + 1:
                states[slot] = x
                slot += 1
    finally:
        if pool is not None:
            pool.shutdown()
    return TrajectoryEnsemble(times=times, states=states, k_variation=kvar, config=cfg,
                              system=system)


def simulate_coupled(system_a, system_b, config, config_b=None, threads=1):
    """Run two systems on identical Brownian increments."""
    cfg_b = config if config_b is None else config_b
    if system_a.dimension != system_b.dimension:
        raise InputError("coupled systems must share the state dimension")
    if system_a.coefficients.noise_dimension != system_b.coefficients.noise_dimension:
        raise InputError("coupled systems must share the noise dimension")
    for name in ("N", "h", "T", "seed", "record_stride"):
        if getattr(config, name) != getattr(cfg_b, name):
            raise InputError(f"coupled runs must share solver field {name!r}")
    return CoupledRun(simulate(system_a, config, threads), simulate(system_b, cfg_b, threads))


def moment_sup(ensemble, p=1):
    """``max_t (1/N) sum_i |X_i(t)|^{2p}`` over the recorded times."""
    if p < 1:
        raise InputError("p must be >= 1")
    r2 = np.sum(ensemble.states**2, axis=2)
    return float(np.max(np.mean(r2**p, axis=1)))


def mean_square_gap(a, b):
    """Per-record ``(1/N) sum_i |X^a_i(t) - X^b_i(t)|^2`` for coupled ensembles."""
    if a.states.shape != b.states.shape:
        raise InputError("ensembles are not aligned")
    return np.mean(np.sum((a.states - b.states) ** 2, axis=2), axis=1)


# -- CSV ---------------------------------------------------------------------


def snapshot_csv(ensemble):
    d = ensemble.states.shape[2]
    head = "t,particle," + ",".join(f"x{j + 1}" for j in range(d))
    lines = [head]
    for t, cloud in zip(ensemble.times, ensemble.states):
        ts = f"{t:.9f}"
        for i, row in enumerate(cloud):
            lines.append(f"{ts},{i}," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def k_variation_csv(ensemble):
    lines = ["particle,K_variation"]
    lines += [f"{i},{float(v)!r}" for i, v in enumerate(ensemble.k_variation)]
    return "\n".join(lines) + "\n"
