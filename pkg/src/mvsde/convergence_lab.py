"""Perturbation experiments: solution convergence, penalization, invariant measures.

Every comparison between a perturbed and a limit system is synchronous: same
initial cloud, same seed, hence the same increments.  With all perturbation
constants zero the two runs perform identical arithmetic and every gap is
exactly zero.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import monotone_ops as ops
from .coefficients import certify_hypotheses, eval_diffusion, eval_drift
from .errors import CertificationError, ConfigError, InputError
from .ergodicity_lab import estimate_invariant_measure, require_dissipative
from .measures import ParticleCloud, w1, w2
from .particle_solver import CloudLiteral, SdeSystem, initial_cloud, mean_square_gap, simulate
from .rng import derive_seed


@dataclass(frozen=True)
class SequenceSystem:
    operators: ops.OperatorSequence
    coefficients: object
    initial: object
    indices: tuple = (1, 2, 4, 8, 16)

    def __post_init__(self):
        idx = tuple(int(n) for n in self.indices)
        if not idx or any(n < 1 for n in idx) or list(idx) != sorted(set(idx)):
            raise InputError("indices must be distinct positive integers in increasing order")
        object.__setattr__(self, "indices", idx)

    def limit(self):
        return SdeSystem(self.operators.base, self.coefficients.with_index(None), self.initial)

    def at(self, n):
        return SdeSystem(self.operators.at(n), self.coefficients.with_index(n), self.initial)

    def frozen_initial(self, config):
        """Pin the initial law to one literal cloud shared by every index."""
        pts = initial_cloud(self.initial, config.N, self.operators.dimension, config.seed)
        return replace(self, initial=CloudLiteral(ParticleCloud(pts)))


def nonincreasing(values, slack):
    return all(b <= a * (1 + slack) for a, b in zip(values, values[1:]))


def certify_uniform(seq, constants, dissipative=False, budget=2000):
    report = certify_hypotheses(seq.coefficients, constants, budget=budget,
                                dissipative=dissipative, indices=seq.indices)
    if not report.passed:
        raise CertificationError(f"uniform hypotheses not certified: {report.summary()}",
                                 witness=report.failures()[0].witness, report=report)
    return report


# -- solutions ---------------------------------------------------------------


@dataclass
class ConvergenceReport:
    indices: list
    sup_mse: list
    terminal_w2: list
    slack: float
    final_ratio: object = None
    max_final_gap: object = None
    scheme: str = "resolvent-implicit"

    @property
    def monotone_ok(self):
        return nonincreasing(self.sup_mse, self.slack)

    @property
    def ratio_ok(self):
        if self.final_ratio is None:
            return True
        return self.sup_mse[-1] <= self.sup_mse[0] * self.final_ratio

    @property
    def threshold_ok(self):
        return self.max_final_gap is None or self.sup_mse[-1] <= self.max_final_gap

    @property
    def passed(self):
        return self.monotone_ok and self.ratio_ok and self.threshold_ok

    def csv(self):
        lines = ["n,sup_mse,terminal_w2"]
        lines += [f"{n},{g!r},{w!r}" for n, g, w in
                  zip(self.indices, self.sup_mse, self.terminal_w2)]
        return "\n".join(lines) + "\n"


def solution_convergence_experiment(seq, config, constants, slack=0.1, final_ratio=None,
                                    max_final_gap=None, threads=1, certify=True):
    """``sup_t mean_i |X^n_i(t) - X_i(t)|^2`` for each index, under shared noise.

    With ``config.scheme == "yosida-explicit"`` both sides use the same
    ``A_eps`` level, which is the Yosida-level comparison at fixed eps.
    """
    if certify:
        certify_uniform(seq, constants)
    seq = seq.frozen_initial(config)
    ref = simulate(seq.limit(), config, threads)
    gaps, terminal = [], []
    for n in seq.indices:
        run = simulate(seq.at(n), config, threads)
        gaps.append(float(np.max(mean_square_gap(run, ref))))
        terminal.append(w2(run.terminal, ref.terminal))
    return ConvergenceReport(indices=list(seq.indices), sup_mse=gaps, terminal_w2=terminal,
                             slack=slack, final_ratio=final_ratio,
                             max_final_gap=max_final_gap, scheme=config.scheme)


# -- penalization ------------------------------------------------------------


@dataclass
class PenalizationReport:
    epsilons: list
    sup_mse: list
    steps: list
    slack: float
    final_ratio: object = None
    max_final_gap: object = None

    @property
    def passed(self):
        ok = nonincreasing(self.sup_mse, self.slack)
        if self.final_ratio is not None:
            ok = ok and self.sup_mse[-1] <= self.sup_mse[0] * self.final_ratio
        if self.max_final_gap is not None:
            ok = ok and self.sup_mse[-1] <= self.max_final_gap
        return ok

    def csv(self):
        lines = ["epsilon,sup_mse"]
        lines += [f"{e!r},{g!r}" for e, g in zip(self.epsilons, self.sup_mse)]
        return "\n".join(lines) + "\n"


def penalization_experiment(system, epsilons, config, h=None, h_over_epsilon=None, slack=0.1,
                            final_ratio=None, max_final_gap=None, threads=1):
    """Gap between the penalized scheme at each eps and the resolvent reference.

    Give either one ``h`` shared by every eps (must satisfy ``h <= min(eps)/2``)
    or ``h_over_epsilon`` to scale the step with eps; in the latter case each
    eps gets its own reference run at the same step.
    """
    eps = sorted((float(e) for e in epsilons), reverse=True)
    if (h is None) == (h_over_epsilon is None):
        raise ConfigError("experiment", "give exactly one of h and h_over_epsilon")
    if h is not None and h > eps[-1] / 2:
        raise ConfigError("experiment.h", "need h <= min(epsilon)/2")
    init = initial_cloud(system.initial, config.N, system.dimension, config.seed)
    sysm = system.with_initial(CloudLiteral(ParticleCloud(init)))
    gaps, steps, refs = [], [], {}
    for e in eps:
        step = h if h is not None else e * h_over_epsilon
        base = replace(config, h=step, scheme="resolvent-implicit", epsilon=None)
        if step not in refs:
            refs[step] = simulate(sysm, base, threads)
        pen = simulate(sysm, replace(base, scheme="yosida-explicit", epsilon=e), threads)
        gaps.append(float(np.max(mean_square_gap(pen, refs[step]))))
        steps.append(step)
    return PenalizationReport(epsilons=eps, sup_mse=gaps, steps=steps, slack=slack,
                              final_ratio=final_ratio, max_final_gap=max_final_gap)


# -- hypothesis checks along the sequence --------------------------------------


@dataclass
class SequenceCheckReport:
    indices: list
    operator_dev: list
    drift_dev: list
    diffusion_dev: list

    @property
    def passed(self):
        def to_zero(v):
            return nonincreasing(v, 0.0) and (v[-1] < v[0] or v[0] == 0)
        return to_zero(self.operator_dev) and to_zero(self.drift_dev) and \
            to_zero(self.diffusion_dev)

    def csv(self):
        lines = ["n,operator_dev,drift_dev,diffusion_dev"]
        lines += [f"{n},{a!r},{b!r},{c!r}" for n, a, b, c in
                  zip(self.indices, self.operator_dev, self.drift_dev, self.diffusion_dev)]
        return "\n".join(lines) + "\n"


def hypothesis_sequence_checks(seq, eps, grid, indices=None, clouds=None):
    """Sup-grid deviations of ``A^n_eps``, ``b^n`` and ``sigma^n`` from their limits."""
    indices = list(seq.indices if indices is None else indices)
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[1] != seq.operators.dimension:
        grid = grid.reshape(-1, seq.operators.dimension)
    if not np.all(ops.in_domain(seq.operators.base, grid)):
        raise InputError("grid points must lie in the closure of D(A)")
    if clouds is None:
        clouds = [ParticleCloud(grid)]
    base = seq.coefficients.with_index(None)
    od, bd, sd = [], [], []
    for n in indices:
        od.append(ops.yosida_uniform_convergence(seq.operators, eps, grid, n))
        cn = seq.coefficients.with_index(n)
        bdev = sdev = 0.0
        for mu in clouds:
            db = eval_drift(cn, grid, mu) - eval_drift(base, grid, mu)
            ds = eval_diffusion(cn, grid, mu) - eval_diffusion(base, grid, mu)
            bdev = max(bdev, float(np.max(np.linalg.norm(db, axis=-1))))
            sdev = max(sdev, float(np.max(np.sqrt(np.sum(ds**2, axis=(-2, -1))))))
        bd.append(bdev)
        sd.append(sdev)
    return SequenceCheckReport(indices=indices, operator_dev=od, drift_dev=bd,
                               diffusion_dev=sd)


# -- invariant measures ------------------------------------------------------


@dataclass
class InvariantConvergenceReport:
    indices: list
    w2_gap: list
    w1_gap: list
    second_moment: list
    limit_second_moment: float
    floor: float
    slack: float
    floor_multiple: float = 2.0
    moment_factor: float = 4.0
    moment_offset: float = 1.0
    estimates: dict = field(default_factory=dict, repr=False)

    @property
    def moment_bound(self):
        return self.moment_factor * self.limit_second_moment + self.moment_offset

    @property
    def monotone_ok(self):
        return nonincreasing(self.w2_gap, self.slack)

    @property
    def floor_ok(self):
        return self.w2_gap[-1] <= self.floor_multiple * self.floor

    @property
    def moment_ok(self):
        return max(self.second_moment) <= self.moment_bound

    @property
    def passed(self):
        return self.monotone_ok and self.floor_ok and self.moment_ok

    def csv(self):
        lines = ["n,w2_gap,w1_gap,second_moment"]
        lines += [f"{n},{a!r},{b!r},{m!r}" for n, a, b, m in
                  zip(self.indices, self.w2_gap, self.w1_gap, self.second_moment)]
        return "\n".join(lines) + "\n"


def invariant_convergence_experiment(seq, config, burn_in, constants, slack=0.1,
                                     floor_multiple=2.0, moment_factor=4.0, moment_offset=1.0,
                                     threads=1, certify=True):
    """Distance between per-index invariant estimates and the limit estimate.

    The per-index estimates reuse the limit's seed and initial cloud, so the
    gaps measure the perturbation rather than sampling noise.  The floor is
    W2 between two independent estimates of the limit measure.
    """
    if certify:
        certify_uniform(seq, constants, dissipative=True)
        require_dissipative(seq.limit(), constants)
    seq = seq.frozen_initial(config)
    limit = estimate_invariant_measure(seq.limit(), config, burn_in, threads=threads)
    other = estimate_invariant_measure(
        seq.limit(), replace(config, seed=derive_seed(config.seed, "floor")), burn_in,
        threads=threads)
    floor = w2(limit.cloud, other.cloud)
    wg, w1g, m2, est = [], [], [], {}
    for n in seq.indices:
        e = estimate_invariant_measure(seq.at(n), config, burn_in, threads=threads)
        est[n] = e
        wg.append(w2(e.cloud, limit.cloud))
        w1g.append(w1(e.cloud, limit.cloud))
        m2.append(e.second_moment)
    est["limit"] = limit
    return InvariantConvergenceReport(indices=list(seq.indices), w2_gap=wg, w1_gap=w1g,
                                      second_moment=m2,
                                      limit_second_moment=limit.second_moment, floor=floor,
                                      slack=slack, floor_multiple=floor_multiple,
                                      moment_factor=moment_factor,
                                      moment_offset=moment_offset, estimates=est)
