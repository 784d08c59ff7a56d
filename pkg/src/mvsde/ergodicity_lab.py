"""Long-time experiments: coupled contraction, invariant measures, ergodic bound.

Assertions always use the declared rate ``lambda = L4 - L3``; fitted slopes
are diagnostics.  Times where the measured distance is comparable to the
Monte-Carlo floor (W2 between two independent clouds of the same law) are
excluded from bound checks, since finite-N bias dominates there.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy import stats

from .coefficients import certify_hypotheses, lambda_of
from .errors import CertificationError, InputError
from .measures import ParticleCloud, optimal_matching, w2
from .particle_solver import CloudLiteral, PointMass, simulate, simulate_coupled
from .rng import derive_seed


def require_dissipative(system, constants, budget=2000, indices=None):
    """Refuse with the certification report unless the declared bounds hold."""
    report = certify_hypotheses(system.coefficients, constants, budget=budget,
                                dissipative=True, indices=indices)
    if not report.passed:
        raise CertificationError(f"dissipativity not certified: {report.summary()}",
                                 witness=report.failures()[0].witness, report=report)
    return report


def _floor_mask(values, floor, fraction):
    # strictly above the floor: floor must not exceed `fraction` of the value
    return np.asarray(values) * fraction >= floor


@dataclass
class ContractionReport:
    times: np.ndarray
    w2_values: np.ndarray
    bound: np.ndarray
    fitted_rate: float
    declared_lambda: float
    noise_floor: float
    fit_window: tuple
    checked: np.ndarray
    bound_ok: np.ndarray
    max_fitted_slope: object = None

    @property
    def log_w2_sq(self):
        with np.errstate(divide="ignore"):
            return np.log(self.w2_values**2)

    @property
    def slope_ok(self):
        return self.max_fitted_slope is None or self.fitted_rate <= self.max_fitted_slope

    @property
    def passed(self):
        return bool(np.all(self.bound_ok[self.checked])) and self.slope_ok

    def csv(self):
        lines = ["t,w2,log_w2_sq,bound"]
        for t, w, lw, b in zip(self.times, self.w2_values, self.log_w2_sq, self.bound):
            lines.append(f"{t:.9f},{float(w)!r},{float(lw)!r},{float(b)!r}")
        return "\n".join(lines) + "\n"


def fit_log_rate(times, values, window, floor=0.0, fraction=0.25):
    """Least-squares slope of ``log(values)`` on the window, above the floor."""
    t = np.asarray(times)
    v = np.asarray(values)
    sel = (t >= window[0]) & (t <= window[1]) & (v > 0) & _floor_mask(np.sqrt(v), floor, fraction)
    if sel.sum() < 2:
        return -math.inf
    slope, _ = np.polyfit(t[sel], np.log(v[sel]), 1)
    return float(slope)


def contraction_experiment(system, mu0, nu0, config, constants, fit_window=(0.5, 3.0),
                           tolerance=0.5, floor_fraction=0.25, max_fitted_slope=None,
                           threads=1, certify=True):
    """Synchronous-coupling check of ``W2^2(t) <= W2^2(0) exp(-lambda t)``.

    ``nu0`` is re-indexed so that particle i of both systems forms the
    optimal initial coupling; the coupled runs then share every increment.
    """
    if certify:
        require_dissipative(system, constants)
    mu0, nu0 = ParticleCloud(mu0), ParticleCloud(nu0)
    if mu0.n != config.N or nu0.n != config.N:
        raise InputError("initial clouds must have N points")
    nu_sorted = ParticleCloud(nu0.points[optimal_matching(mu0, nu0)])
    run = simulate_coupled(system.with_initial(CloudLiteral(mu0)),
                           system.with_initial(CloudLiteral(nu_sorted)), config,
                           threads=threads)
    lam = lambda_of(constants)
    times = run.a.times
    w = np.array([w2(ParticleCloud(a), ParticleCloud(b))
                  for a, b in zip(run.a.states, run.b.states)])
    bound = w[0] ** 2 * np.exp(-lam * times)
    indep = simulate(system.with_initial(CloudLiteral(mu0)),
                     replace(config, seed=derive_seed(config.seed, "floor")), threads)
    floor = w2(run.a.terminal, indep.terminal)
    checked = _floor_mask(w, floor, floor_fraction)
    bound_ok = w**2 <= bound * (1 + tolerance)
    rate = fit_log_rate(times, w**2, fit_window, floor, floor_fraction)
    return ContractionReport(times=times, w2_values=w, bound=bound, fitted_rate=rate,
                             declared_lambda=lam, noise_floor=floor,
                             fit_window=tuple(fit_window), checked=checked,
                             bound_ok=bound_ok, max_fitted_slope=max_fitted_slope)


@dataclass
class InvariantEstimate:
    cloud: ParticleCloud
    kind: str
    burn_in: float
    horizon: float
    seed: int

    @property
    def second_moment(self):
        return self.cloud.second_moment()

    @property
    def n(self):
        return self.cloud.n

    def sidecar(self):
        return {"second_moment": self.second_moment, "burn_in": self.burn_in,
                "N": self.n, "seed": self.seed, "kind": self.kind, "T": self.horizon}


def estimate_invariant_measure(system, config, burn_in, constants=None, pooled=False,
                               threads=1):
    """Terminal cloud at T (default) or all post-burn-in snapshots pooled together."""
    if not 0 <= burn_in < config.T:
        raise InputError("burn-in must lie in [0, T)")
    if constants is not None:
        require_dissipative(system, constants)
    ens = simulate(system, config, threads)
    if pooled:
        keep = ens.times >= burn_in
        cloud = ParticleCloud(ens.states[keep].reshape(-1, ens.states.shape[2]))
    else:
        cloud = ens.terminal
    return InvariantEstimate(cloud=cloud, kind="pooled" if pooled else "terminal",
                             burn_in=burn_in, horizon=config.T, seed=config.seed)


# -- reference laws for 1-D checks --------------------------------------------


def reference_quantiles(law, n):
    """``n`` inverse-CDF points of a reference law at levels ``(i - 1/2)/n``."""
    levels = (np.arange(n) + 0.5) / n
    kind = law["kind"]
    if kind == "half_normal":
        return stats.halfnorm.ppf(levels, loc=law.get("loc", 0.0), scale=law["scale"])
    if kind == "normal":
        return stats.norm.ppf(levels, loc=law.get("loc", 0.0), scale=law["scale"])
    raise InputError(f"unknown reference law {kind!r}")


def w2_to_reference(estimate, law):
    cloud = estimate.cloud if isinstance(estimate, InvariantEstimate) else estimate
    return w2(cloud, reference_quantiles(law, cloud.n))


# -- ergodic bound -----------------------------------------------------------


@dataclass
class ErgodicityReport:
    times: np.ndarray
    w2_sq: np.ndarray
    bound: np.ndarray
    noise_floor: float
    checked: np.ndarray
    tolerance: float
    invariant: InvariantEstimate = field(repr=False, default=None)

    @property
    def bound_ok(self):
        return self.w2_sq <= self.bound * (1 + self.tolerance)

    @property
    def passed(self):
        return bool(np.all(self.bound_ok[self.checked]))

    def csv(self):
        lines = ["t,w2_sq,bound"]
        for t, w, b in zip(self.times, self.w2_sq, self.bound):
            lines.append(f"{t:.9f},{float(w)!r},{float(b)!r}")
        return "\n".join(lines) + "\n"


def invariant_floor(system, config, burn_in, estimate, threads=1):
    """W2 between the estimate and an independent estimate of the same law."""
    other = estimate_invariant_measure(
        system, replace(config, seed=derive_seed(config.seed, "floor")), burn_in,
        threads=threads)
    return w2(estimate.cloud, other.cloud)


def ergodicity_bound_experiment(system, nu0, config, estimate, constants, tolerance=0.5,
                                floor=None, floor_fraction=0.25, burn_in=None, threads=1,
                                certify=True):
    """Tabulate ``W2^2(P_t nu0, mu_inf)`` against ``2(|nu0|^2 + |mu_inf|^2) e^{-lambda t}``."""
    if certify:
        require_dissipative(system, constants)
    if estimate.n != config.N:
        raise InputError("invariant estimate must have N points")
    if floor is None:
        floor = invariant_floor(system, config, estimate.burn_in if burn_in is None
                                else burn_in, estimate, threads)
    run = simulate(system.with_initial(nu0),
                   replace(config, seed=derive_seed(config.seed, "nu0")), threads)
    lam = lambda_of(constants)
    nu_m2 = run.cloud(0).second_moment()
    bound = 2 * (nu_m2 + estimate.second_moment) * np.exp(-lam * run.times)
    ws = np.array([w2(ParticleCloud(s), estimate.cloud) for s in run.states])
    checked = _floor_mask(ws, floor, floor_fraction)
    checked[0] = True
    return ErgodicityReport(times=run.times, w2_sq=ws**2, bound=bound, noise_floor=floor,
                            checked=checked, tolerance=tolerance, invariant=estimate)


# -- uniform moments ---------------------------------------------------------


@dataclass
class MomentReport:
    horizons: list
    sups: list
    tolerance: float

    @property
    def passed(self):
        base = self.sups[0]
        return all(s <= base * (1 + self.tolerance) + 1e-300 for s in self.sups)

    def csv(self):
        lines = ["T,second_moment_sup"]
        lines += [f"{t!r},{s!r}" for t, s in zip(self.horizons, self.sups)]
        return "\n".join(lines) + "\n"


def uniform_moment_experiment(system, config, horizons, constants, tolerance=0.2,
                              threads=1, certify=True):
    """``sup_{t <= T} mean |X_t|^2`` from delta_0 for each horizon T.

    Runs once to the largest horizon; shorter horizons are prefixes of the
    same run because increments depend only on the step index.
    """
    if certify:
        require_dissipative(system, constants)
    horizons = sorted(float(t) for t in horizons)
    sysm = system.with_initial(PointMass(np.zeros(system.dimension)))
    ens = simulate(sysm, replace(config, T=horizons[-1]), threads)
    m2 = np.mean(np.sum(ens.states**2, axis=2), axis=1)
    sups = [float(np.max(m2[ens.times <= t + 1e-12])) for t in horizons]
    return MomentReport(horizons=horizons, sups=sups, tolerance=tolerance)
