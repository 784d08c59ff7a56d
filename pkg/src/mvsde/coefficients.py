"""Drift and diffusion coefficients with measure dependence.

Measure dependence only enters through ``mean(mu)`` or ``mean(tanh(mu))``,
which keeps every hypothesis constant derivable by hand.  Constants are
declared by the user and checked by sampling (:func:`certify_hypotheses`);
nothing here infers a supremum numerically.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .errors import InputError, ParameterError
from .measures import ParticleCloud, w2_exact_assignment


# -- catalog -----------------------------------------------------------------


@dataclass(frozen=True)
class MeanFieldLinear:
    """``b(x, mu) = -theta x + a_mf mean(mu)``."""

    theta: float
    a_mf: float

    def __post_init__(self):
        if not self.theta >= 0:
            raise InputError("theta must be nonnegative")


@dataclass(frozen=True)
class KernelIntegral:
    """``b(x, mu) = int (-theta x + a_mf tanh(y)) mu(dy)``."""

    theta: float
    a_mf: float

    def __post_init__(self):
        if not self.theta >= 0:
            raise InputError("theta must be nonnegative")


@dataclass(frozen=True)
class ConstantDiffusion:
    s: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "s", np.atleast_2d(np.asarray(self.s, dtype=float)))


@dataclass(frozen=True)
class StateLinear:
    """``sigma(x) = s0 + s1 x`` (d = m = 1)."""

    s0: float
    s1: float


@dataclass(frozen=True)
class MeasureLipschitz:
    """``sigma(mu) = s0 + s2 mean(mu)`` (d = m = 1)."""

    s0: float
    s2: float


@dataclass(frozen=True)
class Perturbation:
    """``b^n = b + (c_b/n) u(x)``, ``sigma^n = sigma + (c_sigma/n) E`` with ``|u|, ||E|| <= 1``."""

    c_b: float = 0.0
    c_sigma: float = 0.0

    def __post_init__(self):
        if not (self.c_b >= 0 and self.c_sigma >= 0):
            raise InputError("perturbation constants must be nonnegative")


@dataclass(frozen=True)
class CoefficientSpec:
    drift: object
    diffusion: object
    dimension: int = 1
    perturbation: Perturbation = field(default_factory=Perturbation)
    index: object = None

    def __post_init__(self):
        if isinstance(self.diffusion, ConstantDiffusion):
            if self.diffusion.s.shape[0] != self.dimension:
                raise InputError("diffusion matrix must have d rows")
        elif self.dimension != 1:
            raise InputError(f"{type(self.diffusion).__name__} requires d = m = 1")
        if self.index is not None and self.index < 1:
            raise ParameterError("perturbation index starts at 1")

    @property
    def noise_dimension(self):
        if isinstance(self.diffusion, ConstantDiffusion):
            return self.diffusion.s.shape[1]
        return 1

    def with_index(self, n):
        return replace(self, index=n)

    @property
    def drift_shift(self):
        return 0.0 if self.index is None else self.perturbation.c_b / self.index

    @property
    def diffusion_shift(self):
        return 0.0 if self.index is None else self.perturbation.c_sigma / self.index


@dataclass(frozen=True)
class AssumptionConstants:
    L_bsigma: float
    L1: float
    L2: float
    L3: float = 0.0
    L4: float = 0.0

    @property
    def lambda_(self):
        return lambda_of(self)

    @property
    def dissipative(self):
        return self.L3 > 0 and self.L4 > 0 and self.L4 - self.L3 > 2 * self.L2


def lambda_of(constants):
    """Exponential rate ``L4 - L3``."""
    return constants.L4 - constants.L3


# -- evaluation --------------------------------------------------------------


def _measure_points(mu):
    pts = mu.points if isinstance(mu, ParticleCloud) else np.asarray(mu, dtype=float)
    return pts[:, None] if pts.ndim == 1 else pts


def _points(spec, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (spec.dimension,) or x.ndim > 2:
        raise InputError(f"expected points of dimension {spec.dimension}, got {x.shape}")
    return x


def drift_field(spec, mu):
    """Measure part of the drift, computed once per frozen measure."""
    pts = _measure_points(mu)
    if pts.shape[1] != spec.dimension:
        raise InputError("measure dimension does not match the coefficients")
    if isinstance(spec.drift, KernelIntegral):
        return spec.drift.a_mf * np.tanh(pts).mean(axis=0)
    return spec.drift.a_mf * pts.mean(axis=0)


def eval_drift(spec, x, mu, field_=None):
    """``b^n(x, mu)``; ``x`` is one point or an ``(N, d)`` batch."""
    x = _points(spec, x)
    f = drift_field(spec, mu) if field_ is None else field_
    out = -spec.drift.theta * x + f
    shift = spec.drift_shift
    if shift:
        out = out + shift * np.sin(x) / math.sqrt(spec.dimension)
    return out


def diffusion_field(spec, mu):
    if isinstance(spec.diffusion, MeasureLipschitz):
        pts = _measure_points(mu)
        return spec.diffusion.s2 * float(pts.mean())
    return 0.0


def _shift_matrix(d, m):
    k = min(d, m)
    e = np.zeros((d, m))
    e[np.arange(k), np.arange(k)] = 1.0 / math.sqrt(k)
    return e


def eval_diffusion(spec, x, mu, field_=None):
    """``sigma^n(x, mu)`` of shape ``(d, m)``, or ``(N, d, m)`` for a batch."""
    x = _points(spec, x)
    batch = x.shape[:-1]
    dif = spec.diffusion
    if isinstance(dif, ConstantDiffusion):
        s = dif.s
        if spec.diffusion_shift:
            s = s + spec.diffusion_shift * _shift_matrix(*s.shape)
        return np.broadcast_to(s, batch + s.shape).copy()
    if isinstance(dif, StateLinear):
        val = dif.s0 + dif.s1 * x
    else:
        f = diffusion_field(spec, mu) if field_ is None else field_
        val = np.full(x.shape, dif.s0 + f)
    return (val + spec.diffusion_shift)[..., None]


# -- symbolic constants ------------------------------------------------------


def symbolic_constants(spec, uniform=True):
    """Hand-derived hypothesis constants for the closed catalog.

    With ``uniform=True`` the bounds hold for every perturbation index
    ``n >= 1`` at once (the worst case is ``n = 1``).
    """
    th, a = spec.drift.theta, abs(spec.drift.a_mf)
    p = spec.perturbation
    if uniform:
        cb, cs = p.c_b, p.c_sigma
    else:
        cb, cs = spec.drift_shift, spec.diffusion_shift
    dif = spec.diffusion
    l3 = a
    l4 = 2 * th - a - 2 * cb
    if isinstance(dif, ConstantDiffusion):
        l2, x_coef, mu_coef, const = 0.0, 0.0, 0.0, float(np.linalg.norm(dif.s)) + cs
    elif isinstance(dif, StateLinear):
        l2, x_coef, mu_coef, const = dif.s1**2, abs(dif.s1), 0.0, abs(dif.s0) + cs
        l4 -= l2
    else:
        l2, x_coef, mu_coef, const = dif.s2**2, 0.0, abs(dif.s2), abs(dif.s0) + cs
        l3 += l2
    if isinstance(spec.drift, KernelIntegral):
        const += a * math.sqrt(spec.dimension)
    else:
        mu_coef += a
    growth = max(th + x_coef, mu_coef, const + cb, 1e-12)
    # 2<dx, db> <= (-2 theta + a + 2 cb)|dx|^2 + a W2^2
    l1 = max(a, a - 2 * th + 2 * cb)
    return AssumptionConstants(L_bsigma=growth, L1=l1, L2=l2, L3=l3, L4=l4)


# -- sampled certification ---------------------------------------------------


@dataclass
class CheckResult:
    name: str
    worst_slack: float = math.inf
    witness: object = None

    @property
    def passed(self):
        return self.witness is None


@dataclass
class CertificationReport:
    checks: list
    dissipative_declared: bool
    samples: int

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def summary(self):
        parts = [
            f"{c.name}: {'ok' if c.passed else 'VIOLATED'} (worst slack {c.worst_slack:.3g})"
            for c in self.checks
        ]
        return "; ".join(parts)


_REL_TOL = 1e-10


def _record(check, slack, scale, witness):
    rel = slack / max(scale, 1.0)
    if slack < check.worst_slack:
        check.worst_slack = slack
    if rel < -_REL_TOL and check.witness is None:
        check.witness = witness


def _sample_pairs(spec, budget, rng):
    """Yield ``(x1, x2, mu1, mu2)`` on a widening scale.

    Half of the measure pairs are near-translates of each other, which is
    where mean-field dissipativity is tightest.
    """
    d = spec.dimension
    scales = 10.0 ** np.linspace(-3, 3, 13)
    for k in range(budget):
        r = scales[k % scales.size]
        x1 = rng.uniform(-r, r, size=d)
        if k % 3 == 0:
            x2 = x1 + rng.uniform(-1, 1, size=d) * r * 1e-3
        else:
            x2 = rng.uniform(-r, r, size=d)
        size = int(rng.integers(2, 7))
        mu1 = rng.uniform(-r, r, size=(size, d))
        if k % 2 == 0:
            dx = x2 - x1
            jitter = 1e-2 * np.linalg.norm(dx)
            mu2 = mu1 + dx * rng.uniform(0.5, 1.5) + rng.normal(0, jitter, size=(size, d))
        else:
            mu2 = rng.uniform(-r, r, size=(size, d))
        yield x1, x2, ParticleCloud(mu1), ParticleCloud(mu2)


def certify_hypotheses(spec, constants, budget=2000, dissipative=None, seed=12345,
                       indices=None):
    """Check the declared growth, monotonicity, Lipschitz and dissipativity bounds.

    Sampling is a necessary-condition test, not a proof.  ``indices`` lists
    perturbation indices that must all satisfy the same constants (the
    unperturbed coefficients are always included).  A violated inequality is
    recorded with its witness; callers decide whether to abort.
    """
    if budget < 1000:
        raise ParameterError("certification budget must be at least 1000")
    if dissipative is None:
        dissipative = constants.L3 > 0 or constants.L4 > 0
    variants = [spec.with_index(None)] + [spec.with_index(n) for n in (indices or ())]
    rng = np.random.default_rng(seed)
    c = constants
    growth = CheckResult("H1_growth")
    mono = CheckResult("H2_b")
    lip = CheckResult("H2_sigma")
    checks = [growth, mono, lip]
    diss = None
    if dissipative:
        diss = CheckResult("H2prime_dissipative")
        checks.append(diss)
        gap = c.L4 - c.L3 - 2 * c.L2
        if not (c.L3 > 0 and c.L4 > 0 and gap > 0):
            diss.worst_slack = gap
            diss.witness = {"reason": "declared constants need L3, L4 > 0 and L4 - L3 > 2 L2"}
    for k, (x1, x2, mu1, mu2) in enumerate(_sample_pairs(spec, budget, rng)):
        s = variants[k % len(variants)]
        b1, b2 = eval_drift(s, x1, mu1), eval_drift(s, x2, mu2)
        g1, g2 = eval_diffusion(s, x1, mu1), eval_diffusion(s, x2, mu2)
        m2 = math.sqrt(mu1.second_moment())
        lhs = np.linalg.norm(b1) + np.linalg.norm(g1)
        rhs = c.L_bsigma * (1 + np.linalg.norm(x1) + m2)
        wit = {"index": s.index, "x1": x1.tolist(), "x2": x2.tolist(),
               "mu1": mu1.points.tolist(), "mu2": mu2.points.tolist()}
        _record(growth, rhs - lhs, max(lhs, rhs), wit)
        dx2 = float(np.sum((x1 - x2) ** 2))
        w22 = w2_exact_assignment(mu1, mu2).value ** 2
        inner = 2.0 * float(np.dot(x1 - x2, b1 - b2))
        dsig = float(np.sum((g1 - g2) ** 2))
        rhs = c.L1 * (dx2 + w22)
        _record(mono, rhs - inner, max(abs(inner), rhs), wit)
        rhs = c.L2 * (dx2 + w22)
        _record(lip, rhs - dsig, max(dsig, rhs), wit)
        if diss is not None:
            lhs = inner + dsig
            rhs = c.L3 * w22 - c.L4 * dx2
            _record(diss, rhs - lhs, max(abs(lhs), abs(rhs), c.L4 * dx2), wit)
    return CertificationReport(checks=checks, dissipative_declared=bool(dissipative),
                               samples=budget)
