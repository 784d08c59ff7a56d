"""Property suite run by ``mvsde selftest``.

Each check returns a :class:`PropertyResult`; the sample budgets are small
enough for the whole suite to finish in well under two minutes on one core.
The operator checks accept a ``samples`` argument so callers can run them at
full size.  ``inject_fault("resolvent")`` swaps in an expansive resolvent
as a negative control.
"""

from contextlib import contextmanager, redirect_stderr
from dataclasses import dataclass, replace
import io
import itertools
import json
import math
import os
import tempfile
import time

import numpy as np
from scipy import stats

from . import monotone_ops as ops
from .coefficients import (CoefficientSpec, ConstantDiffusion, MeanFieldLinear, Perturbation,
                           certify_hypotheses, eval_diffusion, eval_drift, symbolic_constants)
from .convergence_lab import (SequenceSystem, hypothesis_sequence_checks,
                              invariant_convergence_experiment, solution_convergence_experiment)
from .ergodicity_lab import (contraction_experiment, ergodicity_bound_experiment,
                             estimate_invariant_measure, fit_log_rate)
from .measures import (ParticleCloud, moment_norm, w1, w2, w2_exact_assignment,
                       w2_sorted_1d)
from .particle_solver import (CloudLiteral, PointMass, SdeSystem, SolverConfig, UniformOnBox,
                              simulate, simulate_coupled, snapshot_csv)
from .rng import derive_seed

SEED = 20240611
EPS_GRID = (1e-3, 1e-1, 1.0)


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str = ""
    witness: object = None

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        extra = f"  witness={json.dumps(self.witness)}" if self.witness is not None else ""
        return f"[{tag}] {self.name}: {self.detail}{extra}"


def _result(name, worst, tol, witness, what="worst slack"):
    ok = worst >= -tol
    return PropertyResult(name, ok, f"{what} {worst:.3e}", None if ok else witness)


def _pairs(d, n, rng):
    x = rng.uniform(-3, 3, size=(n, d))
    y = np.where(rng.random((n, 1)) < 0.3, x + rng.normal(0, 1e-3, (n, d)),
                 rng.uniform(-3, 3, size=(n, d)))
    return x, y


def _witness(name, eps, x, y=None):
    w = {"operator": name, "eps": eps, "x": np.asarray(x).tolist()}
    if y is not None:
        w["y"] = np.asarray(y).tolist()
    return w


# -- operator properties -----------------------------------------------------


def _pairwise_check(samples, seed, score):
    rng = np.random.default_rng(seed)
    worst, wit = math.inf, None
    for name, spec in ops.catalog().items():
        x, y = _pairs(spec.dimension, samples, rng)
        for eps in EPS_GRID:
            slack = score(spec, eps, x, y)
            i = int(np.argmin(slack))
            if slack[i] < worst:
                worst, wit = float(slack[i]), _witness(name, eps, x[i], y[i])
    return worst, wit


def check_resolvent_contraction(samples=2000, seed=SEED):
    def score(spec, eps, x, y):
        lhs = np.linalg.norm(ops.resolvent(spec, eps, x) - ops.resolvent(spec, eps, y), axis=1)
        return np.linalg.norm(x - y, axis=1) - lhs
    worst, wit = _pairwise_check(samples, seed, score)
    return _result("resolvent contraction", worst, 1e-12, wit)


def check_yosida_lipschitz(samples=2000, seed=SEED):
    def score(spec, eps, x, y):
        lhs = np.linalg.norm(ops.yosida(spec, eps, x) - ops.yosida(spec, eps, y), axis=1)
        return np.linalg.norm(x - y, axis=1) / eps - lhs
    worst, wit = _pairwise_check(samples, seed, score)
    return _result("Yosida Lipschitz 1/eps", worst, 1e-12, wit)


def check_yosida_monotone(samples=2000, seed=SEED):
    def score(spec, eps, x, y):
        return np.sum((x - y) * (ops.yosida(spec, eps, x) - ops.yosida(spec, eps, y)), axis=1)
    worst, wit = _pairwise_check(samples, seed, score)
    return _result("Yosida monotonicity", worst, 1e-12, wit)


def check_selection(samples=2000, seed=SEED):
    rng = np.random.default_rng(seed + 1)
    bad = []
    for name, spec in ops.catalog().items():
        x = rng.uniform(-3, 3, size=(samples, spec.dimension))
        for eps in EPS_GRID:
            j = ops.resolvent(spec, eps, x)
            inside = ops.in_domain(spec, j)
            if not np.all(inside):
                bad.append(_witness(name, eps, x[int(np.argmin(inside))]))
            if isinstance(spec, ops.NormalCone):
                out = ~spec.set.contains(x)
                v = ops.yosida(spec, eps, x[out])
                ok = spec.set.is_normal(j[out], v, 1e-10)
                if not np.all(ok):
                    bad.append(_witness(name, eps, x[out][int(np.argmin(ok))]))
    return PropertyResult("selection and normality", not bad,
                          f"{len(bad)} violations", bad[0] if bad else None)


def _domain_points(spec, n, rng):
    # clipping puts a good share of the points exactly on the boundary
    return ops.project_domain_closure(spec, rng.uniform(-3, 3, size=(n, spec.dimension)))


def check_minimal_section_domination(samples=500, seed=SEED):
    rng = np.random.default_rng(seed + 2)
    worst, wit = math.inf, None
    for name, spec in ops.catalog().items():
        x = _domain_points(spec, samples, rng)
        a0 = np.array([ops.minimal_section(spec, p) for p in x])
        for eps in EPS_GRID:
            slack = np.linalg.norm(a0, axis=1) - np.linalg.norm(ops.yosida(spec, eps, x), axis=1)
            i = int(np.argmin(slack))
            if slack[i] < worst:
                worst, wit = float(slack[i]), _witness(name, eps, x[i])
    return _result("|A_eps| <= |A°| on D(A)", worst, 1e-12, wit)


LIMIT_EPS = [10.0 ** -k for k in range(1, 9)]


def check_resolvent_limit(samples=200, seed=SEED):
    rng = np.random.default_rng(seed + 3)
    bad = []
    for name, spec in ops.catalog().items():
        x = rng.uniform(-3, 3, size=(samples, spec.dimension))
        target = ops.project_domain_closure(spec, x)
        dist = np.array([np.linalg.norm(ops.resolvent(spec, e, x) - target, axis=1)
                         for e in LIMIT_EPS])
        mono = np.all(dist[1:] <= dist[:-1] + 1e-15, axis=0)
        final = dist[-1] <= 1e-6
        ok = mono & final
        if not np.all(ok):
            bad.append({"operator": name, "x": x[int(np.argmin(ok))].tolist()})
    return PropertyResult("J_eps -> projection onto closure", not bad,
                          f"{len(bad)} operators failing", bad[0] if bad else None)


def check_yosida_limit(samples=200, seed=SEED):
    rng = np.random.default_rng(seed + 4)
    bad = []
    for name, spec in ops.catalog().items():
        x = _domain_points(spec, samples, rng)
        a0 = np.array([ops.minimal_section(spec, p) for p in x])
        devs = np.array([np.linalg.norm(ops.yosida(spec, e, x) - a0, axis=1)
                         for e in LIMIT_EPS])
        ok = devs[-1] <= 1e-5 * (1 + np.linalg.norm(a0, axis=1))
        if not np.all(ok):
            bad.append({"operator": name, "x": x[int(np.argmin(ok))].tolist()})
        if isinstance(spec, ops.NormalCone):
            y = rng.uniform(-3, 3, size=(samples, spec.dimension))
            y = y[~spec.set.contains(y)]
            dist = np.linalg.norm(y - spec.set.project(y), axis=1)
            for e in LIMIT_EPS:
                lhs = np.linalg.norm(ops.yosida(spec, e, y), axis=1)
                ok = lhs >= dist / e * (1 - 1e-6)
                if not np.all(ok):
                    bad.append(_witness(name, e, y[int(np.argmin(ok))]))
    return PropertyResult("A_eps -> A° on D(A), |A_eps| >= dist/eps off C", not bad,
                          f"{len(bad)} violations", bad[0] if bad else None)


def check_yosida_lower_bound(samples=2000, seed=SEED):
    bad = []
    worst = math.inf
    for name, spec in ops.catalog().items():
        try:
            c = ops.yosida_lower_bound_constants(spec, n_samples=samples, seed=seed)
            worst = min(worst, c.worst_slack)
        except Exception as exc:  # certification failure is the finding
            bad.append({"operator": name, "error": str(exc),
                        "witness": getattr(exc, "witness", None)})
    return PropertyResult("Yosida lower bound with certified constants", not bad,
                          f"worst slack {worst:.3e}", bad[0] if bad else None)


# -- measures ----------------------------------------------------------------


def check_metric_axioms(trials=40, seed=SEED):
    rng = np.random.default_rng(seed + 5)
    bad = []
    for t in range(trials):
        d = 1 + t % 3
        n = int(rng.integers(2, 40))
        a, b, c = (rng.normal(size=(n, d)) for _ in range(3))
        ab, ba = w2(a, b), w2(b, a)
        if ab != ba:
            bad.append(("symmetry", t))
        if ab > w2(a, c) + w2(c, b) + 1e-10:
            bad.append(("triangle", t))
        if w2(a, a.copy()) > 1e-12 or w2(a, a[rng.permutation(n)]) > 1e-12:
            bad.append(("identity", t))
    return PropertyResult("W2 metric axioms", not bad, f"{len(bad)} violations",
                          list(bad[0]) if bad else None)


def check_sorted_oracle(trials=100, seed=SEED):
    rng = np.random.default_rng(seed + 6)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 65))
        a, b = rng.normal(size=n), rng.normal(size=n) * 2 + 1
        worst = max(worst, abs(w2_exact_assignment(a, b).value - w2_sorted_1d(a, b).value))
    return PropertyResult("assignment W2 = sorted W2 in 1-D", worst <= 1e-10,
                          f"max deviation {worst:.3e}")


def brute_force_w2(a, b):
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    best = math.inf
    for perm in itertools.permutations(range(len(a))):
        best = min(best, float(np.mean(np.sum((a - b[list(perm)]) ** 2, axis=1))))
    return math.sqrt(best)


def check_brute_force(trials=20, seed=SEED):
    rng = np.random.default_rng(seed + 7)
    worst = 0.0
    for t in range(trials):
        d = 1 + t % 2
        n = 2 + t % 6
        a, b = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        worst = max(worst, abs(w2_exact_assignment(a, b).value - brute_force_w2(a, b)))
    return PropertyResult("assignment W2 = brute force", worst <= 1e-12,
                          f"max deviation {worst:.3e}")


def check_w1_le_w2(trials=40, seed=SEED):
    rng = np.random.default_rng(seed + 8)
    worst = math.inf
    for t in range(trials):
        d = 1 + t % 2
        a, b = rng.normal(size=(30, d)), rng.exponential(size=(30, d))
        worst = min(worst, w2(a, b) - w1(a, b))
        worst = min(worst, moment_norm(ParticleCloud(a), 2) - moment_norm(ParticleCloud(a), 1))
    return _result("W1 <= W2 and moment monotonicity", worst, 1e-12, None)


# -- coefficients --------------------------------------------------------------


def _mf_spec(theta=1.0, a=0.25, s=0.5, c_b=0.0, c_sigma=0.0, d=1):
    return CoefficientSpec(MeanFieldLinear(theta, a), ConstantDiffusion(s * np.eye(d)), d,
                           Perturbation(c_b, c_sigma))


def check_symbolic_constants(budget=1000, seed=SEED):
    bad = []
    for theta, a in ((1.0, 0.25), (2.0, 0.5), (1.0, -0.3)):
        spec = _mf_spec(theta, a)
        rep = certify_hypotheses(spec, symbolic_constants(spec), budget=budget,
                                 dissipative=True, seed=seed)
        if not rep.passed:
            bad.append({"theta": theta, "a_mf": a, "failures": rep.summary()})
    return PropertyResult("symbolic constants certify", not bad, f"{len(bad)} families",
                          bad[0] if bad else None)


def check_drift_lipschitz(samples=500, seed=SEED):
    rng = np.random.default_rng(seed + 9)
    theta, a = 1.3, 0.4
    spec = _mf_spec(theta, a, d=2)
    worst = math.inf
    for _ in range(samples // 50):
        mu = ParticleCloud(rng.normal(size=(20, 2)))
        nu = ParticleCloud(rng.normal(size=(20, 2)) + rng.normal(size=2))
        x, y = rng.normal(size=(50, 2)), rng.normal(size=(50, 2))
        dx = np.linalg.norm(eval_drift(spec, x, mu) - eval_drift(spec, y, mu), axis=1)
        worst = min(worst, float(np.min((theta + 1e-10) * np.linalg.norm(x - y, axis=1) - dx)))
        dm = np.linalg.norm(eval_drift(spec, x, mu) - eval_drift(spec, x, nu), axis=1)
        gap = abs(a) * np.linalg.norm(mu.mean() - nu.mean())
        worst = min(worst, float(np.min(gap * (1 + 1e-12) + 1e-14 - dm)))
    return _result("drift Lipschitz in x and in the mean", worst, 0.0, None)


def check_perturbation_consistency(samples=500, seed=SEED):
    rng = np.random.default_rng(seed + 10)
    spec = _mf_spec(1.0, 0.25, 0.5, c_b=0.7, c_sigma=0.3, d=2)
    worst = math.inf
    mu = ParticleCloud(rng.normal(size=(30, 2)))
    x = rng.uniform(-5, 5, size=(samples, 2))
    for n in (1, 2, 3, 8, 100):
        sn = spec.with_index(n)
        db = np.linalg.norm(eval_drift(sn, x, mu) - eval_drift(spec, x, mu), axis=1)
        ds = np.sqrt(np.sum((eval_diffusion(sn, x, mu) - eval_diffusion(spec, x, mu)) ** 2,
                            axis=(1, 2)))
        worst = min(worst, float(np.min(0.7 / n - db)), float(np.min(0.3 / n - ds)))
    return _result("perturbation within c/n", worst, 1e-12, None)


# -- solver ------------------------------------------------------------------


def reflected_ou(theta=1.0, a=0.0, sigma=1.0, c_b=0.0, initial=None):
    return SdeSystem(ops.NormalCone(ops.Box([0.0], [math.inf])),
                     _mf_spec(theta, a, sigma, c_b=c_b),
                     initial if initial is not None else PointMass([0.0]))


def check_thread_determinism(seed=SEED):
    sysm = reflected_ou(a=0.25, sigma=0.5, initial=UniformOnBox([0.0], [2.0]))
    cfg = SolverConfig(h=1e-2, N=301, T=0.5, seed=seed, record_stride=10)
    texts = {k: snapshot_csv(simulate(sysm, cfg, threads=k)) for k in (1, 2, 3)}
    ok = len(set(texts.values())) == 1
    return PropertyResult("thread-count invariance", ok, "snapshot CSVs compared for 1, 2, 3")


def check_domain_preservation(seed=SEED):
    worst = 0.0
    for name, spec in ops.catalog().items():
        c = ops.constraint_set(spec)
        if c is None or not isinstance(spec, ops.NormalCone):
            continue
        d = spec.dimension
        coef = CoefficientSpec(MeanFieldLinear(0.5, 0.2), ConstantDiffusion(np.eye(d)), d)
        sysm = SdeSystem(spec, coef, PointMass(c.project(np.zeros(d))))
        ens = simulate(sysm, SolverConfig(h=1e-2, N=200, T=1.0, seed=seed, record_stride=5))
        pts = ens.states.reshape(-1, d)
        worst = max(worst, float(np.max(np.linalg.norm(pts - c.project(pts), axis=1))))
    return PropertyResult("projection scheme stays in C", worst <= 1e-12,
                          f"max distance {worst:.3e}")


def check_coupling_sanity(seed=SEED):
    sysm = reflected_ou(a=0.25, sigma=0.5, initial=UniformOnBox([0.0], [1.0]))
    run = simulate_coupled(sysm, sysm, SolverConfig(h=1e-2, N=200, T=1.0, seed=seed))
    ok = np.array_equal(run.a.states, run.b.states)
    return PropertyResult("identical coupled systems agree exactly", ok, "")


def check_scheme_consistency(seed=SEED):
    # distance of the terminal law to the stationary half-normal shrinks with h
    sysm = reflected_ou()
    ref = stats.halfnorm.ppf((np.arange(20000) + 0.5) / 20000, scale=1 / math.sqrt(2))
    dists = []
    for h in (4e-3, 2e-3, 1e-3):
        cfg = SolverConfig(h=h, N=20000, T=4.0, seed=derive_seed(seed, "h", h),
                           record_stride=10**6)
        dists.append(w2(simulate(sysm, cfg).terminal, ref))
    ok = dists[0] > dists[1] > dists[2]
    return PropertyResult("terminal law improves as h shrinks", ok,
                          "W2 to stationary law " + ", ".join(f"{v:.4f}" for v in dists))


def check_k_variation(seed=SEED):
    sysm = reflected_ou(initial=PointMass([0.0]))
    means = []
    for h in (2e-3, 1e-3):
        ens = simulate(sysm, SolverConfig(h=h, N=2000, T=1.0, seed=seed, record_stride=10**6))
        means.append(float(ens.k_variation.mean()))
    ok = abs(means[1] / means[0] - 1) <= 0.2
    return PropertyResult("reflection variation stable under h -> h/2", ok,
                          f"E|K| = {means[0]:.4f}, {means[1]:.4f}")


# -- ergodicity --------------------------------------------------------------

def _ou_constants(sysm):
    return symbolic_constants(sysm.coefficients)


def check_equal_clouds_zero(seed=SEED):
    sysm = reflected_ou(a=0.25, sigma=0.5)
    mu = np.linspace(0, 1, 200)[:, None]
    rep = contraction_experiment(sysm, mu, mu, SolverConfig(h=1e-2, N=200, T=1.0, seed=seed),
                                 _ou_constants(sysm))
    ok = bool(np.all(rep.w2_values == 0.0))
    return PropertyResult("equal initial clouds stay at W2 = 0", ok,
                          f"max W2 {float(np.max(rep.w2_values)):.3e}")


def check_invariant_median(seed=SEED):
    sysm = reflected_ou()
    cfg = SolverConfig(h=2e-3, N=4000, T=6.0, seed=seed, record_stride=10**6)
    est = estimate_invariant_measure(sysm, cfg, burn_in=3.0)
    from .measures import quantile
    med = quantile(est.cloud, 0.5)
    target = float(stats.halfnorm.ppf(0.5, scale=1 / math.sqrt(2)))
    # binomial standard error of the median for N = 4000 is about 0.011 here
    ok = abs(med - target) <= 0.04
    return PropertyResult("invariant median matches half-normal", ok,
                          f"median {med:.4f} vs {target:.4f}")


def check_translation_invariance(seed=SEED):
    coef = _mf_spec(0.5, 0.5, 0.5)  # b = 0.5 (mean - x) commutes with translations
    sysm = SdeSystem(ops.Zero(1), coef, PointMass([0.0]))
    mu = np.linspace(0.0, 1.0, 200)[:, None]
    nu = np.linspace(1.0, 3.0, 200)[:, None]
    cfg = SolverConfig(h=1e-2, N=200, T=2.0, seed=seed)
    cst = symbolic_constants(coef)
    r0 = contraction_experiment(sysm, mu, nu, cfg, cst, certify=False)
    r1 = contraction_experiment(sysm, mu + 4.0, nu + 4.0, cfg, cst, certify=False)
    diff = float(np.max(np.abs(r0.w2_values - r1.w2_values)))
    rate_gap = abs(r0.fitted_rate - r1.fitted_rate)
    ok = diff <= 1e-9 and rate_gap <= 1e-6
    return PropertyResult("contraction report translation invariant", ok,
                          f"max W2 difference {diff:.2e}, rate difference {rate_gap:.2e}")


def check_ergodicity_t0(seed=SEED):
    sysm = reflected_ou(a=0.25, sigma=0.5)
    cfg = SolverConfig(h=1e-2, N=500, T=2.0, seed=seed, record_stride=20)
    est = estimate_invariant_measure(sysm, cfg, burn_in=1.0)
    rep = ergodicity_bound_experiment(sysm, PointMass([3.0]), cfg, est, _ou_constants(sysm),
                                      floor=0.0, certify=False)
    ok = bool(rep.w2_sq[0] <= rep.bound[0])
    return PropertyResult("ergodic bound holds at t = 0", ok,
                          f"{rep.w2_sq[0]:.4f} <= {rep.bound[0]:.4f}")


# -- convergence ---------------------------------------------------------------


def _family(c_op, c_b, initial=None):
    base = reflected_ou(a=0.25, sigma=0.5, c_b=c_b)
    seq = ops.OperatorSequence(base.operator, c=c_op)
    return SequenceSystem(seq, base.coefficients,
                          initial or UniformOnBox([0.0], [2.0]), indices=(1, 2, 4))


def check_null_perturbation(seed=SEED):
    seq = _family(0.0, 0.0)
    cfg = SolverConfig(h=1e-2, N=200, T=1.0, seed=seed, record_stride=10)
    cst = symbolic_constants(seq.coefficients)
    sol = solution_convergence_experiment(seq, cfg, cst)
    inv = invariant_convergence_experiment(seq, cfg, 0.5, cst)
    gaps = sol.sup_mse + sol.terminal_w2 + inv.w2_gap + inv.w1_gap
    ok = all(g == 0.0 for g in gaps)
    return PropertyResult("null perturbation gives exact zeros", ok,
                          f"{len(gaps)} gaps, max {max(gaps):.1e}")


def check_deviation_arithmetic():
    base = reflected_ou(a=0.25, sigma=0.5, c_b=0.7)
    spec = replace(base.coefficients, perturbation=Perturbation(0.7, 0.3))
    seq = SequenceSystem(ops.OperatorSequence(ops.Zero(1), c=1.5), spec, PointMass([0.0]),
                         indices=(1, 2, 4, 8))
    grid = np.linspace(-2, 2, 41)[:, None]
    rep = hypothesis_sequence_checks(seq, 0.1, grid)
    n = np.array(rep.indices, dtype=float)
    # Zero + (c/n) I has A_eps(x) = (c/n) x / (1 + eps c/n); the drift shift is c_b sin(x)/n
    op_expect = (1.5 / n) * 2 / (1 + 0.1 * 1.5 / n)
    b_expect = 0.7 * np.max(np.abs(np.sin(grid))) / n
    s_expect = 0.3 / n
    err = max(np.max(np.abs(rep.operator_dev - op_expect)),
              np.max(np.abs(rep.drift_dev - b_expect)),
              np.max(np.abs(rep.diffusion_dev - s_expect)))
    return PropertyResult("deviations scale as c/n", err <= 1e-10, f"max error {err:.2e}")


def check_reproducible_trend(seed=SEED):
    seq = _family(1.0, 0.2)
    cfg = SolverConfig(h=1e-2, N=200, T=1.0, seed=seed, record_stride=5)
    cst = symbolic_constants(seq.coefficients)
    a = solution_convergence_experiment(seq, cfg, cst).csv()
    b = solution_convergence_experiment(seq, cfg, cst).csv()
    return PropertyResult("convergence report bit-reproducible", a == b, "")


def check_uniform_moment(seed=SEED):
    seq = _family(1.0, 0.25, initial=PointMass([0.0]))
    cfg = SolverConfig(h=1e-2, N=500, T=4.0, seed=seed, record_stride=400)
    rep = invariant_convergence_experiment(seq, cfg, 2.0, symbolic_constants(seq.coefficients))
    return PropertyResult("uniform second moment across n", rep.moment_ok,
                          f"max {max(rep.second_moment):.4f} <= {rep.moment_bound:.4f}")


def check_fit_rate_oracle():
    t = np.linspace(0, 3, 31)
    rate = fit_log_rate(t, np.exp(-1.7 * t), (0.5, 3.0))
    return PropertyResult("log-rate fit recovers a known exponent", abs(rate + 1.7) < 1e-10,
                          f"{rate:.6f}")


# -- harness -----------------------------------------------------------------


def check_atomic_outputs():
    from . import reports
    with tempfile.TemporaryDirectory() as tmp:
        target = os.path.join(tmp, "out.csv")
        real = os.replace

        def boom(*_):
            raise KeyboardInterrupt

        os.replace = boom
        try:
            reports.atomic_write(target, "a,b\n1,2\n")
        except KeyboardInterrupt:
            pass
        finally:
            os.replace = real
        leftovers = os.listdir(tmp)
    ok = not leftovers
    return PropertyResult("interrupted write leaves nothing behind", ok,
                          f"left {leftovers}" if leftovers else "")


def check_exit_codes():
    from . import cli
    base = json.loads(json.dumps(cli.load_bundled_raw("reflected-ou-contraction")))
    base["solver"].update({"N": 100, "T": 1.0, "h": 1e-2, "record_stride": 10})
    base["experiment"]["fit_window"] = [0.1, 1.0]
    cases = {0: base}
    fail = json.loads(json.dumps(base))
    fail["experiment"]["max_fitted_slope"] = -100.0
    cases[1] = fail
    bad_cfg = json.loads(json.dumps(base))
    bad_cfg["solver"]["h"] = -1.0
    cases[2] = bad_cfg
    refuse = json.loads(json.dumps(base))
    refuse["coefficients"]["drift"]["theta"] = 0.0
    cases[3] = refuse
    blow = json.loads(json.dumps(base))
    blow["operator"] = {"kind": "zero", "dimension": 1}
    blow["coefficients"]["diffusion"] = {"kind": "state_linear", "s0": 0.0, "s1": 1e6}
    blow["coefficients"]["constants"] = {"L_bsigma": 1e6, "L1": 2e12, "L2": 1e12}
    blow["initial"] = {"kind": "point_mass", "x0": [1.0]}
    blow["solver"].update({"h": 0.1, "T": 20.0, "N": 10})
    cases[4] = ("simulate", blow)
    got = {}
    with tempfile.TemporaryDirectory() as tmp, redirect_stderr(io.StringIO()):
        for code, raw in cases.items():
            cmd = "contraction"
            if isinstance(raw, tuple):
                cmd, raw = raw
            path = os.path.join(tmp, f"c{code}.json")
            with open(path, "w") as fh:
                json.dump(raw, fh)
            got[code] = cli.main([cmd, "--config", path, "--out", os.path.join(tmp, str(code)),
                                  "--no-figures", "--quiet"])
    ok = all(k == v for k, v in got.items())
    return PropertyResult("exit-code taxonomy", ok, f"expected->got {got}")


def check_manifest_round_trip():
    from . import cli, reports
    raw = cli.load_bundled_raw("reflected-ou-contraction")
    raw["solver"].update({"N": 50, "T": 0.1, "h": 1e-2})
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "c.json")
        with open(path, "w") as fh:
            json.dump(raw, fh)
        codes, sums = [], []
        for k in (1, 2):
            out = os.path.join(tmp, f"o{k}")
            codes.append(cli.main(["simulate", "--config", path, "--out", out,
                                   "--no-figures", "--quiet"]))
            with open(os.path.join(out, reports.MANIFEST)) as fh:
                sums.append(json.load(fh)["files"])
            bad = reports.verify_manifest(out)
    ok = codes == [0, 0] and sums[0] == sums[1] and not bad
    return PropertyResult("manifest round-trip and rerun checksums", ok,
                          f"codes {codes}, mismatches {bad}")


PROPERTIES = [
    check_resolvent_contraction, check_yosida_lipschitz, check_yosida_monotone,
    check_selection, check_minimal_section_domination, check_resolvent_limit,
    check_yosida_limit, check_yosida_lower_bound,
    check_metric_axioms, check_sorted_oracle, check_brute_force, check_w1_le_w2,
    check_symbolic_constants, check_drift_lipschitz, check_perturbation_consistency,
    check_thread_determinism, check_domain_preservation, check_coupling_sanity,
    check_scheme_consistency, check_k_variation,
    check_equal_clouds_zero, check_invariant_median, check_translation_invariance,
    check_ergodicity_t0, check_fit_rate_oracle,
    check_null_perturbation, check_deviation_arithmetic, check_reproducible_trend,
    check_uniform_moment,
    check_atomic_outputs, check_manifest_round_trip, check_exit_codes,
]


@contextmanager
def inject_fault(kind):
    """Temporarily corrupt a core map; only ``"resolvent"`` is supported."""
    if kind is None:
        yield
        return
    if kind != "resolvent":
        raise ValueError(f"unknown fault {kind!r}")
    real = ops.resolvent

    def expansive(spec, eps, x):
        return 1.05 * real(spec, eps, x)

    ops.resolvent = expansive
    try:
        yield
    finally:
        ops.resolvent = real


def run(fault=None, emit=print):
    results = []
    start = time.perf_counter()
    with inject_fault(fault):
        for check in PROPERTIES:
            try:
                res = check()
            except Exception as exc:
                res = PropertyResult(check.__name__.removeprefix("check_"), False,
                                     f"raised {type(exc).__name__}: {exc}")
            results.append(res)
            emit(res.line())
    passed = sum(r.passed for r in results)
    emit(f"{passed}/{len(results)} properties passed in {time.perf_counter() - start:.1f} s")
    return results
