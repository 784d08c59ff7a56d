import math

import numpy as np
import pytest
from scipy.special import zeta

from mvsde import monotone_ops as ops
from mvsde.coefficients import CoefficientSpec, ConstantDiffusion, MeanFieldLinear, StateLinear
from mvsde.errors import ConfigError, InputError, SimulationInstability
from mvsde.measures import w2
from mvsde.particle_solver import (CloudLiteral, PointMass, SdeSystem, SolverConfig,
                                   UniformGrid, UniformOnBox, initial_cloud, k_variation_csv,
                                   moment_sup, simulate, simulate_coupled, snapshot_csv)
from mvsde.selftest import (check_domain_preservation, check_k_variation,
                            check_scheme_consistency)

from conftest import HALF_LINE, mean_field, reflected_ou


def reflected_bm(sigma=1.0):
    return SdeSystem(HALF_LINE, mean_field(0.0, 0.0, sigma), PointMass([0.0]))


def test_zero_horizon_gives_single_snapshot():
    sysm = reflected_ou(initial=UniformOnBox([0.0], [1.0]))
    ens = simulate(sysm, SolverConfig(h=0.1, N=37, T=0.0))
    rows = snapshot_csv(ens).splitlines()
    assert rows[0] == "t,particle,x1"
    assert len(rows) == 38 and ens.n_records == 1


def test_csv_headers():
    sysm = SdeSystem(ops.Zero(2), mean_field(d=2), PointMass([0.0, 0.0]))
    ens = simulate(sysm, SolverConfig(h=0.1, N=3, T=0.2))
    assert snapshot_csv(ens).splitlines()[0] == "t,particle,x1,x2"
    assert k_variation_csv(ens).splitlines()[0] == "particle,K_variation"
    assert np.all(ens.k_variation == 0.0)


def test_deterministic_mean_field_recursion():
    # sigma = 0: the mean obeys m_{k+1} = m_k (1 + (a - theta) h) exactly
    theta, a, h, steps = 1.0, 0.4, 0.01, 50
    coef = CoefficientSpec(MeanFieldLinear(theta, a), ConstantDiffusion(np.zeros((1, 1))), 1)
    sysm = SdeSystem(ops.Zero(1), coef, UniformOnBox([1.0], [3.0]))
    ens = simulate(sysm, SolverConfig(h=h, N=400, T=h * steps, record_stride=steps))
    m0 = ens.states[0].mean()
    assert ens.states[-1].mean() == pytest.approx(m0 * (1 + (a - theta) * h) ** steps,
                                                  rel=1e-12)


def test_free_ou_variance():
    theta, s, t = 1.0, 0.8, 1.0
    sysm = SdeSystem(ops.Zero(1), mean_field(theta, 0.0, s), PointMass([2.0]))
    ens = simulate(sysm, SolverConfig(h=1e-3, N=20000, T=t, record_stride=1000, seed=3))
    x = ens.terminal.points[:, 0]
    var = s**2 * (1 - math.exp(-2 * theta * t)) / (2 * theta)
    assert x.mean() == pytest.approx(2.0 * math.exp(-theta * t), abs=4 * math.sqrt(var / 2e4))
    assert x.var() == pytest.approx(var, rel=0.04)


def test_reflected_bm_mean_and_local_time():
    h, t, n = 1e-3, 1.0, 20000
    ens = simulate(reflected_bm(), SolverConfig(h=h, N=n, T=t, record_stride=1000, seed=5))
    # Lindley recursion lags the continuous reflection by -zeta(1/2) sqrt(h / 2 pi)
    lag = -zeta(0.5) * math.sqrt(h / (2 * math.pi))
    target = math.sqrt(2 * t / math.pi) - lag
    se = math.sqrt(t * (1 - 2 / math.pi) / n)
    assert ens.terminal.points.mean() == pytest.approx(target, abs=4 * se + 2e-3)
    # with X_0 = 0 the reflection term equals X_T - W_T, with the same mean
    assert ens.k_variation.mean() == pytest.approx(target, abs=6 * se + 2e-3)


def test_thread_count_does_not_change_bits():
    sysm = reflected_ou(initial=UniformOnBox([0.0], [2.0]))
    cfg = SolverConfig(h=1e-2, N=1001, T=1.0, seed=99, record_stride=7)
    ref = simulate(sysm, cfg, threads=1)
    for k in (2, 3, 8):
        other = simulate(sysm, cfg, threads=k)
        assert np.array_equal(ref.states, other.states)
        assert np.array_equal(ref.k_variation, other.k_variation)


def test_noise_depends_on_seed_only():
    sysm = reflected_ou()
    a = simulate(sysm, SolverConfig(h=1e-2, N=50, T=0.5, seed=1))
    b = simulate(sysm, SolverConfig(h=1e-2, N=50, T=0.5, seed=2))
    assert not np.array_equal(a.states, b.states)


def test_coupled_identical_systems_equal():
    sysm = reflected_ou(initial=UniformOnBox([0.0], [1.0]))
    run = simulate_coupled(sysm, sysm, SolverConfig(h=1e-2, N=100, T=1.0, seed=4))
    assert np.array_equal(run.a.states, run.b.states)
    with pytest.raises(InputError):
        simulate_coupled(sysm, sysm, SolverConfig(h=1e-2, N=100, T=1.0),
                         SolverConfig(h=1e-2, N=101, T=1.0))


def test_yosida_scheme_validation_and_limit():
    with pytest.raises(ConfigError, match="solver.h"):
        SolverConfig(scheme="yosida-explicit", h=0.1, epsilon=0.1, T=1.0)
    with pytest.raises(ConfigError, match="solver.epsilon"):
        SolverConfig(scheme="yosida-explicit", h=0.01, T=1.0)
    sysm = reflected_bm()
    ref = simulate(sysm, SolverConfig(h=1e-3, N=2000, T=1.0, seed=8, record_stride=1000))
    gaps = []
    for eps in (0.1, 0.02):
        pen = simulate(sysm, SolverConfig(scheme="yosida-explicit", epsilon=eps, h=1e-3,
                                          N=2000, T=1.0, seed=8, record_stride=1000))
        gaps.append(w2(pen.terminal, ref.terminal))
    assert gaps[1] < gaps[0]


def test_validation_errors():
    with pytest.raises(ConfigError, match="solver.h"):
        SolverConfig(h=0.3, T=1.0)
    with pytest.raises(ConfigError, match="solver.N"):
        SolverConfig(N=0)
    with pytest.raises(ConfigError, match="solver.scheme"):
        SolverConfig(scheme="rk4")
    with pytest.raises(InputError):
        simulate(reflected_ou(initial=PointMass([-1.0])), SolverConfig(h=0.1, N=5, T=0.1))
    with pytest.raises(InputError):
        initial_cloud(CloudLiteral(np.zeros((3, 1))), 4, 1, 0)
    with pytest.raises(InputError):
        UniformGrid(1.0, 0.0)


def test_grid_initial_law():
    pts = initial_cloud(UniformGrid(0.0, 1.0), 4, 1, 0)
    assert np.allclose(pts[:, 0], [0.125, 0.375, 0.625, 0.875])


def test_instability_detected():
    coef = CoefficientSpec(MeanFieldLinear(0.0, 0.0), StateLinear(0.0, 1e6), 1)
    sysm = SdeSystem(ops.Zero(1), coef, PointMass([1.0]))
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(SimulationInstability):
        simulate(sysm, SolverConfig(h=0.1, N=10, T=30.0))


def test_moment_sup():
    still = SdeSystem(ops.Zero(1), CoefficientSpec(
        MeanFieldLinear(0.0, 0.0), ConstantDiffusion(np.zeros((1, 1))), 1), PointMass([0.0]))
    assert moment_sup(simulate(still, SolverConfig(h=0.1, N=10, T=1.0))) == 0.0
    sysm = reflected_ou(theta=1.0, a=0.0, s=1.0)
    ens10 = simulate(sysm, SolverConfig(h=1e-2, N=4000, T=10.0, seed=1, record_stride=10))
    ens20 = simulate(sysm, SolverConfig(h=1e-2, N=4000, T=20.0, seed=1, record_stride=10))
    assert moment_sup(ens20) == pytest.approx(moment_sup(ens10), rel=0.2)


def test_property_checks():
    for check in (check_domain_preservation, check_scheme_consistency, check_k_variation):
        res = check()
        assert res.passed, res.line()
