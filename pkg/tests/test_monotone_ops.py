import math

import numpy as np
import pytest
from scipy.optimize import minimize

from mvsde import monotone_ops as ops
from mvsde.errors import CertificationError, InputError, ParameterError
from mvsde.selftest import (check_yosida_lower_bound, check_minimal_section_domination,
                            check_resolvent_contraction, check_resolvent_limit,
                            check_selection, check_yosida_limit, check_yosida_lipschitz,
                            check_yosida_monotone)

INF = math.inf


def prox_oracle(f, x, eps, bounds=None, constraints=()):
    """Numerical argmin of f(y) + |y - x|^2 / (2 eps)."""
    obj = lambda y: f(y) + np.sum((y - x) ** 2) / (2 * eps)  # noqa: E731
    start = x
    if bounds:
        lo = [-np.inf if b[0] is None else b[0] for b in bounds]
        hi = [np.inf if b[1] is None else b[1] for b in bounds]
        start = np.clip(x, lo, hi)
    res = minimize(obj, start, method="SLSQP", bounds=bounds, constraints=constraints,
                   options={"ftol": 1e-14, "maxiter": 500})
    return res.x


@pytest.mark.parametrize("eps", [0.1, 1.0])
def test_linear_resolvent_against_prox(eps, rng):
    m = np.array([[2.0, 0.5], [0.5, 1.0]])
    spec = ops.Linear(m)
    for x in rng.normal(size=(5, 2)) * 3:
        ref = prox_oracle(lambda y: 0.5 * y @ m @ y, x, eps)
        assert np.allclose(ops.resolvent(spec, eps, x), ref, atol=1e-6)


def test_box_projection_against_prox(rng):
    spec = ops.NormalCone(ops.Box([0.0, -1.0], [INF, 1.0]))
    for x in rng.normal(size=(5, 2)) * 3:
        ref = prox_oracle(lambda y: 0.0, x, 1.0, bounds=[(0, None), (-1, 1)])
        assert np.allclose(ops.resolvent(spec, 0.3, x), ref, atol=1e-6)


def test_ball_and_half_space_projection_against_prox(rng):
    ball = ops.NormalCone(ops.Ball([0.2, 0.0], 1.0))
    half = ops.NormalCone(ops.HalfSpace([0.6, 0.8], 0.5))
    for x in rng.normal(size=(5, 2)) * 3:
        ref_b = prox_oracle(lambda y: 0.0, x, 1.0, constraints=[
            {"type": "ineq", "fun": lambda y: 1.0 - np.sum((y - [0.2, 0.0]) ** 2)}])
        ref_h = prox_oracle(lambda y: 0.0, x, 1.0, constraints=[
            {"type": "ineq", "fun": lambda y: 0.5 - (0.6 * y[0] + 0.8 * y[1])}])
        assert np.allclose(ops.resolvent(ball, 0.5, x), ref_b, atol=1e-5)
        assert np.allclose(ops.resolvent(half, 0.5, x), ref_h, atol=1e-6)


def test_soft_threshold_against_scalar_prox():
    spec = ops.SubdiffAbs(0.7, 1)
    for x in np.linspace(-3, 3, 25):
        grid = np.linspace(-4, 4, 800_001)
        ref = grid[np.argmin(0.7 * np.abs(grid) + (grid - x) ** 2 / (2 * 0.5))]
        assert ops.resolvent(spec, 0.5, np.array([x]))[0] == pytest.approx(ref, abs=2e-5)


def test_normal_cone_plus_linear_against_prox(rng):
    spec = ops.NormalConePlusLinear(ops.Box([-1.0, -1.0], [1.0, 2.0]), 0.5)
    for x in rng.normal(size=(5, 2)) * 3:
        ref = prox_oracle(lambda y: 0.25 * np.sum(y**2), x, 0.4, bounds=[(-1, 1), (-1, 2)])
        assert np.allclose(ops.resolvent(spec, 0.4, x), ref, atol=1e-6)


def test_batch_and_single_point_agree_bitwise(rng):
    x = rng.normal(size=(50, 2))
    for spec in ops.catalog().values():
        if spec.dimension != 2:
            continue
        batch = ops.resolvent(spec, 0.1, x)
        single = np.array([ops.resolvent(spec, 0.1, p) for p in x])
        assert np.array_equal(batch, single)


def test_minimal_section_values():
    half = ops.NormalCone(ops.Box([0.0], [INF]))
    assert ops.minimal_section(half, np.array([-0.1])) is ops.INFINITE
    assert np.array_equal(ops.minimal_section(half, np.array([0.0])), [0.0])
    ncl = ops.NormalConePlusLinear(ops.Box([0.0], [INF]), 2.0)
    # at the corner 0 the shift beta*x vanishes; at x = 1 it is 2
    assert ops.minimal_section(ncl, np.array([1.0])) == pytest.approx([2.0])
    # A(-1) = (-inf, 0] - 2 on [-1, 1]; the cone cannot absorb an outward shift
    box = ops.NormalConePlusLinear(ops.Box([-1.0], [1.0]), 2.0)
    assert ops.minimal_section(box, np.array([-1.0])) == pytest.approx([-2.0])
    # on the sphere the cone adds outward multiples of p, so beta*p itself is minimal
    ball = ops.NormalConePlusLinear(ops.Ball([0.0, 0.0], 1.0), 1.0)
    assert ops.minimal_section(ball, np.array([1.0, 0.0])) == pytest.approx([1.0, 0.0])
    half = ops.NormalConePlusLinear(ops.HalfSpace([1.0, 0.0], 1.0), 1.0)
    assert ops.minimal_section(half, np.array([1.0, 2.0])) == pytest.approx([1.0, 2.0])
    # inward shifts are absorbed by the cone
    assert ops.Box([0.0], [INF]).min_norm_normal_shift(np.array([0.0]), np.array([3.0])) == \
        pytest.approx([0.0])
    assert ops.Ball([0.0], 1.0).min_norm_normal_shift(np.array([1.0]), np.array([-2.0])) == \
        pytest.approx([0.0])
    assert ops.minimal_section(ops.SubdiffAbs(0.5, 2), np.array([0.0, -3.0])) == \
        pytest.approx([0.0, -0.5])
    assert repr(ops.INFINITE) == "INFINITE"


def test_validation_errors():
    with pytest.raises(InputError):
        ops.Linear(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(InputError):
        ops.Linear(-np.eye(2))
    with pytest.raises(InputError):
        ops.NormalCone(ops.Box([1.0], [2.0]))  # origin outside C
    with pytest.raises(InputError):
        ops.Box([1.0], [1.0])
    with pytest.raises(InputError):
        ops.HalfSpace([1.0, 1.0], 0.0)
    with pytest.raises(ParameterError):
        ops.resolvent(ops.Zero(1), 0.0, np.zeros(1))
    with pytest.raises(InputError):
        ops.resolvent(ops.Zero(2), 0.1, np.zeros(3))


@pytest.mark.parametrize("check", [check_resolvent_contraction, check_yosida_lipschitz,
                                   check_yosida_monotone, check_selection,
                                   check_minimal_section_domination, check_resolvent_limit,
                                   check_yosida_limit, check_yosida_lower_bound])
def test_property_suite_full_budget(check):
    res = check(samples=10_000)
    assert res.passed, res.line()


def test_yosida_lower_bound_constants_closed_forms():
    c = ops.yosida_lower_bound_constants(ops.Linear(np.diag([3.0, 1.0])))
    assert (c.m1, c.m2) == (1.0, pytest.approx(3.0))
    c = ops.yosida_lower_bound_constants(ops.SubdiffAbs(0.5, 4))
    assert c.m2 == pytest.approx(1.0)
    c = ops.yosida_lower_bound_constants(ops.NormalCone(ops.Ball([0.0, 0.0], 2.0)))
    assert (c.m1, c.m2) == (2.0, 0.0)
    assert np.array_equal(c.a, [0.0, 0.0])


def test_lower_bound_violation_reports_witness():
    spec = ops.NormalCone(ops.Ball([0.0], 1.0))
    slack, _ = ops.yosida_bound_slack(spec, 0.01, np.array([[5.0]]), np.zeros(1), 10.0, 0.0)
    assert slack[0] < 0  # an oversized m1 must fail


def test_certification_error_carries_witness(monkeypatch):
    monkeypatch.setattr(ops, "_lower_bound_candidate",
                        lambda spec: (np.zeros(1), 50.0, 0.0))
    with pytest.raises(CertificationError) as info:
        ops.yosida_lower_bound_constants(ops.NormalCone(ops.Ball([0.0], 1.0)))
    assert set(info.value.witness) == {"eps", "x"}


def test_operator_sequence():
    base = ops.NormalCone(ops.Box([0.0], [INF]))
    seq = ops.OperatorSequence(base, c=1.0)
    assert seq.at(4) == ops.NormalConePlusLinear(base.set, 0.25)
    # 0 sits on the boundary of [0, inf), so local boundedness fails there
    assert seq.local_bound() == math.inf
    whole = ops.OperatorSequence(ops.Zero(2), c=2.0, kappa=1.5)
    assert whole.local_bound() == pytest.approx(3.0)
    assert ops.OperatorSequence(base, rule="constant").at(7) is base
    with pytest.raises(ParameterError):
        seq.at(0)
    with pytest.raises(InputError):
        ops.OperatorSequence(ops.SubdiffAbs(1.0, 1), c=1.0)


def test_yosida_uniform_convergence_rate():
    seq = ops.OperatorSequence(ops.Zero(1), c=1.0)
    grid = np.linspace(-2, 2, 9)[:, None]
    for n in (1, 2, 4):
        # A^n_eps(x) = (x/n) / (1 + eps/n)
        expect = 2.0 / n / (1 + 0.1 / n)
        assert ops.yosida_uniform_convergence(seq, 0.1, grid, n) == pytest.approx(expect,
                                                                                rel=1e-12)
    half = ops.OperatorSequence(ops.NormalCone(ops.Box([0.0], [INF])), c=1.0)
    with pytest.raises(InputError):
        ops.yosida_uniform_convergence(half, 0.1, np.array([[-1.0]]), 1)
