import math

import numpy as np
import pytest

from mvsde import monotone_ops as ops
from mvsde.coefficients import AssumptionConstants, symbolic_constants
from mvsde.convergence_lab import (SequenceSystem, hypothesis_sequence_checks,
                                   invariant_convergence_experiment, nonincreasing,
                                   penalization_experiment, solution_convergence_experiment)
from mvsde.errors import CertificationError, ConfigError, InputError
from mvsde.particle_solver import PointMass, SolverConfig, UniformOnBox
from mvsde.selftest import check_deviation_arithmetic, check_null_perturbation

from conftest import HALF_LINE, mean_field, reflected_ou


def family(c_op=1.0, c_b=1.0, indices=(1, 2, 4, 8), initial=None):
    return SequenceSystem(ops.OperatorSequence(HALF_LINE, c=c_op), mean_field(c_b=c_b),
                          initial or UniformOnBox([0.0], [2.0]), indices=indices)


def test_nonincreasing_slack():
    assert nonincreasing([1.0, 1.05, 0.5], 0.1)
    assert not nonincreasing([1.0, 1.2], 0.1)


def test_index_validation():
    with pytest.raises(InputError):
        family(indices=(2, 1))
    with pytest.raises(InputError):
        family(indices=(0, 1))


def test_null_family_exact_zeros():
    seq = family(c_op=0.0, c_b=0.0)
    cfg = SolverConfig(h=1e-2, N=300, T=1.0, seed=3, record_stride=5)
    c = symbolic_constants(seq.coefficients)
    rep = solution_convergence_experiment(seq, cfg, c)
    assert rep.sup_mse == [0.0] * 4 and rep.terminal_w2 == [0.0] * 4
    inv = invariant_convergence_experiment(seq, cfg, 0.5, c)
    assert inv.w2_gap == [0.0] * 4 and inv.w1_gap == [0.0] * 4


def test_solution_gaps_shrink():
    seq = family()
    cfg = SolverConfig(h=2e-3, N=500, T=1.0, seed=4, record_stride=10)
    c = AssumptionConstants(L_bsigma=1.5, L1=0.25, L2=0.0)
    rep = solution_convergence_experiment(seq, cfg, c, final_ratio=0.25)
    assert rep.passed, rep.sup_mse
    assert rep.csv().splitlines()[0] == "n,sup_mse,terminal_w2"


def test_solution_certification_refusal():
    seq = family()
    with pytest.raises(CertificationError):
        solution_convergence_experiment(seq, SolverConfig(h=0.01, N=10, T=0.1),
                                        AssumptionConstants(L_bsigma=0.1, L1=0.25, L2=0.0))


def test_penalization_gap_and_arguments():
    sysm = reflected_ou(theta=0.0, a=0.0, s=1.0, initial=UniformOnBox([0.0], [1.0]))
    cfg = SolverConfig(h=1e-3, N=500, T=0.5, seed=6)
    rep = penalization_experiment(sysm, [0.2, 0.05], cfg, h_over_epsilon=0.05, final_ratio=0.5)
    assert rep.passed and rep.steps == pytest.approx([0.01, 0.0025], rel=1e-12)
    assert rep.csv().splitlines()[0] == "epsilon,sup_mse"
    with pytest.raises(ConfigError):
        penalization_experiment(sysm, [0.2], cfg)
    with pytest.raises(ConfigError):
        penalization_experiment(sysm, [0.01], cfg, h=0.01)


def test_hypothesis_sequence_checks_shapes():
    seq = family(c_op=2.0, c_b=0.5)
    rep = hypothesis_sequence_checks(seq, 0.1, np.linspace(0, 3, 13)[:, None])
    assert rep.passed
    n = np.array(rep.indices, dtype=float)
    # A^n_eps on [0, inf) shifted by (2/n) I: J = x / (1 + 0.2/n) inside the set
    expect = 3.0 * (2 / n) / (1 + 0.1 * 2 / n)
    assert np.allclose(rep.operator_dev, expect, rtol=1e-12)
    assert np.allclose(rep.drift_dev, 0.5 * np.max(np.abs(np.sin(np.linspace(0, 3, 13)))) / n,
                       rtol=1e-12)
    with pytest.raises(InputError):
        hypothesis_sequence_checks(seq, 0.1, np.array([[-1.0]]))


def test_invariant_convergence_moment_bound():
    seq = family(c_b=0.25, initial=PointMass([0.0]))
    c = symbolic_constants(seq.coefficients)
    cfg = SolverConfig(h=5e-3, N=600, T=5.0, seed=7, record_stride=1000)
    rep = invariant_convergence_experiment(seq, cfg, 2.5, c)
    assert rep.moment_ok and rep.monotone_ok
    assert rep.csv().splitlines()[0] == "n,w2_gap,w1_gap,second_moment"
    assert math.isfinite(rep.floor) and rep.floor > 0


def test_property_checks():
    for check in (check_null_perturbation, check_deviation_arithmetic):
        res = check()
        assert res.passed, res.line()
