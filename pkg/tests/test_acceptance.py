"""Acceptance criteria, one test each, at the stated tolerances.

Experiment criteria run the bundled benchmark through the CLI and then
re-derive every asserted quantity from the written CSVs with independent
numpy/scipy code, so the harness's own verdict is not trusted blindly.
"""

import json
import math
import os
import time
from itertools import permutations

import numpy as np
import pytest
from scipy import stats

from mvsde import measures, monotone_ops as ops, selftest
from mvsde.cli import bundled_names, load_bundled_raw, main

COMMAND = {
    "reflected-ou-simulate": "simulate",
    "reflected-ou-invariant": "ergodicity",
    "reflected-ou-contraction": "contraction",
    "reflected-ou-ergodicity": "ergodicity",
    "reflected-ou-solutions": "converge-solutions",
    "reflected-bm-penalization": "penalization",
    "reflected-ou-invariants": "converge-invariants",
    "nondissipative-contraction": "contraction",
    "identical-family-solutions": "converge-solutions",
    "identical-family-invariants": "converge-invariants",
}

_RUNS = {}


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")

    def go(name, threads=1):
        key = (name, threads)
        if key not in _RUNS:
            out = root / f"{name}-t{threads}"
            start = time.perf_counter()
            code = main([COMMAND[name], "--config", name, "--out", str(out),
                         "--threads", str(threads), "--no-figures", "--quiet"])
            _RUNS[key] = (code, out, time.perf_counter() - start)
        return _RUNS[key]

    return go


def table(path):
    return np.genfromtxt(path, delimiter=",", names=True)


def metrics(out):
    return json.loads((out / "manifest.json").read_text())["metrics"]


def sorted_w2(a, b):
    a, b = np.sort(np.ravel(a)), np.sort(np.ravel(b))
    return math.sqrt(np.mean((a - b) ** 2))


def nonincreasing(values, slack=0.0):
    return all(b <= a * (1 + slack) for a, b in zip(values, values[1:]))


@pytest.mark.criterion(1, "operator property suite, 1e4 samples per operator, < 30 s")
def test_criterion_01_operator_properties():
    assert len(ops.catalog()) >= 10
    checks = [selftest.check_resolvent_contraction, selftest.check_yosida_lipschitz,
              selftest.check_yosida_monotone, selftest.check_selection,
              selftest.check_minimal_section_domination, selftest.check_resolvent_limit,
              selftest.check_yosida_limit, selftest.check_yosida_lower_bound]
    start = time.perf_counter()
    results = [check(samples=10_000) for check in checks]
    elapsed = time.perf_counter() - start
    assert all(r.passed for r in results), [r.line() for r in results if not r.passed]
    assert elapsed < 30, elapsed


@pytest.mark.criterion(2, "exact W2 vs sorted 1-D (1e-10) and brute force N <= 8 (1e-12)")
def test_criterion_02_wasserstein_oracle():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    for _ in range(100):
        a, b = rng.normal(size=(64, 1)), rng.normal(1.0, 2.0, size=(64, 1))
        assert abs(measures.w2_exact_assignment(a, b).value - sorted_w2(a, b)) <= 1e-10
    for d in (1, 2):
        for n in range(1, 9):
            a, b = rng.normal(size=(n, d)), rng.normal(size=(n, d))
            cost = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
            best = min(sum(cost[i, p[i]] for i in range(n)) for p in permutations(range(n)))
            assert abs(measures.w2_exact_assignment(a, b).value - math.sqrt(best / n)) <= 1e-12
    assert time.perf_counter() - start < 30


@pytest.mark.criterion(3, "reflected OU terminal cloud within W2 0.05 of half-normal, < 2 min")
def test_criterion_03_invariant_measure(bench):
    raw = load_bundled_raw("reflected-ou-invariant")
    solver = raw["solver"]
    assert (solver["N"], solver["h"], solver["T"], solver["scheme"]) == \
        (5000, 1e-3, 20.0, "resolvent-implicit")
    assert raw["experiment"]["burn_in"] == 10.0
    code, out, secs = bench("reflected-ou-invariant")
    assert code == 0 and secs < 120
    cloud = np.loadtxt(out / "invariant.csv", delimiter=",")
    assert cloud.shape == (5000,) and cloud.min() >= 0.0
    levels = (np.arange(1, 5001) - 0.5) / 5000
    reference = stats.halfnorm.ppf(levels, scale=1 / math.sqrt(2))
    assert sorted_w2(cloud, reference) <= 0.05


@pytest.mark.criterion(4, "coupled contraction at rate 1.5 with fitted slope <= -1.2, < 2 min")
def test_criterion_04_contraction(bench):
    code, out, secs = bench("reflected-ou-contraction")
    assert code == 0 and secs < 120
    rows = table(out / "contraction.csv")
    t, w2sq = rows["t"], rows["w2"] ** 2
    # grids on [0,1] and [2,3] differ by a rigid shift of 2
    assert w2sq[0] == pytest.approx(4.0, abs=1e-12)
    lam = 2 * 1.0 - 0.25 - 0.25
    floor = metrics(out)["noise_floor"]
    above = floor <= 0.25 * rows["w2"]
    window = (t >= 0.5) & (t <= 3.0)
    assert above[window].sum() >= 10
    assert np.all(w2sq[above] <= w2sq[0] * np.exp(-lam * t[above]) * 1.5)
    slope = np.polyfit(t[window], np.log(w2sq[window]), 1)[0]
    assert slope <= -1.2


@pytest.mark.criterion(5, "ergodic bound from nu0 = delta_3 above the noise floor, < 2 min")
def test_criterion_05_ergodicity(bench):
    code, out, secs = bench("reflected-ou-ergodicity")
    assert code == 0 and secs < 120
    invariant = np.loadtxt(out / "invariant.csv", delimiter=",")
    m2 = float(np.mean(invariant ** 2))
    rows = table(out / "ergodicity.csv")
    floor = metrics(out)["noise_floor"]
    above = floor <= 0.25 * np.sqrt(rows["w2_sq"])
    assert above.sum() >= 10
    bound = 2 * (9.0 + m2) * np.exp(-1.5 * rows["t"]) * 1.5
    assert np.all(rows["w2_sq"][above] <= bound[above])


@pytest.mark.criterion(6, "solution gaps nonincreasing in n and gap(16) <= gap(1)/4, < 3 min")
def test_criterion_06_solution_convergence(bench):
    raw = load_bundled_raw("reflected-ou-solutions")
    assert raw["experiment"]["operator_family"] == {"rule": "linear_shift", "c": 1.0}
    assert raw["coefficients"]["perturbation"]["c_b"] == 1.0
    code, out, secs = bench("reflected-ou-solutions")
    assert code == 0 and secs < 180
    rows = table(out / "solutions.csv")
    assert list(rows["n"]) == [1, 2, 4, 8, 16]
    gaps = list(rows["sup_mse"])
    assert nonincreasing(gaps, 0.1)
    assert gaps[-1] <= gaps[0] / 4


@pytest.mark.criterion(7, "penalization gaps shrink with epsilon, gap(0.025) <= gap(0.2)/3, < 2 min")
def test_criterion_07_penalization(bench):
    raw = load_bundled_raw("reflected-bm-penalization")
    assert raw["experiment"]["h_over_epsilon"] == pytest.approx(1 / 20)
    code, out, secs = bench("reflected-bm-penalization")
    assert code == 0 and secs < 120
    rows = table(out / "penalization.csv")
    assert list(rows["epsilon"]) == [0.2, 0.1, 0.05, 0.025]
    gaps = list(rows["sup_mse"])
    assert nonincreasing(gaps)
    assert gaps[-1] <= gaps[0] / 3


@pytest.mark.criterion(8, "invariant-measure gaps decrease, end within 2x MC floor, < 5 min")
def test_criterion_08_invariant_convergence(bench):
    code, out, secs = bench("reflected-ou-invariants")
    assert code == 0 and secs < 300
    rows = table(out / "invariants.csv")
    assert list(rows["n"]) == [1, 2, 4, 8]
    gaps = rows["w2_gap"]
    assert np.all(np.diff(gaps) < 0)
    m = metrics(out)
    assert gaps[-1] <= 2 * m["monte_carlo_floor"]
    assert rows["second_moment"].max() <= 4 * m["limit_second_moment"] + 1


@pytest.mark.criterion(9, "every bundled benchmark is byte-identical across --threads 1 and 2")
@pytest.mark.parametrize("name", sorted(COMMAND))
def test_criterion_09_thread_determinism(bench, name):
    assert set(bundled_names()) == set(COMMAND)
    code1, out1, _ = bench(name, 1)
    code2, out2, _ = bench(name, 2)
    assert code1 == code2
    files = sorted(f for f in os.listdir(out1) if f.endswith((".csv", ".json"))
                   and f != "manifest.json")
    assert files == sorted(f for f in os.listdir(out2) if f.endswith((".csv", ".json"))
                           and f != "manifest.json")
    for f in files:
        assert (out1 / f).read_bytes() == (out2 / f).read_bytes(), f


@pytest.mark.criterion(10, "null perturbation gives exactly zero gaps")
@pytest.mark.parametrize("name,csv,columns", [
    ("identical-family-solutions", "solutions.csv", ("sup_mse", "terminal_w2")),
    ("identical-family-invariants", "invariants.csv", ("w2_gap", "w1_gap")),
])
def test_criterion_10_null_perturbation(bench, name, csv, columns):
    code, out, _ = bench(name)
    assert code == 0
    rows = table(out / csv)
    for col in columns:
        assert np.all(rows[col] == 0.0), col
