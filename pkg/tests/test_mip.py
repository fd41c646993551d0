import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_objective, milp_objective, random_instance
from peergrade.mip import (MipConstants, MipInstance, desired_weights, explain_all, solve,
                           write_explanations)
from peergrade.model import ModelConfig, ValidationError
from peergrade.posterior import infer

ONE_HOT_4 = np.tile(np.eye(6)[4], (1, 1))


def check_feasible(inst, sol, tol=1e-9):
    w = sol.weights
    assert abs(w.sum() - 1) <= tol
    assert np.all((np.abs(w) <= tol) | (w >= inst.T - tol))
    assert np.all(np.abs(w - inst.desired_weights) <= inst.S + tol)
    avg = w @ inst.reports
    assert np.all(np.abs(np.array(sol.grades) - avg) <= 0.5 + tol)
    np.testing.assert_allclose(np.array(sol.grades), avg + sol.slacks, atol=tol)
    dev = np.abs(w - inst.desired_weights).sum()
    mass = sum(inst.masses[c, inst.grade_domain.index(g)] for c, g in enumerate(sol.grades))
    assert sol.objective == pytest.approx(mass - inst.P * dev, abs=1e-9)


# ---------------------------------------------------------- desired weights

def test_desired_weights_examples():
    np.testing.assert_allclose(desired_weights([1.5] * 4, [0.7] * 4), [0.25] * 4)
    np.testing.assert_allclose(desired_weights([2.0, 3.0], [1.0, 0.0]), [1.0, 0.0])
    np.testing.assert_allclose(desired_weights([2.0, 1.0], [1.0, 1.0]), [2 / 3, 1 / 3],
                               rtol=0, atol=1e-12)


def test_desired_weights_all_zero():
    with pytest.raises(ValueError):
        desired_weights([1.0, 2.0], [0.0, 0.0])


# ------------------------------------------------------------- small cases

def test_single_grader_reproduces_report():
    inst = MipInstance([[3, 4, 2, 5]], np.random.default_rng(0).dirichlet(np.ones(6), 4), [1.0])
    sol = solve(inst)
    assert sol.status == "Optimal"
    np.testing.assert_allclose(sol.weights, [1.0])
    assert sol.grades == (3, 4, 2, 5)
    np.testing.assert_allclose(sol.slacks, 0.0)


def test_single_grader_reporting_zero_is_feasible():
    sol = solve(MipInstance([[0, 0, 1, 5]], np.full((4, 6), 1 / 6), [1.0]))
    assert sol.grades == (0, 0, 1, 5)


def test_identical_reports():
    reports = np.tile([1, 3, 4, 2], (4, 1))
    masses = np.random.default_rng(1).dirichlet(np.ones(6), 4)
    sol = solve(MipInstance(reports, masses, [0.1, 0.2, 0.3, 0.4]))
    assert sol.grades == (1, 3, 4, 2)


def test_three_grader_example_matches_hand_solution():
    # mass only on grade 4 needs 2*w0 + 4*(1 - w0) >= 3.5, i.e. w0 <= 0.25
    inst = MipInstance([[2], [4], [4]], ONE_HOT_4, [1 / 3] * 3)
    sol = solve(inst)
    assert sol.grades == (4,)
    assert sol.weights[0] == pytest.approx(0.25)
    assert sol.objective == pytest.approx(1 - 0.01 * 2 * (1 / 3 - 1 / 4), abs=1e-12)
    assert sol.objective == pytest.approx(milp_objective(inst), abs=1e-7)


def test_infeasible_with_zero_slack():
    sol = solve(MipInstance([[1], [2]], np.full((1, 6), 1 / 6), [0.05, 0.95], S=0.0, T=0.1))
    assert sol.status == "Infeasible" and sol.grades is None


@pytest.mark.parametrize("kwargs", [dict(T=0.0), dict(T=1.5), dict(S=-0.1), dict(P=-1.0)])
def test_invalid_constants(kwargs):
    with pytest.raises(ValidationError):
        MipInstance([[1]], np.full((1, 6), 1 / 6), [1.0], **kwargs)


def test_too_many_graders():
    with pytest.raises(ValidationError, match="at most 8"):
        MipInstance(np.ones((9, 1)), np.full((1, 6), 1 / 6), np.full(9, 1 / 9))


def test_bad_desired_weights():
    with pytest.raises(ValidationError):
        MipInstance([[1], [2]], np.full((1, 6), 1 / 6), [0.5, 0.6])


# ------------------------------------------------------------------ oracles

def test_matches_milp_on_random_instances():
    rng = np.random.default_rng(2)
    for i in range(120):
        inst = random_instance(rng, graders=int(rng.integers(1, 7)), components=int(rng.integers(1, 5)),
                               on_lattice=False)
        sol = solve(inst)
        ref = milp_objective(inst)
        assert sol.objective == pytest.approx(ref, abs=1e-7), i
        check_feasible(inst, sol)


def test_lattice_oracle_never_beats_exact_solver():
    rng = np.random.default_rng(3)
    for _ in range(10):
        inst = random_instance(rng)
        assert solve(inst).objective >= brute_force_objective(inst) - 1e-12


def test_lattice_oracle_exact_when_optimum_is_on_lattice():
    # equal desired weights on 0.25 and reports forcing vertex weights on the lattice
    inst = MipInstance([[2, 3], [4, 3], [4, 4], [3, 2]],
                       np.tile(np.eye(6)[[4, 3]], (1, 1)).reshape(2, 6), [0.25] * 4)
    assert solve(inst).objective == pytest.approx(brute_force_objective(inst), abs=1e-12)


# --------------------------------------------------------------- properties

@given(st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_solution_properties(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, graders=int(rng.integers(1, 6)), components=int(rng.integers(1, 5)),
                           on_lattice=False)
    sol = solve(inst)
    check_feasible(inst, sol)
    lo, hi = inst.reports.min(axis=0), inst.reports.max(axis=0)
    assert np.all(np.array(sol.grades) >= lo) and np.all(np.array(sol.grades) <= hi)
    # desired-weights rounding is a feasible point whenever it satisfies the T rule
    d = inst.desired_weights
    if np.all((d == 0) | (d >= inst.T)):
        g = np.floor(d @ inst.reports + 0.5).astype(int)
        base = sum(inst.masses[c, g[c]] for c in range(inst.components))
        assert sol.objective >= base - 1e-12
    free = solve(MipInstance(inst.reports, inst.masses, d, inst.S, inst.T, 0.0))
    assert free.mass >= sol.mass - 1e-12


def test_tie_break_prefers_lower_grades():
    masses = np.zeros((1, 6))
    masses[0, [2, 3]] = 0.5
    sol = solve(MipInstance([[2], [3]], masses, [0.5, 0.5], S=0.09, T=0.1, P=0.0))
    assert sol.grades == (2,)


def test_solver_is_deterministic():
    inst = random_instance(np.random.default_rng(4))
    a, b = solve(inst), solve(inst)
    assert a.grades == b.grades and np.array_equal(a.weights, b.weights)


# -------------------------------------------------------------------- batch

@pytest.fixture(scope="module")
def small_fit(small_truth, hp):
    return infer(small_truth.dataset, hp, ModelConfig(chains=2, samples=60, burn_in=20, seed=1))


def test_explain_all_order_independent(small_fit):
    a = explain_all(small_fit.summary, small_fit.data)
    order = np.random.default_rng(0).permutation(small_fit.data.U)
    b = explain_all(small_fit.summary, small_fit.data, order=order)
    assert [e.submission_id for e in a.explanations] == [e.submission_id for e in b.explanations]
    for x, y in zip(a.explanations, b.explanations):
        assert x.solution.grades == y.solution.grades
        np.testing.assert_array_equal(x.solution.weights, y.solution.weights)
    assert 0.0 <= a.disagreement <= 1.0


def test_disagreement_counts_components(small_fit):
    batch = explain_all(small_fit.summary, small_fit.data)
    diff = sum(g != m for ex in batch.explanations
               for g, m in zip(ex.solution.grades, ex.map_grades))
    total = sum(len(ex.map_grades) for ex in batch.explanations)
    assert batch.disagreement == diff / total


def test_write_explanations(tmp_path, small_fit):
    batch = explain_all(small_fit.summary, small_fit.data, MipConstants())
    path = write_explanations(batch, tmp_path / "e.json")
    doc = json.loads(path.read_text())
    rows = doc["submissions"]
    assert doc["disagreement"] == batch.disagreement
    assert len(rows) == len(batch.explanations)
    for row in rows:
        for w in row["weights"].values():
            assert round(w, 3) == w
