import math

import numpy as np
import pytest
from scipy import integrate, stats

from peergrade.evaluation import (ExperimentResult, ci95, cross_validate, grade_metrics,
                                  graders_spec, heldout_loglik, paired_t_test, run_experiment,
                                  spearman, stratified_folds, ta_benchmark_mae)
from peergrade.gibbs import GradeIndex, run_chains
from peergrade.gibbs.likelihood import report_loglik
from peergrade.model import ClampSet, Dataset, GradeRecord, Hyperparameters, ModelConfig
from peergrade.synth import ClassSpec, generate_class

HP = Hyperparameters()


# ------------------------------------------------------------------ metrics

def test_grade_metrics_perfect():
    truth = np.array([[3.2, 4.0], [1.0, 4.6]])
    assert grade_metrics(truth, np.array([[3, 4], [1, 5]]), truth, HP.grade_set) == (0, 0, 1)


def test_grade_metrics_single_error():
    mae, rmse, acc = grade_metrics([[3.5]], [[3]], [[3.0]], HP.grade_set)
    assert mae == rmse == 0.5 and acc == 1.0


def test_grade_metrics_recomputed():
    rng = np.random.default_rng(0)
    truth = rng.normal(4, 0.8, (30, 4))
    mean = truth + rng.normal(0, 0.4, truth.shape)
    maps = rng.integers(0, 6, truth.shape)
    mae, rmse, acc = grade_metrics(mean, maps, truth, HP.grade_set)
    pairs = list(zip(mean.ravel(), truth.ravel(), maps.ravel()))
    assert mae == pytest.approx(sum(abs(m - t) for m, t, _ in pairs) / len(pairs), abs=1e-12)
    assert rmse == pytest.approx(math.sqrt(sum((m - t) ** 2 for m, t, _ in pairs) / len(pairs)),
                                 abs=1e-12)
    assert acc == sum(g == min(5, max(0, math.floor(t + 0.5))) for _, t, g in pairs) / len(pairs)
    assert rmse >= mae


def test_grade_metrics_shape_mismatch():
    with pytest.raises(ValueError):
        grade_metrics([[1.0]], [[1]], [[1.0, 2.0]], HP.grade_set)


def brute_spearman(x, y):
    def ranks(v):
        out = np.empty(len(v))
        for i, a in enumerate(v):
            less = sum(b < a for b in v)
            equal = sum(b == a for b in v)
            out[i] = less + (equal + 1) / 2
        return out
    rx, ry = ranks(x), ranks(y)
    rx, ry = rx - rx.mean(), ry - ry.mean()
    return float(rx @ ry / math.sqrt((rx @ rx) * (ry @ ry)))


def test_spearman_extremes():
    x = [0.1, 0.5, 0.3, 2.0]
    assert spearman(x, x) == 1.0
    assert spearman(x, [-v for v in x]) == -1.0


def test_spearman_with_ties_matches_definition():
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.integers(0, 5, 12).astype(float)
        y = rng.integers(0, 5, 12).astype(float)
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            continue
        assert spearman(x, y) == pytest.approx(brute_spearman(x, y), abs=1e-12)


def test_spearman_errors():
    with pytest.raises(ValueError):
        spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        spearman([1.0], [2.0])


def test_paired_t_conventions():
    a = [1.0, 2.0, 3.0]
    assert paired_t_test(a, a) == (0.0, 1.0)
    t1, p1 = paired_t_test([1, 3, 2, 5], [0, 1, 1, 1])
    t2, p2 = paired_t_test([0, 1, 1, 1], [1, 3, 2, 5])
    assert t1 == -t2 and p1 == p2


def test_paired_t_textbook_vector():
    a = np.array([12.1, 11.4, 13.0, 12.7, 11.9, 12.5, 13.3, 12.0, 11.8, 12.9])
    b = np.array([11.6, 11.5, 12.2, 12.0, 11.9, 11.8, 12.6, 11.7, 11.9, 12.1])
    d = a - b
    t_hand = d.mean() / (d.std(ddof=1) / math.sqrt(10))
    t, p = paired_t_test(a, b)
    assert t == pytest.approx(t_hand, abs=1e-10)
    ref = stats.ttest_rel(a, b)
    assert p == pytest.approx(ref.pvalue, abs=1e-8)


def test_paired_t_matches_scipy_random():
    rng = np.random.default_rng(2)
    for n in (2, 3, 10, 40):
        a, b = rng.normal(size=n), rng.normal(0.3, 1, size=n)
        t, p = paired_t_test(a, b)
        ref = stats.ttest_rel(a, b)
        assert t == pytest.approx(ref.statistic, rel=1e-10)
        assert p == pytest.approx(ref.pvalue, abs=1e-8)


def test_paired_t_length_mismatch():
    with pytest.raises(ValueError):
        paired_t_test([1.0, 2.0], [1.0])


def test_ci95_shrinks_with_replicates():
    rng = np.random.default_rng(3)
    values = rng.normal(size=8)
    assert ci95(values) < ci95(values[:2])
    assert math.isnan(ci95([1.0]))


# ------------------------------------------------------------ TA benchmark

def test_ta_benchmark_infinite_reliability_is_rounding_error():
    sd = 1 / math.sqrt(HP.tau_s)

    def err(s):
        return abs(min(5, max(0, math.floor(s + 0.5))) - s) * stats.norm.pdf(s, HP.mu_s, sd)

    edges = [-np.inf] + [k + 0.5 for k in range(5)] + [np.inf]
    exact = sum(integrate.quad(err, a, b)[0] for a, b in zip(edges[:-1], edges[1:]))
    got = ta_benchmark_mae(math.inf, HP, 200_000, np.random.default_rng(4), against="continuous")
    assert got == pytest.approx(exact, abs=0.003)
    assert ta_benchmark_mae(math.inf, HP, 1000, np.random.default_rng(4)) == 0.0


def test_ta_benchmark_monotone_in_reliability():
    values = [ta_benchmark_mae(r, HP, 100_000, np.random.default_rng(5)) for r in (0.5, 1, 2, 4, 8)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_ta_benchmark_rejects_bad_reliability():
    with pytest.raises(ValueError):
        ta_benchmark_mae(0.0, HP, 10, np.random.default_rng(0))


# ------------------------------------------------------------------- folds

def test_folds_partition_and_balance():
    data = generate_class(ClassSpec(seed=1)).index()
    plan = stratified_folds(data, 10, np.random.default_rng(0))
    assert plan.violations == 0
    sizes = plan.sizes
    assert sizes.sum() == data.P and sizes.max() - sizes.min() <= 1
    student = np.array([data.roles[v] == "Student" for v in data.pair_grader])
    assert student.sum() == 4800
    folds = [set(plan.fold(f)) for f in range(10)]
    assert set().union(*folds) == set(range(data.P))
    assert sum(len(f) for f in folds) == data.P
    for u in range(0, data.U, 37):
        f = plan.assignment[data.pairs_of_submission(u)]
        assert len(set(f)) == f.size


def test_folds_on_student_groups_only_sizes():
    # exactly 4800 groups: drop TA grades
    truth = generate_class(ClassSpec(seed=2))
    ds = truth.dataset
    ds = ds.with_records(r for r in ds.records if ds.role(r.grader_id) == "Student")
    plan = stratified_folds(GradeIndex.build(ds, HP), 10, np.random.default_rng(1))
    assert np.all(np.abs(plan.sizes - 480) <= 1)


def test_single_fold_and_violation_count(small_data):
    plan = stratified_folds(small_data, 1, np.random.default_rng(0))
    assert np.all(plan.assignment == 0)
    brute = sum(small_data.pairs_of_submission(u).size - 1 for u in range(small_data.U)
                if small_data.pairs_of_submission(u).size)
    assert plan.violations == brute


def test_folds_deterministic(small_data):
    a = stratified_folds(small_data, 5, np.random.default_rng(9))
    b = stratified_folds(small_data, 5, np.random.default_rng(9))
    np.testing.assert_array_equal(a.assignment, b.assignment)


# ---------------------------------------------------------------- held out

def test_heldout_point_posterior_is_exact_loglik(small_data):
    from peergrade.gibbs.chains import ChainTrace
    d = small_data
    rng = np.random.default_rng(0)
    s = rng.uniform(1, 5, (d.U, d.C))
    tau, b = rng.uniform(0.5, 2, d.V), rng.uniform(-0.5, 0.5, d.V)
    n = 3
    trace = ChainTrace(0, 0, np.repeat(s[None], n, 0), np.repeat(tau[None], n, 0),
                       np.repeat(b[None], n, 0), np.ones((n, d.V)), np.ones((n, d.P), np.int8))
    held = np.array([0, 5, 9])
    expected = sum(report_loglik(int(d.reports[p, c]), s[d.pair_sub[p], c], tau[d.pair_grader[p]],
                                 b[d.pair_grader[p]], 1, HP)
                   for p in held for c in range(d.C))
    for cfg in (ModelConfig(), ModelConfig(effort_enabled=False)):
        got = heldout_loglik([trace], d, held, HP, cfg)
        assert got == pytest.approx(expected, rel=1e-12)
    # additivity over disjoint groups
    parts = sum(heldout_loglik([trace], d, np.array([p]), HP, ModelConfig()) for p in held)
    assert parts == pytest.approx(expected, rel=1e-12)


def test_heldout_matches_exact_marginalisation():
    """One submission, one component; the free latents are s and grader A's bias."""
    hp = Hyperparameters(C=1)
    train = [GradeRecord("u", "A", 0, 3)]
    full = Dataset.from_records(train + [GradeRecord("u", "B", 0, 4)])
    clamps = ClampSet(reliability_clamps={"A": 2.0, "B": 1.5}, bias_clamps={"B": 0.0})
    config = ModelConfig(chains=4, samples=6000, burn_in=200, seed=4, effort_enabled=False)
    train_ds = full.with_records(train)
    traces = run_chains(train_ds, hp, config, clamps)
    data = GradeIndex.build(full, hp)
    held = np.flatnonzero(data.pair_grader == data.graders.index("B"))
    got = heldout_loglik(traces, data, held, hp, config)

    s = np.linspace(-3, 11, 1401)
    bA = np.linspace(-6, 6, 601)
    S, B = np.meshgrid(s, bA, indexing="ij")
    prior = stats.norm.pdf(S, hp.mu_s, 1 / math.sqrt(hp.tau_s)) * stats.norm.pdf(B, 0, 1)
    sd_a = 1 / math.sqrt(2.0)
    like_a = stats.norm.cdf(3.5, S + B, sd_a) - stats.norm.cdf(2.5, S + B, sd_a)
    post = prior * like_a
    post /= post.sum()
    sd_b = 1 / math.sqrt(1.5)
    like_b = stats.norm.cdf(4.5, S, sd_b) - stats.norm.cdf(3.5, S, sd_b)
    exact = math.log(float((post * like_b).sum()))
    assert got == pytest.approx(exact, abs=0.01)


def test_heldout_is_nonpositive(small_data):
    traces = run_chains(small_data, HP, ModelConfig(chains=1, samples=20, burn_in=5, seed=1))
    assert heldout_loglik(traces, small_data, np.arange(small_data.P), HP, ModelConfig()) <= 0
    assert heldout_loglik(traces, small_data, np.array([], dtype=int), HP, ModelConfig()) == 0.0


def test_cross_validate_is_deterministic(small_truth):
    cfg = ModelConfig(chains=1, samples=15, burn_in=5, seed=3)
    plan_a, a = cross_validate(small_truth.dataset, HP, cfg, k=3, seed=7)
    plan_b, b = cross_validate(small_truth.dataset, HP, cfg, k=3, seed=7)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(plan_a.assignment, plan_b.assignment)
    assert np.all(a < 0) and a.size == 3


# ------------------------------------------------------------- experiments

TINY = ModelConfig(chains=1, samples=12, burn_in=4)


def test_graders_spec_arithmetic():
    spec = graders_spec(ClassSpec(students=60, weeks=5), 1)
    assert (spec.students, spec.submissions, spec.grades_per_submission) == (15, 60, 1)
    assert graders_spec(ClassSpec(students=60), 4).students == 60


@pytest.mark.parametrize("kind,settings,extra", [
    ("vary_weeks", (1, 2), {}),
    ("vary_graders_per_submission", (1, 2), {}),
    ("misspec", (4.0, 3.0), {"knob": "mu_s"}),
    ("mip_stability", (1, 4), {}),
])
def test_experiment_smoke(tmp_path, kind, settings, extra):
    base = ClassSpec(students=8, weeks=2, tas=1, ta_coverage=0.25)
    res = run_experiment(kind, 1, base, TINY, settings, seed=1, **extra)
    assert len(res.per_replicate) == 2 and all(len(r) == 1 for r in res.per_replicate)
    rows = res.rows()
    assert {r["metric"] for r in rows} >= {"true_grade_mae", "reliability_spearman"}
    res.write(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().startswith("kind,setting,metric,mean,ci95,replicates")


def test_mip_stability_single_grader_equals_reports():
    base = ClassSpec(students=8, weeks=2, tas=1, ta_coverage=0.0)
    res = run_experiment("mip_stability", 1, base, TINY, (1,), seed=2)
    assert res.mean(0, "mip_equals_report") == 1.0


def test_ablation_smoke():
    base = ClassSpec(students=6, weeks=1, tas=1, ta_coverage=0.5)
    res = run_experiment("ablation", 1, base, TINY, ("full", "no_effort"), seed=3, k=3)
    assert set(res.extra["t_tests"]) == {"no_effort"}
    assert len(res.extra["fold_logliks"]["full"]) == 3


def test_experiment_result_mean_ignores_nan():
    res = ExperimentResult("x", [1], [[{"m": 1.0}, {"m": math.nan}, {"m": 3.0}]])
    assert res.mean(0, "m") == 2.0


def test_unknown_experiment():
    from peergrade.model import ValidationError
    with pytest.raises(ValidationError):
        run_experiment("nope", 1)
    with pytest.raises(ValidationError):
        run_experiment("misspec", 1, settings=(1.0,))
