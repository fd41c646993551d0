"""Metrics, held-out likelihood and the synthetic experiment drivers."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
from scipy import stats
from scipy.special import betainc, logsumexp

from .distributions import log_normal_interval
from .gibbs.chains import ChainTrace, concatenate
from .gibbs.likelihood import cell_bounds, low_effort_cell_logprobs, round_to_grade
from .gibbs.state import GradeIndex
from .mip import MipConstants, explain_all
from .model import Dataset, Hyperparameters, ModelConfig, ValidationError
from .posterior import infer
from .synth import ClassSpec, GroundTruth, generate_class, misspec_scenario

# ------------------------------------------------------------------ metrics


def grade_metrics(mean, map_grades, truth, grade_set) -> tuple[float, float, float]:
    """(MAE, RMSE) of posterior means and accuracy of MAP grades against rounded truth."""
    mean = np.asarray(mean, dtype=float)
    truth = np.asarray(truth, dtype=float)
    map_grades = np.asarray(map_grades)
    if mean.shape != truth.shape or map_grades.shape != truth.shape:
        raise ValueError("estimates and truth must be aligned")
    err = mean - truth
    mae = float(np.abs(err).mean())
    rmse = float(np.sqrt((err**2).mean()))
    accuracy = float((map_grades == round_to_grade(truth, grade_set)).mean())
    return mae, rmse, accuracy


def spearman(xs, ys) -> float:
    """Pearson correlation of average ranks."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("spearman needs two equal-length vectors")
    if xs.size < 2:
        raise ValueError("spearman needs at least two values")
    rx = stats.rankdata(xs)
    ry = stats.rankdata(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    den = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if den == 0:
        raise ValueError("zero rank variance")
    return float(np.clip(rx @ ry / den, -1.0, 1.0))


def paired_t_test(a, b) -> tuple[float, float]:
    """Two-sided paired t-test; identical samples give (0, 1)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    n = a.size
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    d = a - b
    if np.all(d == 0):
        return 0.0, 1.0
    sd = d.std(ddof=1)
    if sd == 0:
        return math.copysign(math.inf, d.mean()), 0.0
    t = float(d.mean() / (sd / math.sqrt(n)))
    df = n - 1
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, p


def ci95(values) -> float:
    """Half-width of a t-based 95% confidence interval for the mean."""
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    if v.size < 2:
        return math.nan
    return float(stats.t.ppf(0.975, v.size - 1) * v.std(ddof=1) / math.sqrt(v.size))


# ------------------------------------------------------------ TA benchmark


def ta_benchmark_mae(reliability: float, hp: Hyperparameters, trials: int,
                     rng: np.random.Generator, against: str = "rounded") -> float:
    """Error of a single grader with the given reliability, no bias and full effort.

    ``against="rounded"`` scores the report against the rounded true grade (a
    report can only ever be a grade); ``"continuous"`` scores against the
    real-valued true grade.
    """
    if not reliability > 0:
        raise ValueError("reliability must be positive")
    s = rng.normal(hp.mu_s, 1.0 / math.sqrt(hp.tau_s), trials)
    noise = 0.0 if math.isinf(reliability) else rng.normal(0.0, 1.0 / math.sqrt(reliability), trials)
    report = round_to_grade(s + noise, hp.grade_set)
    if against == "rounded":
        target = round_to_grade(s, hp.grade_set)
    elif against == "continuous":
        target = s
    else:
        raise ValueError("against must be 'rounded' or 'continuous'")
    return float(np.abs(report - target).mean())


# ---------------------------------------------------------- cross-validation


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: np.ndarray  # fold of each (submission, grader) pair, GradeIndex order
    violations: int  # pairs sharing a submission and a fold

    def fold(self, f: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == f)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)


def stratified_folds(data: GradeIndex, k: int, rng: np.random.Generator) -> FoldPlan:
    """Deal groups round-robin, walking submissions in a random order.

    Groups of one submission are dealt consecutively, so they land in distinct
    folds whenever a submission has at most ``k`` graders, and fold sizes never
    differ by more than one.
    """
    if k < 1:
        raise ValueError("k must be positive")
    assignment = np.empty(data.P, dtype=np.int64)
    slot = int(rng.integers(k))
    for u in rng.permutation(data.U):
        pairs = data.pairs_of_submission(u)
        for p in rng.permutation(pairs):
            assignment[p] = slot % k
            slot += 1
    violations = 0
    for u in range(data.U):
        folds = assignment[data.pairs_of_submission(u)]
        violations += folds.size - np.unique(folds).size
    return FoldPlan(k, assignment, violations)


@numba.njit(cache=True)
def _high_effort_logliks(rpos, s, tau, b, lo, hi, scale):
    # s: (N, h, C); tau, b: (N, h) -> (N, h) summed over components
    N, h, C = s.shape
    out = np.zeros((N, h))
    for n in range(N):
        for j in range(h):
            prec = tau[n, j] / scale
            acc = 0.0
            for c in range(C):
                r = rpos[j, c]
                acc += log_normal_interval(lo[r], hi[r], s[n, j, c] + b[n, j], prec)
            out[n, j] = acc
    return out


def heldout_loglik(traces: list[ChainTrace], data: GradeIndex, held: np.ndarray,
                   hp: Hyperparameters, config: ModelConfig) -> float:
    """Posterior-predictive log probability of the held-out pairs.

    ``held`` indexes pairs of ``data`` (the full dataset). The traces must come
    from a training dataset with the same submission and grader ids. A pair's
    C reports share one effort indicator, so each pair is scored as a group:
    ``log mean_n sum_z P(z | e_n) prod_c L(r_c | s_n, tau_n, b_n, z)``. Ids with
    no training reports still have samples, drawn from their priors, which
    makes their term a Monte Carlo prior-predictive estimate.
    """
    held = np.asarray(held, dtype=np.int64)
    if held.size == 0:
        return 0.0
    s = concatenate(traces, "s")
    tau = concatenate(traces, "tau")
    b = concatenate(traces, "b")
    e = concatenate(traces, "e")
    u = data.pair_sub[held]
    v = data.pair_grader[held]
    rpos = data.report_pos[held]
    lo, hi = cell_bounds(hp.grade_set)
    scale = hp.lambda_tau if config.correlation_enabled else 1.0
    high = _high_effort_logliks(rpos, np.ascontiguousarray(s[:, u, :]),
                                np.ascontiguousarray(tau[:, v]), np.ascontiguousarray(b[:, v]),
                                lo, hi, scale)
    if config.effort_enabled:
        low = low_effort_cell_logprobs(hp)[rpos].sum(axis=1)  # (h,)
        ev = e[:, v]
        with np.errstate(divide="ignore"):
            per_sample = np.logaddexp(np.log(ev) + high, np.log1p(-ev) + low[None, :])
    else:
        per_sample = high
    per_pair = logsumexp(per_sample, axis=0) - math.log(per_sample.shape[0])
    return float(per_pair.sum())


def cross_validate(dataset: Dataset, hp: Hyperparameters, config: ModelConfig, k: int = 10,
                   seed: int = 0, plan: FoldPlan | None = None) -> tuple[FoldPlan, np.ndarray]:
    """Held-out log-likelihood of each fold."""
    data = GradeIndex.build(dataset, hp)
    if plan is None:
        plan = stratified_folds(data, k, np.random.default_rng(seed))
    groups = {(data.submissions[u], data.graders[v]): f
              for u, v, f in zip(data.pair_sub, data.pair_grader, plan.assignment)}
    out = np.empty(plan.k)
    for f in range(plan.k):
        train = dataset.with_records(r for r in dataset.records
                                     if groups[(r.submission_id, r.grader_id)] != f)
        fold_cfg = config.replace(seed=_derive_seed(config.seed or 0, f))
        fit = infer(train, hp, fold_cfg)
        if fit.data.submissions != data.submissions or fit.data.graders != data.graders:
            raise RuntimeError("training index does not match the full dataset")
        out[f] = heldout_loglik(fit.traces, data, plan.fold(f), hp, config)
    return plan, out


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


# -------------------------------------------------------------- experiments

METRICS = ("true_grade_mae", "true_grade_rmse", "accuracy", "map_mae", "reliability_spearman",
           "effort_spearman", "bias_mae")


def _safe_spearman(x, y) -> float:
    try:
        return spearman(x, y)
    except ValueError:
        return math.nan


def score_fit(fit, truth: GroundTruth, hp: Hyperparameters) -> dict[str, float]:
    sm = fit.summary
    lat = truth.latents
    mae, rmse, acc = grade_metrics(sm.s_mean, sm.map_grades, lat.s, hp.grade_set)
    students = np.array([fit.data.roles[j] == "Student" for j in range(fit.data.V)])
    return {
        "true_grade_mae": mae,
        "true_grade_rmse": rmse,
        "accuracy": acc,
        "map_mae": float(np.abs(sm.map_grades - lat.s).mean()),
        "reliability_spearman": _safe_spearman(sm.tau_mean[students], lat.tau[students]),
        "effort_spearman": _safe_spearman(sm.e_mean[students], lat.e[students]),
        "bias_mae": float(np.abs(sm.b_mean - lat.b).mean()),
    }


@dataclass
class ExperimentResult:
    kind: str
    settings: list
    per_replicate: list[list[dict[str, float]]]  # [setting][replicate] -> metrics
    extra: dict = field(default_factory=dict)

    def mean(self, setting_index: int, metric: str) -> float:
        vals = [r[metric] for r in self.per_replicate[setting_index]]
        return float(np.nanmean(vals)) if not np.all(np.isnan(vals)) else math.nan

    def values(self, setting_index: int, metric: str) -> np.ndarray:
        return np.array([r[metric] for r in self.per_replicate[setting_index]])

    def rows(self) -> list[dict]:
        out = []
        for i, setting in enumerate(self.settings):
            metrics = sorted(self.per_replicate[i][0]) if self.per_replicate[i] else []
            for m in metrics:
                vals = self.values(i, m)
                out.append({"kind": self.kind, "setting": str(setting), "metric": m,
                            "mean": self.mean(i, m), "ci95": ci95(vals),
                            "replicates": int(vals.size)})
        return out

    def write(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, ["kind", "setting", "metric", "mean", "ci95", "replicates"],
                               lineterminator="\n")
            w.writeheader()
            for row in self.rows():
                w.writerow({**row, "mean": repr(row["mean"]), "ci95": repr(row["ci95"])})
        return path


DEFAULT_SETTINGS = {
    "vary_weeks": (1, 2, 4, 8),
    "vary_graders_per_submission": (1, 2, 3, 4),
    "mip_stability": (1, 2, 4),
    "ablation": ("full", "no_censoring", "no_effort"),
}

ABLATIONS = {
    "full": dict(effort_enabled=True, censoring_enabled=True),
    "no_censoring": dict(effort_enabled=True, censoring_enabled=False),
    "no_effort": dict(effort_enabled=False, censoring_enabled=True),
    "pg1": dict(effort_enabled=False, censoring_enabled=False),
}


def graders_spec(base: ClassSpec, k: int) -> ClassSpec:
    """Hold weekly submissions fixed and scale the number of student graders with k."""
    subs = base.submissions
    per = base.grades_per_grader_per_week
    if (subs * k) % per:
        raise ValidationError(f"{subs} submissions x {k} graders is not divisible by {per}")
    return base.replace(students=subs * k // per, submissions_per_week=subs,
                        grades_per_submission=k)


def run_experiment(kind: str, replicates: int = 15, base: ClassSpec | None = None,
                   config: ModelConfig | None = None, settings=None, seed: int = 0,
                   knob: str | None = None, direction: str = "infer", k: int = 10,
                   mip: MipConstants = MipConstants()) -> ExperimentResult:
    """Generate, infer and score every (setting, replicate) cell.

    Datasets depend only on the replicate (and on the setting where it changes
    the class shape), so settings are paired across replicates.
    """
    base = base or ClassSpec()
    config = config or ModelConfig(chains=4, samples=300, burn_in=100)
    if kind == "misspec":
        if knob is None or settings is None:
            raise ValidationError("misspec experiments need a knob and a list of values")
    elif kind not in DEFAULT_SETTINGS:
        raise ValidationError(f"unknown experiment kind {kind!r}")
    settings = list(settings if settings is not None else DEFAULT_SETTINGS[kind])
    results: list[list[dict]] = [[] for _ in settings]
    extra: dict = {}

    for rep in range(replicates):
        data_seed = _derive_seed(seed, rep)
        if kind == "ablation":
            truth = generate_class(base.replace(seed=data_seed))
            data = truth.index()
            plan = stratified_folds(data, k, np.random.default_rng(data_seed))
            for i, name in enumerate(settings):
                cfg = config.replace(seed=_derive_seed(seed, rep, i), **ABLATIONS[name])
                _, folds = cross_validate(truth.dataset, base.hp, cfg, plan=plan)
                results[i].append({"heldout_loglik": float(folds.sum())})
                extra.setdefault("fold_logliks", {}).setdefault(name, []).extend(folds.tolist())
            continue
        for i, setting in enumerate(settings):
            infer_hp = base.hp
            if kind == "vary_weeks":
                spec = base.replace(weeks=int(setting), seed=data_seed)
            elif kind in ("vary_graders_per_submission", "mip_stability"):
                spec = graders_spec(base, int(setting)).replace(seed=data_seed)
            else:  # misspec
                gen_hp, infer_hp = misspec_scenario(base, knob, float(setting), direction)
                spec = base.replace(hp=gen_hp, seed=data_seed)
            truth = generate_class(spec)
            fit = infer(truth.dataset, infer_hp, config.replace(seed=_derive_seed(seed, rep, i)))
            metrics = score_fit(fit, truth, infer_hp)
            if kind == "mip_stability":
                metrics.update(_mip_metrics(fit, truth, mip))
            results[i].append(metrics)

    if kind == "ablation":
        folds = extra["fold_logliks"]
        extra["t_tests"] = {name: paired_t_test(folds[settings[0]], folds[name])
                            for name in settings[1:]}
    return ExperimentResult(kind, settings, results, extra)


def _mip_metrics(fit, truth: GroundTruth, constants: MipConstants) -> dict[str, float]:
    batch = explain_all(fit.summary, fit.data, constants)
    data = fit.data
    mip_err, map_err, equal_report, total = [], [], 0, 0
    for ex in batch.explanations:
        u = data.submissions.index(ex.submission_id)
        grades = np.array(ex.solution.grades, dtype=float)
        mip_err.append(np.abs(grades - truth.latents.s[u]))
        map_err.append(np.abs(fit.summary.map_grades[u] - truth.latents.s[u]))
        pairs = data.pairs_of_submission(u)
        if pairs.size == 1:
            equal_report += int(np.sum(grades == data.reports[pairs[0]]))
            total += data.C
    return {
        "mip_mae": float(np.mean(mip_err)),
        "mip_map_mae": float(np.mean(map_err)),
        "mip_disagreement": batch.disagreement,
        "mip_equals_report": equal_report / total if total else math.nan,
    }
