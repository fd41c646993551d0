"""Posterior summaries built from concatenated chain traces."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gibbs.chains import ChainTrace, concatenate, run_chains
from .gibbs.likelihood import grade_positions
from .gibbs.state import GradeIndex
from .model import ClampSet, Dataset, Hyperparameters, ModelConfig, ValidationError

QUANTILES = (0.05, 0.10, 0.50, 0.90, 0.95)
QUANTILE_NAMES = ("q05", "q10", "q50", "q90", "q95")


def quantiles(x: np.ndarray, axis: int = 0) -> np.ndarray:
    """Order-statistic quantiles with midpoint interpolation, stacked on axis 0."""
    return np.quantile(x, QUANTILES, axis=axis, method="hazen")


def interval_masses(samples, hp: Hyperparameters) -> np.ndarray:
    """Fraction of samples whose value falls in each grade's cell (last axis = grades).

    ``samples`` has the draws on axis 0; any further axes are kept.
    """
    x = np.asarray(samples, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("interval_masses needs at least one sample")
    K = len(hp.grade_set)
    pos = grade_positions(x, hp.grade_set)
    counts = np.stack([(pos == k).sum(axis=0) for k in range(K)], axis=-1)
    return counts / x.shape[0]


def map_grade(masses, grade_set=None):
    """Grade with the largest mass; ties go to the lower grade."""
    m = np.asarray(masses)
    idx = np.argmax(m, axis=-1)  # first maximum == lowest grade
    if grade_set is None:
        return idx if idx.ndim else int(idx)
    g = np.asarray(grade_set)[idx]
    return g if g.ndim else int(g)


@dataclass
class PosteriorSummary:
    submissions: tuple[str, ...]
    graders: tuple[str, ...]
    grade_set: tuple[int, ...]
    s_mean: np.ndarray  # (U, C)
    s_sd: np.ndarray
    s_quantiles: np.ndarray  # (5, U, C)
    masses: np.ndarray  # (U, C, K)
    map_grades: np.ndarray  # (U, C) grades
    tau_mean: np.ndarray  # (V,)
    tau_quantiles: np.ndarray  # (5, V)
    b_mean: np.ndarray
    b_quantiles: np.ndarray
    e_mean: np.ndarray
    e_quantiles: np.ndarray
    samples: int

    @property
    def C(self) -> int:
        return self.s_mean.shape[1]

    def grader_index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.graders)}

    def submission_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.submissions)}


def summarize(traces: list[ChainTrace], data: GradeIndex, hp: Hyperparameters) -> PosteriorSummary:
    if not traces:
        raise ValueError("no traces to summarise")
    s = concatenate(traces, "s")
    tau = concatenate(traces, "tau")
    b = concatenate(traces, "b")
    e = concatenate(traces, "e")
    if s.shape[1:] != (data.U, data.C) or tau.shape[1] != data.V:
        raise ValueError("traces do not match the dataset dimensions")
    masses = interval_masses(s, hp)
    return PosteriorSummary(
        submissions=data.submissions, graders=data.graders, grade_set=hp.grade_set,
        s_mean=s.mean(axis=0), s_sd=s.std(axis=0), s_quantiles=quantiles(s),
        masses=masses, map_grades=map_grade(masses, hp.grade_set),
        tau_mean=tau.mean(axis=0), tau_quantiles=quantiles(tau),
        b_mean=b.mean(axis=0), b_quantiles=quantiles(b),
        e_mean=e.mean(axis=0), e_quantiles=quantiles(e),
        samples=s.shape[0],
    )


@dataclass
class Fit:
    data: GradeIndex
    traces: list[ChainTrace]
    summary: PosteriorSummary


def infer(dataset: Dataset, hp: Hyperparameters, config: ModelConfig,
          clamps: ClampSet | None = None, workers: int = 1) -> Fit:
    """Run the chains on ``dataset`` and summarise them (role clamps by default)."""
    data = GradeIndex.build(dataset, hp)
    if clamps is None:
        clamps = ClampSet.from_roles(dataset.roles)
    traces = run_chains(data, hp, config, clamps, workers=workers)
    return Fit(data, traces, summarize(traces, data, hp))


RANK_KEYS = ("reliability_mean", "effort_mean", "pessimistic_reliability",
             "optimistic_reliability")


def rank_graders(summary: PosteriorSummary, by: str = "reliability_mean") -> list[str]:
    """Grader ids in descending order of the chosen statistic; ties by id."""
    values = {
        "reliability_mean": summary.tau_mean,
        "effort_mean": summary.e_mean,
        "pessimistic_reliability": summary.tau_quantiles[QUANTILE_NAMES.index("q10")],
        "optimistic_reliability": summary.tau_quantiles[QUANTILE_NAMES.index("q90")],
    }
    if by not in values:
        raise ValueError(f"unknown ranking key {by!r}; choose from {RANK_KEYS}")
    vals = dict(zip(summary.graders, values[by]))
    return sorted(summary.graders, key=lambda v: (-vals[v], v))


# ------------------------------------------------------------------- export

def summary_columns(grade_set) -> list[str]:
    return (["kind", "id", "component", "mean", "sd", *QUANTILE_NAMES, "map_grade"]
            + [f"m_{g}" for g in grade_set])


def _fmt(x) -> str:
    return repr(float(x))


def write_summary(summary: PosteriorSummary, path) -> Path:
    """One row per true grade (kind ``true_grade``) then one per grader variable.

    Grader rows leave ``component``, ``map_grade`` and the mass columns empty.
    """
    path = Path(path)
    K = len(summary.grade_set)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(summary_columns(summary.grade_set))
        for i, u in enumerate(summary.submissions):
            for c in range(summary.C):
                w.writerow(["true_grade", u, c, _fmt(summary.s_mean[i, c]),
                            _fmt(summary.s_sd[i, c]),
                            *(_fmt(q) for q in summary.s_quantiles[:, i, c]),
                            int(summary.map_grades[i, c]),
                            *(_fmt(m) for m in summary.masses[i, c])])
        for kind, mean, qs in (("reliability", summary.tau_mean, summary.tau_quantiles),
                               ("bias", summary.b_mean, summary.b_quantiles),
                               ("effort", summary.e_mean, summary.e_quantiles)):
            for j, v in enumerate(summary.graders):
                w.writerow([kind, v, "", _fmt(mean[j]), "", *(_fmt(q) for q in qs[:, j]), "",
                            *([""] * K)])
    return path


def read_summary(path, hp: Hyperparameters) -> PosteriorSummary:
    """Inverse of :func:`write_summary` (standard deviations of grader variables are not stored)."""
    path = Path(path)
    cols = summary_columns(hp.grade_set)
    grades: dict[str, dict[int, list]] = {}
    graders: dict[str, dict[str, list]] = {"reliability": {}, "bias": {}, "effort": {}}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != cols:
            raise ValidationError(f"{path}: unexpected summary header")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(cols):
                raise ValidationError(f"{path}:{lineno}: expected {len(cols)} fields")
            kind, ident = row[0], row[1]
            try:
                if kind == "true_grade":
                    grades.setdefault(ident, {})[int(row[2])] = row
                elif kind in graders:
                    graders[kind][ident] = row
                else:
                    raise ValueError(f"unknown kind {kind!r}")
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
    subs = tuple(grades)
    gids = tuple(graders["reliability"])
    C = hp.C
    K = len(hp.grade_set)
    U, V = len(subs), len(gids)

    def fl(x):
        return float(x) if x != "" else np.nan

    s_mean = np.empty((U, C)); s_sd = np.empty((U, C)); s_q = np.empty((5, U, C))
    masses = np.empty((U, C, K)); maps = np.empty((U, C), dtype=int)
    for i, u in enumerate(subs):
        for c in range(C):
            row = grades[u][c]
            s_mean[i, c] = fl(row[3]); s_sd[i, c] = fl(row[4])
            s_q[:, i, c] = [fl(x) for x in row[5:10]]
            maps[i, c] = int(row[10])
            masses[i, c] = [fl(x) for x in row[11:]]
    out = {}
    for kind in graders:
        mean = np.array([fl(graders[kind][v][3]) for v in gids])
        q = np.array([[fl(x) for x in graders[kind][v][5:10]] for v in gids]).T.reshape(5, V)
        out[kind] = (mean, q)
    return PosteriorSummary(subs, gids, hp.grade_set, s_mean, s_sd, s_q, masses, maps,
                            *out["reliability"], *out["bias"], *out["effort"], samples=0)
