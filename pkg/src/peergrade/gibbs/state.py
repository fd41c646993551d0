from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import ClampSet, Dataset, Hyperparameters, ValidationError, validate_dataset


@dataclass(frozen=True)
class GradeIndex:
    """Integer-indexed view of a :class:`Dataset`.

    Pairs (submission, grader) are sorted by submission then grader; ``reports``
    holds the reported grades and ``report_pos`` their positions in the grade set.
    """

    submissions: tuple[str, ...]
    graders: tuple[str, ...]
    C: int
    pair_sub: np.ndarray
    pair_grader: np.ndarray
    reports: np.ndarray
    report_pos: np.ndarray
    author: np.ndarray
    roles: tuple[str, ...]

    @property
    def U(self) -> int:
        return len(self.submissions)

    @property
    def V(self) -> int:
        return len(self.graders)

    @property
    def P(self) -> int:
        return len(self.pair_sub)

    @classmethod
    def build(cls, dataset: Dataset, hp: Hyperparameters, check: bool = True) -> "GradeIndex":
        if check:
            problems = validate_dataset(dataset, hp)
            if problems:
                raise ValidationError("invalid dataset: " + "; ".join(problems[:10]))
        sub_pos = {u: i for i, u in enumerate(dataset.submissions)}
        grader_pos = {v: i for i, v in enumerate(dataset.graders)}
        grade_pos = {g: i for i, g in enumerate(hp.grade_set)}
        pairs = sorted({(sub_pos[r.submission_id], grader_pos[r.grader_id])
                        for r in dataset.records})
        pair_pos = {p: i for i, p in enumerate(pairs)}
        reports = np.zeros((len(pairs), hp.C))
        report_pos = np.zeros((len(pairs), hp.C), dtype=np.int64)
        for r in dataset.records:
            p = pair_pos[(sub_pos[r.submission_id], grader_pos[r.grader_id])]
            reports[p, r.component] = r.reported_grade
            report_pos[p, r.component] = grade_pos[r.reported_grade]
        author = np.full(len(dataset.submissions), -1, dtype=np.int64)
        for u, v in dataset.authorship.items():
            author[sub_pos[u]] = grader_pos[v]
        pair_arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        return cls(
            submissions=tuple(dataset.submissions),
            graders=tuple(dataset.graders),
            C=hp.C,
            pair_sub=pair_arr[:, 0].copy(),
            pair_grader=pair_arr[:, 1].copy(),
            reports=reports,
            report_pos=report_pos,
            author=author,
            roles=tuple(dataset.role(v) for v in dataset.graders),
        )

    def pairs_of_submission(self, u: int) -> np.ndarray:
        return np.flatnonzero(self.pair_sub == u)

    def pairs_of_grader(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.pair_grader == v)

    def authored_by(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.author == v)


@dataclass
class LatentState:
    """One joint sample of every latent variable, stored as dense arrays."""

    s: np.ndarray  # (U, C) true grades
    tau: np.ndarray  # (V,) reliabilities
    b: np.ndarray  # (V,) biases
    e: np.ndarray  # (V,) effort probabilities
    z: np.ndarray  # (P,) effort indicators, int8

    def copy(self) -> "LatentState":
        return LatentState(self.s.copy(), self.tau.copy(), self.b.copy(), self.e.copy(),
                           self.z.copy())

    def equals(self, other: "LatentState") -> bool:
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("s", "tau", "b", "e", "z"))


@dataclass(frozen=True)
class ClampMasks:
    """Clamp values resolved onto index positions (nan = free)."""

    effort: np.ndarray  # (V,) bool
    reliability: np.ndarray  # (V,) float, nan where free
    bias: np.ndarray  # (V,) float
    true_grade: np.ndarray  # (U, C) float
    pair_effort: np.ndarray  # (P,) bool

    @classmethod
    def build(cls, clamps: ClampSet | None, data: GradeIndex) -> "ClampMasks":
        clamps = clamps or ClampSet()
        gpos = {v: i for i, v in enumerate(data.graders)}
        spos = {u: i for i, u in enumerate(data.submissions)}
        effort = np.zeros(data.V, dtype=bool)
        reliability = np.full(data.V, np.nan)
        bias = np.full(data.V, np.nan)
        true_grade = np.full((data.U, data.C), np.nan)
        for v in clamps.effort_clamps:
            if v in gpos:
                effort[gpos[v]] = True
        for v, val in clamps.reliability_clamps.items():
            if v in gpos:
                reliability[gpos[v]] = val
        for v, val in clamps.bias_clamps.items():
            if v in gpos:
                bias[gpos[v]] = val
        for (u, c), val in clamps.true_grade_clamps.items():
            if u in spos:
                true_grade[spos[u], c] = val
        return cls(effort, reliability, bias, true_grade, effort[data.pair_grader])

    def apply(self, state: LatentState) -> None:
        free = np.isnan(self.true_grade)
        state.s[~free] = self.true_grade[~free]
        m = ~np.isnan(self.reliability)
        state.tau[m] = self.reliability[m]
        m = ~np.isnan(self.bias)
        state.b[m] = self.bias[m]
        state.e[self.effort] = 1.0
        state.z[self.pair_effort] = 1
