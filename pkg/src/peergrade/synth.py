"""Synthetic classrooms drawn from the model's own generating process."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .distributions import LowEffortSpec, sample_low_effort
from .gibbs.likelihood import round_to_grade
from .gibbs.state import GradeIndex, LatentState
from .model import Dataset, GradeRecord, Hyperparameters, ValidationError


@dataclass(frozen=True)
class ClassSpec:
    students: int = 120
    weeks: int = 10
    grades_per_submission: int = 4
    grades_per_grader_per_week: int = 4
    components: int = 4
    tas: int = 3
    ta_coverage: float = 0.25
    ta_reliability_mean: float = 2.0
    student_reliability_mean: float = 1.0
    hp: Hyperparameters = field(default_factory=Hyperparameters)
    seed: int = 0
    # Defaults to one submission per student per week. Setting it lets the
    # number of graders vary while the weekly submission count stays fixed.
    submissions_per_week: int | None = None
    instructor_coverage: float = 0.0
    # Pin latents for every grader (noise-free and degenerate test classes).
    fixed_reliability: float | None = None
    fixed_bias: float | None = None
    fixed_effort: float | None = None

    def __post_init__(self):
        problems = []
        for name in ("students", "weeks", "grades_per_submission",
                     "grades_per_grader_per_week", "components"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be positive")
        if self.tas < 0:
            problems.append("tas must be non-negative")
        for name in ("ta_coverage", "instructor_coverage"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must lie in [0, 1]")
        if self.ta_coverage > 0 and self.tas == 0:
            problems.append("ta_coverage > 0 needs at least one TA")
        if not (self.ta_reliability_mean > 0 and self.student_reliability_mean > 0):
            problems.append("reliability means must be positive")
        if self.components != self.hp.C:
            problems.append(f"components ({self.components}) must equal hp.C ({self.hp.C})")
        subs = self.submissions
        if subs < 1:
            problems.append("submissions_per_week must be positive")
        elif self.students * self.grades_per_grader_per_week != subs * self.grades_per_submission:
            problems.append("students * grades_per_grader_per_week must equal "
                            "submissions_per_week * grades_per_submission")
        if self.grades_per_submission > self.students - (1 if subs <= self.students else 0):
            problems.append("grades_per_submission must be at most students - 1")
        if self.grades_per_grader_per_week > subs - (1 if subs <= self.students else 0):
            problems.append("grades_per_grader_per_week exceeds the number of other submissions")
        if problems:
            raise ValidationError("; ".join(problems))

    @property
    def submissions(self) -> int:
        return self.students if self.submissions_per_week is None else self.submissions_per_week

    def replace(self, **changes) -> "ClassSpec":
        return replace(self, **changes)


@dataclass
class GroundTruth:
    latents: LatentState  # aligned with GradeIndex.build(dataset, spec.hp)
    dataset: Dataset
    spec: ClassSpec

    def index(self) -> GradeIndex:
        return GradeIndex.build(self.dataset, self.spec.hp)


def student_id(i: int) -> str:
    return f"st{i:04d}"


def ta_id(j: int) -> str:
    return f"ta{j:02d}"


INSTRUCTOR_ID = "instructor"


# ------------------------------------------------------------- review graph

def assign_review_graph(spec: ClassSpec, week: int, rng: np.random.Generator,
                        max_restarts: int = 100) -> list[tuple[int, int]]:
    """Random (submission, student grader) pairs with exact degrees and no self-grading.

    Submission ``i`` is authored by student ``i`` (when such a student exists).
    Grader stubs are shuffled against submission stubs and any self-grades or
    repeated pairs are then removed by random stub swaps. ``week`` only labels
    the call; randomness comes from ``rng``.
    """
    del week
    n_sub, n_st = spec.submissions, spec.students
    k_sub, k_st = spec.grades_per_submission, spec.grades_per_grader_per_week
    sub_stubs = np.repeat(np.arange(n_sub), k_sub)
    for _ in range(max_restarts):
        graders = rng.permutation(np.repeat(np.arange(n_st), k_st))
        if _repair(sub_stubs, graders, rng):
            return sorted(zip(sub_stubs.tolist(), graders.tolist()))
    raise ValidationError("could not build a review graph satisfying the degree constraints")


def _repair(subs: np.ndarray, graders: np.ndarray, rng, max_swaps: int = 200_000) -> bool:
    n = subs.size
    counts: dict[tuple[int, int], int] = {}
    for u, v in zip(subs.tolist(), graders.tolist()):
        counts[(u, v)] = counts.get((u, v), 0) + 1

    def bad(i):
        u, v = subs[i], graders[i]
        return u == v or counts[(u, v)] > 1

    conflicts = [i for i in range(n) if bad(i)]
    swaps = 0
    while conflicts:
        i = conflicts.pop()
        if not bad(i):
            continue
        j = int(rng.integers(n))
        ui, vi, uj, vj = subs[i], graders[i], subs[j], graders[j]
        if vi == vj:
            conflicts.insert(0, i)
            swaps += 1
            continue
        # apply the swap, keep it if both new positions are clean
        counts[(ui, vi)] -= 1
        counts[(uj, vj)] -= 1
        counts[(ui, vj)] = counts.get((ui, vj), 0) + 1
        counts[(uj, vi)] = counts.get((uj, vi), 0) + 1
        graders[i], graders[j] = vj, vi
        if bad(i) or bad(j):
            counts[(ui, vj)] -= 1
            counts[(uj, vi)] -= 1
            counts[(ui, vi)] += 1
            counts[(uj, vj)] += 1
            graders[i], graders[j] = vi, vj
            conflicts.insert(0, i)
        swaps += 1
        if swaps > max_swaps:
            return False
    return True


# -------------------------------------------------------------- generation

def _gamma_with_mean(alpha: float, mean: float, rng, size) -> np.ndarray:
    # keep the shape, move the rate so that shape / rate == mean
    return rng.gamma(alpha, mean / alpha, size)


def generate_class(spec: ClassSpec) -> GroundTruth:
    hp = spec.hp
    rng = np.random.default_rng(spec.seed)
    C = spec.components
    students = [student_id(i) for i in range(spec.students)]
    tas = [ta_id(j) for j in range(spec.tas)]
    graders = students + tas + ([INSTRUCTOR_ID] if spec.instructor_coverage > 0 else [])
    roles = {v: "TA" for v in tas}
    if spec.instructor_coverage > 0:
        roles[INSTRUCTOR_ID] = "Instructor"

    n_st, n_ta = len(students), len(tas)
    tau = np.concatenate([
        _gamma_with_mean(hp.alpha_tau, spec.student_reliability_mean, rng, n_st),
        _gamma_with_mean(hp.alpha_tau, spec.ta_reliability_mean, rng, n_ta),
        [16.0] * (len(graders) - n_st - n_ta),
    ])
    bias = rng.normal(0.0, 1.0 / math.sqrt(hp.tau_b), len(graders))
    effort = np.concatenate([rng.beta(hp.alpha_e, hp.beta_e, n_st),
                             np.ones(len(graders) - n_st)])
    if spec.fixed_reliability is not None:
        tau[:] = spec.fixed_reliability
    if spec.fixed_bias is not None:
        bias[:] = spec.fixed_bias
    if spec.fixed_effort is not None:
        effort[:] = spec.fixed_effort

    low = LowEffortSpec.from_hp(hp)
    sub_ids: list[str] = []
    authorship: dict[str, str] = {}
    true_grades: dict[str, np.ndarray] = {}
    pairs: list[tuple[str, int]] = []  # (submission id, grader position)
    for w in range(spec.weeks):
        week_subs = [f"w{w:02d}_{i:04d}" for i in range(spec.submissions)]
        for i, u in enumerate(week_subs):
            true_grades[u] = rng.normal(hp.mu_s, 1.0 / math.sqrt(hp.tau_s), C)
            if i < n_st:
                authorship[u] = students[i]
        sub_ids.extend(week_subs)
        for u, v in assign_review_graph(spec, w, rng):
            pairs.append((week_subs[u], v))
        n_ta_subs = int(round(spec.ta_coverage * spec.submissions))
        if n_ta_subs:
            chosen = np.sort(rng.choice(spec.submissions, n_ta_subs, replace=False))
            which = rng.permutation(np.arange(n_ta_subs) % n_ta)
            pairs.extend((week_subs[u], n_st + int(t)) for u, t in zip(chosen, which))
        n_ins = int(round(spec.instructor_coverage * spec.submissions))
        if n_ins:
            chosen = np.sort(rng.choice(spec.submissions, n_ins, replace=False))
            pairs.extend((week_subs[u], len(graders) - 1) for u in chosen)

    records = []
    z_of: dict[tuple[str, str], int] = {}
    for u, v in pairs:
        z = int(rng.random() < effort[v])
        if z:
            g = true_grades[u] + bias[v] + rng.normal(0.0, 1.0 / math.sqrt(tau[v]), C)
        else:
            g = sample_low_effort(low, rng, C)
        reports = round_to_grade(g, hp.grade_set)
        for c in range(C):
            records.append(GradeRecord(u, graders[v], c, int(reports[c])))
        z_of[(u, graders[v])] = z

    dataset = Dataset.from_records(records, authorship=authorship, roles=roles,
                                   submissions=sub_ids, graders=graders)
    data = GradeIndex.build(dataset, hp)
    gpos = {v: i for i, v in enumerate(graders)}
    order = [gpos[v] for v in data.graders]
    latents = LatentState(
        s=np.array([true_grades[u] for u in data.submissions]),
        tau=tau[order], b=bias[order], e=effort[order],
        z=np.array([z_of[(data.submissions[u], data.graders[v])]
                    for u, v in zip(data.pair_sub, data.pair_grader)], dtype=np.int8),
    )
    return GroundTruth(latents, dataset, spec)


def write_ground_truth(truth: GroundTruth, path) -> Path:
    data = truth.index()
    lat = truth.latents
    payload = {
        "seed": truth.spec.seed,
        "true_grades": {u: [float(x) for x in lat.s[i]] for i, u in enumerate(data.submissions)},
        "graders": {v: {"reliability": float(lat.tau[j]), "bias": float(lat.b[j]),
                        "effort": float(lat.e[j])} for j, v in enumerate(data.graders)},
        "efforts": [[data.submissions[u], data.graders[v], int(z)]
                    for u, v, z in zip(data.pair_sub, data.pair_grader, lat.z)],
    }
    path = Path(path)
    path.write_text(json.dumps(payload, indent=1) + "\n")
    return path


# ----------------------------------------------------------- misspecification

MISSPEC_KNOBS = ("mu_s", "sigma_s", "sigma_b", "reliability_mean", "reliability_variance",
                 "effort_mean", "tau_ell")


def altered_hyperparameters(hp: Hyperparameters, knob: str, value: float) -> Hyperparameters:
    if knob == "mu_s":
        return hp.replace(mu_s=value)
    if knob in ("sigma_s", "sigma_b"):
        if not value > 0:
            raise ValidationError(f"{knob} must be positive")
        return hp.replace(**{"tau_" + knob[-1]: 1.0 / value**2})
    if knob == "tau_ell":
        if not value > 0:
            raise ValidationError("tau_ell must be positive")
        return hp.replace(tau_ell=value)
    if knob in ("reliability_mean", "reliability_variance"):
        if not value > 0:
            raise ValidationError(f"{knob} must be positive")
        mean = hp.alpha_tau / hp.beta_tau
        var = hp.alpha_tau / hp.beta_tau**2
        if knob == "reliability_mean":
            mean = value
        else:
            var = value
        return hp.replace(alpha_tau=mean**2 / var, beta_tau=mean / var)
    if knob == "effort_mean":
        a, b = hp.alpha_e, hp.beta_e
        var = a * b / ((a + b) ** 2 * (a + b + 1))
        if not 0 < value < 1:
            raise ValidationError("effort_mean must lie in (0, 1)")
        total = value * (1 - value) / var - 1
        if not total > 0:
            raise ValidationError("effort_mean incompatible with the prior variance")
        return hp.replace(alpha_e=value * total, beta_e=(1 - value) * total)
    raise ValidationError(f"unknown misspecification knob {knob!r}; choose from {MISSPEC_KNOBS}")


def misspec_scenario(base: ClassSpec | Hyperparameters, knob: str, value: float,
                     direction: str = "infer") -> tuple[Hyperparameters, Hyperparameters]:
    """(generator hp, inference hp) with ``knob`` altered on the side named by ``direction``."""
    hp = base.hp if isinstance(base, ClassSpec) else base
    altered = altered_hyperparameters(hp, knob, value)
    if direction == "infer":
        return hp, altered
    if direction == "generate":
        return altered, hp
    raise ValidationError("direction must be 'infer' or 'generate'")
