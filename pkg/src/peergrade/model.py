"""Domain types shared by the inference engine, the explainer and the simulator.

Everything here is immutable after construction. Precisions (not standard
deviations) are what the model stores; use :meth:`Hyperparameters.from_mapping`
to build one from either parameterisation.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

ROLES = ("Student", "TA", "Instructor")
INSTRUCTOR_RELIABILITY = 16.0


class ValidationError(ValueError):
    """Raised when user-supplied data or configuration is malformed."""


@dataclass(frozen=True)
class GradeRecord:
    submission_id: str
    grader_id: str
    component: int
    reported_grade: int


@dataclass(frozen=True)
class Hyperparameters:
    mu_s: float = 4.0
    tau_s: float = 1.0 / 0.8**2
    alpha_tau: float = 2.0
    beta_tau: float = 2.0
    tau_b: float = 1.0
    alpha_e: float = 8.0
    beta_e: float = 2.0
    tau_ell: float = 1.0
    epsilon: float = 0.05
    beta_0: float = 0.25
    lambda_tau: float = 1.0
    M: int = 5
    C: int = 4
    grade_set: tuple[int, ...] = (0, 1, 2, 3, 4, 5)

    def __post_init__(self):
        object.__setattr__(self, "grade_set", tuple(int(g) for g in self.grade_set))
        problems = hyperparameter_violations(self)
        if problems:
            raise ValidationError("; ".join(problems))

    @property
    def sigma_s(self) -> float:
        return 1.0 / math.sqrt(self.tau_s)

    @property
    def sigma_b(self) -> float:
        return 1.0 / math.sqrt(self.tau_b)

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "Hyperparameters":
        """Build from a mapping that may use ``sigma_*`` keys instead of precisions.

        ``sigma_s``/``sigma_b``/``sigma_ell`` map to ``tau_s``/``tau_b``/``tau_ell``
        and ``sigma_tau`` maps to ``beta_0``; giving both spellings of the same
        quantity is an error.
        """
        values = dict(values)
        for sigma_key, tau_key in SIGMA_KEYS.items():
            if sigma_key in values:
                if tau_key in values:
                    raise ValidationError(f"conflicting keys: {sigma_key} and {tau_key}")
                sigma = float(values.pop(sigma_key))
                if sigma <= 0:
                    raise ValidationError(f"{sigma_key} must be positive")
                values[tau_key] = 1.0 / sigma**2
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValidationError(f"unknown hyperparameter keys: {', '.join(unknown)}")
        if "grade_set" in values:
            values["grade_set"] = tuple(values["grade_set"])
        return cls(**values)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["grade_set"] = list(self.grade_set)
        return out

    def replace(self, **changes) -> "Hyperparameters":
        return replace(self, **changes)


SIGMA_KEYS = {
    "sigma_s": "tau_s",
    "sigma_b": "tau_b",
    "sigma_ell": "tau_ell",
    "sigma_tau": "beta_0",
}


def hyperparameter_violations(hp: Hyperparameters) -> list[str]:
    out = []
    for name in ("tau_s", "alpha_tau", "beta_tau", "tau_b", "alpha_e", "beta_e",
                 "tau_ell", "beta_0", "lambda_tau"):
        value = getattr(hp, name)
        if not (value > 0 and math.isfinite(value)):
            out.append(f"{name} must be a positive finite number (got {value})")
    if not 0.0 <= hp.epsilon <= 1.0:
        out.append(f"epsilon must lie in [0, 1] (got {hp.epsilon})")
    if hp.M < 1:
        out.append("M must be a positive integer")
    if hp.C < 1:
        out.append("C must be a positive integer")
    g = hp.grade_set
    if not g:
        out.append("grade_set is empty")
    else:
        if list(g) != sorted(set(g)):
            out.append("grade_set must be sorted without duplicates")
        if min(g) < 0:
            out.append("grade_set minimum must be >= 0")
        if max(g) != hp.M:
            out.append(f"grade_set maximum must equal M={hp.M}")
    return out


# Reduced search grid; the "paper-default" point is the configuration the
# synthetic experiments are generated from.
PRESETS: dict[str, dict] = {
    "paper-default": dict(sigma_s=0.8, mu_s=4.0, sigma_b=1.0, alpha_e=8.0, beta_e=2.0,
                          alpha_tau=2.0, beta_tau=2.0, tau_ell=1.0, epsilon=0.05,
                          sigma_tau=2.0, lambda_tau=1.0, M=5, C=4),
    "low-bias": dict(sigma_s=0.8, mu_s=4.0, sigma_b=0.1, alpha_e=8.0, beta_e=2.0,
                     alpha_tau=2.0, beta_tau=2.0, tau_ell=1.0, epsilon=0.05,
                     sigma_tau=2.0, lambda_tau=1.0, M=5, C=4),
    "concentrated-low-effort": dict(sigma_s=0.8, mu_s=4.0, sigma_b=1.0, alpha_e=8.0,
                                    beta_e=2.0, alpha_tau=2.0, beta_tau=2.0, tau_ell=4.0,
                                    epsilon=0.05, sigma_tau=2.0, lambda_tau=1.0, M=5, C=4),
}

SEARCH_GRID: dict[str, tuple] = {
    "mu_s": (3.5, 4.0),
    "sigma_s": (0.8, 1.6),
    "sigma_b": (0.1, 0.5, 1.0),
    "effort_prior": ((5.0, 5.0), (8.0, 2.0)),
    "reliability_prior": ((1.0, 1.0), (2.0, 2.0), (2.0, 1.0)),
    "sigma_tau": (0.1, 2.0, 8.0),
    "lambda_tau": (1.0, 2.0, 4.0),
    "tau_ell": (1.0, 4.0),
    "epsilon": (0.05,),
}


def preset_hyperparameters(name: str) -> Hyperparameters:
    try:
        values = PRESETS[name]
    except KeyError:
        raise ValidationError(
            f"unknown preset {name!r}; known presets: {', '.join(sorted(PRESETS))}"
        ) from None
    return Hyperparameters.from_mapping(values)


def search_grid(M: int = 5, C: int = 4) -> Iterable[Hyperparameters]:
    """Yield every point of the reduced hyperparameter search grid."""
    import itertools

    keys = list(SEARCH_GRID)
    for combo in itertools.product(*(SEARCH_GRID[k] for k in keys)):
        point = dict(zip(keys, combo))
        alpha_e, beta_e = point.pop("effort_prior")
        alpha_tau, beta_tau = point.pop("reliability_prior")
        yield Hyperparameters.from_mapping(
            dict(point, alpha_e=alpha_e, beta_e=beta_e, alpha_tau=alpha_tau,
                 beta_tau=beta_tau, M=M, C=C, grade_set=tuple(range(M + 1)))
        )


@dataclass(frozen=True)
class UniformGrid:
    count: int
    lo: float
    hi: float

    def __post_init__(self):
        if self.count < 2 or not self.hi > self.lo:
            raise ValidationError(f"invalid grid {self}")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.count - 1)


@dataclass(frozen=True)
class GridSpec:
    true_grade_grid: UniformGrid = UniformGrid(101, 0.0, 6.0)
    reliability_grid: UniformGrid = UniformGrid(100, 0.1, 10.0)
    bias_grid: UniformGrid = UniformGrid(61, -3.0, 3.0)


@dataclass(frozen=True)
class ModelConfig:
    effort_enabled: bool = True
    censoring_enabled: bool = True
    correlation_enabled: bool = False
    grids: GridSpec = GridSpec()
    chains: int = 4
    samples: int = 1100
    burn_in: int = 100
    thin: int = 1
    seed: int | None = None

    def __post_init__(self):
        if self.chains < 1 or self.samples < 1:
            raise ValidationError("chains and samples must be positive")
        if not 0 <= self.burn_in < self.samples:
            raise ValidationError("burn_in must satisfy 0 <= burn_in < samples")
        if self.thin < 1:
            raise ValidationError("thin must be >= 1")

    @property
    def kept_per_chain(self) -> int:
        return len(range(self.burn_in, self.samples, self.thin))

    def replace(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class ClampSet:
    effort_clamps: Mapping[str, float] = field(default_factory=dict)
    reliability_clamps: Mapping[str, float] = field(default_factory=dict)
    bias_clamps: Mapping[str, float] = field(default_factory=dict)
    # keyed by (submission_id, component); only used for testing and what-if runs
    true_grade_clamps: Mapping[tuple[str, int], float] = field(default_factory=dict)

    def __post_init__(self):
        for v, val in self.effort_clamps.items():
            if val != 1:
                raise ValidationError(f"effort clamp for {v} must be 1 (got {val})")
        for v, val in self.reliability_clamps.items():
            if not val > 0:
                raise ValidationError(f"reliability clamp for {v} must be positive")

    @classmethod
    def from_roles(cls, roles: Mapping[str, str], **overrides) -> "ClampSet":
        """Default course clamps: TAs and instructors always exert effort,
        the instructor's reliability is pinned at 16."""
        effort = {v: 1.0 for v, role in roles.items() if role in ("TA", "Instructor")}
        reliability = {v: INSTRUCTOR_RELIABILITY for v, role in roles.items()
                       if role == "Instructor"}
        effort.update(overrides.get("effort_clamps", {}))
        reliability.update(overrides.get("reliability_clamps", {}))
        return cls(effort, reliability, dict(overrides.get("bias_clamps", {})),
                   dict(overrides.get("true_grade_clamps", {})))


@dataclass(frozen=True)
class Dataset:
    submissions: tuple[str, ...]
    graders: tuple[str, ...]
    records: tuple[GradeRecord, ...]
    authorship: Mapping[str, str] = field(default_factory=dict)
    roles: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_records(cls, records: Iterable[GradeRecord], authorship=None, roles=None,
                     submissions: Sequence[str] = (), graders: Sequence[str] = ()):
        """Assemble a dataset; id sets are the union of what is referenced."""
        records = tuple(records)
        authorship = dict(authorship or {})
        roles = dict(roles or {})
        subs = set(submissions) | {r.submission_id for r in records} | set(authorship)
        grds = set(graders) | {r.grader_id for r in records} | set(roles) | set(authorship.values())
        return cls(tuple(sorted(subs)), tuple(sorted(grds)), records, authorship, roles)

    def role(self, grader_id: str) -> str:
        return self.roles.get(grader_id, "Student")

    def with_records(self, records: Iterable[GradeRecord]) -> "Dataset":
        """Same id sets, roles and authorship; different observations."""
        return replace(self, records=tuple(records))

    def pairs(self) -> list[tuple[str, str]]:
        return sorted({(r.submission_id, r.grader_id) for r in self.records})

    def adjacency(self) -> tuple[dict[str, set], dict[str, set]]:
        """(graders of each submission, submissions of each grader)."""
        by_sub: dict[str, set] = {u: set() for u in self.submissions}
        by_grader: dict[str, set] = {v: set() for v in self.graders}
        for r in self.records:
            by_sub.setdefault(r.submission_id, set()).add(r.grader_id)
            by_grader.setdefault(r.grader_id, set()).add(r.submission_id)
        return by_sub, by_grader


def validate_dataset(dataset: Dataset, hp: Hyperparameters) -> list[str]:
    """Return a list of human-readable violations; empty means the dataset is usable."""
    problems: list[str] = []
    subs, grds = set(dataset.submissions), set(dataset.graders)
    grade_set = set(hp.grade_set)
    seen: set[tuple] = set()
    components: dict[tuple[str, str], set] = {}
    for rec in dataset.records:
        key = (rec.submission_id, rec.grader_id, rec.component)
        if rec.submission_id not in subs:
            problems.append(f"unknown submission {rec.submission_id!r}")
        if rec.grader_id not in grds:
            problems.append(f"unknown grader {rec.grader_id!r}")
        if not 0 <= rec.component < hp.C:
            problems.append(f"component {rec.component} out of range for {key}")
        if rec.reported_grade not in grade_set:
            problems.append(f"grade out of range: {rec.reported_grade} for {key}")
        if key in seen:
            problems.append(f"duplicate record {key}")
        seen.add(key)
        components.setdefault((rec.submission_id, rec.grader_id), set()).add(rec.component)
        author = dataset.authorship.get(rec.submission_id)
        if author is not None and author == rec.grader_id:
            problems.append(f"self-grading: {rec.grader_id!r} graded own submission "
                            f"{rec.submission_id!r}")
    for (u, v), comps in sorted(components.items()):
        missing = sorted(set(range(hp.C)) - comps)
        if missing:
            problems.append(f"pair ({u!r}, {v!r}) is missing components {missing}")
    for u, v in dataset.authorship.items():
        if u not in subs:
            problems.append(f"authorship references unknown submission {u!r}")
        if v not in grds:
            problems.append(f"authorship references unknown grader {v!r}")
    for v, role in dataset.roles.items():
        if role not in ROLES:
            problems.append(f"unknown role {role!r} for grader {v!r}")
    return problems


# --------------------------------------------------------------------------- io

CSV_HEADER = ("submission_id", "grader_id", "component", "reported_grade")


def write_dataset(dataset: Dataset, csv_path, sidecar_path=None) -> None:
    csv_path = Path(csv_path)
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in dataset.records:
            writer.writerow((r.submission_id, r.grader_id, r.component, r.reported_grade))
    if sidecar_path is not None:
        sidecar = {
            "roles": {v: dataset.roles[v] for v in sorted(dataset.roles)},
            "authors": {u: dataset.authorship[u] for u in sorted(dataset.authorship)},
            "submissions": list(dataset.submissions),
            "graders": list(dataset.graders),
        }
        Path(sidecar_path).write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")


def sidecar_path_for(csv_path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + ".meta.json")


def read_dataset(csv_path, sidecar_path=None) -> Dataset:
    csv_path = Path(csv_path)
    records = []
    with csv_path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValidationError(f"{csv_path}: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValidationError(f"{csv_path}:{lineno}: expected 4 fields")
            try:
                records.append(GradeRecord(row[0], row[1], int(row[2]), int(row[3])))
            except ValueError as exc:
                raise ValidationError(f"{csv_path}:{lineno}: {exc}") from None
    if sidecar_path is None and sidecar_path_for(csv_path).exists():
        sidecar_path = sidecar_path_for(csv_path)
    meta: dict = {}
    if sidecar_path is not None:
        try:
            meta = json.loads(Path(sidecar_path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{sidecar_path}:{exc.lineno}: {exc.msg}") from None
        extra = set(meta) - {"roles", "authors", "submissions", "graders"}
        if extra:
            raise ValidationError(f"{sidecar_path}: unknown keys {sorted(extra)}")
    return Dataset.from_records(records, authorship=meta.get("authors"),
                                roles=meta.get("roles"),
                                submissions=meta.get("submissions", ()),
                                graders=meta.get("graders", ()))
