"""Explain discrete final grades as rounded weighted averages of peer reports.

For one submission we choose grader weights ``w`` (one vector shared by all
components) and integer grades ``g`` so that each ``g_c`` is within 0.5 of
``sum_v w_v r_vc``. Each weight is either 0 or in ``[T, 1]`` and stays within
``S`` of its desired value ``d_v``. The objective is the posterior mass of the
chosen grades minus ``P`` times the total weight deviation.

The solver is exact: it enumerates support patterns, prunes grade vectors by
the range of weighted averages a support can reach, and solves one tiny LP
per surviving (support, grades) pair, visiting candidates best-bound first.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lp import linprog
from .model import ValidationError

MAX_GRADERS = 8
EPS = 1e-9
TIE = 1e-12


@dataclass(frozen=True)
class MipConstants:
    S: float = 0.09
    T: float = 0.1
    P: float = 0.01


@dataclass(frozen=True)
class MipInstance:
    reports: np.ndarray  # (graders, C) integer grades
    masses: np.ndarray  # (C, len(grade_domain))
    desired_weights: np.ndarray  # (graders,)
    S: float = 0.09
    T: float = 0.1
    P: float = 0.01
    grade_domain: tuple[int, ...] = (0, 1, 2, 3, 4, 5)

    def __post_init__(self):
        r = np.atleast_2d(np.asarray(self.reports, dtype=float))
        m = np.atleast_2d(np.asarray(self.masses, dtype=float))
        d = np.asarray(self.desired_weights, dtype=float).ravel()
        object.__setattr__(self, "reports", r)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "desired_weights", d)
        object.__setattr__(self, "grade_domain", tuple(int(g) for g in self.grade_domain))
        V, C = r.shape
        if V == 0:
            raise ValidationError("an explanation needs at least one grader")
        if V > MAX_GRADERS:
            raise ValidationError(f"at most {MAX_GRADERS} graders per submission are supported")
        if d.shape != (V,):
            raise ValidationError("one desired weight per grader is required")
        if m.shape != (C, len(self.grade_domain)):
            raise ValidationError("masses must have shape (components, grades)")
        if np.any(d < -EPS) or np.any(d > 1 + EPS) or abs(d.sum() - 1.0) > 1e-9:
            raise ValidationError("desired weights must lie in [0, 1] and sum to 1")
        if not 0 < self.T <= 1 or self.S < 0 or self.P < 0:
            raise ValidationError("constants must satisfy 0 < T <= 1, S >= 0, P >= 0")

    @property
    def graders(self) -> int:
        return self.reports.shape[0]

    @property
    def components(self) -> int:
        return self.reports.shape[1]


@dataclass
class MipSolution:
    status: str  # "Optimal" | "Infeasible"
    weights: np.ndarray | None = None
    grades: tuple[int, ...] | None = None
    slacks: np.ndarray | None = None
    over: np.ndarray | None = None  # p: w - d where positive
    under: np.ndarray | None = None  # n: d - w where positive
    objective: float = -np.inf
    mass: float = 0.0
    deviation: float = 0.0
    support: tuple[int, ...] = field(default_factory=tuple)


def desired_weights(reliability, effort) -> np.ndarray:
    """Target weights proportional to reliability times effort."""
    prod = np.asarray(reliability, dtype=float) * np.asarray(effort, dtype=float)
    if np.any(prod < 0):
        raise ValueError("reliability and effort estimates must be non-negative")
    total = prod.sum()
    if not total > 0:
        raise ValueError("at least one grader needs positive reliability and effort")
    return prod / total


def _reach(r: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[float, float]:
    """Smallest and largest sum(w * r) with lo <= w <= hi and sum(w) = 1."""
    spare = 1.0 - lo.sum()
    base = float(lo @ r)
    out = []
    for order in (np.argsort(r, kind="stable"), np.argsort(-r, kind="stable")):
        left, val = spare, base
        for j in order:
            take = min(hi[j] - lo[j], left)
            val += take * r[j]
            left -= take
        out.append(val)
    return out[0], out[1]


def _support_boxes(inst: MipInstance):
    d, S, T = inst.desired_weights, inst.S, inst.T
    V = inst.graders
    for mask in range(1, 2**V):
        support = tuple(v for v in range(V) if mask >> v & 1)
        excluded = [v for v in range(V) if not mask >> v & 1]
        if any(d[v] > S + EPS for v in excluded):
            continue
        idx = np.array(support)
        lo = np.maximum.reduce([np.full(idx.size, T), d[idx] - S, np.zeros(idx.size)])
        hi = np.minimum(1.0, d[idx] + S)
        if np.any(lo > hi + EPS) or lo.sum() > 1 + EPS or hi.sum() < 1 - EPS:
            continue
        hi = np.maximum(hi, lo)
        fixed_dev = float(sum(d[v] for v in excluded))
        yield support, idx, lo, hi, fixed_dev


def _min_deviation(inst, idx, lo, hi, grades) -> tuple[float, np.ndarray] | None:
    """LP: least total |w - d| over the support box for fixed grades."""
    k = idx.size
    d = inst.desired_weights[idx]
    R = inst.reports[idx]  # (k, C)
    C = inst.components
    # variables: x (= w - lo), p, n
    c = np.concatenate([np.zeros(k), np.ones(2 * k)])
    A_eq = np.zeros((k + 1, 3 * k))
    A_eq[:k, :k] = np.eye(k)
    A_eq[:k, k:2 * k] = -np.eye(k)
    A_eq[:k, 2 * k:] = np.eye(k)
    A_eq[k, :k] = 1.0
    b_eq = np.concatenate([d - lo, [1.0 - lo.sum()]])
    A_ub = np.zeros((k + 2 * C, 3 * k))
    A_ub[:k, :k] = np.eye(k)
    b_ub = np.empty(k + 2 * C)
    b_ub[:k] = hi - lo
    base = lo @ R
    for ci in range(C):
        A_ub[k + 2 * ci, :k] = R[:, ci]
        b_ub[k + 2 * ci] = grades[ci] + 0.5 - base[ci]
        A_ub[k + 2 * ci + 1, :k] = -R[:, ci]
        b_ub[k + 2 * ci + 1] = -(grades[ci] - 0.5 - base[ci])
    res = linprog(c, A_ub, b_ub, A_eq, b_eq)
    if res.status != "optimal":
        return None
    return res.objective, lo + res.x[:k]


def solve(inst: MipInstance) -> MipSolution:
    domain = np.array(inst.grade_domain)
    C = inst.components
    candidates = []
    boxes = list(_support_boxes(inst))
    for b_i, (support, idx, lo, hi, fixed_dev) in enumerate(boxes):
        dev_floor = fixed_dev + float(np.maximum(lo - inst.desired_weights[idx], 0).sum())
        per_comp = []
        for ci in range(C):
            low, high = _reach(inst.reports[idx, ci], lo, hi)
            ok = np.flatnonzero((domain - 0.5 <= high + EPS) & (domain + 0.5 >= low - EPS))
            per_comp.append(ok)
        if any(p.size == 0 for p in per_comp):
            continue
        for combo in itertools.product(*per_comp):
            mass = float(sum(inst.masses[ci, k] for ci, k in enumerate(combo)))
            grades = tuple(int(domain[k]) for k in combo)
            candidates.append((mass - inst.P * dev_floor, mass, grades, b_i))
    candidates.sort(key=lambda t: (-t[0], t[2], t[3]))

    best: MipSolution | None = None
    for bound, mass, grades, b_i in candidates:
        if best is not None and bound < best.objective - TIE:
            break
        support, idx, lo, hi, fixed_dev = boxes[b_i]
        lp = _min_deviation(inst, idx, lo, hi, grades)
        if lp is None:
            continue
        dev = lp[0] + fixed_dev
        obj = mass - inst.P * dev
        if best is not None:
            if obj < best.objective - TIE:
                continue
            if abs(obj - best.objective) <= TIE:
                if dev > best.deviation + TIE:
                    continue
                if abs(dev - best.deviation) <= TIE and grades >= best.grades:
                    continue
        w = np.zeros(inst.graders)
        w[idx] = lp[1]
        best = MipSolution("Optimal", weights=w, grades=grades, objective=obj, mass=mass,
                           deviation=dev, support=support)
    if best is None:
        return MipSolution("Infeasible")
    w = best.weights
    best.slacks = np.clip(np.array(best.grades) - w @ inst.reports, -0.5, 0.5)
    gap = w - inst.desired_weights
    best.over = np.maximum(gap, 0.0)
    best.under = np.maximum(-gap, 0.0)
    return best


# -------------------------------------------------------------------- batch

@dataclass
class Explanation:
    submission_id: str
    graders: tuple[str, ...]
    solution: MipSolution
    map_grades: tuple[int, ...]


@dataclass
class ExplanationBatch:
    explanations: list[Explanation]

    @property
    def disagreement(self) -> float:
        """Fraction of components whose explained grade differs from the MAP grade."""
        diff = total = 0
        for ex in self.explanations:
            if ex.solution.grades is None:
                continue
            diff += sum(a != b for a, b in zip(ex.solution.grades, ex.map_grades))
            total += len(ex.map_grades)
        return diff / total if total else 0.0


def build_instance(summary, data, u: int, constants: MipConstants) -> tuple[MipInstance, list[int]]:
    pairs = data.pairs_of_submission(u)
    graders = [int(data.pair_grader[p]) for p in pairs]
    d = desired_weights(summary.tau_mean[graders], summary.e_mean[graders])
    inst = MipInstance(data.reports[pairs], summary.masses[u], d, constants.S, constants.T,
                       constants.P, summary.grade_set)
    return inst, graders


def explain_all(summary, data, constants: MipConstants = MipConstants(),
                order=None) -> ExplanationBatch:
    """Solve one instance per graded submission (``order`` only changes the visiting order)."""
    order = range(data.U) if order is None else order
    results = {}
    for u in order:
        if data.pairs_of_submission(u).size == 0:
            continue
        inst, graders = build_instance(summary, data, u, constants)
        results[u] = Explanation(data.submissions[u], tuple(data.graders[g] for g in graders),
                                 solve(inst), tuple(int(g) for g in summary.map_grades[u]))
    return ExplanationBatch([results[u] for u in sorted(results)])


def write_explanations(batch: ExplanationBatch, path) -> Path:
    rows = []
    for ex in batch.explanations:
        sol = ex.solution
        rows.append({
            "submission_id": ex.submission_id,
            "status": sol.status,
            "weights": ({} if sol.weights is None else
                        {g: round(float(w), 3) for g, w in zip(ex.graders, sol.weights)}),
            "grades": None if sol.grades is None else list(sol.grades),
            "map_grades": list(ex.map_grades),
            "objective": None if sol.grades is None else round(float(sol.objective), 6),
        })
    path = Path(path)
    path.write_text(json.dumps({"disagreement": batch.disagreement, "submissions": rows},
                               indent=1) + "\n")
    return path
