"""Censored report likelihood and the compiled kernels that accumulate it.

A reported grade ``r`` reveals only that the real-valued peer grade fell in
``censor_interval(r)``. Interior cells are ``[r - 0.5, r + 0.5)`` (half-points
round up); the lowest and highest cells extend to -inf/+inf so the report
probabilities over the grade set sum to one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np

from ..distributions import LowEffortSpec, log_normal_interval
from ..model import Hyperparameters, ValidationError


@dataclass(frozen=True)
class CensorInterval:
    lo: float
    hi: float


def cell_bounds(grade_set) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper cell bounds for each grade position."""
    g = np.asarray(grade_set, dtype=float)
    mids = (g[:-1] + g[1:]) / 2.0
    lo = np.concatenate(([-np.inf], mids))
    hi = np.concatenate((mids, [np.inf]))
    return lo, hi


def censor_interval(r: int, hp: Hyperparameters) -> CensorInterval:
    if r not in hp.grade_set:
        raise ValidationError(f"grade {r} is not in the grade set {hp.grade_set}")
    lo, hi = cell_bounds(hp.grade_set)
    k = hp.grade_set.index(r)
    return CensorInterval(float(lo[k]), float(hi[k]))


def round_to_grade(x, grade_set) -> np.ndarray:
    """n_G: map real values to the grade whose cell contains them."""
    g = np.asarray(grade_set)
    lo, _ = cell_bounds(grade_set)
    pos = np.searchsorted(lo[1:], np.asarray(x, dtype=float), side="right")
    return g[pos]


def grade_positions(x, grade_set) -> np.ndarray:
    lo, _ = cell_bounds(grade_set)
    return np.searchsorted(lo[1:], np.asarray(x, dtype=float), side="right")


def low_effort_cell_logprobs(hp: Hyperparameters) -> np.ndarray:
    spec = LowEffortSpec.from_hp(hp)
    lo, hi = cell_bounds(hp.grade_set)
    return np.array([spec.log_interval(a, b) for a, b in zip(lo, hi)])


def report_loglik(r: int, s: float, tau: float, b: float, z: int, hp: Hyperparameters,
                  precision_scale: float = 1.0) -> float:
    """log L(r | s, tau, b, z); ``precision_scale`` divides tau (the correlated model's lambda)."""
    cell = censor_interval(r, hp)
    if z:
        if not tau > 0:
            raise ValueError("reliability must be positive")
        return log_normal_interval(cell.lo, cell.hi, s + b, tau / precision_scale)
    return LowEffortSpec.from_hp(hp).log_interval(cell.lo, cell.hi)


def report_likelihood(r: int, s: float, tau: float, b: float, z: int, hp: Hyperparameters,
                      precision_scale: float = 1.0) -> float:
    return math.exp(report_loglik(r, s, tau, b, z, hp, precision_scale))


# ----------------------------------------------------------------- tables


@numba.njit(cache=True)
def _fill_table(lo, hi, s_grid, b_grid, prec_grid, out):
    for r in range(lo.size):
        for i in range(s_grid.size):
            for j in range(b_grid.size):
                mu = s_grid[i] + b_grid[j]
                for k in range(prec_grid.size):
                    out[r, i, j, k] = log_normal_interval(lo[r], hi[r], mu, prec_grid[k])


@lru_cache(maxsize=4)
def _cached_table(bounds, s_spec, b_spec, tau_spec, scale):
    lo = np.array(bounds[0])
    hi = np.array(bounds[1])
    s_grid = np.linspace(*s_spec[1:], s_spec[0])
    b_grid = np.linspace(*b_spec[1:], b_spec[0])
    prec = np.linspace(*tau_spec[1:], tau_spec[0]) / scale
    out = np.empty((lo.size, s_grid.size, b_grid.size, prec.size))
    _fill_table(lo, hi, s_grid, b_grid, prec, out)
    out.setflags(write=False)
    return out


def loglik_table(hp: Hyperparameters, grids, precision_scale: float = 1.0) -> np.ndarray:
    """log L(r | s, tau, b, z=1) for every grade and every grid point of (s, b, tau).

    Indexed ``[grade position, s index, b index, tau index]``. The sweep reads it
    whenever all three latents sit exactly on their grids, which is the case for
    every censored update after the first.
    """
    lo, hi = cell_bounds(hp.grade_set)
    key = lambda g: (g.count, g.lo, g.hi)  # noqa: E731
    return _cached_table((tuple(lo), tuple(hi)), key(grids.true_grade_grid),
                         key(grids.bias_grid), key(grids.reliability_grid),
                         float(precision_scale))


@numba.njit(cache=True)
def grid_index(values, lo, step, grid):
    """Position of each value on the grid, or -1 when it is not exactly a grid point."""
    flat = values.ravel()
    out = np.empty(flat.size, dtype=np.int64)
    n = grid.size
    for i in range(flat.size):
        k = int(round((flat[i] - lo) / step))
        if 0 <= k < n and grid[k] == flat[i]:
            out[i] = k
        else:
            out[i] = -1
    return out.reshape(values.shape)


# ---------------------------------------------------------------- kernels
# Each kernel adds log-likelihood terms onto ``out`` which the caller has
# pre-filled with the log prior evaluated on the relevant grid.


@numba.njit(cache=True)
def true_grade_kernel(out, pair_sub, pair_grader, rpos, z, tau_eff, b, tau_idx, b_idx,
                      table, low_log, lo, hi, s_grid):
    P, C = rpos.shape
    K = s_grid.size
    for p in range(P):
        u = pair_sub[p]
        v = pair_grader[p]
        for c in range(C):
            r = rpos[p, c]
            if z[p] == 0:
                ll = low_log[r]
                for k in range(K):
                    out[u, c, k] += ll
            elif tau_idx[v] >= 0 and b_idx[v] >= 0:
                jb = b_idx[v]
                jt = tau_idx[v]
                for k in range(K):
                    out[u, c, k] += table[r, k, jb, jt]
            else:
                for k in range(K):
                    out[u, c, k] += log_normal_interval(lo[r], hi[r], s_grid[k] + b[v],
                                                        tau_eff[v])


@numba.njit(cache=True)
def reliability_kernel(out, pair_sub, pair_grader, rpos, z, s, s_idx, b, b_idx,
                       table, low_log, lo, hi, prec_grid):
    P, C = rpos.shape
    K = prec_grid.size
    for p in range(P):
        u = pair_sub[p]
        v = pair_grader[p]
        for c in range(C):
            r = rpos[p, c]
            if z[p] == 0:
                ll = low_log[r]
                for k in range(K):
                    out[v, k] += ll
            elif s_idx[u, c] >= 0 and b_idx[v] >= 0:
                i = s_idx[u, c]
                jb = b_idx[v]
                for k in range(K):
                    out[v, k] += table[r, i, jb, k]
            else:
                mu = s[u, c] + b[v]
                for k in range(K):
                    out[v, k] += log_normal_interval(lo[r], hi[r], mu, prec_grid[k])


@numba.njit(cache=True)
def bias_kernel(out, pair_sub, pair_grader, rpos, z, s, s_idx, tau_eff, tau_idx,
                table, low_log, lo, hi, b_grid):
    P, C = rpos.shape
    K = b_grid.size
    for p in range(P):
        u = pair_sub[p]
        v = pair_grader[p]
        for c in range(C):
            r = rpos[p, c]
            if z[p] == 0:
                ll = low_log[r]
                for k in range(K):
                    out[v, k] += ll
            elif s_idx[u, c] >= 0 and tau_idx[v] >= 0:
                i = s_idx[u, c]
                jt = tau_idx[v]
                for k in range(K):
                    out[v, k] += table[r, i, k, jt]
            else:
                for k in range(K):
                    out[v, k] += log_normal_interval(lo[r], hi[r], s[u, c] + b_grid[k],
                                                     tau_eff[v])


@numba.njit(cache=True)
def effort_kernel(high, low, pair_sub, pair_grader, rpos, s, s_idx, tau_eff, tau_idx, b,
                  b_idx, table, low_log, lo, hi):
    """Per-pair sums over components of log L(., z=1) and log L(., z=0)."""
    P, C = rpos.shape
    for p in range(P):
        u = pair_sub[p]
        v = pair_grader[p]
        h = 0.0
        l = 0.0
        for c in range(C):
            r = rpos[p, c]
            l += low_log[r]
            if s_idx[u, c] >= 0 and b_idx[v] >= 0 and tau_idx[v] >= 0:
                h += table[r, s_idx[u, c], b_idx[v], tau_idx[v]]
            else:
                h += log_normal_interval(lo[r], hi[r], s[u, c] + b[v], tau_eff[v])
        high[p] = h
        low[p] = l
