"""Single-variable conditional updates.

These are written variable-by-variable with explicit loops over incident
reports. The sweep uses vectorised block versions in :mod:`.sampler`; the
functions here are the readable reference that the block code is tested
against, and what the conjugacy checks exercise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..distributions import (Bernoulli, Beta, Gamma, LowEffortSpec, Normal, low_effort_logpdf,
                             normal_logpdf, sample, sample_discrete)
from ..model import Hyperparameters, ModelConfig, UniformGrid
from .likelihood import report_loglik
from .state import GradeIndex, LatentState


@dataclass(frozen=True)
class TrueGrade:
    u: int
    c: int


@dataclass(frozen=True)
class Reliability:
    v: int


@dataclass(frozen=True)
class Bias:
    v: int


def _scale(hp: Hyperparameters, config: ModelConfig) -> float:
    return hp.lambda_tau if config.correlation_enabled else 1.0


def _draw(dist, rng, size):
    return sample(dist, rng, size)


# ------------------------------------------------------------ distributions

def true_grade_conditional(u: int, c: int, state: LatentState, data: GradeIndex,
                           hp: Hyperparameters, config: ModelConfig) -> Normal:
    """Closed-form conditional of s[u, c] when reports are uncensored."""
    prec = hp.tau_s
    num = hp.tau_s * hp.mu_s
    if config.correlation_enabled and data.author[u] >= 0:
        prec += hp.beta_0
        num += hp.beta_0 * state.tau[data.author[u]]
    scale = _scale(hp, config)
    for p in data.pairs_of_submission(u):
        if state.z[p]:
            v = data.pair_grader[p]
            t = state.tau[v] / scale
            prec += t
            num += t * (data.reports[p, c] - state.b[v])
    return Normal(num / prec, 1.0 / prec)


def reliability_conditional(v: int, state: LatentState, data: GradeIndex,
                            hp: Hyperparameters) -> Gamma:
    shape, rate = hp.alpha_tau, hp.beta_tau
    for p in data.pairs_of_grader(v):
        if state.z[p]:
            u = data.pair_sub[p]
            resid = data.reports[p] - state.b[v] - state.s[u]
            shape += 0.5 * data.C
            rate += 0.5 * float(resid @ resid)
    return Gamma(shape, rate)


def bias_conditional(v: int, state: LatentState, data: GradeIndex, hp: Hyperparameters,
                     config: ModelConfig | None = None) -> Normal:
    t = state.tau[v] / (_scale(hp, config) if config else 1.0)
    prec = hp.tau_b
    num = 0.0
    for p in data.pairs_of_grader(v):
        if state.z[p]:
            u = data.pair_sub[p]
            prec += t * data.C
            num += t * float(np.sum(data.reports[p] - state.s[u]))
    return Normal(num / prec, 1.0 / prec)


def effort_probability_conditional(v: int, state: LatentState, data: GradeIndex,
                                   hp: Hyperparameters) -> Beta:
    zs = state.z[data.pairs_of_grader(v)]
    ones = int(np.sum(zs))
    return Beta(hp.alpha_e + ones, hp.beta_e + (zs.size - ones))


def effort_conditional(u: int, v: int, state: LatentState, data: GradeIndex,
                       hp: Hyperparameters, config: ModelConfig) -> Bernoulli:
    match = np.flatnonzero((data.pair_sub == u) & (data.pair_grader == v))
    if match.size == 0:
        raise KeyError(f"no reports from grader {v} on submission {u}")
    p = match[0]
    e = float(state.e[v])
    if e >= 1.0:
        return Bernoulli(1.0)
    if e <= 0.0:
        return Bernoulli(0.0)
    scale = _scale(hp, config)
    log_high = log_low = 0.0
    if config.censoring_enabled:
        for c in range(data.C):
            r = int(data.reports[p, c])
            log_high += report_loglik(r, state.s[u, c], state.tau[v], state.b[v], 1, hp, scale)
            log_low += report_loglik(r, state.s[u, c], state.tau[v], state.b[v], 0, hp, scale)
    else:
        mu = state.s[u] + state.b[v]
        log_high = float(normal_logpdf(data.reports[p], mu, scale / state.tau[v]).sum())
        log_low = float(low_effort_logpdf(data.reports[p], LowEffortSpec.from_hp(hp)).sum())
    a = math.log(e) + log_high
    b = math.log1p(-e) + log_low
    top = max(a, b)
    if top == -math.inf:
        return Bernoulli(e)
    return Bernoulli(math.exp(a - top) / (math.exp(a - top) + math.exp(b - top)))


# ------------------------------------------------------------ draw wrappers

def cond_true_grade_uncensored(u, c, state, data, hp, config, rng, size=None):
    if config.censoring_enabled:
        raise ValueError("closed-form true-grade update requires censoring to be disabled")
    return _draw(true_grade_conditional(u, c, state, data, hp, config), rng, size)


def cond_reliability_conjugate(v, state, data, hp, rng, size=None):
    return _draw(reliability_conditional(v, state, data, hp), rng, size)


def cond_bias_conjugate(v, state, data, hp, rng, size=None, config=None):
    return _draw(bias_conditional(v, state, data, hp, config), rng, size)


def cond_effort_probability(v, state, data, hp, rng, size=None):
    return _draw(effort_probability_conditional(v, state, data, hp), rng, size)


def cond_effort(u, v, state, data, hp, config, rng, size=None):
    return _draw(effort_conditional(u, v, state, data, hp, config), rng, size)


# ------------------------------------------------------------- grid updates

def unnorm_logpost(variable, candidate: float, state: LatentState, data: GradeIndex,
                   hp: Hyperparameters, config: ModelConfig) -> float:
    """Log prior plus log likelihood of incident reports, up to a constant.

    Low-effort reports do not depend on the variable but are still included,
    so adding a report always changes the value by exactly its log likelihood.
    """
    scale = _scale(hp, config)
    censored = config.censoring_enabled
    corr = config.correlation_enabled

    def report_term(r, s, tau, b, z):
        if censored:
            return report_loglik(int(r), s, tau, b, z, hp, scale)
        if z:
            return float(normal_logpdf(r, s + b, scale / tau))
        return float(low_effort_logpdf(r, LowEffortSpec.from_hp(hp)))

    total = 0.0
    if isinstance(variable, TrueGrade):
        u, c = variable.u, variable.c
        prec, num = hp.tau_s, hp.tau_s * hp.mu_s
        if corr and data.author[u] >= 0:
            prec += hp.beta_0
            num += hp.beta_0 * state.tau[data.author[u]]
        total += float(normal_logpdf(candidate, num / prec, 1.0 / prec))
        for p in data.pairs_of_submission(u):
            v = data.pair_grader[p]
            total += report_term(data.reports[p, c], candidate, state.tau[v], state.b[v], state.z[p])
        return total

    if isinstance(variable, Reliability):
        v = variable.v
        if not candidate > 0:
            raise ValueError("reliability candidates must be positive")
        if corr:
            total += float(normal_logpdf(candidate, hp.mu_s, 1.0 / hp.tau_s + 1.0 / hp.beta_0))
            prec = hp.tau_s + hp.beta_0
            mean = (hp.tau_s * hp.mu_s + hp.beta_0 * candidate) / prec
            for u in data.authored_by(v):
                total += float(normal_logpdf(state.s[u], mean, 1.0 / prec).sum())
        else:
            total += (hp.alpha_tau * math.log(hp.beta_tau) - math.lgamma(hp.alpha_tau)
                      + (hp.alpha_tau - 1) * math.log(candidate) - hp.beta_tau * candidate)
        for p in data.pairs_of_grader(v):
            u = data.pair_sub[p]
            for c in range(data.C):
                total += report_term(data.reports[p, c], state.s[u, c], candidate, state.b[v],
                                     state.z[p])
        return total

    if isinstance(variable, Bias):
        v = variable.v
        total += float(normal_logpdf(candidate, 0.0, 1.0 / hp.tau_b))
        for p in data.pairs_of_grader(v):
            u = data.pair_sub[p]
            for c in range(data.C):
                total += report_term(data.reports[p, c], state.s[u, c], state.tau[v], candidate,
                                     state.z[p])
        return total

    raise TypeError(f"unsupported variable {variable!r}")


def grid_logpost(variable, grid: UniformGrid, state, data, hp, config) -> np.ndarray:
    return np.array([unnorm_logpost(variable, x, state, data, hp, config) for x in grid.values])


def grid_update(variable, grid: UniformGrid, state, data, hp, config, rng) -> float:
    lw = grid_logpost(variable, grid, state, data, hp, config)
    return float(grid.values[sample_discrete(lw, rng)])
