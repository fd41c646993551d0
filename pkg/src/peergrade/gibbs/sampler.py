"""Vectorised Gibbs sweeps.

Within each block (all true grades, all reliabilities, ...) the variables are
conditionally independent given the other blocks, so updating a whole block
at once is the same chain as updating its members one by one. Block order is
fixed: true grades, reliabilities, biases, effort probabilities, efforts.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from ..distributions import LowEffortSpec, low_effort_logpdf, normal_logpdf, sample_discrete_rows
from ..model import ClampSet, Hyperparameters, ModelConfig
from . import likelihood as lk
from .state import ClampMasks, GradeIndex, LatentState


def gamma_logpdf(x, shape, rate):
    x = np.asarray(x, dtype=float)
    return shape * math.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


class GibbsSampler:
    """Conditional updates for one (dataset, hyperparameters, model flags) triple."""

    def __init__(self, data: GradeIndex, hp: Hyperparameters, config: ModelConfig,
                 clamps: ClampSet | None = None):
        if config.correlation_enabled and np.all(data.author < 0):
            raise ValueError("correlation requires authorship information")
        self.data = data
        self.hp = hp
        self.config = config
        self.masks = ClampMasks.build(clamps, data)
        grids = config.grids
        self.s_grid = grids.true_grade_grid.values
        self.tau_grid = grids.reliability_grid.values
        self.b_grid = grids.bias_grid.values
        self.scale = hp.lambda_tau if config.correlation_enabled else 1.0
        self.lo, self.hi = lk.cell_bounds(hp.grade_set)
        self.low_log = lk.low_effort_cell_logprobs(hp)
        self.low_spec = LowEffortSpec.from_hp(hp)
        self.table = (lk.loglik_table(hp, grids, self.scale)
                      if config.censoring_enabled else None)
        # sufficient pieces that never change
        self.low_pdf_sum = low_effort_logpdf(data.reports, self.low_spec).sum(axis=1)
        self.has_author = data.author >= 0
        self.author_safe = np.where(self.has_author, data.author, 0)

    # ------------------------------------------------------------- priors

    def true_grade_prior(self, tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-submission prior (mean, precision) of each true grade."""
        hp = self.hp
        U = self.data.U
        if not self.config.correlation_enabled:
            return np.full(U, hp.mu_s), np.full(U, hp.tau_s)
        prec = np.where(self.has_author, hp.tau_s + hp.beta_0, hp.tau_s)
        num = hp.tau_s * hp.mu_s + np.where(self.has_author, hp.beta_0 * tau[self.author_safe], 0.0)
        return num / prec, prec

    def reliability_log_prior(self, grid: np.ndarray) -> np.ndarray:
        hp = self.hp
        if self.config.correlation_enabled:
            return normal_logpdf(grid, hp.mu_s, 1.0 / hp.tau_s + 1.0 / hp.beta_0)
        return gamma_logpdf(grid, hp.alpha_tau, hp.beta_tau)

    def tau_eff(self, tau: np.ndarray) -> np.ndarray:
        return tau / self.scale

    # ------------------------------------------------------ initialisation

    def initial_state(self, rng: np.random.Generator) -> LatentState:
        data, hp, cfg = self.data, self.hp, self.config
        if cfg.correlation_enabled:
            lw = np.broadcast_to(self.reliability_log_prior(self.tau_grid), (data.V, self.tau_grid.size))
            tau = self.tau_grid[sample_discrete_rows(lw, rng)]
        else:
            tau = rng.gamma(hp.alpha_tau, 1.0 / hp.beta_tau, data.V)
        tau[~np.isnan(self.masks.reliability)] = self.masks.reliability[~np.isnan(self.masks.reliability)]
        b = rng.normal(0.0, 1.0 / math.sqrt(hp.tau_b), data.V)
        if cfg.effort_enabled:
            e = rng.beta(hp.alpha_e, hp.beta_e, data.V)
            e[self.masks.effort] = 1.0
            z = (rng.random(data.P) < e[data.pair_grader]).astype(np.int8)
        else:
            e = np.ones(data.V)
            z = np.ones(data.P, dtype=np.int8)
        mean, prec = self.true_grade_prior(tau)
        s = mean[:, None] + rng.standard_normal((data.U, data.C)) / np.sqrt(prec)[:, None]
        state = LatentState(s, tau, b, e, z)
        self.masks.apply(state)
        return state

    # -------------------------------------------------------------- sweep

    def sweep(self, state: LatentState, rng: np.random.Generator) -> LatentState:
        state = state.copy()
        self.update_true_grades(state, rng)
        self.update_reliabilities(state, rng)
        self.update_biases(state, rng)
        if self.config.effort_enabled:
            self.update_effort_probabilities(state, rng)
            self.update_efforts(state, rng)
        return state

    # --------------------------------------------------------- true grades

    def true_grade_logpost(self, state: LatentState) -> np.ndarray:
        """(U, C, K) unnormalised log posterior of each true grade on its grid."""
        d = self.data
        mean, prec = self.true_grade_prior(state.tau)
        grid = self.s_grid
        prior = -0.5 * np.log(2 * np.pi / prec)[:, None] - 0.5 * prec[:, None] * (grid[None, :] - mean[:, None]) ** 2
        out = np.repeat(prior[:, None, :], d.C, axis=1)
        tau_idx = lk.grid_index(state.tau, self.tau_grid[0], self.config.grids.reliability_grid.step, self.tau_grid)
        b_idx = lk.grid_index(state.b, self.b_grid[0], self.config.grids.bias_grid.step, self.b_grid)
        lk.true_grade_kernel(out, d.pair_sub, d.pair_grader, d.report_pos, state.z,
                             self.tau_eff(state.tau), state.b, tau_idx, b_idx, self.table,
                             self.low_log, self.lo, self.hi, grid)
        return out

    def true_grade_conjugate(self, state: LatentState) -> tuple[np.ndarray, np.ndarray]:
        """Closed-form (mean, precision) arrays of shape (U, C)."""
        d = self.data
        mean, prec = self.true_grade_prior(state.tau)
        w = state.z * self.tau_eff(state.tau)[d.pair_grader]
        prec_post = prec + np.bincount(d.pair_sub, w, d.U)
        resid = d.reports - state.b[d.pair_grader][:, None]
        num = np.stack([np.bincount(d.pair_sub, w * resid[:, c], d.U) for c in range(d.C)], axis=1)
        mean_post = (prec * mean)[:, None] + num
        return mean_post / prec_post[:, None], np.repeat(prec_post[:, None], d.C, axis=1)

    def update_true_grades(self, state: LatentState, rng) -> None:
        free = np.isnan(self.masks.true_grade)
        if self.config.censoring_enabled:
            lw = self.true_grade_logpost(state)
            idx = sample_discrete_rows(lw.reshape(-1, lw.shape[-1]), rng).reshape(free.shape)
            new = self.s_grid[idx]
        else:
            mean, prec = self.true_grade_conjugate(state)
            new = mean + rng.standard_normal(mean.shape) / np.sqrt(prec)
        state.s[free] = new[free]

    # ------------------------------------------------------- reliabilities

    def _residual_stats(self, state: LatentState):
        d = self.data
        resid = d.reports - state.b[d.pair_grader][:, None] - state.s[d.pair_sub]
        zf = state.z.astype(float)
        n = d.C * np.bincount(d.pair_grader, zf, d.V)
        ss = np.bincount(d.pair_grader, zf * (resid**2).sum(axis=1), d.V)
        return n, ss

    def reliability_conjugate(self, state: LatentState) -> tuple[np.ndarray, np.ndarray]:
        """Gamma (shape, rate) per grader."""
        n, ss = self._residual_stats(state)
        return self.hp.alpha_tau + 0.5 * n, self.hp.beta_tau + 0.5 * ss

    def reliability_logpost(self, state: LatentState) -> np.ndarray:
        """(V, K) unnormalised log posterior of each reliability on its grid."""
        d, hp = self.data, self.hp
        grid = self.tau_grid
        out = np.repeat(self.reliability_log_prior(grid)[None, :], d.V, axis=0)
        if self.config.correlation_enabled:
            prec = hp.tau_s + hp.beta_0
            means = (hp.tau_s * hp.mu_s + hp.beta_0 * grid) / prec  # (K,)
            authored = np.flatnonzero(self.has_author)
            for u in authored:
                v = d.author[u]
                out[v] += normal_logpdf(state.s[u][:, None], means[None, :], 1.0 / prec).sum(axis=0)
        prec_grid = grid / self.scale
        if self.config.censoring_enabled:
            s_idx = lk.grid_index(state.s, self.s_grid[0], self.config.grids.true_grade_grid.step, self.s_grid)
            b_idx = lk.grid_index(state.b, self.b_grid[0], self.config.grids.bias_grid.step, self.b_grid)
            lk.reliability_kernel(out, d.pair_sub, d.pair_grader, d.report_pos, state.z,
                                  state.s, s_idx, state.b, b_idx, self.table, self.low_log,
                                  self.lo, self.hi, prec_grid)
        else:
            # only effortful reports depend on the reliability; low-effort ones add a constant
            n, ss = self._residual_stats(state)
            out += (-0.5 * n[:, None] * np.log(2 * np.pi / prec_grid)[None, :]
                    - 0.5 * ss[:, None] * prec_grid[None, :])
            low = np.bincount(d.pair_grader, (1 - state.z) * self.low_pdf_sum, d.V)
            out += low[:, None]
        return out

    def update_reliabilities(self, state: LatentState, rng) -> None:
        free = np.isnan(self.masks.reliability)
        if self.config.censoring_enabled or self.config.correlation_enabled:
            lw = self.reliability_logpost(state)
            new = self.tau_grid[sample_discrete_rows(lw, rng)]
        else:
            shape, rate = self.reliability_conjugate(state)
            new = rng.gamma(shape, 1.0 / rate)
        state.tau[free] = new[free]

    # -------------------------------------------------------------- biases

    def bias_conjugate(self, state: LatentState) -> tuple[np.ndarray, np.ndarray]:
        """Closed-form (mean, precision) per grader."""
        d = self.data
        t = self.tau_eff(state.tau)
        zf = state.z.astype(float)
        count = d.C * np.bincount(d.pair_grader, zf, d.V)
        resid = (d.reports - state.s[d.pair_sub]).sum(axis=1)
        total = np.bincount(d.pair_grader, zf * resid, d.V)
        prec = self.hp.tau_b + t * count
        return t * total / prec, prec

    def bias_logpost(self, state: LatentState) -> np.ndarray:
        d = self.data
        grid = self.b_grid
        out = np.repeat(normal_logpdf(grid, 0.0, 1.0 / self.hp.tau_b)[None, :], d.V, axis=0)
        s_idx = lk.grid_index(state.s, self.s_grid[0], self.config.grids.true_grade_grid.step, self.s_grid)
        tau_idx = lk.grid_index(state.tau, self.tau_grid[0], self.config.grids.reliability_grid.step, self.tau_grid)
        lk.bias_kernel(out, d.pair_sub, d.pair_grader, d.report_pos, state.z, state.s, s_idx,
                       self.tau_eff(state.tau), tau_idx, self.table, self.low_log, self.lo,
                       self.hi, grid)
        return out

    def update_biases(self, state: LatentState, rng) -> None:
        free = np.isnan(self.masks.bias)
        if self.config.censoring_enabled:
            new = self.b_grid[sample_discrete_rows(self.bias_logpost(state), rng)]
        else:
            mean, prec = self.bias_conjugate(state)
            new = mean + rng.standard_normal(mean.shape) / np.sqrt(prec)
        state.b[free] = new[free]

    # --------------------------------------------------------------- effort

    def effort_probability_params(self, state: LatentState) -> tuple[np.ndarray, np.ndarray]:
        d = self.data
        ones = np.bincount(d.pair_grader, state.z.astype(float), d.V)
        total = np.bincount(d.pair_grader, minlength=d.V).astype(float)
        return self.hp.alpha_e + ones, self.hp.beta_e + (total - ones)

    def update_effort_probabilities(self, state: LatentState, rng) -> None:
        a, b = self.effort_probability_params(state)
        new = rng.beta(a, b)
        free = ~self.masks.effort
        state.e[free] = new[free]

    def effort_logliks(self, state: LatentState) -> tuple[np.ndarray, np.ndarray]:
        """Per-pair (log H, log Lambda): summed high- and low-effort log-likelihoods."""
        d = self.data
        if self.config.censoring_enabled:
            high = np.empty(d.P)
            low = np.empty(d.P)
            s_idx = lk.grid_index(state.s, self.s_grid[0], self.config.grids.true_grade_grid.step, self.s_grid)
            tau_idx = lk.grid_index(state.tau, self.tau_grid[0], self.config.grids.reliability_grid.step, self.tau_grid)
            b_idx = lk.grid_index(state.b, self.b_grid[0], self.config.grids.bias_grid.step, self.b_grid)
            lk.effort_kernel(high, low, d.pair_sub, d.pair_grader, d.report_pos, state.s, s_idx,
                             self.tau_eff(state.tau), tau_idx, state.b, b_idx, self.table,
                             self.low_log, self.lo, self.hi)
            return high, low
        var = 1.0 / self.tau_eff(state.tau)[d.pair_grader]
        mu = state.s[d.pair_sub] + state.b[d.pair_grader][:, None]
        high = normal_logpdf(d.reports, mu, var[:, None]).sum(axis=1)
        return high, self.low_pdf_sum

    def effort_probability_of_one(self, state: LatentState) -> np.ndarray:
        high, low = self.effort_logliks(state)
        return effort_posterior(state.e[self.data.pair_grader], high, low)

    def update_efforts(self, state: LatentState, rng) -> None:
        p = self.effort_probability_of_one(state)
        new = (rng.random(p.size) < p).astype(np.int8)
        free = ~self.masks.pair_effort
        state.z[free] = new[free]


def effort_posterior(e, log_high, log_low) -> np.ndarray:
    """P(z = 1) = e H / (e H + (1 - e) Lambda), evaluated in log space."""
    e = np.asarray(e, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.log(e) + log_high
        b = np.log1p(-e) + log_low
        p = np.exp(a - np.logaddexp(a, b))
    # both branches impossible: fall back on the prior
    return np.where(np.isnan(p), e, p)
