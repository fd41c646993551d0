"""Probability primitives used by the sampler.

Normal cdf values go through ``math.erfc`` in tail-safe form, so interval
probabilities keep relative accuracy far out in either tail. Interval
log-probabilities are numba-compiled because the censored grid updates call
them hundreds of thousands of times per sweep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _check_var(var):
    if not var > 0:
        raise ValueError(f"variance must be positive (got {var})")


def normal_pdf(x, mu, var):
    _check_var(var)
    return math.exp(-((x - mu) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)


def normal_logpdf(x, mu, var):
    """Vectorised log density; ``var`` may be an array."""
    x = np.asarray(x, dtype=float)
    return -0.5 * np.log(2.0 * np.pi * var) - (x - mu) ** 2 / (2.0 * var)


def normal_cdf(x, mu, var):
    _check_var(var)
    if x == math.inf:
        return 1.0
    if x == -math.inf:
        return 0.0
    return 0.5 * math.erfc(-(x - mu) / math.sqrt(2.0 * var))


@numba.njit(cache=True)
def _log_upper_tail(x):
    # log P(Z > x) for a standard normal Z
    if x < 30.0:
        q = 0.5 * math.erfc(x / _SQRT2)
        if x < -5.0:
            return math.log1p(-0.5 * math.erfc(-x / _SQRT2))
        return math.log(q)
    x2 = x * x
    return -0.5 * x2 - math.log(x) - _LOG_SQRT_2PI + math.log1p(-1.0 / x2 + 3.0 / (x2 * x2))


@numba.njit(cache=True)
def log_std_interval(a, b):
    """log(Phi(b) - Phi(a)) for a standard normal, a < b, infinities allowed."""
    if not a < b:
        return -np.inf
    if a >= 0.0:
        # both bounds in the upper half: Q(a) - Q(b)
        la = _log_upper_tail(a)
        if b == np.inf:
            return la
        lb = _log_upper_tail(b)
        return la + math.log1p(-math.exp(lb - la))
    if b <= 0.0:
        # mirror image: Q(-b) - Q(-a)
        lb = _log_upper_tail(-b)
        if a == -np.inf:
            return lb
        la = _log_upper_tail(-a)
        return lb + math.log1p(-math.exp(la - lb))
    # a < 0 < b: 1 - Q(-a) - Q(b)
    qa = 0.0 if a == -np.inf else 0.5 * math.erfc(-a / _SQRT2)
    qb = 0.0 if b == np.inf else 0.5 * math.erfc(b / _SQRT2)
    return math.log1p(-(qa + qb))


@numba.njit(cache=True)
def log_normal_interval(lo, hi, mu, precision):
    """log P(lo <= X < hi) for X ~ N(mu, 1/precision)."""
    sd_inv = math.sqrt(precision)
    a = -np.inf if lo == -np.inf else (lo - mu) * sd_inv
    b = np.inf if hi == np.inf else (hi - mu) * sd_inv
    return log_std_interval(a, b)


@dataclass(frozen=True)
class LowEffortSpec:
    """Normal around the class mean mixed with a uniform over [0, M]."""

    mu_s: float
    tau_ell: float
    epsilon: float
    M: float

    def __post_init__(self):
        if not self.tau_ell > 0:
            raise ValueError("tau_ell must be positive")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not self.M > 0:
            raise ValueError("M must be positive")

    @classmethod
    def from_hp(cls, hp) -> "LowEffortSpec":
        return cls(hp.mu_s, hp.tau_ell, hp.epsilon, float(hp.M))

    def _uniform_cdf(self, g):
        return min(max(g / self.M, 0.0), 1.0)

    def log_interval(self, lo, hi) -> float:
        """log P(lo <= G < hi) under the mixture."""
        normal = math.exp(log_normal_interval(lo, hi, self.mu_s, self.tau_ell))
        uniform = self._uniform_cdf(hi) - self._uniform_cdf(lo)
        p = (1.0 - self.epsilon) * normal + self.epsilon * uniform
        return math.log(p) if p > 0 else -math.inf


def low_effort_pdf_cdf(g: float, spec: LowEffortSpec) -> tuple[float, float]:
    var = 1.0 / spec.tau_ell
    in_support = 1.0 if 0.0 <= g <= spec.M else 0.0
    pdf = (1.0 - spec.epsilon) * normal_pdf(g, spec.mu_s, var) + spec.epsilon * in_support / spec.M
    cdf = (1.0 - spec.epsilon) * normal_cdf(g, spec.mu_s, var) + spec.epsilon * spec._uniform_cdf(g)
    return pdf, cdf


def low_effort_logpdf(g, spec: LowEffortSpec):
    """Vectorised log of the mixture density."""
    g = np.asarray(g, dtype=float)
    normal = np.exp(normal_logpdf(g, spec.mu_s, 1.0 / spec.tau_ell))
    uniform = np.where((g >= 0) & (g <= spec.M), 1.0 / spec.M, 0.0)
    with np.errstate(divide="ignore"):
        return np.log((1.0 - spec.epsilon) * normal + spec.epsilon * uniform)


# ------------------------------------------------------------------- sampling

@dataclass(frozen=True)
class Normal:
    mean: float
    var: float


@dataclass(frozen=True)
class Gamma:
    """Shape-rate parameterisation: mean = shape / rate."""

    shape: float
    rate: float


@dataclass(frozen=True)
class Beta:
    a: float
    b: float


@dataclass(frozen=True)
class Bernoulli:
    p: float


def sample(dist, rng: np.random.Generator, size=None):
    """Draw from one of the distribution specs above (or a :class:`LowEffortSpec`)."""
    if isinstance(dist, Normal):
        if dist.var < 0:
            raise ValueError("variance must be non-negative")
        if dist.var == 0:
            return dist.mean if size is None else np.full(size, float(dist.mean))
        return rng.normal(dist.mean, math.sqrt(dist.var), size)
    if isinstance(dist, Gamma):
        if not (dist.shape > 0 and dist.rate > 0):
            raise ValueError(f"invalid gamma parameters {dist}")
        return rng.gamma(dist.shape, 1.0 / dist.rate, size)
    if isinstance(dist, Beta):
        if not (dist.a > 0 and dist.b > 0):
            raise ValueError(f"invalid beta parameters {dist}")
        return rng.beta(dist.a, dist.b, size)
    if isinstance(dist, Bernoulli):
        if not 0.0 <= dist.p <= 1.0:
            raise ValueError(f"invalid bernoulli probability {dist.p}")
        draw = (rng.random(size) < dist.p)
        return int(draw) if size is None else draw.astype(np.int8)
    if isinstance(dist, LowEffortSpec):
        return sample_low_effort(dist, rng, size)
    raise TypeError(f"unsupported distribution {dist!r}")


def sample_low_effort(spec: LowEffortSpec, rng: np.random.Generator, size=None):
    n = 1 if size is None else int(np.prod(size))
    uniform = rng.random(n) < spec.epsilon
    values = np.where(uniform, rng.uniform(0.0, spec.M, n),
                      rng.normal(spec.mu_s, 1.0 / math.sqrt(spec.tau_ell), n))
    return float(values[0]) if size is None else values.reshape(size)


def sample_discrete(log_weights, rng: np.random.Generator) -> int:
    lw = np.asarray(log_weights, dtype=float)
    return int(sample_discrete_rows(lw[None, :], rng)[0])


def sample_discrete_rows(log_weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sample one index per row of a (n, k) log-weight matrix.

    Uses max-subtraction and an inverse-cdf search against a single uniform per
    row, so adding a constant to a row does not change the draw.
    """
    lw = np.asarray(log_weights, dtype=float)
    top = lw.max(axis=1)
    if not np.all(np.isfinite(top)):
        raise ValueError("every log weight in a row is -inf (or a weight is +inf/nan)")
    w = np.exp(lw - top[:, None])
    cdf = np.cumsum(w, axis=1)
    u = rng.random(lw.shape[0]) * cdf[:, -1]
    idx = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(idx, lw.shape[1] - 1)
