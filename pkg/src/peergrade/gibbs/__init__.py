"""Gibbs sampling engine: likelihoods, conditionals, sweeps and chains."""
from .chains import ChainTrace, chain_seeds, read_traces, run_chains, write_traces
from .conditionals import (Bias, Reliability, TrueGrade, cond_bias_conjugate, cond_effort,
                           cond_effort_probability, cond_reliability_conjugate,
                           cond_true_grade_uncensored, grid_update, unnorm_logpost)
from .likelihood import CensorInterval, censor_interval, report_likelihood, round_to_grade
from .sampler import GibbsSampler
from .state import ClampMasks, GradeIndex, LatentState


def sweep(state, dataset, hp, config, clamps, rng):
    """One full Gibbs sweep; ``dataset`` may be a Dataset or a prebuilt GradeIndex."""
    data = dataset if isinstance(dataset, GradeIndex) else GradeIndex.build(dataset, hp)
    return GibbsSampler(data, hp, config, clamps).sweep(state, rng)


__all__ = [
    "Bias", "CensorInterval", "ChainTrace", "ClampMasks", "GibbsSampler", "GradeIndex",
    "LatentState", "Reliability", "TrueGrade", "censor_interval", "chain_seeds",
    "cond_bias_conjugate", "cond_effort", "cond_effort_probability",
    "cond_reliability_conjugate", "cond_true_grade_uncensored", "grid_update",
    "read_traces", "report_likelihood", "round_to_grade", "run_chains", "sweep",
    "unnorm_logpost", "write_traces",
]
