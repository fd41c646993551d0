"""Shared builders for sampler tests."""
import numpy as np

from peergrade.gibbs import GibbsSampler
from peergrade.model import ClampSet, ModelConfig


def random_state(sampler: GibbsSampler, seed: int, snap: bool = False):
    """A state away from the prior mode; ``snap`` puts s, tau and b on their grids."""
    rng = np.random.default_rng(seed)
    state = sampler.initial_state(rng)
    state.s = rng.uniform(1.0, 5.0, state.s.shape)
    state.tau = rng.uniform(0.3, 3.0, state.tau.shape)
    state.b = rng.uniform(-1.0, 1.0, state.b.shape)
    if sampler.config.effort_enabled:
        state.e = rng.uniform(0.2, 0.95, state.e.shape)
        state.z = (rng.random(state.z.shape) < 0.8).astype(np.int8)
    if snap:
        for name, grid in (("s", sampler.s_grid), ("tau", sampler.tau_grid), ("b", sampler.b_grid)):
            vals = getattr(state, name)
            setattr(state, name, grid[np.abs(vals[..., None] - grid).argmin(axis=-1)])
    return state


def make_sampler(data, hp, clamps=None, **flags):
    return GibbsSampler(data, hp, ModelConfig(**flags), clamps or ClampSet())
