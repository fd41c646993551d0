"""Multi-chain execution and trace storage."""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..model import ClampSet, Dataset, Hyperparameters, ModelConfig
from .sampler import GibbsSampler
from .state import GradeIndex, LatentState

TRACE_FIELDS = ("s", "tau", "b", "e", "z")


@dataclass
class ChainTrace:
    """Retained (post burn-in) samples of one chain, one array per variable kind."""

    chain_id: int
    seed: int
    s: np.ndarray  # (n, U, C)
    tau: np.ndarray  # (n, V)
    b: np.ndarray
    e: np.ndarray
    z: np.ndarray  # (n, P) int8

    @property
    def n(self) -> int:
        return self.s.shape[0]

    def state(self, i: int) -> LatentState:
        return LatentState(self.s[i].copy(), self.tau[i].copy(), self.b[i].copy(),
                           self.e[i].copy(), self.z[i].copy())


def chain_seeds(master_seed: int, chains: int) -> list[int]:
    """Independent 64-bit seeds derived from the master seed."""
    children = np.random.SeedSequence(master_seed).spawn(chains)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return int(seed)
    return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])


def run_chain(sampler: GibbsSampler, config: ModelConfig, chain_id: int, seed: int) -> ChainTrace:
    rng = np.random.default_rng(seed)
    d = sampler.data
    n = config.kept_per_chain
    out = dict(
        s=np.empty((n, d.U, d.C)), tau=np.empty((n, d.V)), b=np.empty((n, d.V)),
        e=np.empty((n, d.V)), z=np.empty((n, d.P), dtype=np.int8),
    )
    state = sampler.initial_state(rng)
    k = 0
    # sample 0 is the first sweep after initialisation
    for i in range(config.samples):
        state = sampler.sweep(state, rng)
        if i >= config.burn_in and (i - config.burn_in) % config.thin == 0:
            for name in TRACE_FIELDS:
                out[name][k] = getattr(state, name)
            k += 1
    return ChainTrace(chain_id, seed, **out)


def run_chains(dataset: Dataset | GradeIndex, hp: Hyperparameters, config: ModelConfig,
               clamps: ClampSet | None = None, workers: int = 1) -> list[ChainTrace]:
    """Run ``config.chains`` independent chains; the result does not depend on ``workers``."""
    data = dataset if isinstance(dataset, GradeIndex) else GradeIndex.build(dataset, hp)
    if clamps is None and isinstance(dataset, Dataset):
        clamps = ClampSet.from_roles(dataset.roles)
    sampler = GibbsSampler(data, hp, config, clamps)
    seeds = chain_seeds(resolve_seed(config.seed), config.chains)
    jobs = list(enumerate(seeds))
    if workers <= 1 or len(jobs) == 1:
        return [run_chain(sampler, config, i, s) for i, s in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: run_chain(sampler, config, *job), jobs))


def concatenate(traces: list[ChainTrace], name: str) -> np.ndarray:
    shapes = {t.__dict__[name].shape[1:] for t in traces}
    if len(shapes) != 1:
        raise ValueError(f"trace shape mismatch across chains for {name}: {sorted(shapes)}")
    return np.concatenate([getattr(t, name) for t in traces], axis=0)


# ------------------------------------------------------------------- export

def config_hash(hp: Hyperparameters, config: ModelConfig) -> str:
    payload = json.dumps({"hp": hp.to_dict(), "config": _config_dict(config)}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _config_dict(config: ModelConfig) -> dict:
    out = asdict(config)
    out["grids"] = {k: [g["count"], g["lo"], g["hi"]] for k, g in out["grids"].items()}
    return out


def write_traces(traces: list[ChainTrace], data: GradeIndex, hp: Hyperparameters,
                 config: ModelConfig, out_dir) -> Path:
    """One directory of ``.npy`` arrays per chain plus ``traces.json``.

    Plain ``.npy`` files are byte-stable across runs (``.npz`` archives embed
    timestamps), which keeps exported runs diffable.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    chains = []
    for t in traces:
        cdir = out_dir / f"chain_{t.chain_id}"
        cdir.mkdir(exist_ok=True)
        for name in TRACE_FIELDS:
            np.save(cdir / f"{name}.npy", getattr(t, name))
        chains.append({"chain_id": t.chain_id, "seed": t.seed, "dir": cdir.name,
                       "samples": t.n})
    manifest = {
        "config_hash": config_hash(hp, config),
        "master_seed": config.seed,
        "chains": chains,
        "variables": {
            "s": {"shape": ["sample", "submission", "component"], "submissions": list(data.submissions)},
            "tau": {"shape": ["sample", "grader"], "graders": list(data.graders)},
            "b": {"shape": ["sample", "grader"], "graders": list(data.graders)},
            "e": {"shape": ["sample", "grader"], "graders": list(data.graders)},
            "z": {"shape": ["sample", "pair"],
                  "pairs": [[data.submissions[u], data.graders[v]]
                            for u, v in zip(data.pair_sub, data.pair_grader)]},
        },
    }
    path = out_dir / "traces.json"
    path.write_text(json.dumps(manifest, indent=1) + "\n")
    return path


def read_traces(out_dir) -> list[ChainTrace]:
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / "traces.json").read_text())
    traces = []
    for ch in manifest["chains"]:
        arrays = {name: np.load(out_dir / ch["dir"] / f"{name}.npy") for name in TRACE_FIELDS}
        traces.append(ChainTrace(ch["chain_id"], ch["seed"], **arrays))
    return traces
