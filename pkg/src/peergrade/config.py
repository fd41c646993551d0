"""TOML configuration: strict loading and canonical dumping.

Layout::

    preset = "paper-default"        # optional starting point

    [hyperparameters]               # Hyperparameters fields; sigma_* spellings allowed
    mu_s = 4.0

    [model]                         # ModelConfig fields
    chains = 4

    [model.grids]                   # GridSpec fields as {count, lo, hi} tables
    true_grade_grid = { count = 101, lo = 0.0, hi = 6.0 }

    [clamps]                        # optional per-grader overrides of role clamps
    effort = ["ta00"]
    reliability = { instructor = 16.0 }
    bias = {}
"""
from __future__ import annotations

import sys
from dataclasses import fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w

from .model import (SIGMA_KEYS, GridSpec, Hyperparameters, ModelConfig, UniformGrid,
                    ValidationError, preset_hyperparameters)
from .synth import ClassSpec

TOP_KEYS = {"preset", "hyperparameters", "model", "clamps"}
CLAMP_KEYS = {"effort", "reliability", "bias"}
GRID_KEYS = {f.name for f in fields(GridSpec)}
MODEL_KEYS = {f.name for f in fields(ModelConfig)}


def _parse(path) -> dict:
    path = Path(path)
    try:
        return tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        # the decoder message already carries "(at line N, column M)"
        raise ValidationError(f"{path}: {exc}") from None


def _check_keys(section: str, got, allowed) -> None:
    unknown = sorted(set(got) - set(allowed))
    if unknown:
        raise ValidationError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")


def hyperparameters_from(doc: dict) -> Hyperparameters:
    hp = preset_hyperparameters(doc["preset"]) if "preset" in doc else Hyperparameters()
    values = dict(doc.get("hyperparameters", {}))
    if not values:
        return hp
    merged = hp.to_dict()
    # an explicit sigma_* replaces the inherited precision rather than conflicting with it
    for sigma, tau in SIGMA_KEYS.items():
        if sigma in values:
            if tau in values:
                raise ValidationError(f"conflicting keys: {sigma} and {tau}")
            merged.pop(tau)
    merged.update(values)
    if "M" in values and "grade_set" not in values:
        merged["grade_set"] = list(range(int(values["M"]) + 1))
    return Hyperparameters.from_mapping(merged)


def model_config_from(doc: dict) -> ModelConfig:
    model = dict(doc.get("model", {}))
    _check_keys("model", model, MODEL_KEYS)
    grids = model.pop("grids", None)
    if grids is not None:
        _check_keys("model.grids", grids, GRID_KEYS)
        built = {}
        for name, spec in grids.items():
            _check_keys(f"model.grids.{name}", spec, {"count", "lo", "hi"})
            built[name] = UniformGrid(int(spec["count"]), float(spec["lo"]), float(spec["hi"]))
        model["grids"] = GridSpec(**built)
    try:
        return ModelConfig(**model)
    except TypeError as exc:
        raise ValidationError(str(exc)) from None


def clamp_overrides_from(doc: dict) -> dict:
    clamps = doc.get("clamps", {})
    _check_keys("clamps", clamps, CLAMP_KEYS)
    return {
        "effort_clamps": {v: 1.0 for v in clamps.get("effort", [])},
        "reliability_clamps": dict(clamps.get("reliability", {})),
        "bias_clamps": dict(clamps.get("bias", {})),
    }


def load_config(path) -> tuple[Hyperparameters, ModelConfig]:
    hp, config, _ = load_config_full(path)
    return hp, config


def load_config_full(path) -> tuple[Hyperparameters, ModelConfig, dict]:
    doc = _parse(path)
    _check_keys("top level", doc, TOP_KEYS)
    return hyperparameters_from(doc), model_config_from(doc), clamp_overrides_from(doc)


def config_document(hp: Hyperparameters, config: ModelConfig, clamps: dict | None = None) -> dict:
    model = {f.name: getattr(config, f.name) for f in fields(ModelConfig)
             if f.name != "grids" and getattr(config, f.name) is not None}
    model["grids"] = {name: {"count": g.count, "lo": g.lo, "hi": g.hi}
                      for name, g in ((f.name, getattr(config.grids, f.name))
                                      for f in fields(GridSpec))}
    doc = {"hyperparameters": hp.to_dict(), "model": model}
    if clamps and any(clamps.values()):
        doc["clamps"] = {
            "effort": sorted(clamps.get("effort_clamps", {})),
            "reliability": dict(sorted(clamps.get("reliability_clamps", {}).items())),
            "bias": dict(sorted(clamps.get("bias_clamps", {}).items())),
        }
    return doc


def dump_config(hp: Hyperparameters, config: ModelConfig, clamps: dict | None = None) -> str:
    """Canonical form: precisions only, every field spelled out, no preset reference."""
    return tomli_w.dumps(config_document(hp, config, clamps))


# ------------------------------------------------------------- class specs

CLASS_KEYS = {f.name for f in fields(ClassSpec)} - {"hp"}


def load_class_spec(path) -> ClassSpec:
    """``[class]`` holds ClassSpec fields; hyperparameters come from ``preset``/``[hyperparameters]``."""
    doc = _parse(path)
    _check_keys("top level", doc, {"preset", "hyperparameters", "class"})
    hp = hyperparameters_from(doc)
    cls = dict(doc.get("class", {}))
    _check_keys("class", cls, CLASS_KEYS)
    cls.setdefault("components", hp.C)
    return ClassSpec(hp=hp, **cls)


def dump_class_spec(spec: ClassSpec) -> str:
    cls = {f.name: getattr(spec, f.name) for f in fields(ClassSpec)
           if f.name != "hp" and getattr(spec, f.name) is not None}
    return tomli_w.dumps({"hyperparameters": spec.hp.to_dict(), "class": cls})
