"""Layered pipeline configuration.

Every constant the extraction pipeline depends on lives here with its
default; values can be overridden from a JSON config file and then from
individual `--set dotted.key=value` command-line assignments.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

__all__ = ["PipelineConfig", "load_config"]


@dataclass(frozen=True)
class VesselConfig:
    scale_min_mm: float = 1.0
    scale_max_mm: float = 4.0
    scale_count: int = 5
    alpha: float = 0.5
    beta: float = 0.5
    polarity: str = "bright"


@dataclass(frozen=True)
class RefineConfig:
    lambdas: tuple = (0.5, 0.5, 0.5)


@dataclass(frozen=True)
class DistanceConfig:
    sigma_mm: float = 10.0
    keep_percentile: float = 5.0


@dataclass(frozen=True)
class FatConfig:
    rays: int = 720


@dataclass(frozen=True)
class CalcifiedConfig:
    h_calc: float = 0.0
    t_calc: float = 130.0
    dilation_radius: int = 2
    edge_margin: int = 2


@dataclass(frozen=True)
class NecroticConfig:
    t_low: float = 0.0
    t_high: float = 30.0
    erosion_iters: int = 2
    dilation_radius: int = 2


@dataclass(frozen=True)
class WindowConfig:
    lo: float = -150.0
    hi: float = 250.0


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    vessel: VesselConfig = field(default_factory=VesselConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    distance: DistanceConfig = field(default_factory=DistanceConfig)
    fat: FatConfig = field(default_factory=FatConfig)
    calcified: CalcifiedConfig = field(default_factory=CalcifiedConfig)
    necrotic: NecroticConfig = field(default_factory=NecroticConfig)
    window: WindowConfig = field(default_factory=WindowConfig)

    def as_dict(self) -> dict:
        return asdict(self)


def _apply(cfg, updates: dict):
    kwargs = {}
    for f in fields(cfg):
        if f.name not in updates:
            continue
        value = updates[f.name]
        current = getattr(cfg, f.name)
        if is_dataclass(current) and isinstance(value, dict):
            kwargs[f.name] = _apply(current, value)
        else:
            if isinstance(value, list):
                value = tuple(value)
            kwargs[f.name] = value
    unknown = set(updates) - {f.name for f in fields(cfg)}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return replace(cfg, **kwargs)


def _parse_literal(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path=None, overrides=()) -> PipelineConfig:
    """Defaults, then a JSON config file, then dotted --set overrides."""
    cfg = PipelineConfig()
    if path is not None:
        doc = json.loads(Path(path).read_text())
        cfg = _apply(cfg, doc)
    for item in overrides:
        key, _, raw = item.partition("=")
        if not _:
            raise ValueError(f"override {item!r} is not of the form key=value")
        parts = key.strip().split(".")
        nest = _parse_literal(raw.strip())
        for part in reversed(parts):
            nest = {part: nest}
        cfg = _apply(cfg, nest)
    return cfg
