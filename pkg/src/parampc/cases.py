"""Default settings for the two built-in case studies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import HexParams, MsdParams, ParametricModel, build_hex, build_msd
from .sim import ReferenceProfile


@dataclass(frozen=True)
class CaseDefaults:
    name: str
    horizon: int
    q_scale: float
    r_scale: float
    x0: tuple
    reference: ReferenceProfile
    duration: float

    def steps(self, ts: float) -> int:
        return int(round(self.duration / ts))


MSD_DEFAULTS = CaseDefaults(
    name="msd", horizon=4, q_scale=1000.0, r_scale=1e-4, x0=(0.005, 0.0),
    # the Euler model is open-loop unstable for stiff springs; larger swings
    # leave the set the bounded input can hold
    reference=ReferenceProfile(((0.0, 0.005), (2.0, -0.005), (4.0, 0.005), (6.0, -0.005))),
    duration=8.0,
)

HEX_DEFAULTS = CaseDefaults(
    name="hex", horizon=4, q_scale=100.0, r_scale=1e-3, x0=(60.0, 30.0),
    reference=ReferenceProfile(((0.0, 42.0), (200.0, 45.0), (400.0, 40.0), (600.0, 43.0))),
    duration=800.0,
)

CASES = {"msd": MSD_DEFAULTS, "hex": HEX_DEFAULTS}


def build_case(name: str, ts=None) -> ParametricModel:
    """Case-study model with its default parameters; ``ts`` overrides the sampling time."""
    if name == "msd":
        return build_msd(MsdParams() if ts is None else MsdParams(ts=ts))
    if name == "hex":
        return build_hex(HexParams() if ts is None else HexParams(ts=ts))
    raise ValueError(f"unknown case {name!r}; expected 'msd' or 'hex'")


def default_x0(name: str) -> np.ndarray:
    return np.array(CASES[name].x0, dtype=float)
