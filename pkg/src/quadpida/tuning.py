"""Gain tuning: dual-simplex search against step-response targets.

The search vector stacks (kp, ki, kd, ka, tf) for roll, pitch, yaw and
altitude; the objective simulates the configured step scenario and sums the
squared deviations of each channel's overshoot and settling time from the
targets. Runs are noise-free and deterministic so the landscape is static.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Mapping, Sequence

import numpy as np

from .harness import Scenario, StepProfile, run_scenario
from .pida import CHANNELS, PidaGains, tuning_objective
from .sdsa import SdsaConfig, SdsaResult, optimize

GAIN_FIELDS = ("kp", "ki", "kd", "ka", "tf")
DIMENSION = len(CHANNELS) * len(GAIN_FIELDS)

#: penalty for runs that blow up before metrics can be computed
DIVERGED_COST = 1e9


def gain_vector(gains: Mapping[str, PidaGains]) -> np.ndarray:
    return np.concatenate([gains[ch].as_array() for ch in CHANNELS])


def gains_from_vector(v: Sequence[float]) -> dict[str, PidaGains]:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (DIMENSION,):
        raise ValueError(f"gain vector must have {DIMENSION} entries")
    out = {}
    for i, ch in enumerate(CHANNELS):
        kp, ki, kd, ka, tf = v[5 * i : 5 * i + 5]
        out[ch] = PidaGains(kp=kp, ki=ki, kd=kd, ka=ka, tf=tf)
    return out


def default_bounds(
    gain_max: float = 50.0, tf_min: float = 1e-3, tf_max: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    lo = np.zeros(DIMENSION)
    hi = np.full(DIMENSION, gain_max)
    for i in range(len(CHANNELS)):
        lo[5 * i + 4] = tf_min
        hi[5 * i + 4] = tf_max
    return lo, hi


def step_cost(
    scenario: Scenario,
    v: Sequence[float],
    desired_overshoot: float = 5.0,
    desired_settling: float = 2.0,
    backend: str | None = None,
) -> float:
    """Objective value of one gain vector on the step scenario."""
    if not isinstance(scenario.profile, StepProfile):
        raise TypeError("tuning requires a step scenario")
    trial = replace(scenario, gains=gains_from_vector(v))
    _, metrics = run_scenario(trial, backend=backend)
    if metrics.diverged:
        return DIVERGED_COST
    total = 0.0
    for ch in CHANNELS:
        sm = metrics.step.get(ch)
        if sm is not None:
            total += tuning_objective(sm, desired_overshoot, desired_settling)
    return total


def tune_gains(
    scenario: Scenario,
    config: SdsaConfig,
    desired_overshoot: float = 5.0,
    desired_settling: float = 2.0,
    backend: str | None = None,
) -> tuple[dict[str, PidaGains], SdsaResult]:
    """Run the dual-simplex search and return the best gain set found."""
    result = optimize(
        lambda v: step_cost(scenario, v, desired_overshoot, desired_settling, backend),
        config,
    )
    return gains_from_vector(result.best_point), result
