"""Scenario/tuning configuration files: versioned YAML with strict validation.

Unknown keys are rejected, missing keys fall back to documented defaults, and
every message names the offending key path. One file can describe a scenario
(for ``simulate``/``stability``), a tuning setup (``tune``) and an estimator
demo (``filter-demo``).
"""

from __future__ import annotations

import math
from typing import Literal, Optional

import numpy as np
import pydantic
import yaml
from pydantic import BaseModel, ConfigDict, Field

from .dynamics import QuadState
from .harness import (
    ALTITUDE_GF,
    ATTITUDE_GF,
    SPIRAL_OMEGA,
    DisturbanceSpec,
    EstimatorConfig,
    GfChannelSettings,
    GuidanceConfig,
    HoldProfile,
    Scenario,
    SpiralProfile,
    StepProfile,
)
from .params import QuadParams
from .pida import CHANNELS, PidaGains, default_gains
from .sdsa import SdsaConfig
from .tuning import DIMENSION, default_bounds, gain_vector

SCHEMA_VERSION = 1

_CHANNEL_INDEX = {"roll": 0, "pitch": 1, "yaw": 2}


class ConfigError(ValueError):
    """Invalid configuration file; message names the offending key."""


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ParamsCfg(_Model):
    m: float = 0.8
    l: float = 0.2
    g: float = 9.81
    c: float = 3.00e-5
    ixx: float = 2.28e-2
    iyy: float = 3.10e-2
    izz: float = 4.40e-2
    im: float = 8.30e-5
    b: float = 3.0e-5

    def build(self) -> QuadParams:
        try:
            return QuadParams(**self.model_dump())
        except ValueError as exc:
            raise ConfigError(f"params: {exc}") from exc


class GainsCfg(_Model):
    kp: float
    ki: float
    kd: float
    ka: float
    tf: float

    def build(self) -> PidaGains:
        return PidaGains(**self.model_dump())


def _default_gains_cfg(channel: str) -> GainsCfg:
    g = default_gains(channel)
    return GainsCfg(kp=g.kp, ki=g.ki, kd=g.kd, ka=g.ka, tf=g.tf)


class ChannelGainsCfg(_Model):
    roll: GainsCfg = Field(default_factory=lambda: _default_gains_cfg("roll"))
    pitch: GainsCfg = Field(default_factory=lambda: _default_gains_cfg("pitch"))
    yaw: GainsCfg = Field(default_factory=lambda: _default_gains_cfg("yaw"))
    altitude: GainsCfg = Field(default_factory=lambda: _default_gains_cfg("altitude"))

    def build(self) -> dict[str, PidaGains]:
        return {ch: getattr(self, ch).build() for ch in CHANNELS}


class TargetsCfg(_Model):
    roll_deg: float = 0.0
    pitch_deg: float = 0.0
    yaw_deg: float = 0.0
    altitude: float = 0.0

    def tuple(self) -> tuple[float, float, float, float]:
        return (
            math.radians(self.roll_deg),
            math.radians(self.pitch_deg),
            math.radians(self.yaw_deg),
            self.altitude,
        )


class StepCfg(_Model):
    before: TargetsCfg = Field(default_factory=TargetsCfg)
    after: TargetsCfg = Field(default_factory=TargetsCfg)
    time: float = 2.0


class SpiralCfg(_Model):
    omega: float = SPIRAL_OMEGA
    yaw_deg: float = 0.0


class ProfileCfg(_Model):
    type: Literal["hold", "step", "spiral"] = "hold"
    hold: Optional[TargetsCfg] = None
    step: Optional[StepCfg] = None
    spiral: Optional[SpiralCfg] = None

    def build(self):
        if self.type == "hold":
            return HoldProfile((self.hold or TargetsCfg()).tuple())
        if self.type == "step":
            step = self.step or StepCfg()
            return StepProfile(step.before.tuple(), step.after.tuple(), step.time)
        spiral = self.spiral or SpiralCfg()
        return SpiralProfile(omega=spiral.omega, yaw=math.radians(spiral.yaw_deg))


class InitialCfg(_Model):
    altitude: float = 0.0
    x: float = 0.0
    y: float = 0.0
    roll_deg: float = 0.0
    pitch_deg: float = 0.0
    yaw_deg: float = 0.0
    p: float = 0.0
    q: float = 0.0
    r: float = 0.0

    def build(self) -> QuadState:
        return QuadState(
            phi=math.radians(self.roll_deg),
            theta=math.radians(self.pitch_deg),
            psi=math.radians(self.yaw_deg),
            p=self.p,
            q=self.q,
            r=self.r,
            x_e=self.x,
            y_e=self.y,
            z_e=-self.altitude,
        )


class SensorNoiseCfg(_Model):
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0
    altitude: float = 0.0

    def tuple(self) -> tuple[float, float, float, float]:
        return (self.roll, self.pitch, self.yaw, self.altitude)


class DisturbanceCfg(_Model):
    channel: Literal["roll", "pitch", "yaw"] = "roll"
    start: float = 1.0
    mu: float = 0.0
    sigma: float = 1.0

    def build(self) -> DisturbanceSpec:
        return DisturbanceSpec(
            channel=_CHANNEL_INDEX[self.channel],
            start=self.start,
            mu=self.mu,
            sigma=self.sigma,
        )


class GfChannelCfg(_Model):
    init_spread: tuple[float, float]
    process_noise: tuple[float, float]
    mutation_scale: tuple[float, float]

    def build(self) -> GfChannelSettings:
        return GfChannelSettings(self.init_spread, self.process_noise, self.mutation_scale)


def _gf_channel_cfg(defaults: GfChannelSettings) -> GfChannelCfg:
    return GfChannelCfg(
        init_spread=defaults.init_spread,
        process_noise=defaults.process_noise,
        mutation_scale=defaults.mutation_scale,
    )


class EstimatorCfg(_Model):
    type: Literal["none", "gf"] = "none"
    channels: list[Literal["roll", "pitch", "yaw", "altitude"]] = ["altitude"]
    population: int = 100
    generations: int = 10
    mutation_rate: float = 0.1
    elite: int = 1
    attitude: GfChannelCfg = Field(default_factory=lambda: _gf_channel_cfg(ATTITUDE_GF))
    altitude: GfChannelCfg = Field(default_factory=lambda: _gf_channel_cfg(ALTITUDE_GF))

    def build(self) -> EstimatorConfig | None:
        if self.type == "none":
            return None
        return EstimatorConfig(
            channels=tuple(self.channels),
            population=self.population,
            generations=self.generations,
            mutation_rate=self.mutation_rate,
            elite=self.elite,
            attitude=self.attitude.build(),
            altitude=self.altitude.build(),
        )


class GuidanceCfg(_Model):
    kp: float = 0.05
    kd: float = 0.12
    tilt_limit_deg: float = 10.0

    def build(self) -> GuidanceConfig:
        return GuidanceConfig(
            kp=self.kp, kd=self.kd, tilt_limit=math.radians(self.tilt_limit_deg)
        )


class ControlCfg(_Model):
    enabled: bool = True
    hold_hover_thrust: bool = True
    torque_limits: tuple[float, float, float] = (2.0, 2.0, 2.0)
    thrust_range: Optional[tuple[float, float]] = None
    gains: ChannelGainsCfg = Field(default_factory=ChannelGainsCfg)


class ScenarioCfg(_Model):
    name: str = "scenario"
    duration: float = 10.0
    dt: float = 1e-3
    seed: int = 0
    initial: InitialCfg = Field(default_factory=InitialCfg)
    profile: ProfileCfg = Field(default_factory=ProfileCfg)
    control: ControlCfg = Field(default_factory=ControlCfg)
    sensor_noise: SensorNoiseCfg = Field(default_factory=SensorNoiseCfg)
    disturbance: Optional[DisturbanceCfg] = None
    estimator: EstimatorCfg = Field(default_factory=EstimatorCfg)
    guidance: GuidanceCfg = Field(default_factory=GuidanceCfg)

    def build(self, params: QuadParams, seed: int | None = None) -> Scenario:
        scenario = Scenario(
            name=self.name,
            duration=self.duration,
            dt=self.dt,
            params=params,
            initial=self.initial.build(),
            profile=self.profile.build(),
            gains=self.control.gains.build(),
            control_enabled=self.control.enabled,
            hold_hover_thrust=self.control.hold_hover_thrust,
            torque_limits=self.control.torque_limits,
            thrust_range=self.control.thrust_range,
            sensor_noise=self.sensor_noise.tuple(),
            disturbance=self.disturbance.build() if self.disturbance else None,
            estimator=self.estimator.build(),
            guidance=self.guidance.build(),
            seed=self.seed if seed is None else seed,
        )
        try:
            scenario.validate()
        except ValueError as exc:
            raise ConfigError(f"scenario: {exc}") from exc
        return scenario


class SdsaObjectiveCfg(_Model):
    overshoot: float = 5.0
    settling: float = 2.0


class SdsaCfg(_Model):
    a_max: float = 10.5907
    alpha_max: float = 9.7323
    gamma_max: float = 9.9185
    beta_max: float = 0.4679
    i_max: int = 979
    n_simplexes: int = 2
    seed: int = 0
    stall_iterations: int = 50
    gain_max: float = 50.0
    tf_min: float = 1e-3
    tf_max: float = 1.0
    warm_start: bool = True
    objective: SdsaObjectiveCfg = Field(default_factory=SdsaObjectiveCfg)

    def build(self, initial: np.ndarray | None) -> SdsaConfig:
        return SdsaConfig(
            dimension=DIMENSION,
            bounds=default_bounds(self.gain_max, self.tf_min, self.tf_max),
            a_max=self.a_max,
            alpha_max=self.alpha_max,
            gamma_max=self.gamma_max,
            beta_max=self.beta_max,
            i_max=self.i_max,
            n_simplexes=self.n_simplexes,
            seed=self.seed,
            stall_iterations=self.stall_iterations,
            initial_point=initial if self.warm_start else None,
        )


class FilterDemoCfg(_Model):
    steps: int = 200
    seeds: int = 20
    coefficient: float = 0.9
    process_std: float = 0.1
    measurement_std: float = 0.1
    population: int = 100
    generations: int = 10
    mutation_rate: float = 0.1
    altitude_noise: float = 0.05
    altitude_duration: float = 10.0


class RunConfig(_Model):
    schema_version: int
    params: ParamsCfg = Field(default_factory=ParamsCfg)
    scenario: Optional[ScenarioCfg] = None
    sdsa: Optional[SdsaCfg] = None
    filter_demo: Optional[FilterDemoCfg] = None

    @pydantic.field_validator("schema_version")
    @classmethod
    def _check_version(cls, v: int) -> int:
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v}; expected {SCHEMA_VERSION}")
        return v


def _format_pydantic_error(exc: pydantic.ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return "; ".join(lines)


def load_config(path) -> RunConfig:
    """Parse and validate a configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: malformed YAML{where}: {exc.problem}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    if "schema_version" not in raw:
        raise ConfigError(f"{path}: missing required key schema_version")
    try:
        return RunConfig.model_validate(raw)
    except pydantic.ValidationError as exc:
        raise ConfigError(f"{path}: {_format_pydantic_error(exc)}") from exc


def scenario_from_config(cfg: RunConfig, seed: int | None = None) -> Scenario:
    if cfg.scenario is None:
        raise ConfigError("missing required section: scenario")
    return cfg.scenario.build(cfg.params.build(), seed)


def gains_to_yaml(gains: dict[str, PidaGains]) -> str:
    """Serialize a gain set as a config fragment with full precision."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "gains": {
            ch: {
                "kp": float(g.kp),
                "ki": float(g.ki),
                "kd": float(g.kd),
                "ka": float(g.ka),
                "tf": float(g.tf),
            }
            for ch, g in gains.items()
        },
    }
    return yaml.safe_dump(doc, sort_keys=True, default_flow_style=False)
