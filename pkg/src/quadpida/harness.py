"""Scenario engine: seeded closed-loop runs with noise, estimation and metrics.

A Scenario bundles the vehicle, controller gains, reference profile, noise
model and estimator choice. Runs are deterministic per seed: the sensor,
disturbance and estimator random streams are spawned independently from the
scenario seed, so toggling the estimator does not change the noise the
vehicle experiences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import backends
from .backends import LoopBuffers, LoopPlan
from .dynamics import DIVERGENCE_LIMIT, QuadState
from .params import QuadParams
from .pida import CHANNELS, PidaGains, StepMetrics, default_gains, step_metrics

SPIRAL_OMEGA = 1.0 / (2.0 * math.pi)

TIMESERIES_COLUMNS = (
    ["t"]
    + list(("phi", "theta", "psi", "p", "q", "r", "u", "v", "w", "x_e", "y_e", "z_e"))
    + [f"meas_{c}" for c in CHANNELS]
    + [f"est_{c}" for c in CHANNELS]
    + [f"cmd_{c}" for c in CHANNELS]
    + ["u_phi", "u_theta", "u_psi", "u_t"]
    + ["f1", "f2", "f3", "f4"]
)


@dataclass(frozen=True)
class HoldProfile:
    """Constant references: roll, pitch, yaw (rad) and altitude (m)."""

    values: tuple[float, float, float, float]


@dataclass(frozen=True)
class StepProfile:
    """References that switch from ``before`` to ``after`` at ``t_step``."""

    before: tuple[float, float, float, float]
    after: tuple[float, float, float, float]
    t_step: float = 2.0


@dataclass(frozen=True)
class SpiralProfile:
    """Climbing figure-eight position reference tracked through guidance."""

    omega: float = SPIRAL_OMEGA
    yaw: float = 0.0


@dataclass(frozen=True)
class DisturbanceSpec:
    """White-noise torque disturbance on one attitude channel."""

    channel: int           # 0 roll, 1 pitch, 2 yaw
    start: float = 1.0
    mu: float = 0.0
    sigma: float = 1.0


@dataclass(frozen=True)
class GuidanceConfig:
    """Small-angle outer loop mapping position error to tilt commands."""

    kp: float = 0.05            # rad per metre of position error
    kd: float = 0.12            # rad per m/s of velocity error
    tilt_limit: float = math.radians(10.0)


@dataclass(frozen=True)
class GfChannelSettings:
    """Per-channel spreads for the in-loop two-state estimator."""

    init_spread: tuple[float, float]
    process_noise: tuple[float, float]   # per propagation substep
    mutation_scale: tuple[float, float]


#: spreads sized for radian-scale attitude channels and metre-scale altitude;
#: altitude keeps wider spreads so the rate state can follow fast descents
ATTITUDE_GF = GfChannelSettings(
    init_spread=(0.001, 0.01),
    process_noise=(1e-5, 2e-3),
    mutation_scale=(2e-4, 1e-3),
)
ALTITUDE_GF = GfChannelSettings(
    init_spread=(0.02, 0.1),
    process_noise=(5e-5, 5e-3),
    mutation_scale=(2e-3, 8e-3),
)


@dataclass(frozen=True)
class EstimatorConfig:
    """In-loop genetic-filter setup; ``channels`` lists the filtered outputs."""

    channels: tuple[str, ...] = ("altitude",)
    population: int = 100
    generations: int = 10
    mutation_rate: float = 0.1
    elite: int = 1
    attitude: GfChannelSettings = ATTITUDE_GF
    altitude: GfChannelSettings = ALTITUDE_GF

    def __post_init__(self) -> None:
        unknown = set(self.channels) - set(CHANNELS)
        if unknown:
            raise ValueError(f"unknown estimator channels {sorted(unknown)}")


@dataclass
class Scenario:
    name: str
    duration: float
    dt: float = 1e-3
    params: QuadParams = field(default_factory=QuadParams)
    initial: QuadState = field(default_factory=QuadState)
    profile: HoldProfile | StepProfile | SpiralProfile = HoldProfile((0.0, 0.0, 0.0, 0.0))
    gains: Mapping[str, PidaGains] = field(
        default_factory=lambda: {ch: default_gains(ch) for ch in CHANNELS}
    )
    control_enabled: bool = True
    hold_hover_thrust: bool = True   # open-loop runs keep the weight-balancing thrust
    torque_limits: tuple[float, float, float] = (2.0, 2.0, 2.0)
    thrust_range: tuple[float, float] | None = None   # defaults to [0, 4 * fmax]
    sensor_noise: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    disturbance: DisturbanceSpec | None = None
    estimator: EstimatorConfig | None = None
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    seed: int = 0

    def n_steps(self) -> int:
        steps = self.duration / self.dt
        rounded = round(steps)
        if rounded < 1 or abs(steps - rounded) > 1e-6:
            raise ValueError("duration must be a positive integer multiple of dt")
        return int(rounded)

    def validate(self) -> None:
        if self.duration <= 0 or self.dt <= 0:
            raise ValueError("duration and dt must be positive")
        self.n_steps()
        self.initial.validate()
        if any(s < 0 for s in self.sensor_noise):
            raise ValueError("sensor noise deviations must be non-negative")


@dataclass
class TimeSeries:
    """Uniformly sampled record of one run."""

    t: np.ndarray
    states: np.ndarray        # (N,12)
    measurements: np.ndarray  # (N,4)
    estimates: np.ndarray     # (N,4)
    commands: np.ndarray      # (N,4)
    controls: np.ndarray      # (N,4)
    forces: np.ndarray        # (N,4)

    def outputs(self) -> np.ndarray:
        """True measurable outputs: roll, pitch, yaw, altitude."""
        out = np.empty((len(self.t), 4))
        out[:, 0:3] = self.states[:, 0:3]
        out[:, 3] = -self.states[:, 11]
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(TIMESERIES_COLUMNS) + "\n")
            blocks = (self.states, self.measurements, self.estimates,
                      self.commands, self.controls, self.forces)
            for k in range(len(self.t)):
                row = [f"{self.t[k]:.17g}"]
                for block in blocks:
                    row.extend(f"{v:.17g}" for v in block[k])
                fh.write(",".join(row) + "\n")


@dataclass
class RunMetrics:
    """Tracking-quality summary of one run."""

    rms_error: np.ndarray           # per output channel
    max_abs_error: np.ndarray       # per output channel
    final_error: np.ndarray         # mean |error| over the last 10 percent
    diverged: bool
    step: dict[str, StepMetrics] = field(default_factory=dict)
    position_rms: float | None = None
    position_max_tail: float | None = None   # max position error after the transient

    def flat(self) -> dict[str, float]:
        out: dict[str, float] = {"diverged": float(self.diverged)}
        for i, ch in enumerate(CHANNELS):
            out[f"rms_{ch}"] = float(self.rms_error[i])
            out[f"max_{ch}"] = float(self.max_abs_error[i])
            out[f"final_{ch}"] = float(self.final_error[i])
        for ch, sm in self.step.items():
            out[f"overshoot_{ch}"] = sm.overshoot
            out[f"settling_{ch}"] = sm.settling_time
            out[f"rise_{ch}"] = sm.rise_time
            out[f"sse_{ch}"] = sm.steady_state_error
            out[f"settled_{ch}"] = float(sm.settled)
        if self.position_rms is not None:
            out["position_rms"] = self.position_rms
        if self.position_max_tail is not None:
            out["position_max_tail"] = self.position_max_tail
        return out

    def to_csv(self, path) -> None:
        items = self.flat()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(items.keys()) + "\n")
            fh.write(",".join(f"{v:.17g}" for v in items.values()) + "\n")

    def to_text(self) -> str:
        return "\n".join(f"{k}={v:.17g}" for k, v in self.flat().items())


def white_noise(
    mu: float, sigma: float, rng: np.random.Generator, n: int | None = None
):
    """Gaussian sample stream; an array when n is given, else a generator."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if n is not None:
        return mu + sigma * rng.standard_normal(n)

    def stream():
        while True:
            yield mu + sigma * rng.standard_normal()

    return stream()


def spiral_reference(t, omega: float = SPIRAL_OMEGA):
    """Climbing spiral position reference (x, y, z) at time t."""
    t = np.asarray(t, dtype=np.float64)
    x = 2.0 * np.sin(3.0 * omega * t) + 2.0 * np.cos(omega * t)
    y = 2.0 * np.sin(omega * t) + 2.0 * np.cos(3.0 * omega * t)
    z = 0.3 * t
    return np.stack([x, y, z], axis=-1)


def spiral_guidance_arrays(t: np.ndarray, omega: float) -> np.ndarray:
    """Reference position, horizontal velocity and acceleration per step."""
    pos = spiral_reference(t, omega)
    vx = 6.0 * omega * np.cos(3.0 * omega * t) - 2.0 * omega * np.sin(omega * t)
    vy = 2.0 * omega * np.cos(omega * t) - 6.0 * omega * np.sin(3.0 * omega * t)
    ax = -18.0 * omega**2 * np.sin(3.0 * omega * t) - 2.0 * omega**2 * np.cos(omega * t)
    ay = -2.0 * omega**2 * np.sin(omega * t) - 18.0 * omega**2 * np.cos(3.0 * omega * t)
    return np.column_stack([pos, vx, vy, ax, ay])


def _gf_channel_settings(est: EstimatorConfig, channel: str) -> GfChannelSettings:
    return est.altitude if channel == "altitude" else est.attitude


def build_plan(scenario: Scenario) -> tuple[LoopPlan, LoopBuffers]:
    """Flatten a scenario into backend inputs; exposed for the benchmark."""
    scenario.validate()
    n = scenario.n_steps()
    t = np.arange(n) * scenario.dt
    params = scenario.params

    profile = scenario.profile
    use_guidance = isinstance(profile, SpiralProfile)
    if isinstance(profile, HoldProfile):
        commands = np.tile(np.asarray(profile.values, dtype=np.float64), (n, 1))
        guidance_ref = np.zeros((0, 7))
    elif isinstance(profile, StepProfile):
        commands = np.tile(np.asarray(profile.before, dtype=np.float64), (n, 1))
        commands[t >= profile.t_step] = np.asarray(profile.after, dtype=np.float64)
        guidance_ref = np.zeros((0, 7))
    elif isinstance(profile, SpiralProfile):
        commands = np.zeros((n, 4))
        commands[:, 2] = profile.yaw
        guidance_ref = spiral_guidance_arrays(t, profile.omega)
        commands[:, 3] = guidance_ref[:, 2]
    else:
        raise TypeError(f"unsupported profile {type(profile).__name__}")

    gains = np.vstack([scenario.gains[ch].as_array() for ch in CHANNELS])
    thrust_ff = params.hover_thrust if (scenario.control_enabled or scenario.hold_hover_thrust) else 0.0
    thrust_lo, thrust_hi = scenario.thrust_range or (0.0, 4.0 * params.fmax)
    tl = scenario.torque_limits
    u_limits = np.array(
        [
            [-tl[0], tl[0]],
            [-tl[1], tl[1]],
            [-tl[2], tl[2]],
            [thrust_lo - thrust_ff, thrust_hi - thrust_ff],
        ]
    )

    est = scenario.estimator
    gf_enabled = np.zeros(4, dtype=np.int64)
    gf_spread = np.ones((4, 2))
    gf_proc = np.ones((4, 2))
    gf_scale = np.ones((4, 2))
    if est is not None:
        for i, ch in enumerate(CHANNELS):
            if ch in est.channels:
                gf_enabled[i] = 1
            cfg = _gf_channel_settings(est, ch)
            gf_spread[i] = cfg.init_spread
            gf_proc[i] = cfg.process_noise
            gf_scale[i] = cfg.mutation_scale

    ss = np.random.SeedSequence(scenario.seed)
    sensor_ss, dist_ss, gf_ss = ss.spawn(3)

    dist = scenario.disturbance
    plan = LoopPlan(
        x0=scenario.initial.as_array(),
        n_steps=n,
        dt=scenario.dt,
        params=params.as_array(),
        commands=commands,
        guidance_ref=guidance_ref,
        use_guidance=use_guidance,
        guidance_gains=np.array(
            [scenario.guidance.kp, scenario.guidance.kd, scenario.guidance.tilt_limit]
        ),
        control_enabled=scenario.control_enabled,
        gains=gains,
        u_limits=u_limits,
        thrust_ff=thrust_ff,
        sensor_sigma=np.asarray(scenario.sensor_noise, dtype=np.float64),
        dist_enabled=dist is not None,
        dist_channel=dist.channel if dist else 0,
        dist_start=dist.start if dist else 0.0,
        dist_mu=dist.mu if dist else 0.0,
        dist_sigma=dist.sigma if dist else 0.0,
        gf_enabled=gf_enabled,
        gf_pop=est.population if est else 2,
        gf_gens=est.generations if est else 1,
        gf_elite=est.elite if est else 1,
        gf_mut_rate=est.mutation_rate if est else 0.0,
        gf_init_spread=gf_spread,
        gf_proc_std=gf_proc,
        gf_mut_scale=gf_scale,
        gf_meas_std=np.asarray(scenario.sensor_noise, dtype=np.float64),
        diverge_limit=DIVERGENCE_LIMIT,
        sensor_bg=np.random.PCG64(sensor_ss),
        dist_bg=np.random.PCG64(dist_ss),
        gf_bg=np.random.PCG64(gf_ss),
    )
    return plan, LoopBuffers.allocate(n)


def run_scenario(
    scenario: Scenario, backend: str | None = None
) -> tuple[TimeSeries, RunMetrics]:
    """Simulate one scenario and summarize its tracking quality."""
    plan, buffers = build_plan(scenario)
    loop = backends.get_backend(backend)
    n_done, diverged = loop.run_closed_loop(plan, buffers)

    t = np.arange(n_done) * scenario.dt
    series = TimeSeries(
        t=t,
        states=buffers.states[:n_done].copy(),
        measurements=buffers.measurements[:n_done].copy(),
        estimates=buffers.estimates[:n_done].copy(),
        commands=buffers.commands[:n_done].copy(),
        controls=buffers.controls[:n_done].copy(),
        forces=buffers.forces[:n_done].copy(),
    )
    metrics = tracking_error(series)
    metrics.diverged = diverged

    if isinstance(scenario.profile, StepProfile) and not diverged:
        outputs = series.outputs()
        seg = series.t >= scenario.profile.t_step
        if np.any(seg):
            for i, ch in enumerate(CHANNELS):
                before = scenario.profile.before[i]
                after = scenario.profile.after[i]
                if after != before:
                    metrics.step[ch] = step_metrics(
                        series.t[seg], outputs[seg, i], initial=before, target=after
                    )
    if isinstance(scenario.profile, SpiralProfile) and n_done > 0:
        ref = spiral_reference(series.t, scenario.profile.omega)
        pos = series.states[:, 9:12].copy()
        pos[:, 2] = -pos[:, 2]   # z reference is altitude
        err = np.linalg.norm(pos - ref, axis=1)
        metrics.position_rms = float(np.sqrt(np.mean(err**2)))
        tail = series.t >= 5.0
        if np.any(tail):
            metrics.position_max_tail = float(np.max(err[tail]))
    return series, metrics


def tracking_error(series: TimeSeries) -> RunMetrics:
    """Per-channel RMS/max tracking error plus the final-window mean error."""
    if len(series.t) == 0:
        raise ValueError("empty time series")
    err = series.commands - series.outputs()
    n_tail = max(1, int(math.ceil(0.1 * len(series.t))))
    return RunMetrics(
        rms_error=np.sqrt(np.mean(err**2, axis=0)),
        max_abs_error=np.max(np.abs(err), axis=0),
        final_error=np.mean(np.abs(err[-n_tail:]), axis=0),
        diverged=False,
    )
