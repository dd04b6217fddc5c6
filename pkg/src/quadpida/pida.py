"""Discrete PIDA control: PID plus a filtered acceleration (second-derivative) term.

Both derivative terms pass through a first-order low-pass filter with time
constant ``tf``; the acceleration term is realized as two cascaded filtered
differentiators. Discretization is backward Euler for the filters and
trapezoidal for the integral, with conditional (frozen-integral) anti-windup.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CHANNELS = ("roll", "pitch", "yaw", "altitude")


@dataclass(frozen=True, kw_only=True)
class PidaGains:
    """Per-channel controller parameters."""

    kp: float = 1.0
    ki: float
    kd: float
    ka: float
    tf: float

    def __post_init__(self) -> None:
        for name in ("kp", "ki", "kd", "ka", "tf"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"PidaGains.{name} must be finite")
        if self.tf <= 0.0:
            raise ValueError("derivative filter time constant tf must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.kp, self.ki, self.kd, self.ka, self.tf])


def default_gains(channel: str) -> PidaGains:
    """Stock gain set per channel; kp is not part of the published table."""
    table = {
        "roll": PidaGains(kp=1.0, ki=0.1436, kd=6.5097, ka=0.5772, tf=0.0437),
        "pitch": PidaGains(kp=1.0, ki=3.6869, kd=21.2743, ka=0.3429, tf=0.0331),
        "yaw": PidaGains(kp=1.0, ki=0.0437, kd=29.9872, ka=23.5238, tf=0.0117),
        "altitude": PidaGains(kp=1.0, ki=1.00, kd=11.4676, ka=7.5114, tf=0.3752),
    }
    try:
        return table[channel]
    except KeyError:
        raise KeyError(f"unknown channel {channel!r}; expected one of {CHANNELS}") from None


@dataclass
class PidaChannelState:
    """Mutable per-channel controller memory."""

    integral: float = 0.0
    filtered_deriv: float = 0.0
    filtered_accel: float = 0.0
    prev_error: float = 0.0
    prev_filtered_deriv: float = 0.0
    primed: int = 0

    def reset(self) -> None:
        self.integral = 0.0
        self.filtered_deriv = 0.0
        self.filtered_accel = 0.0
        self.prev_error = 0.0
        self.prev_filtered_deriv = 0.0
        self.primed = 0


def derivative_filter_step(y_prev: float, u: float, dt: float, tf: float) -> float:
    """One backward-Euler step of the unit-DC-gain low-pass y' = (u - y)/tf."""
    if dt <= 0.0 or tf <= 0.0:
        raise ValueError("dt and tf must be positive")
    return (tf * y_prev + dt * u) / (tf + dt)


def pida_step(
    state: PidaChannelState,
    error: float,
    dt: float,
    gains: PidaGains,
    u_min: float = -math.inf,
    u_max: float = math.inf,
) -> float:
    """Advance one sample and return the (clamped) control output.

    On the first sample after reset the previous error is primed to the
    current one, so startup produces no derivative kick and the trapezoidal
    integral starts exact for constant errors. While the output is clamped,
    the integral state is frozen.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if state.primed == 0:
        state.prev_error = error
        state.primed = 1

    tf = gains.tf
    d_raw = (error - state.prev_error) / dt
    fd = (tf * state.filtered_deriv + dt * d_raw) / (tf + dt)
    a_raw = (fd - state.prev_filtered_deriv) / dt
    fa = (tf * state.filtered_accel + dt * a_raw) / (tf + dt)
    integral_cand = state.integral + 0.5 * dt * (error + state.prev_error)

    u = gains.kp * error + gains.ki * integral_cand + gains.kd * fd + gains.ka * fa
    if u > u_max:
        u = u_max
    elif u < u_min:
        u = u_min
    else:
        state.integral = integral_cand

    state.filtered_deriv = fd
    state.filtered_accel = fa
    state.prev_filtered_deriv = fd
    state.prev_error = error
    return u


@dataclass
class StepMetrics:
    """Step-response figures of merit."""

    overshoot: float            # percent of the step magnitude
    settling_time: float        # s from record start; inf when not settled
    rise_time: float            # s, 10 -> 90 percent; inf when never risen
    steady_state_error: float   # |mean of final 10 percent - target|
    settled: bool = True


def step_metrics(
    t: np.ndarray,
    y: np.ndarray,
    initial: float,
    target: float,
    band: float = 0.02,
) -> StepMetrics:
    """Measure a sampled step response from ``initial`` toward ``target``.

    Settling time is the instant after which the response stays inside the
    +-band * |step| envelope around the target; a response that leaves the
    envelope within the final 10 percent of the record is flagged unsettled.
    """
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if t.shape != y.shape or t.ndim != 1 or len(t) < 2:
        raise ValueError("t and y must be matching 1-D arrays with at least 2 samples")
    step = target - initial
    if step == 0.0:
        raise ValueError("step magnitude must be nonzero")
    mag = abs(step)
    sign = 1.0 if step > 0.0 else -1.0

    overshoot = max(0.0, float(np.max(sign * (y - target)))) / mag * 100.0

    t0, t_end = t[0], t[-1]
    tail_start = t0 + 0.9 * (t_end - t0)
    outside = np.abs(y - target) > band * mag
    out_idx = np.nonzero(outside)[0]
    if len(out_idx) == 0:
        settling_time, settled = 0.0, True
    else:
        last = out_idx[-1]
        if last == len(t) - 1 or t[last] > tail_start:
            settling_time, settled = math.inf, False
        else:
            settling_time, settled = float(t[last + 1] - t0), True

    lo = initial + 0.1 * step
    hi = initial + 0.9 * step
    crossed_lo = np.nonzero(sign * (y - lo) >= 0.0)[0]
    crossed_hi = np.nonzero(sign * (y - hi) >= 0.0)[0]
    if len(crossed_lo) == 0 or len(crossed_hi) == 0:
        rise_time = math.inf
    else:
        rise_time = float(t[crossed_hi[0]] - t[crossed_lo[0]])

    n_tail = max(1, int(math.ceil(0.1 * len(y))))
    sse = abs(float(np.mean(y[-n_tail:])) - target)

    return StepMetrics(
        overshoot=overshoot,
        settling_time=settling_time,
        rise_time=rise_time,
        steady_state_error=sse,
        settled=settled,
    )


def tuning_objective(
    metrics: StepMetrics,
    desired_overshoot: float = 5.0,
    desired_settling: float = 2.0,
) -> float:
    """Squared deviation of overshoot (percent) and settling time from targets.

    Unsettled responses receive a large penalty plus the residual tracking
    error so the optimizer can still rank them.
    """
    if not metrics.settled:
        return 1e6 + metrics.steady_state_error
    return (
        (desired_overshoot - metrics.overshoot) ** 2
        + (desired_settling - metrics.settling_time) ** 2
    )
