"""Flattened run description shared by the compiled and pure-Python loops."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LoopPlan:
    """Everything a backend needs to execute one closed-loop run.

    Arrays are float64 and C-contiguous; the three bit generators are
    consumed in a fixed order (sensor, disturbance, estimator) so that a
    seeded run is reproducible on either backend, bit for bit.
    """

    x0: np.ndarray                 # (12,) initial state
    n_steps: int
    dt: float
    params: np.ndarray             # (10,) m,l,g,c,ixx,iyy,izz,im,b,fmax

    commands: np.ndarray           # (N,4) references: roll,pitch,yaw (rad), altitude (m)
    guidance_ref: np.ndarray       # (N,7) x,y,z,vx,vy,ax,ay; empty when unused
    use_guidance: bool
    guidance_gains: np.ndarray     # (3,) kp_pos, kd_pos, tilt_limit (rad)

    control_enabled: bool
    gains: np.ndarray              # (4,5) kp,ki,kd,ka,tf per channel
    u_limits: np.ndarray           # (4,2) lo,hi per channel output
    thrust_ff: float               # feedforward added to the altitude channel

    sensor_sigma: np.ndarray       # (4,)
    dist_enabled: bool
    dist_channel: int              # 0 roll, 1 pitch, 2 yaw
    dist_start: float
    dist_mu: float
    dist_sigma: float

    gf_enabled: np.ndarray         # (4,) int64 flags
    gf_pop: int
    gf_gens: int
    gf_elite: int
    gf_mut_rate: float
    gf_init_spread: np.ndarray     # (4,2)
    gf_proc_std: np.ndarray        # (4,2) per propagation substep
    gf_mut_scale: np.ndarray       # (4,2)
    gf_meas_std: np.ndarray        # (4,)

    diverge_limit: float
    sensor_bg: object              # numpy BitGenerator
    dist_bg: object
    gf_bg: object


@dataclass
class LoopBuffers:
    """Preallocated per-step outputs, filled up to the returned step count."""

    states: np.ndarray       # (N,12) state at the start of each step
    measurements: np.ndarray  # (N,4)
    estimates: np.ndarray    # (N,4)
    commands: np.ndarray     # (N,4) resolved references (after guidance)
    controls: np.ndarray     # (N,4) applied torques/thrust after actuator clamping
    forces: np.ndarray       # (N,4) clamped rotor forces

    @classmethod
    def allocate(cls, n_steps: int) -> "LoopBuffers":
        return cls(
            states=np.empty((n_steps, 12)),
            measurements=np.empty((n_steps, 4)),
            estimates=np.empty((n_steps, 4)),
            commands=np.empty((n_steps, 4)),
            controls=np.empty((n_steps, 4)),
            forces=np.empty((n_steps, 4)),
        )
