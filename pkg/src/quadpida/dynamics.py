"""Nonlinear 6-DOF rigid-body model of a quadcopter.

Conventions: NED axes with body z pointing down, so altitude is ``-z_e``
and total thrust acts along ``-z_B``. State order is Euler angles
(phi, theta, psi), body rates (p, q, r), body-frame velocities (u, v, w),
inertial position (x_e, y_e, z_e). The attitude kinematics use the
ZYX Euler-angle map, which is singular at theta = +-pi/2; all operations
guard that boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .params import QuadParams

#: margin (rad) kept between |theta| and pi/2 before declaring singularity
THETA_GUARD = 1e-6

STATE_FIELDS = ("phi", "theta", "psi", "p", "q", "r", "u", "v", "w", "x_e", "y_e", "z_e")

#: indices of the reduced state [phi, theta, psi, p, q, r, w] used for linearization
REDUCED_IDX = (0, 1, 2, 3, 4, 5, 8)

#: divergence threshold used by the scenario runner
DIVERGENCE_LIMIT = 1e6


class AttitudeSingularityError(RuntimeError):
    """Pitch reached the +-pi/2 singularity of the Euler-angle kinematics."""


class NotEquilibriumError(ValueError):
    """Linearization was requested at a point that is not an equilibrium."""


class ControlInput(NamedTuple):
    """Roll/pitch/yaw torques (N m) and total thrust (N)."""

    u_phi: float
    u_theta: float
    u_psi: float
    u_t: float


class RotorForces(NamedTuple):
    """Individual rotor thrusts (N), numbered 1..4."""

    f1: float
    f2: float
    f3: float
    f4: float


@dataclass
class QuadState:
    """Full vehicle state advanced by the integrator."""

    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0
    p: float = 0.0
    q: float = 0.0
    r: float = 0.0
    u: float = 0.0
    v: float = 0.0
    w: float = 0.0
    x_e: float = 0.0
    y_e: float = 0.0
    z_e: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in STATE_FIELDS], dtype=np.float64)

    @classmethod
    def from_array(cls, x: Sequence[float]) -> "QuadState":
        if len(x) != 12:
            raise ValueError(f"state vector must have 12 components, got {len(x)}")
        return cls(**dict(zip(STATE_FIELDS, (float(v) for v in x))))

    @property
    def altitude(self) -> float:
        return -self.z_e

    def validate(self) -> None:
        values = self.as_array()
        if not np.all(np.isfinite(values)):
            raise ValueError("state contains non-finite components")
        _check_theta(self.theta)


@dataclass(frozen=True)
class LinearModel:
    """State-space model (A, B, C) about an equilibrium point."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    equilibrium: np.ndarray
    equilibrium_input: np.ndarray

    def __post_init__(self) -> None:
        n = self.a.shape[0]
        if self.a.shape != (n, n):
            raise ValueError("A must be square")
        if self.b.shape[0] != n:
            raise ValueError("B must have as many rows as A")
        if self.c.shape[1] != n:
            raise ValueError("C must have as many columns as A")

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.b.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.c.shape[0]


def _check_theta(theta: float) -> None:
    if abs(theta) >= math.pi / 2.0 - THETA_GUARD:
        raise AttitudeSingularityError(
            f"pitch angle {theta:.6f} rad is at the Euler kinematic singularity"
        )


def euler_rate_matrix(phi: float, theta: float) -> np.ndarray:
    """Map from Euler-angle rates to body rates: omega = W(phi, theta) @ d(angles)/dt."""
    s_phi, c_phi = math.sin(phi), math.cos(phi)
    s_th, c_th = math.sin(theta), math.cos(theta)
    return np.array(
        [
            [1.0, 0.0, -s_th],
            [0.0, c_phi, c_th * s_phi],
            [0.0, -s_phi, c_th * c_phi],
        ]
    )


def euler_rates_to_body_rates(angles: Sequence[float], euler_rates: Sequence[float]) -> np.ndarray:
    """Body angular rates (p, q, r) for given Euler angles and angle rates."""
    phi, theta, _ = angles
    _check_theta(theta)
    return euler_rate_matrix(phi, theta) @ np.asarray(euler_rates, dtype=np.float64)


def body_rates_to_euler_rates(angles: Sequence[float], omega: Sequence[float]) -> np.ndarray:
    """Euler-angle rates for given body rates; inverse of euler_rates_to_body_rates."""
    phi, theta, _ = angles
    _check_theta(theta)
    p, q, r = omega
    s_phi, c_phi = math.sin(phi), math.cos(phi)
    lat = q * s_phi + r * c_phi
    return np.array(
        [
            p + math.tan(theta) * lat,
            q * c_phi - r * s_phi,
            lat / math.cos(theta),
        ]
    )


def mix_forces_to_controls(forces: Sequence[float], params: QuadParams) -> ControlInput:
    """Torques and total thrust produced by the four rotors on a cross frame."""
    f1, f2, f3, f4 = forces
    return ControlInput(
        u_phi=params.l * (f2 - f4),
        u_theta=params.l * (f3 - f1),
        u_psi=params.c * (f2 - f1 + f4 - f3),
        u_t=f1 + f2 + f3 + f4,
    )


def mix_controls_to_forces(
    u: Sequence[float], params: QuadParams
) -> tuple[RotorForces, bool]:
    """Invert the rotor mixing and clamp each thrust to [0, fmax].

    Returns the clamped forces and a flag that is True when any unclamped
    force fell outside the actuator range.
    """
    u_phi, u_theta, u_psi, u_t = u
    a = u_phi / params.l
    bb = u_theta / params.l
    d4 = u_psi / params.c
    f1 = 0.25 * (u_t - d4) - 0.5 * bb
    f2 = 0.25 * (u_t + d4) + 0.5 * a
    f3 = 0.25 * (u_t - d4) + 0.5 * bb
    f4 = 0.25 * (u_t + d4) - 0.5 * a
    fmax = params.fmax
    saturated = False
    clamped = []
    for f in (f1, f2, f3, f4):
        if f < 0.0:
            saturated = True
            f = 0.0
        elif f > fmax:
            saturated = True
            f = fmax
        clamped.append(f)
    return RotorForces(*clamped), saturated


def residual_rotor_speed(forces: Sequence[float], params: QuadParams) -> float:
    """Alternating sum of rotor speeds, -w1 + w2 - w3 + w4, with wi = sqrt(Fi / b)."""
    f1, f2, f3, f4 = forces
    b = params.b
    return (
        -math.sqrt(f1 / b)
        + math.sqrt(f2 / b)
        - math.sqrt(f3 / b)
        + math.sqrt(f4 / b)
    )


def gyro_disturbance(p: float, q: float, omega_r: float, params: QuadParams) -> np.ndarray:
    """Angular-acceleration disturbance from residual propeller momentum."""
    return np.array([q * params.im * omega_r, -p * params.im * omega_r, 0.0])


def derivatives(
    x: Sequence[float],
    u: Sequence[float],
    d: Sequence[float],
    params: QuadParams,
) -> np.ndarray:
    """Time derivative of the 12-component state under controls u and disturbance d.

    ``u`` is (u_phi, u_theta, u_psi, u_t); ``d`` is the angular-acceleration
    disturbance entering the moment equations.
    """
    phi, theta, psi, p, q, r, vu, vv, vw, _, _, _ = x
    u_phi, u_theta, u_psi, u_t = u
    d_phi, d_theta, d_psi = d
    _check_theta(theta)

    s_phi, c_phi = math.sin(phi), math.cos(phi)
    s_th, c_th = math.sin(theta), math.cos(theta)
    s_ps, c_ps = math.sin(psi), math.cos(psi)
    g = params.g

    lat = q * s_phi + r * c_phi
    phi_dot = p + math.tan(theta) * lat
    theta_dot = q * c_phi - r * s_phi
    psi_dot = lat / c_th

    p_dot = ((params.iyy - params.izz) * q * r + u_phi + d_phi) / params.ixx
    q_dot = ((params.izz - params.ixx) * p * r + u_theta + d_theta) / params.iyy
    r_dot = ((params.ixx - params.iyy) * p * q + u_psi + d_psi) / params.izz

    u_dot = r * vv - q * vw - g * s_th
    v_dot = p * vw - r * vu + g * s_phi * c_th
    w_dot = q * vu - p * vv + g * c_th * c_phi - u_t / params.m

    x_dot = c_th * c_ps * vu + (s_phi * s_th * c_ps - c_phi * s_ps) * vv + (c_phi * s_th * c_ps + s_phi * s_ps) * vw
    y_dot = c_th * s_ps * vu + (s_phi * s_th * s_ps + c_phi * c_ps) * vv + (c_phi * s_th * s_ps - s_phi * c_ps) * vw
    z_dot = -s_th * vu + s_phi * c_th * vv + c_phi * c_th * vw

    return np.array(
        [phi_dot, theta_dot, psi_dot, p_dot, q_dot, r_dot,
         u_dot, v_dot, w_dot, x_dot, y_dot, z_dot]
    )


def _resolve(provider, x):
    return np.asarray(provider(x) if callable(provider) else provider, dtype=np.float64)


def step_rk4(
    x: Sequence[float],
    control: Sequence[float] | Callable[[np.ndarray], Sequence[float]],
    disturbance: Sequence[float] | Callable[[np.ndarray], Sequence[float]] | None,
    dt: float,
    params: QuadParams,
) -> np.ndarray:
    """Advance the state one step with classical fourth-order Runge-Kutta.

    ``control`` and ``disturbance`` may be fixed vectors (zero-order hold) or
    callables of the intermediate state, re-evaluated at every stage.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=np.float64)
    if disturbance is None:
        disturbance = np.zeros(3)

    def f(xi: np.ndarray) -> np.ndarray:
        return derivatives(xi, _resolve(control, xi), _resolve(disturbance, xi), params)

    k1 = f(x)
    k2 = f(x + (0.5 * dt) * k1)
    k3 = f(x + (0.5 * dt) * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def hover_equilibrium(params: QuadParams, altitude: float = 0.0) -> tuple[QuadState, ControlInput]:
    """Level hover at the given altitude with thrust balancing gravity."""
    state = QuadState(z_e=-altitude)
    return state, ControlInput(0.0, 0.0, 0.0, params.m * params.g)


def default_output_matrix() -> np.ndarray:
    """Output selector for the reduced model: roll, pitch, yaw and climb rate.

    Altitude itself is not a component of the reduced state, so the fourth
    output is the climb rate -w; integrating it through the tracking
    augmentation recovers the altitude deviation.
    """
    c = np.zeros((4, 7))
    c[0, 0] = 1.0
    c[1, 1] = 1.0
    c[2, 2] = 1.0
    c[3, 6] = -1.0
    return c


def reduced_derivatives(
    x7: Sequence[float], u: Sequence[float], params: QuadParams,
    template: np.ndarray | None = None,
) -> np.ndarray:
    """Derivatives of the reduced state [phi, theta, psi, p, q, r, w].

    Remaining components are held at the template values (zero by default),
    matching the hover-neighbourhood model used for control design.
    """
    full = np.zeros(12) if template is None else template.copy()
    for i, idx in enumerate(REDUCED_IDX):
        full[idx] = x7[i]
    dx = derivatives(full, u, np.zeros(3), params)
    return dx[list(REDUCED_IDX)]


def linearize(
    eq: QuadState | Sequence[float],
    u_eq: Sequence[float],
    params: QuadParams,
    output_matrix: np.ndarray | None = None,
    tol: float = 1e-6,
) -> LinearModel:
    """Jacobian model of the reduced dynamics about an equilibrium point.

    Central finite differences with per-component steps 1e-6 * max(1, |x_i|).
    Raises NotEquilibriumError when the reduced derivatives at (eq, u_eq)
    are not negligible.
    """
    eq_full = eq.as_array() if isinstance(eq, QuadState) else np.asarray(eq, dtype=np.float64)
    u_eq = np.asarray(u_eq, dtype=np.float64)
    x7 = eq_full[list(REDUCED_IDX)]

    f0 = reduced_derivatives(x7, u_eq, params, template=eq_full)
    if np.max(np.abs(f0)) >= tol:
        raise NotEquilibriumError(
            f"reduced derivatives have magnitude {np.max(np.abs(f0)):.3e} at the requested point"
        )

    n, m = 7, 4
    a = np.zeros((n, n))
    for j in range(n):
        h = 1e-6 * max(1.0, abs(x7[j]))
        xp, xm = x7.copy(), x7.copy()
        xp[j] += h
        xm[j] -= h
        a[:, j] = (
            reduced_derivatives(xp, u_eq, params, template=eq_full)
            - reduced_derivatives(xm, u_eq, params, template=eq_full)
        ) / (2.0 * h)

    b = np.zeros((n, m))
    for j in range(m):
        h = 1e-6 * max(1.0, abs(u_eq[j]))
        up, um = u_eq.copy(), u_eq.copy()
        up[j] += h
        um[j] -= h
        b[:, j] = (
            reduced_derivatives(x7, up, params, template=eq_full)
            - reduced_derivatives(x7, um, params, template=eq_full)
        ) / (2.0 * h)

    c = default_output_matrix() if output_matrix is None else np.asarray(output_matrix, dtype=np.float64)
    return LinearModel(a=a, b=b, c=c, equilibrium=eq_full, equilibrium_input=u_eq)


def augment_tracking(model: LinearModel) -> LinearModel:
    """Append integral-of-output-error states for reference tracking.

    The augmented system is [[A, 0], [-C, 0]] with input block [B; 0] and
    output block [C, 0].
    """
    n, m, p = model.n_states, model.n_inputs, model.n_outputs
    a_aug = np.zeros((n + p, n + p))
    a_aug[:n, :n] = model.a
    a_aug[n:, :n] = -model.c
    b_aug = np.zeros((n + p, m))
    b_aug[:n, :] = model.b
    c_aug = np.zeros((p, n + p))
    c_aug[:, :n] = model.c
    return LinearModel(
        a=a_aug,
        b=b_aug,
        c=c_aug,
        equilibrium=model.equilibrium,
        equilibrium_input=model.equilibrium_input,
    )
