"""Pure-Python closed-loop stepper.

Reference implementation of the scenario loop; the compiled kernel in
``_core`` reproduces it operation for operation (same arithmetic order, same
random-stream consumption), so both backends yield bit-identical runs. Use
this one when the extension is unavailable; it is one to two orders of
magnitude slower.
"""

from __future__ import annotations

import math

import numpy as np

from .. import dynamics
from ..dynamics import AttitudeSingularityError
from ..genetic_filter import GfConfig, gf_update, make_constant_velocity_model
from ..params import QuadParams
from ..pida import PidaChannelState, PidaGains, pida_step
from .plan import LoopBuffers, LoopPlan

NAME = "python"
COMPILED = False


def run_closed_loop(plan: LoopPlan, buffers: LoopBuffers) -> tuple[int, bool]:
    """Execute the scenario loop; returns (steps recorded, diverged flag)."""
    params = QuadParams(*plan.params[:9])
    sensor = np.random.Generator(plan.sensor_bg)
    dist = np.random.Generator(plan.dist_bg)
    gf_rng = np.random.Generator(plan.gf_bg)

    gains = [
        PidaGains(
            kp=plan.gains[i, 0], ki=plan.gains[i, 1], kd=plan.gains[i, 2],
            ka=plan.gains[i, 3], tf=plan.gains[i, 4],
        )
        for i in range(4)
    ]
    pida_states = [PidaChannelState() for _ in range(4)]

    dt = plan.dt
    dt_sub = dt / plan.gf_gens
    gf_models = []
    gf_configs = []
    for i in range(4):
        gf_models.append(
            make_constant_velocity_model(dt_sub, plan.gf_proc_std[i], plan.gf_meas_std[i])
        )
        gf_configs.append(
            GfConfig(
                population_size=plan.gf_pop,
                max_generations=plan.gf_gens,
                mutation_rate=plan.gf_mut_rate,
                mutation_scale=plan.gf_mut_scale[i],
                init_spread=plan.gf_init_spread[i],
                elite_count=plan.gf_elite,
            )
        )
    gf_value = [0.0] * 4
    gf_rate = [0.0] * 4
    gf_primed = [False] * 4

    x = plan.x0.copy()
    g_acc = params.g
    kp_pos, kd_pos, tilt = plan.guidance_gains
    limit = plan.diverge_limit
    diverged = False
    n_done = 0

    for k in range(plan.n_steps):
        t = k * dt
        phi, theta, psi = x[0], x[1], x[2]
        p, q, r = x[3], x[4], x[5]
        vu, vv, vw = x[6], x[7], x[8]

        # reference resolution
        if plan.use_guidance:
            s_phi, c_phi = math.sin(phi), math.cos(phi)
            s_th, c_th = math.sin(theta), math.cos(theta)
            s_ps, c_ps = math.sin(psi), math.cos(psi)
            vx_i = c_th * c_ps * vu + (s_phi * s_th * c_ps - c_phi * s_ps) * vv \
                + (c_phi * s_th * c_ps + s_phi * s_ps) * vw
            vy_i = c_th * s_ps * vu + (s_phi * s_th * s_ps + c_phi * c_ps) * vv \
                + (c_phi * s_th * s_ps - s_phi * c_ps) * vw
            gx, gy, gz, gvx, gvy, gax, gay = plan.guidance_ref[k]
            ex = gx - x[9]
            ey = gy - x[10]
            tx = kp_pos * ex + kd_pos * (gvx - vx_i) + gax / g_acc
            ty = kp_pos * ey + kd_pos * (gvy - vy_i) + gay / g_acc
            theta_c = min(max(tx, -tilt), tilt)
            phi_c = min(max(-ty, -tilt), tilt)
            psi_c = plan.commands[k, 2]
            h_c = gz
        else:
            phi_c, theta_c, psi_c, h_c = plan.commands[k]

        # sensing: noisy roll, pitch, yaw, altitude
        truth = (phi, theta, psi, -x[11])
        meas = [truth[i] + plan.sensor_sigma[i] * sensor.standard_normal() for i in range(4)]

        # estimation
        est = [0.0] * 4
        for i in range(4):
            if plan.gf_enabled[i]:
                if not gf_primed[i]:
                    gf_value[i], gf_rate[i] = meas[i], 0.0
                    gf_primed[i] = True
                result = gf_update(
                    np.array([gf_value[i], gf_rate[i]]),
                    np.array([meas[i]]),
                    gf_models[i],
                    gf_configs[i],
                    gf_rng,
                )
                gf_value[i], gf_rate[i] = result.estimate[0], result.estimate[1]
                est[i] = gf_value[i]
            else:
                est[i] = meas[i]

        # control
        if plan.control_enabled:
            cmd = (phi_c, theta_c, psi_c, h_c)
            u_ch = [
                pida_step(
                    pida_states[i], cmd[i] - est[i], dt, gains[i],
                    plan.u_limits[i, 0], plan.u_limits[i, 1],
                )
                for i in range(4)
            ]
            u_phi, u_theta, u_psi = u_ch[0], u_ch[1], u_ch[2]
            u_t = plan.thrust_ff + u_ch[3]
        else:
            u_phi = u_theta = u_psi = 0.0
            u_t = plan.thrust_ff

        # rotor mixing with actuator clamping; the applied wrench comes from
        # the clamped forces
        f_tuple, _ = dynamics.mix_controls_to_forces((u_phi, u_theta, u_psi, u_t), params)
        f1, f2, f3, f4 = f_tuple
        ua = dynamics.mix_forces_to_controls((f1, f2, f3, f4), params)

        omega_r = dynamics.residual_rotor_speed((f1, f2, f3, f4), params)
        d_phi = q * params.im * omega_r
        d_theta = -p * params.im * omega_r
        d_psi = 0.0
        if plan.dist_enabled and t >= plan.dist_start:
            noise = plan.dist_mu + plan.dist_sigma * dist.standard_normal()
            if plan.dist_channel == 0:
                d_phi += noise
            elif plan.dist_channel == 1:
                d_theta += noise
            else:
                d_psi += noise

        buffers.states[k] = x
        buffers.measurements[k] = meas
        buffers.estimates[k] = est
        buffers.commands[k] = (phi_c, theta_c, psi_c, h_c)
        buffers.controls[k] = ua
        buffers.forces[k] = (f1, f2, f3, f4)
        n_done = k + 1

        try:
            x = _rk4(x, (ua.u_phi, ua.u_theta, ua.u_psi, ua.u_t),
                     (d_phi, d_theta, d_psi), dt, params)
        except AttitudeSingularityError:
            diverged = True
            break
        for i in range(12):
            if not abs(x[i]) <= limit:
                diverged = True
                break
        if diverged:
            break

    return n_done, diverged


def _rk4(x, u, d, dt, params):
    k1 = dynamics.derivatives(x, u, d, params)
    k2 = dynamics.derivatives(x + (0.5 * dt) * k1, u, d, params)
    k3 = dynamics.derivatives(x + (0.5 * dt) * k2, u, d, params)
    k4 = dynamics.derivatives(x + dt * k3, u, d, params)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
