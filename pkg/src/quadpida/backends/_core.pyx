# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled closed-loop stepper.

Operation-for-operation mirror of ``pyloop``: identical arithmetic order and
identical consumption of the three PCG64 streams, compiled with
-ffp-contract=off so results match the pure-Python loop bit for bit.
"""

import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport M_PI, cos, fabs, sin, sqrt, tan
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal, random_standard_uniform

NAME = "compiled"
COMPILED = True

cdef double THETA_GUARD = 1e-6
cdef double MEAS_STD_FLOOR = 1e-12


cdef int _derivs(double* x, double u_phi, double u_theta, double u_psi, double u_t,
                 double d_phi, double d_theta, double d_psi,
                 double* par, double* out) nogil:
    cdef double phi = x[0]
    cdef double theta = x[1]
    cdef double psi = x[2]
    cdef double p = x[3]
    cdef double q = x[4]
    cdef double r = x[5]
    cdef double vu = x[6]
    cdef double vv = x[7]
    cdef double vw = x[8]
    if fabs(theta) >= M_PI / 2.0 - THETA_GUARD:
        return 1
    cdef double s_phi = sin(phi)
    cdef double c_phi = cos(phi)
    cdef double s_th = sin(theta)
    cdef double c_th = cos(theta)
    cdef double s_ps = sin(psi)
    cdef double c_ps = cos(psi)
    cdef double g = par[2]
    cdef double lat = q * s_phi + r * c_phi
    out[0] = p + tan(theta) * lat
    out[1] = q * c_phi - r * s_phi
    out[2] = lat / c_th
    out[3] = ((par[5] - par[6]) * q * r + u_phi + d_phi) / par[4]
    out[4] = ((par[6] - par[4]) * p * r + u_theta + d_theta) / par[5]
    out[5] = ((par[4] - par[5]) * p * q + u_psi + d_psi) / par[6]
    out[6] = r * vv - q * vw - g * s_th
    out[7] = p * vw - r * vu + g * s_phi * c_th
    out[8] = q * vu - p * vv + g * c_th * c_phi - u_t / par[0]
    out[9] = c_th * c_ps * vu + (s_phi * s_th * c_ps - c_phi * s_ps) * vv + (c_phi * s_th * c_ps + s_phi * s_ps) * vw
    out[10] = c_th * s_ps * vu + (s_phi * s_th * s_ps + c_phi * c_ps) * vv + (c_phi * s_th * s_ps - s_phi * c_ps) * vw
    out[11] = -s_th * vu + s_phi * c_th * vv + c_phi * c_th * vw
    return 0


cdef int _rk4(double* x, double u_phi, double u_theta, double u_psi, double u_t,
              double d_phi, double d_theta, double d_psi,
              double dt, double* par,
              double* k1, double* k2, double* k3, double* k4,
              double* xs, double* out) nogil:
    cdef int i
    if _derivs(x, u_phi, u_theta, u_psi, u_t, d_phi, d_theta, d_psi, par, k1):
        return 1
    for i in range(12):
        xs[i] = x[i] + (0.5 * dt) * k1[i]
    if _derivs(xs, u_phi, u_theta, u_psi, u_t, d_phi, d_theta, d_psi, par, k2):
        return 1
    for i in range(12):
        xs[i] = x[i] + (0.5 * dt) * k2[i]
    if _derivs(xs, u_phi, u_theta, u_psi, u_t, d_phi, d_theta, d_psi, par, k3):
        return 1
    for i in range(12):
        xs[i] = x[i] + dt * k3[i]
    if _derivs(xs, u_phi, u_theta, u_psi, u_t, d_phi, d_theta, d_psi, par, k4):
        return 1
    for i in range(12):
        out[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return 0


cdef double _pida(double* st, double e, double dt, double* gn,
                  double lo, double hi) nogil:
    # st layout: integral, filtered_deriv, filtered_accel, prev_error,
    # prev_filtered_deriv, primed
    cdef double tf = gn[4]
    cdef double d_raw, fd, a_raw, fa, integral_cand, u
    if st[5] == 0.0:
        st[3] = e
        st[5] = 1.0
    d_raw = (e - st[3]) / dt
    fd = (tf * st[1] + dt * d_raw) / (tf + dt)
    a_raw = (fd - st[4]) / dt
    fa = (tf * st[2] + dt * a_raw) / (tf + dt)
    integral_cand = st[0] + 0.5 * dt * (e + st[3])
    u = gn[0] * e + gn[1] * integral_cand + gn[2] * fd + gn[3] * fa
    if u > hi:
        u = hi
    elif u < lo:
        u = lo
    else:
        st[0] = integral_cand
    st[1] = fd
    st[2] = fa
    st[4] = fd
    st[3] = e
    return u


cdef void _stable_argsort(double* costs, long* order, int n) nogil:
    cdef int i, j
    cdef long key
    cdef double kc
    for i in range(n):
        order[i] = i
    for i in range(1, n):
        key = order[i]
        kc = costs[key]
        j = i - 1
        while j >= 0 and costs[order[j]] > kc:
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = key


cdef void _gf2(double* state, double z, double dt_sub,
               int pop_n, int gens, int n_elite, double mut_rate,
               double* spread, double* proc, double* scale, double meas_std,
               bitgen_t* bg,
               double* pop, double* newpop, double* costs,
               long* order, long* pairs) nogil:
    """Two-state constant-velocity genetic update; mirrors gf_update."""
    cdef double prior0 = state[0]
    cdef double prior1 = state[1]
    cdef double center0 = (prior0 + prior1 * dt_sub) + 0.0
    cdef double center1 = prior1 + 0.0
    cdef double wgt = 1.0 / max(meas_std, MEAS_STD_FLOOR)
    cdef int j, gen, slot, i
    cdef double w0, w1, v0, v1, diff
    cdef double champ0 = 0.0
    cdef double champ1 = 0.0
    cdef double champ_cost = 1e308
    cdef int have_champ = 0
    cdef int j_min, j_max
    cdef long a1, a2, b1, b2, pa, pb
    cdef double lam, acc
    cdef double* tmp

    for j in range(pop_n):
        pop[2 * j] = center0 + spread[0] * random_standard_normal(bg)
        pop[2 * j + 1] = center1 + spread[1] * random_standard_normal(bg)

    for gen in range(1, gens + 1):
        for j in range(pop_n):
            if gen > 1 and j < n_elite:
                w0 = 0.0
                w1 = 0.0
            else:
                w0 = proc[0] * random_standard_normal(bg)
                w1 = proc[1] * random_standard_normal(bg)
            v0 = (pop[2 * j] + pop[2 * j + 1] * dt_sub) + w0
            v1 = pop[2 * j + 1] + w1
            pop[2 * j] = v0
            pop[2 * j + 1] = v1

        for j in range(pop_n):
            diff = (pop[2 * j] - z) * wgt
            costs[j] = diff * diff

        j_min = 0
        for j in range(1, pop_n):
            if costs[j] < costs[j_min]:
                j_min = j
        if have_champ == 0 or costs[j_min] < champ_cost:
            champ_cost = costs[j_min]
            champ0 = pop[2 * j_min]
            champ1 = pop[2 * j_min + 1]
            have_champ = 1
        else:
            j_max = 0
            for j in range(1, pop_n):
                if costs[j] > costs[j_max]:
                    j_max = j
            pop[2 * j_max] = champ0
            pop[2 * j_max + 1] = champ1
            costs[j_max] = champ_cost

        if gen == gens:
            break

        _stable_argsort(costs, order, pop_n)
        for j in range(n_elite):
            newpop[2 * j] = pop[2 * order[j]]
            newpop[2 * j + 1] = pop[2 * order[j] + 1]
        for slot in range(n_elite, pop_n):
            a1 = <long>(random_standard_uniform(bg) * pop_n)
            a2 = <long>(random_standard_uniform(bg) * pop_n)
            pa = a1 if costs[a1] <= costs[a2] else a2
            b1 = <long>(random_standard_uniform(bg) * pop_n)
            b2 = <long>(random_standard_uniform(bg) * pop_n)
            pb = b1 if costs[b1] <= costs[b2] else b2
            pairs[2 * slot] = pa
            pairs[2 * slot + 1] = pb
        for slot in range(n_elite, pop_n):
            pa = pairs[2 * slot]
            pb = pairs[2 * slot + 1]
            lam = random_standard_uniform(bg)
            newpop[2 * slot] = lam * pop[2 * pa] + (1.0 - lam) * pop[2 * pb]
            newpop[2 * slot + 1] = lam * pop[2 * pa + 1] + (1.0 - lam) * pop[2 * pb + 1]
        for slot in range(n_elite, pop_n):
            if random_standard_uniform(bg) < mut_rate:
                newpop[2 * slot] = newpop[2 * slot] + scale[0] * random_standard_normal(bg)
            if random_standard_uniform(bg) < mut_rate:
                newpop[2 * slot + 1] = newpop[2 * slot + 1] + scale[1] * random_standard_normal(bg)
        tmp = pop
        pop = newpop
        newpop = tmp

    acc = 0.0
    for j in range(pop_n):
        acc += pop[2 * j]
    state[0] = acc / pop_n
    acc = 0.0
    for j in range(pop_n):
        acc += pop[2 * j + 1]
    state[1] = acc / pop_n


cdef bitgen_t* _capsule(object bit_generator):
    return <bitgen_t*> PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")


def run_closed_loop(plan, buffers):
    """Execute the scenario loop; returns (steps recorded, diverged flag)."""
    cdef double[::1] x0 = np.ascontiguousarray(plan.x0, dtype=np.float64)
    cdef double[::1] par_mv = np.ascontiguousarray(plan.params, dtype=np.float64)
    cdef double[:, ::1] commands = np.ascontiguousarray(plan.commands, dtype=np.float64)
    cdef double[:, ::1] guid
    cdef int use_guidance = 1 if plan.use_guidance else 0
    if use_guidance:
        guid = np.ascontiguousarray(plan.guidance_ref, dtype=np.float64)
    else:
        guid = np.zeros((1, 7))
    cdef double[::1] ggains = np.ascontiguousarray(plan.guidance_gains, dtype=np.float64)
    cdef int control_enabled = 1 if plan.control_enabled else 0
    cdef double[:, ::1] gains = np.ascontiguousarray(plan.gains, dtype=np.float64)
    cdef double[:, ::1] ulim = np.ascontiguousarray(plan.u_limits, dtype=np.float64)
    cdef double thrust_ff = plan.thrust_ff
    cdef double[::1] sigma = np.ascontiguousarray(plan.sensor_sigma, dtype=np.float64)
    cdef int dist_enabled = 1 if plan.dist_enabled else 0
    cdef int dist_channel = plan.dist_channel
    cdef double dist_start = plan.dist_start
    cdef double dist_mu = plan.dist_mu
    cdef double dist_sigma = plan.dist_sigma
    cdef long[::1] gf_enabled = np.ascontiguousarray(plan.gf_enabled, dtype=np.int64)
    cdef int gf_pop = plan.gf_pop
    cdef int gf_gens = plan.gf_gens
    cdef int gf_elite = plan.gf_elite
    cdef double gf_mut_rate = plan.gf_mut_rate
    cdef double[:, ::1] gf_spread = np.ascontiguousarray(plan.gf_init_spread, dtype=np.float64)
    cdef double[:, ::1] gf_proc = np.ascontiguousarray(plan.gf_proc_std, dtype=np.float64)
    cdef double[:, ::1] gf_scale = np.ascontiguousarray(plan.gf_mut_scale, dtype=np.float64)
    cdef double[::1] gf_meas = np.ascontiguousarray(plan.gf_meas_std, dtype=np.float64)
    cdef double limit = plan.diverge_limit
    cdef double dt = plan.dt
    cdef int n_steps = plan.n_steps

    cdef bitgen_t* sbg = _capsule(plan.sensor_bg)
    cdef bitgen_t* dbg = _capsule(plan.dist_bg)
    cdef bitgen_t* gbg = _capsule(plan.gf_bg)

    cdef double[:, ::1] out_states = buffers.states
    cdef double[:, ::1] out_meas = buffers.measurements
    cdef double[:, ::1] out_est = buffers.estimates
    cdef double[:, ::1] out_cmd = buffers.commands
    cdef double[:, ::1] out_ctl = buffers.controls
    cdef double[:, ::1] out_frc = buffers.forces

    # genetic-filter work arrays, shared by the four channels
    pop_arr = np.empty(2 * gf_pop)
    newpop_arr = np.empty(2 * gf_pop)
    costs_arr = np.empty(gf_pop)
    order_arr = np.empty(gf_pop, dtype=np.int64)
    pairs_arr = np.empty(2 * gf_pop, dtype=np.int64)
    cdef double[::1] pop_mv = pop_arr
    cdef double[::1] newpop_mv = newpop_arr
    cdef double[::1] costs_mv = costs_arr
    cdef long[::1] order_mv = order_arr
    cdef long[::1] pairs_mv = pairs_arr

    cdef double x[12]
    cdef double xn[12]
    cdef double k1[12]
    cdef double k2[12]
    cdef double k3[12]
    cdef double k4[12]
    cdef double xs[12]
    cdef double pida_st[24]
    cdef double gf_state[12]
    cdef double meas[4]
    cdef double est[4]
    cdef double u_ch[4]
    cdef double truth[4]
    cdef int i, k, ch
    for i in range(12):
        x[i] = x0[i]
    for i in range(24):
        pida_st[i] = 0.0
    for i in range(12):
        gf_state[i] = 0.0

    cdef double* par = &par_mv[0]
    cdef double m = par[0]
    cdef double l = par[1]
    cdef double g_acc = par[2]
    cdef double cc = par[3]
    cdef double im = par[7]
    cdef double b_coef = par[8]
    cdef double fmax = par[9]
    cdef double dt_sub = dt / gf_gens
    cdef double kp_pos = ggains[0]
    cdef double kd_pos = ggains[1]
    cdef double tilt = ggains[2]

    cdef int n_done = 0
    cdef int diverged = 0
    cdef int sing = 0
    cdef double t, phi, theta, psi, p, q, r, vu, vv, vw
    cdef double s_phi, c_phi, s_th, c_th, s_ps, c_ps
    cdef double vx_i, vy_i, ex, ey, tx, ty
    cdef double phi_c, theta_c, psi_c, h_c
    cdef double u_phi, u_theta, u_psi, u_t
    cdef double a, bb, d4, f1, f2, f3, f4
    cdef double ua_phi, ua_theta, ua_psi, ua_t
    cdef double omega_r, d_phi, d_theta, d_psi, noise

    with nogil:
        for k in range(n_steps):
            t = k * dt
            phi = x[0]
            theta = x[1]
            psi = x[2]
            p = x[3]
            q = x[4]
            r = x[5]
            vu = x[6]
            vv = x[7]
            vw = x[8]

            if use_guidance:
                s_phi = sin(phi)
                c_phi = cos(phi)
                s_th = sin(theta)
                c_th = cos(theta)
                s_ps = sin(psi)
                c_ps = cos(psi)
                vx_i = c_th * c_ps * vu + (s_phi * s_th * c_ps - c_phi * s_ps) * vv \
                    + (c_phi * s_th * c_ps + s_phi * s_ps) * vw
                vy_i = c_th * s_ps * vu + (s_phi * s_th * s_ps + c_phi * c_ps) * vv \
                    + (c_phi * s_th * s_ps - s_phi * c_ps) * vw
                ex = guid[k, 0] - x[9]
                ey = guid[k, 1] - x[10]
                tx = kp_pos * ex + kd_pos * (guid[k, 3] - vx_i) + guid[k, 5] / g_acc
                ty = kp_pos * ey + kd_pos * (guid[k, 4] - vy_i) + guid[k, 6] / g_acc
                theta_c = min(max(tx, -tilt), tilt)
                phi_c = min(max(-ty, -tilt), tilt)
                psi_c = commands[k, 2]
                h_c = guid[k, 2]
            else:
                phi_c = commands[k, 0]
                theta_c = commands[k, 1]
                psi_c = commands[k, 2]
                h_c = commands[k, 3]

            truth[0] = phi
            truth[1] = theta
            truth[2] = psi
            truth[3] = -x[11]
            for i in range(4):
                meas[i] = truth[i] + sigma[i] * random_standard_normal(sbg)

            for i in range(4):
                if gf_enabled[i]:
                    if gf_state[3 * i + 2] == 0.0:
                        gf_state[3 * i] = meas[i]
                        gf_state[3 * i + 1] = 0.0
                        gf_state[3 * i + 2] = 1.0
                    _gf2(&gf_state[3 * i], meas[i], dt_sub,
                         gf_pop, gf_gens, gf_elite, gf_mut_rate,
                         &gf_spread[i, 0], &gf_proc[i, 0], &gf_scale[i, 0], gf_meas[i],
                         gbg, &pop_mv[0], &newpop_mv[0], &costs_mv[0],
                         &order_mv[0], &pairs_mv[0])
                    est[i] = gf_state[3 * i]
                else:
                    est[i] = meas[i]

            if control_enabled:
                u_ch[0] = _pida(&pida_st[0], phi_c - est[0], dt, &gains[0, 0], ulim[0, 0], ulim[0, 1])
                u_ch[1] = _pida(&pida_st[6], theta_c - est[1], dt, &gains[1, 0], ulim[1, 0], ulim[1, 1])
                u_ch[2] = _pida(&pida_st[12], psi_c - est[2], dt, &gains[2, 0], ulim[2, 0], ulim[2, 1])
                u_ch[3] = _pida(&pida_st[18], h_c - est[3], dt, &gains[3, 0], ulim[3, 0], ulim[3, 1])
                u_phi = u_ch[0]
                u_theta = u_ch[1]
                u_psi = u_ch[2]
                u_t = thrust_ff + u_ch[3]
            else:
                u_phi = 0.0
                u_theta = 0.0
                u_psi = 0.0
                u_t = thrust_ff

            a = u_phi / l
            bb = u_theta / l
            d4 = u_psi / cc
            f1 = 0.25 * (u_t - d4) - 0.5 * bb
            f2 = 0.25 * (u_t + d4) + 0.5 * a
            f3 = 0.25 * (u_t - d4) + 0.5 * bb
            f4 = 0.25 * (u_t + d4) - 0.5 * a
            if f1 < 0.0:
                f1 = 0.0
            elif f1 > fmax:
                f1 = fmax
            if f2 < 0.0:
                f2 = 0.0
            elif f2 > fmax:
                f2 = fmax
            if f3 < 0.0:
                f3 = 0.0
            elif f3 > fmax:
                f3 = fmax
            if f4 < 0.0:
                f4 = 0.0
            elif f4 > fmax:
                f4 = fmax
            ua_phi = l * (f2 - f4)
            ua_theta = l * (f3 - f1)
            ua_psi = cc * (f2 - f1 + f4 - f3)
            ua_t = f1 + f2 + f3 + f4

            omega_r = -sqrt(f1 / b_coef) + sqrt(f2 / b_coef) - sqrt(f3 / b_coef) + sqrt(f4 / b_coef)
            d_phi = q * im * omega_r
            d_theta = -p * im * omega_r
            d_psi = 0.0
            if dist_enabled and t >= dist_start:
                noise = dist_mu + dist_sigma * random_standard_normal(dbg)
                if dist_channel == 0:
                    d_phi += noise
                elif dist_channel == 1:
                    d_theta += noise
                else:
                    d_psi += noise

            for i in range(12):
                out_states[k, i] = x[i]
            for i in range(4):
                out_meas[k, i] = meas[i]
                out_est[k, i] = est[i]
            out_cmd[k, 0] = phi_c
            out_cmd[k, 1] = theta_c
            out_cmd[k, 2] = psi_c
            out_cmd[k, 3] = h_c
            out_ctl[k, 0] = ua_phi
            out_ctl[k, 1] = ua_theta
            out_ctl[k, 2] = ua_psi
            out_ctl[k, 3] = ua_t
            out_frc[k, 0] = f1
            out_frc[k, 1] = f2
            out_frc[k, 2] = f3
            out_frc[k, 3] = f4
            n_done = k + 1

            sing = _rk4(x, ua_phi, ua_theta, ua_psi, ua_t, d_phi, d_theta, d_psi,
                        dt, par, k1, k2, k3, k4, xs, xn)
            if sing:
                diverged = 1
                break
            for i in range(12):
                x[i] = xn[i]
            for i in range(12):
                if not fabs(x[i]) <= limit:
                    diverged = 1
                    break
            if diverged:
                break

    return n_done, bool(diverged)


def rk4_step(x, u, d, double dt, params_array):
    """Single integrator step; parity helper mirroring dynamics.step_rk4."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef double[::1] par = np.ascontiguousarray(params_array, dtype=np.float64)
    out = np.empty(12)
    cdef double[::1] ov = out
    cdef double k1[12]
    cdef double k2[12]
    cdef double k3[12]
    cdef double k4[12]
    cdef double xs[12]
    if _rk4(&xv[0], uv[0], uv[1], uv[2], uv[3], dv[0], dv[1], dv[2],
            dt, &par[0], k1, k2, k3, k4, xs, &ov[0]):
        raise RuntimeError("pitch singularity during integration step")
    return out


def gf2_update(state, double z, double dt_sub, int pop_n, int gens, int n_elite,
               double mut_rate, spread, proc, scale, double meas_std, bit_generator):
    """Single two-state genetic-filter update; parity helper for gf_update."""
    cdef double[::1] st = np.ascontiguousarray(state, dtype=np.float64)
    cdef double[::1] sp = np.ascontiguousarray(spread, dtype=np.float64)
    cdef double[::1] pr = np.ascontiguousarray(proc, dtype=np.float64)
    cdef double[::1] sc = np.ascontiguousarray(scale, dtype=np.float64)
    cdef bitgen_t* bg = _capsule(bit_generator)
    pop_arr = np.empty(2 * pop_n)
    newpop_arr = np.empty(2 * pop_n)
    costs_arr = np.empty(pop_n)
    order_arr = np.empty(pop_n, dtype=np.int64)
    pairs_arr = np.empty(2 * pop_n, dtype=np.int64)
    cdef double[::1] pop_mv = pop_arr
    cdef double[::1] newpop_mv = newpop_arr
    cdef double[::1] costs_mv = costs_arr
    cdef long[::1] order_mv = order_arr
    cdef long[::1] pairs_mv = pairs_arr
    cdef double local[2]
    local[0] = st[0]
    local[1] = st[1]
    _gf2(local, z, dt_sub, pop_n, gens, n_elite, mut_rate,
         &sp[0], &pr[0], &sc[0], meas_std, bg,
         &pop_mv[0], &newpop_mv[0], &costs_mv[0], &order_mv[0], &pairs_mv[0])
    return np.array([local[0], local[1]])
