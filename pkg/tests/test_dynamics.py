import math

import numpy as np
import pytest

from quadpida.dynamics import (
    AttitudeSingularityError,
    ControlInput,
    NotEquilibriumError,
    QuadState,
    augment_tracking,
    body_rates_to_euler_rates,
    default_output_matrix,
    derivatives,
    euler_rate_matrix,
    euler_rates_to_body_rates,
    gyro_disturbance,
    hover_equilibrium,
    linearize,
    mix_controls_to_forces,
    mix_forces_to_controls,
    residual_rotor_speed,
    step_rk4,
)
from quadpida.params import QuadParams

P = QuadParams()


class TestKinematics:
    def test_identity_at_zero_attitude(self):
        omega = euler_rates_to_body_rates((0.0, 0.0, 0.0), (0.1, 0.2, 0.3))
        np.testing.assert_allclose(omega, [0.1, 0.2, 0.3], atol=1e-15)

    def test_singularity_guard(self):
        with pytest.raises(AttitudeSingularityError):
            euler_rates_to_body_rates((0.0, math.pi / 2 - 1e-7, 0.0), (1.0, 0.0, 0.0))
        with pytest.raises(AttitudeSingularityError):
            body_rates_to_euler_rates((0.0, -math.pi / 2, 0.0), (0.0, 0.0, 0.0))

    def test_first_column_is_unit_p(self):
        # roll-rate column of the kinematic matrix is (1, 0, 0) at any attitude
        omega = euler_rates_to_body_rates((0.3, 0.5, 0.0), (1.0, 0.0, 0.0))
        np.testing.assert_allclose(omega, [1.0, 0.0, 0.0], atol=1e-15)

    def test_zero_rates_map_to_zero(self):
        rates = body_rates_to_euler_rates((0.1, 0.2, 0.3), (0.0, 0.0, 0.0))
        np.testing.assert_allclose(rates, [0.0, 0.0, 0.0], atol=1e-15)

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            angles = rng.uniform([-3, -1.0, -3], [3, 1.0, 3])
            omega = rng.uniform(-5, 5, 3)
            rates = body_rates_to_euler_rates(angles, omega)
            back = euler_rates_to_body_rates(angles, rates)
            np.testing.assert_allclose(back, omega, atol=1e-12)

    def test_matrix_matches_inverse(self):
        angles = (0.4, -0.7, 1.1)
        w = euler_rate_matrix(angles[0], angles[1])
        rates = body_rates_to_euler_rates(angles, (0.3, -0.2, 0.5))
        np.testing.assert_allclose(w @ rates, [0.3, -0.2, 0.5], atol=1e-12)


class TestMixing:
    def test_symmetric_thrust_no_torque(self):
        u = mix_forces_to_controls((2.0, 2.0, 2.0, 2.0), P)
        assert u == ControlInput(0.0, 0.0, 0.0, 8.0)

    def test_single_rotor_row_entries(self):
        u = mix_forces_to_controls((0.0, 1.0, 0.0, 0.0), P)
        np.testing.assert_allclose(tuple(u), (0.2, 0.0, 3e-5, 1.0), rtol=0, atol=1e-15)

    def test_diagonal_pair(self):
        u = mix_forces_to_controls((1.0, 0.0, 1.0, 0.0), P)
        np.testing.assert_allclose(tuple(u), (0.0, 0.0, -6e-5, 2.0), rtol=0, atol=1e-15)

    def test_inverse_of_symmetric_case(self):
        forces, saturated = mix_controls_to_forces((0.0, 0.0, 0.0, 4.0), P)
        assert not saturated
        np.testing.assert_allclose(tuple(forces), (1.0, 1.0, 1.0, 1.0), atol=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            f = rng.uniform(0.0, P.fmax, 4)
            u = mix_forces_to_controls(f, P)
            back, saturated = mix_controls_to_forces(u, P)
            assert not saturated
            np.testing.assert_allclose(tuple(back), f, atol=1e-9)

    def test_negative_thrust_saturates(self):
        forces, saturated = mix_controls_to_forces((0.0, 0.0, 0.0, -1.0), P)
        assert saturated
        assert tuple(forces) == (0.0, 0.0, 0.0, 0.0)


class TestRotorDisturbance:
    def test_equal_forces_cancel(self):
        assert residual_rotor_speed((3.0, 3.0, 3.0, 3.0), P) == 0.0

    def test_single_rotor_unit_speed(self):
        assert residual_rotor_speed((0.0, P.b, 0.0, 0.0), P) == pytest.approx(1.0, abs=1e-12)

    def test_alternating_signs(self):
        assert residual_rotor_speed((P.b, 0.0, P.b, 0.0), P) == pytest.approx(-2.0, abs=1e-12)

    def test_gyro_zero_rates(self):
        np.testing.assert_array_equal(gyro_disturbance(0.0, 0.0, 123.0, P), [0.0, 0.0, 0.0])

    def test_gyro_magnitudes(self):
        np.testing.assert_allclose(
            gyro_disturbance(0.0, 1.0, 100.0, P), [8.3e-3, 0.0, 0.0], atol=1e-15
        )
        np.testing.assert_allclose(
            gyro_disturbance(2.0, 0.0, 50.0, P), [0.0, -8.3e-3, 0.0], atol=1e-15
        )


class TestDerivatives:
    def test_hover_is_equilibrium(self):
        state, u = hover_equilibrium(P, altitude=50.0)
        assert u.u_t == pytest.approx(7.848)
        dx = derivatives(state.as_array(), u, np.zeros(3), P)
        np.testing.assert_allclose(dx, np.zeros(12), atol=1e-12)

    def test_free_fall_acceleration(self):
        dx = derivatives(np.zeros(12), (0.0, 0.0, 0.0, 0.0), np.zeros(3), P)
        assert dx[8] == pytest.approx(9.81, abs=1e-15)

    def test_pure_yaw_rate_no_moment_coupling(self):
        x = np.zeros(12)
        x[5] = 1.0  # r
        dx = derivatives(x, (0.0, 0.0, 0.0, 0.0), np.zeros(3), P)
        np.testing.assert_allclose(dx[3:6], [0.0, 0.0, 0.0], atol=1e-15)

    def test_singularity_raises(self):
        x = np.zeros(12)
        x[1] = math.pi / 2
        with pytest.raises(AttitudeSingularityError):
            derivatives(x, (0.0, 0.0, 0.0, 0.0), np.zeros(3), P)


class TestIntegrator:
    def test_equilibrium_preserved(self):
        state, u = hover_equilibrium(P, altitude=50.0)
        x = state.as_array()
        for _ in range(10_000):
            x = step_rk4(x, u, None, 1e-3, P)
        assert abs(-x[11] - 50.0) < 1e-6
        np.testing.assert_allclose(x[:9], np.zeros(9), atol=1e-9)

    def test_free_fall_closed_form(self):
        x = np.zeros(12)
        for _ in range(100):
            x = step_rk4(x, (0.0, 0.0, 0.0, 0.0), None, 0.01, P)
        assert x[8] == pytest.approx(9.81, abs=1e-6)

    def test_fourth_order_convergence(self):
        # smooth forced run against a fine-step reference
        u = (0.01, -0.02, 1e-5, 7.0)

        def integrate(dt, t_end=0.5):
            x = np.zeros(12)
            for _ in range(int(round(t_end / dt))):
                x = step_rk4(x, u, None, dt, P)
            return x

        ref = integrate(1e-5)
        err_coarse = np.max(np.abs(integrate(4e-3) - ref))
        err_fine = np.max(np.abs(integrate(2e-3) - ref))
        assert err_coarse / err_fine > 10.0  # ~16x for a 4th-order scheme

    def test_free_fall_speed_monotone(self):
        x = np.zeros(12)
        speeds = []
        for _ in range(500):
            x = step_rk4(x, (0.0, 0.0, 0.0, 0.0), None, 1e-3, P)
            speeds.append(np.linalg.norm(x[6:9]))
        assert all(b >= a for a, b in zip(speeds, speeds[1:]))

    def test_callable_providers(self):
        state, u_eq = hover_equilibrium(P)
        x = step_rk4(state.as_array(), lambda s: u_eq, lambda s: np.zeros(3), 1e-3, P)
        np.testing.assert_allclose(x, state.as_array(), atol=1e-12)


class TestLinearization:
    def test_rejects_non_equilibrium(self):
        state, _ = hover_equilibrium(P)
        with pytest.raises(NotEquilibriumError):
            linearize(state, (0.0, 0.0, 0.0, 0.0), P)

    def test_thrust_column(self):
        state, u = hover_equilibrium(P)
        model = linearize(state, u, P)
        assert model.b[6, 3] == pytest.approx(-1.25, rel=1e-6)

    def test_roll_moment_row_has_no_p_dependence(self):
        state, u = hover_equilibrium(P)
        model = linearize(state, u, P)
        assert model.a[3, 3] == pytest.approx(0.0, abs=1e-8)

    def test_matches_symbolic_jacobian(self):
        sympy = pytest.importorskip("sympy")
        phi, theta, psi, p, q, r, w = sympy.symbols("phi theta psi p q r w")
        u1, u2, u3, u4 = sympy.symbols("u1 u2 u3 u4")
        g, m = P.g, P.m
        ixx, iyy, izz = P.ixx, P.iyy, P.izz
        lat = q * sympy.sin(phi) + r * sympy.cos(phi)
        f = sympy.Matrix(
            [
                p + sympy.tan(theta) * lat,
                q * sympy.cos(phi) - r * sympy.sin(phi),
                lat / sympy.cos(theta),
                ((iyy - izz) * q * r + u1) / ixx,
                ((izz - ixx) * p * r + u2) / iyy,
                ((ixx - iyy) * p * q + u3) / izz,
                g * sympy.cos(theta) * sympy.cos(phi) - u4 / m,
            ]
        )
        states = [phi, theta, psi, p, q, r, w]
        inputs = [u1, u2, u3, u4]
        subs = {s: 0 for s in states}
        subs.update({u1: 0, u2: 0, u3: 0, u4: m * g})
        a_sym = np.array(f.jacobian(states).subs(subs), dtype=np.float64)
        b_sym = np.array(f.jacobian(inputs).subs(subs), dtype=np.float64)

        state, u = hover_equilibrium(P)
        model = linearize(state, u, P)
        np.testing.assert_allclose(model.a, a_sym, atol=1e-5)
        np.testing.assert_allclose(model.b, b_sym, atol=1e-5)

    def test_secant_consistency(self):
        # finite-difference A agrees with an independent secant at a different step
        state, u = hover_equilibrium(P)
        model = linearize(state, u, P)
        from quadpida.dynamics import REDUCED_IDX, reduced_derivatives

        x7 = state.as_array()[list(REDUCED_IDX)]
        rng = np.random.default_rng(3)
        for _ in range(5):
            direction = rng.standard_normal(7)
            direction /= np.linalg.norm(direction)
            h = 1e-7
            df = (
                reduced_derivatives(x7 + h * direction, u, P)
                - reduced_derivatives(x7 - h * direction, u, P)
            ) / (2 * h)
            np.testing.assert_allclose(model.a @ direction, df, atol=1e-4)


class TestAugmentation:
    def _model(self):
        state, u = hover_equilibrium(P)
        return linearize(state, u, P)

    def test_dimensions(self):
        aug = augment_tracking(self._model())
        assert aug.a.shape == (11, 11)
        assert aug.b.shape == (11, 4)
        assert aug.c.shape == (4, 11)

    def test_block_structure(self):
        model = self._model()
        aug = augment_tracking(model)
        np.testing.assert_array_equal(aug.a[:7, :7], model.a)
        np.testing.assert_array_equal(aug.a[7:, :7], -model.c)
        np.testing.assert_array_equal(aug.a[:7, 7:], np.zeros((7, 4)))
        np.testing.assert_array_equal(aug.a[7:, 7:], np.zeros((4, 4)))
        np.testing.assert_array_equal(aug.b[7:], np.zeros((4, 4)))

    def test_output_selector(self):
        c = default_output_matrix()
        assert c.shape == (4, 7)
        np.testing.assert_array_equal(c[:3, :3], np.eye(3))
        assert c[3, 6] == -1.0


class TestQuadState:
    def test_array_round_trip(self):
        state = QuadState(phi=0.1, w=-2.0, z_e=-50.0)
        back = QuadState.from_array(state.as_array())
        assert back == state

    def test_validate_rejects_nan(self):
        state = QuadState(u=float("nan"))
        with pytest.raises(ValueError):
            state.validate()
