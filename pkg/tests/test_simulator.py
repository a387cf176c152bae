"""Simulator tests: truth/model equivalence, sensors, controller, scenarios."""

import numpy as np
import pytest

from quadwrench import attitude as att
from quadwrench.control import AdmittanceConfig
from quadwrench.logio import TimeSeriesLog
from quadwrench.rigid_body import VehicleParams, VehicleState, collective_thrust, motor_torques, process_step
from quadwrench.simulator import (
    ControllerGains,
    FanDisturbance,
    FanModel,
    FanTrack,
    FlightController,
    GridSurvey,
    Hover,
    RunSetup,
    Scenario,
    SensorModel,
    SteppedMass,
    mix_motor_speeds,
    run_scenario,
    truth_step,
)

PARAMS = VehicleParams()


class TestTruthStep:
    def test_identical_map_to_process_step(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            state = VehicleState(
                q=att.quat_normalize(rng.standard_normal(4)),
                omega=rng.standard_normal(3),
                pos=rng.standard_normal(3),
                vel=rng.standard_normal(3),
                tau_e=rng.standard_normal(3),  # overwritten by the wrench
                f_e=rng.standard_normal(3),
            )
            wrench = (rng.standard_normal(3), rng.standard_normal(3) * 0.1)
            speeds = rng.uniform(500, 2000, size=4)
            seeded = state.copy()
            seeded.f_e, seeded.tau_e = np.array(wrench[0]), np.array(wrench[1])
            np.testing.assert_array_equal(
                truth_step(state, speeds, wrench, PARAMS).as_vector(),
                process_step(seeded, speeds, None, PARAMS).as_vector(),
            )

    def test_centered_mass_target_wrench(self):
        dist = SteppedMass(mass=0.053, offset_body=[0, 0, 0], onset_s=7.0)
        state = VehicleState.at_rest(pos=(0, 0, 1))
        f, tau = dist.wrench(8.0, state)
        np.testing.assert_allclose(f, [0, 0, -0.053 * 9.81])
        np.testing.assert_allclose(tau, np.zeros(3))
        f0, tau0 = dist.wrench(6.9, state)
        np.testing.assert_allclose(np.concatenate([f0, tau0]), np.zeros(6))

    def test_offset_mass_torque_geometry(self):
        dist = SteppedMass(mass=0.053, offset_body=[0.13, 0, 0], onset_s=0.0)
        state = VehicleState.at_rest(pos=(0, 0, 1))
        f, tau = dist.wrench(1.0, state)
        np.testing.assert_allclose(tau, [0.0, 0.053 * 9.81 * 0.13, 0.0], atol=1e-12)
        # yawed vehicle: torque follows the body into the global frame
        state.q = att.quat_from_axis_angle([0, 0, 1], np.pi / 2)
        _, tau_yawed = dist.wrench(1.0, state)
        np.testing.assert_allclose(tau_yawed, [-0.053 * 9.81 * 0.13, 0.0, 0.0], atol=1e-12)

    def test_fan_injection_matches_field(self):
        fan = FanModel(position=[0, 0, 1])
        dist = FanDisturbance(fan=fan)
        state = VehicleState.at_rest(pos=(1.0, 0.5, 1.0))
        f, tau = dist.wrench(0.0, state)
        f_ref, tau_ref = fan.wrench_at(state.pos)
        np.testing.assert_array_equal(f, f_ref)
        np.testing.assert_array_equal(tau, tau_ref)


class TestFanModel:
    def test_torque_antisymmetric(self):
        fan = FanModel(position=[0, 0, 1])
        rng = np.random.default_rng(1)
        for _ in range(200):
            x = rng.uniform(0.1, 3.0)
            y = rng.uniform(-2.0, 2.0)
            _, tau_plus = fan.wrench_at([x, y, 1.0])
            _, tau_minus = fan.wrench_at([x, -y, 1.0])
            assert abs(tau_plus[2] + tau_minus[2]) < 1e-12

    def test_torque_zero_on_axis_and_peak_location(self):
        fan = FanModel(position=[0, 0, 1])
        _, tau = fan.wrench_at([1.0, 0.0, 1.0])
        assert tau[2] == 0.0
        ys = np.linspace(0.0, 2.0, 2001)
        tz = np.array([fan.wrench_at([1.0, y, 1.0])[1][2] for y in ys])
        assert ys[np.argmax(np.abs(tz))] == pytest.approx(fan.torque_peak_radius, abs=2e-3)
        assert np.abs(tz).max() == pytest.approx(fan.torque_peak, rel=1e-9)

    def test_axial_force_non_negative_and_decaying(self):
        fan = FanModel(position=[0, 0, 1])
        forces = [fan.wrench_at([d, 0.2, 1.0])[0] for d in (0.3, 0.8, 1.5, 2.5)]
        mags = [np.linalg.norm(f) for f in forces]
        assert all(m >= 0 for m in mags)
        assert np.all(np.diff(mags) < 0)
        for f in forces:
            np.testing.assert_allclose(f / np.linalg.norm(f), [1, 0, 0], atol=1e-12)

    def test_nothing_behind_the_fan(self):
        fan = FanModel(position=[0, 0, 1])
        f, tau = fan.wrench_at([-0.5, 0.3, 1.0])
        np.testing.assert_array_equal(np.concatenate([f, tau]), np.zeros(6))


class TestSensorModel:
    def test_noiseless_equals_truth(self):
        sensor = SensorModel(pos_std=0.0, att_std_mrp=0.0, quant_bits=0)
        state = VehicleState.at_rest(pos=(1, 2, 3), q=att.quat_from_axis_angle([0, 0, 1], 0.4))
        m = sensor.sample_pose(state, np.random.default_rng(0), 0.0)
        np.testing.assert_array_equal(m.pos, state.pos)
        np.testing.assert_allclose(m.q, state.q, atol=1e-15)
        np.testing.assert_array_equal(sensor.quantize_speeds(np.array([1003.0, 7.0, 0.0, 2549.0])),
                                      [1003.0, 7.0, 0.0, 2549.0])

    def test_position_noise_statistics(self):
        sensor = SensorModel(pos_std=0.01, att_std_mrp=0.0)
        rng = np.random.default_rng(2)
        state = VehicleState.at_rest(pos=(0, 0, 1))
        draws = np.array([sensor.sample_pose(state, rng, 0.0).pos for _ in range(10_000)])
        np.testing.assert_allclose(draws.std(axis=0), 0.01, rtol=0.05)

    def test_eight_bit_quantization(self):
        sensor = SensorModel(quant_bits=8, omega_max=2550.0)
        np.testing.assert_array_equal(
            sensor.quantize_speeds(np.array([1003.0, 1006.0, 0.0, 3000.0])),
            [1000.0, 1010.0, 0.0, 2550.0],
        )


class TestFlightController:
    def test_hover_equilibrium_commands_hover_speeds(self):
        ctrl = FlightController(PARAMS)
        state = VehicleState.at_rest(pos=(0, 0, 1))
        speeds = ctrl.command(state, np.array([0, 0, 1.0]))
        assert collective_thrust(PARAMS, speeds) == pytest.approx(PARAMS.mass * 9.81, rel=1e-9)
        np.testing.assert_allclose(motor_torques(PARAMS, speeds), np.zeros(3), atol=1e-12)

    def test_step_response_settles_fast_without_overshoot(self):
        # tuning oracle: simulated 0.1 m step in x
        ctrl = FlightController(PARAMS)
        state = VehicleState.at_rest(pos=(0, 0, 1))
        ref = np.array([0.1, 0.0, 1.0])
        xs = []
        for _ in range(int(3.0 / PARAMS.dt)):
            speeds = ctrl.command(state, ref)
            state = truth_step(state, speeds, (np.zeros(3), np.zeros(3)), PARAMS)
            xs.append(state.pos[0])
        xs = np.asarray(xs)
        assert np.max(xs) < 0.1 * 1.2                      # overshoot < 20%
        settled = xs[int(2.0 / PARAMS.dt):]
        np.testing.assert_allclose(settled, 0.1, atol=0.005)  # within 5 mm after 2 s

    def test_hover_hold_position_error_small(self):
        ctrl = FlightController(PARAMS)
        state = VehicleState.at_rest(pos=(0, 0, 1))
        ref = np.array([0.0, 0.0, 1.0])
        errs = []
        for k in range(int(5.0 / PARAMS.dt)):
            speeds = ctrl.command(state, ref)
            state = truth_step(state, speeds, (np.zeros(3), np.zeros(3)), PARAMS)
            if k > int(1.0 / PARAMS.dt):
                errs.append(np.linalg.norm(state.pos - ref))
        assert max(errs) < 0.02

    def test_mixing_inverts_thrust_and_torque_maps(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            thrust = rng.uniform(1.0, 8.0)
            torque = rng.uniform(-0.05, 0.05, size=3)
            speeds, saturated = mix_motor_speeds(PARAMS, thrust, torque, omega_max=2550.0)
            assert not saturated
            assert collective_thrust(PARAMS, speeds) == pytest.approx(thrust, rel=1e-9)
            np.testing.assert_allclose(motor_torques(PARAMS, speeds), torque, atol=1e-12)

    def test_mixing_round_trip_within_one_quantization_step(self):
        sensor = SensorModel()
        rng = np.random.default_rng(4)
        step = 2550.0 / 255
        for _ in range(50):
            thrust = rng.uniform(2.0, 7.0)
            torque = rng.uniform(-0.03, 0.03, size=3)
            speeds, _ = mix_motor_speeds(PARAMS, thrust, torque, omega_max=2550.0)
            quant = sensor.quantize_speeds(speeds)
            # thrust error bounded by the quantization sensitivity
            sens = np.sum(2 * PARAMS.thrust_coeff * speeds * (step / 2))
            assert abs(collective_thrust(PARAMS, quant) - thrust) <= sens * 1.01

    def test_saturation_flagged(self):
        speeds, saturated = mix_motor_speeds(PARAMS, 50.0, np.zeros(3), omega_max=2550.0)
        assert saturated
        assert np.all(speeds <= 2550.0)


class TestScenarios:
    def test_same_seed_bit_identical(self):
        scen = Scenario(duration_s=2.0, seed=7, trajectory=Hover(),
                        disturbance=SteppedMass(onset_s=1.0))
        setup = RunSetup(estimators=("usque", "observer"))
        a = run_scenario(scen, setup)
        b = run_scenario(scen, RunSetup(estimators=("usque", "observer")))
        np.testing.assert_array_equal(a.to_matrix(), b.to_matrix())

    def test_different_seed_differs(self):
        base = dict(duration_s=1.0, trajectory=Hover())
        a = run_scenario(Scenario(seed=1, **base), RunSetup())
        b = run_scenario(Scenario(seed=2, **base), RunSetup())
        assert not np.array_equal(a.meas, b.meas)

    def test_row_count(self):
        log = run_scenario(Scenario(duration_s=20.0, seed=0, trajectory=Hover()), RunSetup())
        assert len(log) == 4000

    def test_grid_survey_segment_count(self):
        traj = GridSurvey(x_range=(0.0, 2.0), y_range=(0.0, 2.0), spacing=0.5, dwell_s=5.0)
        assert len(traj.segments()) == 25
        assert len(traj.cells) == 25

    def test_sensor_rate_must_divide(self):
        with pytest.raises(ValueError):
            Scenario(duration_s=1.0, sensor_rate_hz=130.0).steps_per_measurement(0.005)
        assert Scenario(duration_s=1.0, sensor_rate_hz=100.0).steps_per_measurement(0.005) == 2

    def test_measurement_dropout_rows_are_nan(self):
        log = run_scenario(Scenario(duration_s=0.5, seed=0, sensor_rate_hz=100.0,
                                    trajectory=Hover()), RunSetup())
        assert np.all(np.isnan(log.meas[0]))
        assert not np.any(np.isnan(log.meas[1]))

    def test_csv_round_trip(self, tmp_path):
        traj = GridSurvey(x_range=(1.0, 1.5), y_range=(0.0, 0.5), spacing=0.5, dwell_s=0.5,
                          travel_speed=1.0)
        scen = Scenario(duration_s=traj.duration() + 0.5, seed=3, trajectory=traj,
                        disturbance=FanDisturbance(fan=FanModel(position=[0, 0, 1])))
        log = run_scenario(scen, RunSetup(estimators=("usque", "observer")))
        path = tmp_path / "ts.csv"
        log.to_csv(path)
        with open(path) as fh:
            assert fh.readline().startswith("# quadwrench-timeseries v1")
        back = TimeSeriesLog.from_csv(path)
        np.testing.assert_allclose(back.truth, log.truth, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(back.estimates["usque"], log.estimates["usque"], rtol=1e-9, atol=1e-12)
        assert back.estimator_names() == ["usque", "observer"]
        assert len(back.segments) == len(log.segments)
        assert back.meta["seed"] == 3
