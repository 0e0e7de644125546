import math

import numpy as np
import pytest

from relaxo import analytic
from relaxo.bloch import ControlWaveform, Magnetization, PulseTarget, SphericalState, from_spherical
from relaxo.errors import IntegratorInstability, InvalidArgument, NumericalError
from relaxo.trajectory import (
    IntegratorConfig,
    integrate_feedback,
    integrate_optimal,
    simulate_cartesian,
    waveform_from_trajectory,
)

LN06 = math.log(0.6)


def test_pi2_terminal_state(traj_pi2):
    assert traj_pi2.t[-1] == pytest.approx(3.6358, rel=1e-2)
    assert abs(traj_pi2.a[-1] - LN06) < 1e-3
    assert traj_pi2.theta[-1] == pytest.approx(math.pi / 2, abs=1e-12)
    assert traj_pi2.theta[0] == 1e-3


def test_pi_terminal_state(traj_pi):
    assert traj_pi.t[-1] == pytest.approx(3.8166, rel=1e-2)
    assert abs(traj_pi.a[-1] - LN06) < 1e-3
    assert traj_pi.theta[-1] == pytest.approx(math.pi - 1e-3, abs=1e-12)


def test_trajectory_grid_is_uniform(traj_pi2):
    d = np.diff(traj_pi2.t)
    assert np.max(np.abs(d - d[0])) < 1e-9 * d[0]


def test_theta_strictly_increasing(trajectories):
    for traj in trajectories.values():
        assert np.all(np.diff(traj.theta) > 0)
        assert np.all(traj.a <= 0)
        np.testing.assert_array_equal(traj.lambda_theta, traj.omega)


def test_zero_control_never_reaches_target():
    theta = [1e-3]
    th = 1e-3
    for _ in range(1000):
        # explicit Euler is plenty to see the sign of the drift
        th += 1e-3 * (0.0 - math.sin(th) * math.cos(th))
        theta.append(th)
    assert np.all(np.diff(theta) < 0)
    with pytest.raises(NumericalError):
        integrate_feedback(lambda th: 0.0, 1.0, 1e-3, math.pi / 2, 1e-2, max_steps=2000)


def test_adaptive_mode_agrees_with_rk4(traj_pi2, base_params):
    ad = integrate_optimal(PulseTarget.HalfPi, base_params, IntegratorConfig(method="adaptive"))
    assert ad.t[-1] == pytest.approx(traj_pi2.t[-1], rel=1e-8)
    assert ad.a[-1] == pytest.approx(traj_pi2.a[-1], abs=1e-8)


def test_rk4_fourth_order_on_terminal_magnitude(base_params):
    # ground truth from the antiderivative of the attenuation integrand
    k = analytic.kappa(PulseTarget.HalfPi, 0.6)
    exact = -math.asinh(math.cos(1e-3) / k)
    errs = []
    for n in (100, 200, 400):
        cfg = IntegratorConfig(dt=analytic.duration(PulseTarget.HalfPi, base_params) / n)
        errs.append(abs(integrate_optimal(PulseTarget.HalfPi, base_params, cfg).a[-1] - exact))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(12 < q < 20 for q in ratios), ratios


def test_config_validation():
    with pytest.raises(InvalidArgument):
        IntegratorConfig(dt=0.0)
    with pytest.raises(InvalidArgument):
        IntegratorConfig(method="euler")


def test_identity_resample(traj_pi2):
    w = waveform_from_trajectory(traj_pi2, traj_pi2.meta["dt"])
    assert len(w) == len(traj_pi2)
    np.testing.assert_allclose(w.omega, traj_pi2.omega, rtol=0, atol=1e-12)


def test_resample_energy_and_endpoints(traj_pi2, traj_pi):
    for traj in (traj_pi2, traj_pi):
        w = waveform_from_trajectory(traj, 0.01)
        assert w.omega[0] == traj.omega[0] and w.omega[-1] == traj.omega[-1]
        assert w.energy() == pytest.approx(traj.energy(), rel=5e-3)
        assert w.duration == pytest.approx(traj.duration, rel=1e-12)


def test_pi2_waveform_ends_at_R_kappa(traj_pi2):
    w = waveform_from_trajectory(traj_pi2)
    assert w.omega[-1] == pytest.approx(1.875, rel=1e-12)


def test_pi_waveform_starts_and_ends_small(traj_pi):
    w = waveform_from_trajectory(traj_pi)
    k = traj_pi.kappa
    assert w.omega[0] == pytest.approx(analytic.feedback_omega(1e-3, k, 1.0), rel=1e-12)
    assert w.omega[-1] == pytest.approx(analytic.feedback_omega(math.pi - 1e-3, k, 1.0), rel=1e-9)
    assert w.omega[-1] < 1e-2 and w.omega[0] < 1e-2


def test_resample_rejects_long_step(traj_pi2):
    with pytest.raises(InvalidArgument):
        waveform_from_trajectory(traj_pi2, 10.0)


def test_cartesian_zero_field():
    wave = ControlWaveform(0.0, 0.01, np.zeros(301))
    run = simulate_cartesian(wave, Magnetization(0, 0, 1), 1.0)
    np.testing.assert_array_equal(run.m[-1], [0, 0, 1])
    run = simulate_cartesian(wave, Magnetization(1, 0, 0), 1.0)
    np.testing.assert_allclose(run.m[:, 0], np.exp(-run.t), rtol=1e-9)


def test_cartesian_matches_spherical(trajectories):
    for target, traj in trajectories.items():
        wave = waveform_from_trajectory(traj)
        m0 = from_spherical(SphericalState(0.0, traj.params.eps), math.pi / 2)
        run = simulate_cartesian(wave, m0, 1.0)
        a, theta, phi = run.spherical()
        assert np.max(np.abs(theta - traj.theta)) < 1e-9
        assert np.max(np.abs(a - traj.a)) < 1e-9
        np.testing.assert_allclose(phi[1:], math.pi / 2, atol=1e-12)


def test_cartesian_from_north_pole(traj_pi2, traj_pi):
    run = simulate_cartesian(waveform_from_trajectory(traj_pi2), Magnetization(0, 0, 1), 1.0)
    assert run.final_ratio == pytest.approx(0.6, abs=1e-2)
    assert run.final_theta == pytest.approx(math.pi / 2, abs=1e-2)
    run = simulate_cartesian(waveform_from_trajectory(traj_pi), Magnetization(0, 0, 1), 1.0)
    assert run.m[-1, 2] < 0
    assert run.final_theta == pytest.approx(math.pi - 1e-3, abs=1e-2)


def test_cartesian_substeps_converge(traj_pi2):
    wave = waveform_from_trajectory(traj_pi2, 0.01)
    coarse = simulate_cartesian(wave, Magnetization(0, 0, 1), 1.0)
    fine = simulate_cartesian(wave, Magnetization(0, 0, 1), 1.0, IntegratorConfig(dt=0.001))
    assert np.max(np.abs(coarse.m - fine.m)) < 1e-6


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cartesian_blowup_is_reported():
    wave = ControlWaveform(0.0, 1.0, np.full(50, 1e200))
    with pytest.raises(IntegratorInstability):
        simulate_cartesian(wave, Magnetization(0, 0, 1), 1.0)


def test_rescaling_R_and_time(base_params):
    base = integrate_optimal(PulseTarget.Pi, base_params, IntegratorConfig(dt=1e-3))
    fast = integrate_optimal(PulseTarget.Pi, base_params.with_(R=4.0), IntegratorConfig(dt=1e-3 / 4))
    np.testing.assert_allclose(fast.t * 4.0, base.t, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(fast.theta, base.theta, atol=1e-12)
    np.testing.assert_allclose(fast.a, base.a, atol=1e-12)
