import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from relaxo import analytic, pmp
from relaxo.bloch import PulseTarget, Trajectory
from relaxo.errors import InvalidArgument
from relaxo.trajectory import integrate_feedback


def _external(traj, **changes):
    fields = dict(t=traj.t, theta=traj.theta, a=traj.a, omega=traj.omega, lambda_theta=traj.lambda_theta,
                  params=traj.params, target=traj.target, kappa=traj.kappa, meta=dict(traj.meta))
    fields.update(changes)
    return Trajectory(**fields)


def test_hamiltonian_vanishes_at_pole():
    for lt, la in [(0.0, 0.0), (3.0, -2.0), (1e6, 7.0)]:
        assert pmp.hamiltonian(0.0, 0.0, lt, la, 1.0) == 0.0


def test_hamiltonian_zero_along_optimum(trajectories):
    for traj in trajectories.values():
        chk = pmp.check_trajectory(traj)
        assert chk.residual_h < 1e-8
        assert chk.lambda_a == pytest.approx(0.5 * traj.kappa**2)


def test_hamiltonian_drops_off_optimal_control():
    k = analytic.kappa(PulseTarget.HalfPi, 0.6)
    th = math.pi / 4
    w = analytic.feedback_omega(th, k, 1.0)
    la = pmp.lambda_a_from_kappa(k, 1.0)
    assert abs(pmp.hamiltonian(w, th, w, la, 1.0)) < 1e-14
    assert pmp.hamiltonian(w + 0.1, th, w, la, 1.0) < 0


def test_adjoint_defect_small_on_optimum(trajectories):
    for traj in trajectories.values():
        assert pmp.adjoint_defect(traj, pmp.lambda_a_from_kappa(traj.kappa, 1.0)) < 1e-5
        assert pmp.adjoint_defect(traj, pmp.lambda_a_from_kappa(traj.kappa, 1.0), norm="rms") < 1e-6


def test_adjoint_defect_detects_wrong_kappa(traj_pi2):
    k = traj_pi2.kappa
    law = lambda x: analytic.feedback_omega(x, 1.5 * k, 1.0)  # noqa: E731
    t, theta, a = integrate_feedback(law, 1.0, 1e-3, math.pi / 2, 1e-3)
    om = law(theta)
    bad = _external(traj_pi2, t=t, theta=theta, a=a, omega=om, lambda_theta=om)
    assert pmp.adjoint_defect(bad, pmp.lambda_a_from_kappa(k, 1.0)) > 0.1


def test_adjoint_defect_constant_theta(traj_pi2):
    n = 11
    th0 = 0.7
    const = _external(
        traj_pi2, t=np.linspace(0, 1, n), theta=np.full(n, th0), a=np.zeros(n),
        omega=np.zeros(n), lambda_theta=np.zeros(n),
    )
    la = 1.3
    assert pmp.adjoint_defect(const, la) == pytest.approx(abs(la * math.sin(2 * th0)), rel=1e-12)


def test_adjoint_defect_needs_five_samples(traj_pi2):
    short = _external(
        traj_pi2, t=np.arange(4.0), theta=np.full(4, 0.5), a=np.zeros(4),
        omega=np.zeros(4), lambda_theta=np.zeros(4),
    )
    with pytest.raises(InvalidArgument):
        pmp.adjoint_defect(short, 1.0)


def test_stationarity(traj_pi2):
    assert pmp.stationarity_check(traj_pi2) == 0.0
    n = len(traj_pi2)
    ext = _external(traj_pi2, omega=np.ones(n), lambda_theta=np.full(n, 0.9))
    assert pmp.stationarity_check(ext) == pytest.approx(0.1, abs=1e-15)


@given(st.floats(1e-6, math.pi - 1e-6), st.floats(1e-3, 1e3))
def test_quadratic_identity(theta, k):
    w = analytic.feedback_omega(theta, k, 1.0)
    s, c = math.sin(theta), math.cos(theta)
    terms = (w * w, 2 * w * s * c, k * k * s * s)
    resid = terms[0] - terms[1] - terms[2]
    assert abs(resid) <= 1e-12 * max(abs(x) for x in terms) + 1e-300


@pytest.mark.parametrize("delta", [0.01, 0.1, 1.0])
def test_control_maximises_hamiltonian(trajectories, delta):
    for traj in trajectories.values():
        idx = np.linspace(0, len(traj) - 1, 50).astype(int)
        la = pmp.lambda_a_from_kappa(traj.kappa, 1.0)
        w, th, lt = traj.omega[idx], traj.theta[idx], traj.lambda_theta[idx]
        h0 = pmp.hamiltonian(w, th, lt, la, 1.0)
        for sgn in (1, -1):
            # concave in omega with curvature -1: the drop is exactly delta^2/2
            drop = h0 - pmp.hamiltonian(w + sgn * delta, th, lt, la, 1.0)
            np.testing.assert_allclose(drop, 0.5 * delta**2, rtol=1e-8)


def test_lambda_a_from_crossing(trajectories):
    for traj in trajectories.values():
        assert pmp.lambda_a_at_crossing(traj) == pytest.approx(0.5 * traj.kappa**2, rel=1e-6)


def test_costate_rate_matches_fd_on_analytic_costate(traj_pi):
    d = pmp.fd_derivative(traj_pi.t, traj_pi.lambda_theta)
    rate = pmp.costate_rate(traj_pi.theta, traj_pi.lambda_theta, 0.5 * traj_pi.kappa**2, 1.0)
    assert np.max(np.abs(d - rate)) < 1e-5


def test_fd_derivative_exact_for_quartics():
    t = np.sort(np.random.default_rng(3).uniform(0, 2, 30))
    y = 1 + t - 2 * t**2 + 0.5 * t**3 - 0.25 * t**4
    dy = 1 - 4 * t + 1.5 * t**2 - t**3
    np.testing.assert_allclose(pmp.fd_derivative(t, y), dy, atol=1e-8)


def test_check_fields_finite(traj_pi2):
    chk = pmp.check_trajectory(traj_pi2)
    assert chk.lambda_a >= 0
    assert all(math.isfinite(v) for v in chk.as_dict().values())
