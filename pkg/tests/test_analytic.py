import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize

from relaxo import analytic
from relaxo.bloch import PulseParams, PulseTarget

HALF, PI = PulseTarget.HalfPi, PulseTarget.Pi

# high-precision (mpmath, 30 digits) reference values for R=1, r=0.6
KAPPA_PI = 3.8729833462074168852
T_PI2 = 3.6357955776452180592
T_PI = 3.8165858600554339737
T_PI2_QUAD_EPS3 = 3.6357955123762015990
E_PI2_QUAD_EPS4 = 1.5624999885110294420
E_PI_R05_QUAD_EPS4 = 2.9999999833333333593
OMEGA_QUARTER = 1.9169730060943292366


def test_kappa_values():
    assert analytic.kappa(HALF, 0.6) == pytest.approx(1.875, rel=1e-15)
    assert analytic.kappa(PI, 0.6) == pytest.approx(KAPPA_PI, rel=1e-15)


@pytest.mark.parametrize("target, turns", [(HALF, 1), (PI, 2)])
@pytest.mark.parametrize("r", [0.1, 0.37, 0.6, 0.92])
def test_kappa_solves_attenuation_equation(target, turns, r):
    root = optimize.brentq(lambda k: turns * math.asinh(1 / k) + math.log(r), 1e-6, 1e6, xtol=1e-14, rtol=1e-14)
    assert analytic.kappa(target, r) == pytest.approx(root, rel=1e-10)


def test_kappa_blows_up_near_one():
    assert analytic.kappa(HALF, 1 - 1e-9) > 1e8


@pytest.mark.parametrize("r", [0.0, 1.0, -0.2, 1.3, math.nan])
def test_kappa_rejects_bad_ratio(r):
    with pytest.raises(ValueError):
        analytic.kappa(HALF, r)


def test_feedback_law_examples():
    assert analytic.feedback_omega(math.pi / 2, 1.875, 2.0) == pytest.approx(2.0 * 1.875, rel=1e-15)
    assert analytic.feedback_omega(0.0, 1.875, 1.0) == 0.0
    assert abs(analytic.feedback_omega(math.pi, 1.875, 1.0)) < 1e-15
    assert analytic.feedback_omega(math.pi / 4, 1.875, 1.0) == pytest.approx(OMEGA_QUARTER, rel=1e-14)


@given(st.floats(0, math.pi), st.floats(1e-3, 1e3))
def test_feedback_law_nonnegative(theta, k):
    assert analytic.feedback_omega(theta, k, 1.0) >= -1e-15


def test_constraint_residual_near_zero_at_closed_form():
    k = analytic.kappa(HALF, 0.6)
    assert abs(analytic.constraint_residual(k, HALF, 0.6, 1e-6)) < 1e-5


def test_constraint_residual_sign_with_larger_kappa():
    # integrand decreases in kappa: less attenuation than required reads negative
    k = analytic.kappa(HALF, 0.6)
    assert analytic.constraint_residual(2 * k, HALF, 0.6, 1e-3) < 0
    assert analytic.constraint_residual(0.5 * k, HALF, 0.6, 1e-3) > 0


def test_constraint_residual_vanishes_as_r_to_one():
    r = 1 - 1e-7
    assert abs(analytic.constraint_residual(analytic.kappa(HALF, r), HALF, r, 1e-4)) < 1e-6


@pytest.mark.parametrize("target", [HALF, PI])
@pytest.mark.parametrize("r", np.linspace(0.05, 0.95, 19))
def test_constraint_closure_on_grid(target, r):
    k = analytic.kappa(target, r)
    assert abs(analytic.constraint_residual(k, target, r, 1e-8)) < 1e-6
    quad = analytic.constraint_residual(k, target, r, 1e-8, method="quadrature")
    assert abs(quad - analytic.constraint_residual(k, target, r, 1e-8)) < 1e-9


def test_duration_closed_form():
    p = PulseParams(1.0, 0.6, 1e-3)
    assert analytic.duration(HALF, p) == pytest.approx(T_PI2, rel=1e-13)
    assert analytic.duration(PI, p) == pytest.approx(T_PI, rel=1e-13)


def test_duration_vanishes_as_r_to_one():
    p = PulseParams(1.0, 1 - 1e-9, 1e-3)
    assert analytic.duration(HALF, p) < 1e-7
    assert analytic.duration(PI, p) < 1e-7


def test_duration_quadrature_matches_reference():
    p = PulseParams(1.0, 0.6, 1e-3)
    k = analytic.kappa(HALF, 0.6)
    t = analytic.duration_quadrature(HALF, p, k)
    assert t == pytest.approx(T_PI2_QUAD_EPS3, rel=1e-10)
    assert t == pytest.approx(T_PI2, rel=1e-2)


@pytest.mark.parametrize("target", [HALF, PI])
def test_duration_gap_shrinks_with_eps(target):
    k = analytic.kappa(target, 0.6)
    gaps = []
    for eps in (1e-2, 1e-3, 1e-4, 1e-5):
        p = PulseParams(1.0, 0.6, eps)
        gaps.append(abs(analytic.duration_quadrature(target, p, k) - analytic.duration(target, p)))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_duration_quadrature_scales_with_R():
    k = analytic.kappa(PI, 0.6)
    t1 = analytic.duration_quadrature(PI, PulseParams(1.0, 0.6, 1e-3), k)
    t2 = analytic.duration_quadrature(PI, PulseParams(2.0, 0.6, 1e-3), k)
    assert t2 == pytest.approx(t1 / 2, rel=1e-12)


def test_energy_closed_form():
    p = PulseParams(1.0, 0.6, 1e-3)
    assert analytic.energy(HALF, p) == 1.5625
    assert analytic.energy(PI, p) == pytest.approx(4.0, rel=1e-15)
    small = PulseParams(1.0, 1e-9, 1e-3)
    assert analytic.energy(HALF, small) == pytest.approx(1.0, rel=1e-8)
    assert analytic.energy(PI, small) == pytest.approx(1.0, rel=1e-8)


def test_energy_quadrature_examples():
    p = PulseParams(1.0, 0.6, 1e-4)
    e = analytic.energy_quadrature(HALF, p, analytic.kappa(HALF, 0.6))
    assert e == pytest.approx(E_PI2_QUAD_EPS4, rel=1e-10)
    assert e == pytest.approx(1.5625, rel=1e-3)
    p = PulseParams(1.0, 0.5, 1e-4)
    e = analytic.energy_quadrature(PI, p, analytic.kappa(PI, 0.5))
    assert e == pytest.approx(E_PI_R05_QUAD_EPS4, rel=1e-10)
    assert e == pytest.approx(3.0, rel=1e-3)


def test_energy_quadrature_scales_with_R():
    k = analytic.kappa(HALF, 0.6)
    e1 = analytic.energy_quadrature(HALF, PulseParams(1.0, 0.6, 1e-3), k)
    e2 = analytic.energy_quadrature(HALF, PulseParams(2.0, 0.6, 1e-3), k)
    assert e2 == pytest.approx(2 * e1, rel=1e-12)


@pytest.mark.parametrize("target", [HALF, PI])
def test_monotone_in_r(target):
    rs = np.linspace(0.02, 0.98, 200)
    ks = np.array([analytic.kappa(target, r) for r in rs])
    es = np.array([analytic.energy(target, PulseParams(1.0, r)) for r in rs])
    assert np.all(np.diff(ks) > 0)
    assert np.all(np.diff(es) > 0)


@given(st.sampled_from([HALF, PI]), st.floats(0.01, 0.99), st.floats(0.01, 100.0))
def test_scaling_identities(target, r, R):
    p1, pR = PulseParams(1.0, r, 1e-3), PulseParams(R, r, 1e-3)
    assert analytic.duration(target, pR) * R == pytest.approx(analytic.duration(target, p1), rel=1e-12)
    assert analytic.energy(target, pR) / R == pytest.approx(analytic.energy(target, p1), rel=1e-12)


def test_solution_invariants():
    for target in (HALF, PI):
        for r in (0.05, 0.5, 0.95):
            s = analytic.solve(target, PulseParams(2.0, r))
            assert s.kappa > 0 and s.duration > 0 and s.energy > s.params.R
