import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as sp_integrate

from radialns.errors import AfterBlowupError, ConfigError, DomainError
from radialns.scaling_ode import (
    BlowupStatus,
    Kind,
    ScalingODE,
    Status,
    detect_blowup,
    energy_integral,
    integrate,
    pressureless_first_integral,
)


def scipy_reference(ode, t_eval):
    sol = sp_integrate.solve_ivp(
        lambda t, y: [y[1], ode.acceleration(y[0], y[1])],
        (0.0, t_eval[-1]),
        [ode.a0, ode.a1],
        method="DOP853",
        t_eval=t_eval,
        rtol=1e-12,
        atol=1e-14,
    )
    return sol.y[0], sol.y[1]


@pytest.mark.parametrize("a0", [1.0, 2.0, 3.0])
def test_linear_motion_vanishes_at_minus_a0_over_a1(a0):
    ode = ScalingODE(Kind.CLASSIC, 0.0, a0, -1.0)
    rep = detect_blowup(ode, 10.0, 1e-10)
    assert rep.status is BlowupStatus.FINITE_TIME_VANISH
    assert rep.t_lower <= a0 <= rep.t_upper
    assert rep.width <= 1e-8


def test_linear_motion_matches_closed_form_dense_output():
    ode = ScalingODE(Kind.CLASSIC, 0.0, 2.0, -1.0)
    traj = integrate(ode, 5.0)
    t = np.linspace(0, 1.9, 50)
    a, adot = traj.evaluate(t)
    assert np.allclose(a, 2.0 - t, atol=1e-12)
    assert np.allclose(adot, -1.0, atol=1e-12)


def test_zero_lambda_positive_velocity_exists_globally():
    ode = ScalingODE(Kind.CLASSIC, 0.0, 1.0, 0.5)
    rep = detect_blowup(ode, 10.0, 1e-10)
    assert rep.status is BlowupStatus.GLOBAL_EXISTENCE_WITNESSED


def test_classic_vanish_time_from_quadrature():
    # lam = 1, a0 = 1, a1 = 0: T = int_0^1 da / sqrt(2 ln(1/a)) = sqrt(pi / 2)
    ode = ScalingODE(Kind.CLASSIC, 1.0, 1.0, 0.0)
    rep = detect_blowup(ode, 10.0, 1e-10)
    assert rep.status is BlowupStatus.FINITE_TIME_VANISH
    assert rep.t_lower <= math.sqrt(math.pi / 2) <= rep.t_upper
    assert rep.bound_e_theta_lambda == pytest.approx(1.0)


def test_classic_energy_and_bound():
    ode = ScalingODE(Kind.CLASSIC, 1.0, 1.0, 0.0)
    traj = integrate(ode, 10.0, rel_tol=1e-12)
    assert traj.status is Status.VANISH_DETECTED
    e = energy_integral(ode, traj.a, traj.adot)
    assert np.max(np.abs(e - ode.energy_level)) < 1e-8
    assert traj.a.max() <= 1.0 + 1e-9


def test_theta1_vanish_time_closed_form():
    # a' = c - lam / a with c = a1 + lam / a0 = -1/2 gives T = 4 - 4 ln 2
    ode = ScalingODE(Kind.PRESSURELESS_THETA1, 1.0, 2.0, -1.0)
    rep = detect_blowup(ode, 20.0, 1e-10)
    assert rep.t_lower <= 4 - 4 * math.log(2) <= rep.t_upper


def test_theta1_first_integral_along_trajectory():
    ode = ScalingODE(Kind.PRESSURELESS_THETA1, 1.0, 2.0, -1.0)
    traj = integrate(ode, 10.0)
    q = pressureless_first_integral(ode, traj.a, traj.adot)
    scale = np.maximum(1.0, np.maximum(np.abs(traj.adot), ode.lam / traj.a))
    assert np.max(np.abs(q - q[0]) / scale) < 1e-9


@pytest.mark.parametrize(
    "ode",
    [
        ScalingODE(Kind.DAMPED, 0.7, 1.3, 0.2, beta=0.5),
        ScalingODE(Kind.DAMPED, -1.0, 1.0, -0.4, beta=1.5),
        ScalingODE(Kind.GENERAL_DAMPED, 0.8, 1.1, -0.3, beta=0.3, s_exponent=3.0),
        ScalingODE(Kind.GENERAL_DAMPED, -0.5, 0.9, 0.4, beta=0.0, s_exponent=0.5),
    ],
)
def test_dense_output_agrees_with_scipy_dop853(ode):
    traj = integrate(ode, 2.0)
    stop = min(2.0, 0.9 * traj.t_reach)
    t = np.linspace(0, stop, 40)
    a_ref, v_ref = scipy_reference(ode, t)
    a, v = traj.evaluate(t)
    assert np.allclose(a, a_ref, rtol=1e-8, atol=1e-10)
    assert np.allclose(v, v_ref, rtol=1e-7, atol=1e-9)


def test_dense_velocity_is_derivative_of_dense_position():
    ode = ScalingODE(Kind.CLASSIC, 1.0, 1.0, 0.3)
    traj = integrate(ode, 10.0)
    t = np.linspace(0.1, 0.8 * traj.t_reach, 30)
    h = 1e-6
    fd = (traj.evaluate(t + h)[0] - traj.evaluate(t - h)[0]) / (2 * h)
    assert np.allclose(fd, traj.evaluate(t)[1], atol=1e-7)


def test_evaluate_refuses_times_past_vanish():
    traj = integrate(ScalingODE(Kind.CLASSIC, 0.0, 1.0, -1.0), 5.0)
    with pytest.raises(AfterBlowupError):
        traj.evaluate(1.5)
    with pytest.raises(DomainError):
        traj.evaluate(-0.1)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind=Kind.CLASSIC, lam=1.0, a0=0.0, a1=0.0),
        dict(kind=Kind.CLASSIC, lam=1.0, a0=1.0, a1=0.0, beta=0.5),
        dict(kind=Kind.DAMPED, lam=1.0, a0=1.0, a1=0.0, beta=-0.5),
    ],
)
def test_invalid_ode_parameters(kwargs):
    with pytest.raises(ConfigError):
        ScalingODE(**kwargs)


def test_invalid_integration_settings():
    ode = ScalingODE(Kind.CLASSIC, 1.0, 1.0, 0.0)
    with pytest.raises(ConfigError):
        integrate(ode, -1.0)
    with pytest.raises(ConfigError):
        integrate(ode, 1.0, rel_tol=0.0)
    with pytest.raises(ConfigError):
        integrate(ode, 1.0, vanish_threshold=2.0)


def test_report_serialises_to_plain_floats():
    rep = detect_blowup(ScalingODE(Kind.CLASSIC, 1.0, 1.0, 0.0), 10.0, 1e-10)
    d = rep.to_dict()
    assert d["status"] == "finite_time_vanish"
    assert all(type(d[k]) is float for k in ("t_lower", "t_upper", "width"))


@settings(max_examples=25, deadline=None)
@given(
    lam=st.floats(0.1, 2.0),
    a0=st.floats(0.5, 2.0),
    a1=st.floats(-1.0, 1.0),
)
def test_energy_conserved_and_bounded(lam, a0, a1):
    ode = ScalingODE(Kind.CLASSIC, lam, a0, a1)
    rel_tol = 1e-12
    traj = integrate(ode, 1e5, rel_tol=rel_tol)
    assert traj.status is Status.VANISH_DETECTED
    e = energy_integral(ode, traj.a, traj.adot)
    # global drift of an explicit RK method runs to a few hundred rel_tol near a -> 0
    assert np.max(np.abs(e - ode.energy_level)) <= 1000 * rel_tol * (1 + abs(ode.energy_level))
    assert traj.a.max() <= math.exp(ode.energy_level / lam) + 1e-9


@settings(max_examples=25, deadline=None)
@given(lam=st.floats(0.1, 2.0), a0=st.floats(0.5, 2.0), a1=st.floats(-1.0, -0.05))
def test_theta1_vanishes_for_negative_initial_velocity(lam, a0, a1):
    ode = ScalingODE(Kind.PRESSURELESS_THETA1, lam, a0, a1)
    rep = detect_blowup(ode, 100.0, 1e-9)
    assert rep.status is BlowupStatus.FINITE_TIME_VANISH
    # oracle: T = int_0^a0 a / (lam - c a) da with c = a1 + lam / a0
    c = a1 + lam / a0
    T, _ = sp_integrate.quad(lambda a: a / (lam - c * a), 0.0, a0, epsabs=1e-13, epsrel=1e-12)
    assert rep.t_lower - 1e-8 <= T <= rep.t_upper + 1e-8
