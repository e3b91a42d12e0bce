import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radialns.errors import DomainError, SupportBoundaryError
from radialns.families import (
    isothermal_damped,
    isothermal_ns,
    pressureless_theta,
    pressureless_theta1,
    solid_core_2d,
)
from radialns.residual import (
    Grid,
    ansatz_sampler,
    convergence_ratios,
    default_grid,
    discriminate_solid_core_source,
    mass_residual,
    momentum_residual_isothermal,
    momentum_residual_pressureless,
    residual_sweep,
    scaled_mass_residual,
    viscous_operator,
)

EXACT = {
    "isothermal": lambda: isothermal_ns(3, 1.0, 1.0, 0.2, 1.0, 0.1, nu=0.5),
    "isothermal_blowup": lambda: isothermal_ns(1, 0.3, 2.0, -0.5, 0.7, -0.8, nu=2.0),
    "damped": lambda: isothermal_damped(2, 1.5, -1.0, 0.1, 1.2, -0.3, 0.7, nu=0.4),
    "solid_core": lambda: solid_core_2d(2.0, -1.0, 0.9, 1.0, 0.1, 0.8, 0.3, beta=0.5, nu=0.3),
    "theta1": lambda: pressureless_theta1(2, 1.0, 1.0, 0.1, 1.0, 0.2),
    "theta_half": lambda: pressureless_theta(2, 1.0, 0.5, 1.0, 1.0, 1.0, -0.3),
    "theta2": lambda: pressureless_theta(3, 1.0, 2.0, 1.0, 1.0, 1.0, -0.5),
    "theta3": lambda: pressureless_theta(5, 0.4, 3.0, -1.5, 0.6, 1.4, 0.4),
    "theta2_damped": lambda: pressureless_theta(2, 1.0, 2.0, 1.0, 1.0, 1.0, -0.2, beta=0.6),
}


@pytest.mark.parametrize("name", sorted(EXACT))
def test_exact_families_have_small_residuals(name):
    family = EXACT[name]()
    rep = residual_sweep(family, default_grid(family))
    assert rep.max_scaled_mass < 1e-6
    assert rep.max_scaled_momentum < 1e-6


def test_corrupted_exponent_breaks_mass_equation():
    family = EXACT["isothermal"]()
    rep = residual_sweep(family, default_grid(family), corruption="exponent")
    assert rep.max_scaled_mass > 1e-2


def test_exponential_profile_breaks_theta_ne1_momentum():
    family = EXACT["theta2"]()
    rep = residual_sweep(family, default_grid(family), corruption="exp_profile")
    assert rep.max_scaled_momentum > 1e-2


def test_viscous_operator_annihilates_linear_velocity():
    def sampler(t, r):
        return np.ones_like(r), 0.37 * r

    r = np.linspace(0.1, 2.0, 7)
    for N in (1, 2, 3, 5):
        # second differences of O(1) data at h = 1e-4 carry ~1e-8 of roundoff
        assert np.max(np.abs(viscous_operator(sampler, N, 0.5, r))) < 1e-7


def test_viscous_operator_detects_curvature():
    def sampler(t, r):
        return np.ones_like(r), r**3

    # u_rr + (N-1)/r u_r - (N-1)/r^2 u = 6r + 3(N-1)r - (N-1)r for u = r^3
    N, r = 3, 0.8
    assert viscous_operator(sampler, N, 0.0, r) == pytest.approx((6 + 2 * (N - 1)) * r, rel=1e-7)


@settings(max_examples=50, deadline=None)
@given(
    N=st.sampled_from([1, 2, 3, 4, 5]),
    c=st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3),
    b=st.lists(st.floats(-0.5, 0.5), min_size=3, max_size=3),
)
def test_mass_equation_holds_for_any_profile_and_scale(N, c, b):
    def profile(x):
        return np.exp(c[0] + c[1] * x * x) * (1.5 + np.sin(c[2] * x))

    def a(t):
        return np.exp(b[0] * t + b[1] * t * t) * (1.2 + 0.4 * np.sin(b[2] * t))

    def adot(t):
        e = np.exp(b[0] * t + b[1] * t * t)
        return e * ((b[0] + 2 * b[1] * t) * (1.2 + 0.4 * np.sin(b[2] * t))
                    + 0.4 * b[2] * np.cos(b[2] * t))

    T, R = np.meshgrid(np.linspace(0.1, 1.0, 8), np.linspace(0.05, 1.5, 8), indexing="ij")
    res = scaled_mass_residual(ansatz_sampler(profile, a, adot, N), N, T, R)
    assert np.max(res) < 1e-6


def test_mass_equation_fails_for_non_ansatz_velocity():
    def sampler(t, r):
        return np.exp(-r * r), 0.3 * r * r

    assert abs(mass_residual(sampler, 2, 0.5, 0.7)) > 0.1


@pytest.mark.parametrize("name", ["isothermal", "damped", "solid_core", "theta1", "theta3"])
def test_stencils_converge_at_second_order(name):
    family = EXACT[name]()
    for t, r in [(0.15, 0.45), (0.3, 0.6), (0.25, 0.75)]:
        rm, rp = convergence_ratios(family, t, r, 1e-2)
        assert 3 <= rm <= 5 and 3 <= rp <= 5


def test_pressureless_stencil_straddling_support_edge():
    family = pressureless_theta(3, 1.0, 2.0, 1.0, 1.0, 1.0, 0.0)
    edge = np.sqrt(12.0)
    with pytest.raises(SupportBoundaryError):
        momentum_residual_pressureless(family.sampler(), 3, 1.0, 2.0, 0.0 + 1e-3, edge, 1e-4, 1e-2)


def test_point_residuals_match_sweep():
    family = EXACT["isothermal"]()
    s = family.sampler()
    m = momentum_residual_isothermal(s, 3, 1.0, 0.5, 0.0, 0.3, 0.5)
    assert abs(m) < 1e-6


def test_grid_crossing_vanish_names_bracket():
    family = isothermal_ns(3, 1.0, 1.0, 0.0, 1.0, 0.0)
    grid = Grid(0.01, 2.0, 0.1, 1.0)
    with pytest.raises(DomainError, match=r"vanish.*\[1\.2533"):
        residual_sweep(family, grid)


def test_grid_must_leave_room_for_time_stencil():
    family = EXACT["isothermal"]()
    with pytest.raises(DomainError):
        residual_sweep(family, Grid(0.0, 0.5, 0.1, 1.0))


@pytest.mark.parametrize(
    "args",
    [(0.5, 0.1, 0.1, 1.0), (0.0, 1.0, 1.0, 0.5), (0.0, 1.0, 0.1, 1.0, 1, 4)],
)
def test_grid_validation(args):
    with pytest.raises(DomainError):
        Grid(*args)


def test_radial_stencil_must_stay_off_axis():
    family = EXACT["isothermal"]()
    with pytest.raises(DomainError):
        residual_sweep(family, Grid(0.01, 0.5, 1e-4, 1.0))


def test_solid_core_source_discrimination():
    family = EXACT["solid_core"]()  # K = 2 separates all three candidates
    out = discriminate_solid_core_source(family, default_grid(family))
    assert out["pressure"]["satisfied"]
    assert not out["density"]["satisfied"]
    assert not out["printed"]["satisfied"]


def test_solid_core_density_source_coincides_at_unit_sound_speed():
    family = solid_core_2d(1.0, -1.0, 0.9, 1.0, 0.1, 0.8, 0.3)
    out = discriminate_solid_core_source(family, default_grid(family))
    assert out["pressure"]["satisfied"] and out["density"]["satisfied"]
    assert not out["printed"]["satisfied"]


def test_report_serialisation():
    family = EXACT["theta1"]()
    rep = residual_sweep(family, default_grid(family, n_t=4, n_r=3), keep_nodes=True)
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["equation"] == "pressureless"
    lines = rep.nodes_csv().splitlines()
    assert len(lines) == 1 + 12
    assert rep.passes(1e-6)


def test_scaled_residual_is_needed_near_blowup():
    # raw residuals grow like a**-(N+2) while relative accuracy is unchanged
    family = isothermal_ns(3, 1.0, 2.0, 0.5, 0.6, -1.0)
    grid = default_grid(family)
    rep = residual_sweep(family, grid)
    assert rep.max_scaled_momentum < 1e-6
    assert rep.max_abs_momentum > rep.max_scaled_momentum
