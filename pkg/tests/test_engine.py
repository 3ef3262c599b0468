"""Physics model tests. Numeric targets are spelled out inline and,
where marked, recomputed through independently coded one-liners."""

import math

import pytest
from hypothesis import given, settings, strategies as st

from canloop import engine
from canloop.engine import (
    FLOW_CHOKED,
    FLOW_TWO_BRANCH,
    FORM_COMPLEMENTED,
    FORM_VERBATIM,
    RAD_TO_RPM,
    RPM_TO_RAD,
    EngineParams,
    cylinder_flows,
    derivatives,
    derive_load_torque,
    engine_torque,
    find_equilibrium,
    full_open_area,
    intake_mass_flow,
    rk4_step,
    solve_manifold_pressure,
    stepper_for,
    throttle_angle,
    throttle_area,
    validate_params,
    volumetric_efficiency,
)
from canloop.errors import ConfigError

P = EngineParams()
OMEGA_SET = 4200.0 * RPM_TO_RAD


def test_default_parameter_table():
    assert P.r_gas == 287.0
    assert P.theta_a == 298.0
    assert P.theta_m == 340.0
    assert P.alpha_th0 == math.radians(7.9)
    assert P.d_th == 58.7e-3
    assert P.a_leak == 5.6e-6
    assert P.v_d == 2.77e-3
    assert P.v_c == 0.277e-3
    assert P.p_a == 1e5 and P.p_out == 1e5
    assert (P.gamma0, P.gamma1, P.gamma2) == (0.45, 3.42e-3, -7.7e-6)
    assert (P.eta0, P.eta1) == (0.16, 2.21e-3)
    assert (P.beta0, P.beta2) == (15.6, 0.175e-3)
    assert P.theta_e == 0.2
    assert P.h_f == 45.8e6
    assert P.kappa == 1.35
    assert P.alpha == 14.70


def test_throttle_angle_endpoints_and_midpoint():
    assert throttle_angle(0.0, P) == pytest.approx(0.13788, abs=5e-6)
    assert throttle_angle(1.0, P) == math.pi / 2.0
    assert throttle_angle(0.5, P) == pytest.approx(0.85434, abs=5e-6)
    with pytest.raises(ValueError):
        throttle_angle(-0.01, P)
    with pytest.raises(ValueError):
        throttle_angle(1.01, P)


def test_throttle_area_forms():
    rest = P.alpha_th0
    assert throttle_area(rest, P) == P.a_leak
    assert throttle_area(math.pi / 2.0, P) == pytest.approx(2.7117e-3, rel=5e-4)
    # cos(pi/2) is ~6e-17 in floats, so agreement is to the last ulp only
    assert throttle_area(math.pi / 2.0, P) == pytest.approx(full_open_area(P), rel=1e-13)
    assert throttle_area(math.pi / 2.0, P, FORM_VERBATIM) == pytest.approx(P.a_leak)
    assert throttle_area(rest, P, FORM_VERBATIM) \
        == pytest.approx(math.pi * P.d_th ** 2 / 4.0 + P.a_leak)
    # orientation: complemented opens with angle, verbatim closes
    grid = [rest + (math.pi / 2.0 - rest) * k / 8.0 for k in range(9)]
    comp = [throttle_area(a, P) for a in grid]
    verb = [throttle_area(a, P, FORM_VERBATIM) for a in grid]
    assert all(x < y for x, y in zip(comp, comp[1:]))
    assert all(x > y for x, y in zip(verb, verb[1:]))


def test_intake_flow_choked_value():
    # independent one-liner with the table constants typed afresh
    oracle = 7.46e-5 * 1e5 / math.sqrt(287.0 * 298.0) / math.sqrt(2.0)
    got = intake_mass_flow(7.46e-5, 0.4e5, P)
    assert got == pytest.approx(oracle, rel=1e-12)
    assert got == pytest.approx(1.8038e-2, rel=5e-4)


def test_intake_flow_two_branch():
    assert intake_mass_flow(7.46e-5, P.p_a, P, FLOW_TWO_BRANCH) == 0.0
    at_half = intake_mass_flow(7.46e-5, 0.5 * P.p_a, P, FLOW_TWO_BRANCH)
    choked = intake_mass_flow(7.46e-5, 0.5 * P.p_a, P, FLOW_CHOKED)
    assert at_half == choked
    # approach from above stays continuous
    just_above = intake_mass_flow(7.46e-5, 0.5 * P.p_a * (1 + 1e-12), P, FLOW_TWO_BRANCH)
    assert just_above == pytest.approx(choked, rel=1e-9)


def test_intake_flow_domain_errors():
    with pytest.raises(ValueError):
        intake_mass_flow(-1e-6, 0.4e5, P)
    with pytest.raises(ValueError):
        intake_mass_flow(7.46e-5, 0.0, P)


def test_volumetric_efficiency_values():
    speed_part = 0.45 + 3.42e-3 * 439.82 - 7.7e-6 * 439.82 ** 2
    assert speed_part == pytest.approx(0.4646, abs=5e-4)
    # at p_m = p_out the pressure factor is exactly 1
    assert volumetric_efficiency(439.82, P.p_out, P) == pytest.approx(speed_part, rel=1e-12)
    want = speed_part * (1.1 - 0.1 * 2.0 ** (1.0 / 1.35))
    assert volumetric_efficiency(439.82, 0.5e5, P) == pytest.approx(want, rel=1e-12)


def test_volumetric_efficiency_clamps_at_zero():
    # the speed polynomial goes negative above ~562 rad/s
    assert 0.45 + 3.42e-3 * 600.0 - 7.7e-6 * 600.0 ** 2 < 0.0
    assert volumetric_efficiency(600.0, 0.5e5, P) == 0.0


def test_volumetric_efficiency_domain_errors():
    with pytest.raises(ValueError):
        volumetric_efficiency(439.82, 0.0, P)
    with pytest.raises(ValueError):
        volumetric_efficiency(0.0, 0.5e5, P)


@given(st.floats(min_value=0.2e5, max_value=1.0e5),
       st.floats(min_value=150.0, max_value=550.0))
def test_mass_flow_identity(p_m, omega):
    mdot, mdot_air, mdot_fuel = cylinder_flows(p_m, omega, P)
    assert mdot_air + mdot_fuel == pytest.approx(mdot, rel=1e-12)
    if mdot_fuel > 0.0:
        assert mdot_air / mdot_fuel == pytest.approx(P.alpha, rel=1e-12)


def test_cylinder_flow_linear_in_speed():
    # dividing out the volumetric efficiency isolates the linear factor
    m1 = cylinder_flows(0.5e5, 200.0, P)[0] / volumetric_efficiency(200.0, 0.5e5, P)
    m2 = cylinder_flows(0.5e5, 400.0, P)[0] / volumetric_efficiency(400.0, 0.5e5, P)
    assert m2 == pytest.approx(2.0 * m1, rel=1e-12)


def test_cylinder_flow_independent_oracle():
    lam = volumetric_efficiency(439.82, 0.4e5, P)
    oracle = (0.4e5 / (287.0 * 340.0)) * lam * 2.77e-3 * 439.82 / (4.0 * math.pi)
    assert cylinder_flows(0.4e5, 439.82, P)[0] == pytest.approx(oracle, rel=1e-12)


def test_torque_loss_sensitivity_exact():
    import dataclasses
    bumped = dataclasses.replace(P, beta0=P.beta0 + 1.0)
    base = engine_torque(0.45e5, OMEGA_SET, P)
    less = engine_torque(0.45e5, OMEGA_SET, bumped)
    assert base - less == pytest.approx(P.v_d / (4.0 * math.pi), rel=1e-9)


def test_torque_gas_exchange_term_vanishes_at_exhaust_pressure():
    import dataclasses
    # with p_m = p_out the (p_out - p_m) loss contributes nothing:
    # shifting both pressures together must shift torque only through
    # the flow term, checked by zeroing the friction coefficients
    frictionless = dataclasses.replace(P, beta0=0.0, beta2=0.0)
    t = engine_torque(P.p_out, OMEGA_SET, frictionless)
    lam = volumetric_efficiency(OMEGA_SET, P.p_out, frictionless)
    mdot_air = (P.p_out / (P.r_gas * P.theta_m)) * lam * P.v_d * OMEGA_SET \
        / (4.0 * math.pi) * P.alpha / (P.alpha + 1.0)
    thermal = (P.eta0 + P.eta1 * OMEGA_SET) * P.h_f * mdot_air / (P.alpha * OMEGA_SET)
    assert t == pytest.approx(thermal, rel=1e-12)


def test_torque_domain_error_at_zero_speed():
    with pytest.raises(ValueError):
        engine_torque(0.45e5, 0.0, P)


def test_derivatives_structure():
    p, w, area, t_load = 0.45e5, OMEGA_SET, 7.44e-5, 132.0
    dp1, dw1 = derivatives(p, w, area, t_load, P)
    dp2, dw2 = derivatives(p, w, area, t_load + 10.0, P)
    assert dp1 == dp2
    assert dw1 - dw2 == pytest.approx(10.0 / P.theta_e, rel=1e-12)


def test_derivatives_match_component_equations():
    # assembles the state derivative from the public pieces and compares
    # against the kernel on a grid
    for p in (0.3e5, 0.45e5, 0.8e5):
        for w in (250.0, OMEGA_SET, 520.0):
            for area in (2e-5, 7.44e-5, 3e-4):
                flow_in = intake_mass_flow(area, p, P)
                _, flow_out, _ = cylinder_flows(p, w, P)
                dp_ref = P.r_gas * P.theta_m / P.v_d * (flow_in - flow_out)
                dw_ref = (engine_torque(p, w, P) - 130.0) / P.theta_e
                dp, dw = derivatives(p, w, area, 130.0, P)
                assert dp == pytest.approx(dp_ref, rel=1e-12)
                assert dw == pytest.approx(dw_ref, rel=1e-12)


def test_balanced_flows_zero_pressure_derivative():
    p_bal = solve_manifold_pressure(7.44e-5, OMEGA_SET, P)
    dp, _ = derivatives(p_bal, OMEGA_SET, 7.44e-5, 130.0, P)
    assert abs(dp) < 1e-6 * P.p_a


@pytest.mark.parametrize("omega", [300.0, 439.82, 500.0])
def test_equilibrium_residual(omega):
    p_bar, area = find_equilibrium(omega, 120.0, P)
    dp, dw = derivatives(p_bar, omega, area, 120.0, P)
    assert max(abs(dp) / P.p_a, abs(dw) / omega) < 1e-9
    assert 0.0 < p_bar <= P.p_a
    assert P.a_leak <= area <= full_open_area(P)


def test_equilibrium_torque_balance():
    p_bar, area = find_equilibrium(OMEGA_SET, 132.0, P)
    assert engine_torque(p_bar, OMEGA_SET, P) == pytest.approx(132.0, rel=1e-9)


def test_equilibrium_area_monotone_in_load():
    areas = [find_equilibrium(OMEGA_SET, t_l, P)[1] for t_l in (80.0, 132.0, 180.0)]
    assert areas[0] < areas[1] < areas[2]


def test_load_torque_literal_in_sync():
    from canloop.sim import DEFAULT_LOAD_TORQUE
    assert derive_load_torque(P) == DEFAULT_LOAD_TORQUE
    # and the stored torque really does pin the operating point
    p_bar, area = find_equilibrium(OMEGA_SET, DEFAULT_LOAD_TORQUE, P)
    assert area == pytest.approx(7.44e-5, rel=1e-9)


def test_rk4_fixed_point_at_equilibrium():
    p_bar, area = find_equilibrium(OMEGA_SET, 132.0, P)
    p1, w1 = rk4_step(p_bar, OMEGA_SET, area, 132.0, 1e-3, P)
    assert p1 == pytest.approx(p_bar, rel=1e-12)
    assert w1 == pytest.approx(OMEGA_SET, rel=1e-12)


def test_rk4_single_step_order():
    # one step from a transient state, against a 100x-finer reference
    p0, w0 = 0.40e5, 0.95 * OMEGA_SET
    area, t_load, dt = 9e-5, 132.0, 2e-3

    def take(n, h):
        p, w = p0, w0
        for _ in range(n):
            p, w = rk4_step(p, w, area, t_load, h, P)
        return p, w

    ref = take(100, dt / 100.0)
    e_full = abs(take(1, dt)[1] - ref[1])
    e_half = abs(take(2, dt / 2.0)[1] - ref[1])
    ratio = e_full / e_half
    assert 12.0 < ratio < 20.0          # 2^4 = 16 for a 4th order method


def test_rk4_requires_positive_dt():
    with pytest.raises(ValueError):
        rk4_step(0.45e5, OMEGA_SET, 7.44e-5, 132.0, 0.0, P)


def test_open_loop_run_stays_physical():
    p_bar, area = find_equilibrium(OMEGA_SET, 132.0, P)
    p, w = p_bar, OMEGA_SET
    worst_dev = 0.0
    for k in range(10_000):
        p, w = rk4_step(p, w, area, 132.0, 1e-3, P)
        assert 0.0 < p <= P.p_a
        assert w > 0.0
        if k < 5000:
            worst_dev = max(worst_dev, abs(w - OMEGA_SET) * RAD_TO_RPM)
    assert worst_dev < 1.0              # rpm, over the first 5 s


def test_stepper_cache_reuse():
    assert stepper_for(P) is stepper_for(P)


def test_validate_params_rejects_bad_sets():
    import dataclasses
    validate_params(P)
    with pytest.raises(ConfigError):
        validate_params(dataclasses.replace(P, theta_e=-0.2))
    with pytest.raises(ConfigError):
        validate_params(dataclasses.replace(P, v_c=3e-3))
    with pytest.raises(ConfigError):
        validate_params(dataclasses.replace(P, alpha_th0=2.0))
    # construction itself stays permissive so diagnostics can run
    assert EngineParams(theta_e=-0.2).theta_e == -0.2


def test_rpm_conversion_round_trip():
    assert 4200.0 * RPM_TO_RAD * RAD_TO_RPM == pytest.approx(4200.0, rel=1e-15)
    assert OMEGA_SET == pytest.approx(439.823, abs=5e-4)
