import math

import numpy as np
import pytest

from wlcsim.params import (
    ConfigError,
    PhysicalParams,
    apply_overrides,
    derive_effective,
    nominal_params,
    optical_spring_shift,
    parse_config,
    phase_matching_ratio,
    pump_power_for_g_ratio,
    serialize_config,
    with_g_ratio,
)


def test_nominal_effective_values():
    e = derive_effective(nominal_params())
    # frozen from direct evaluation of the closed forms
    assert e.omega_s == pytest.approx(26498.1600000479, rel=1e-12)
    assert e.g_om == pytest.approx(24525.57357939863, rel=1e-12)
    assert e.gamma == pytest.approx(37474.05725, rel=1e-12)
    assert e.alpha_sig == pytest.approx(1.3386160532915138e25, rel=1e-12)
    assert e.gamma_m == 0.0
    # the nominal point sits close to, but measurably below, the balanced
    # condition g_om = omega_s
    assert e.g_om / e.omega_s == pytest.approx(0.925557607749153, rel=1e-12)


def test_transmissivity_scaling():
    p = nominal_params()
    e0 = derive_effective(p)
    e4 = derive_effective(PhysicalParams(**{**_asdict(p), "T_ITM": 4 * p.T_ITM}))
    assert e4.omega_s == pytest.approx(2 * e0.omega_s, rel=1e-12)


def test_pump_off_zero_coupling():
    p = PhysicalParams(**{**_asdict(nominal_params()), "P_b": 0.0})
    assert derive_effective(p).g_om == 0.0
    assert optical_spring_shift(p) == 0.0


def test_spring_seed_scalings():
    p = nominal_params()
    s0 = optical_spring_shift(p)
    assert s0 > 0.0
    # frozen seed value: Table-I numbers in the analytic estimate
    assert s0 == pytest.approx(59.83268537289298, rel=1e-9)
    p2 = PhysicalParams(**{**_asdict(p), "m": 2 * p.m})
    assert optical_spring_shift(p2) == pytest.approx(s0 / 2, rel=1e-12)


def test_phase_matching_ratio_values():
    p = nominal_params()
    r = phase_matching_ratio(p)
    # frozen: with the pump power read as the filter power the nominal
    # ratio sits near (g_om/omega_s)^2 / 4, not at 1
    assert r == pytest.approx(0.21414382911047541, rel=1e-9)
    e = derive_effective(p)
    assert r == pytest.approx((e.g_om / e.omega_s) ** 2 / 4.0, rel=2e-3)
    # linear in power up to the tiny spring-seed correction to omega_m
    p2 = PhysicalParams(**{**_asdict(p), "P_b": 2 * p.P_b})
    assert phase_matching_ratio(p2) == pytest.approx(2 * r, rel=1e-3)
    p3 = PhysicalParams(**{**_asdict(p), "L_arm": 2 * p.L_arm})
    assert phase_matching_ratio(p3) == pytest.approx(2 * r, rel=1e-3)


def test_scale_consistency_of_omega_s():
    p = nominal_params()
    s = 3.7
    scaled = PhysicalParams(
        **{**_asdict(p), "L_arm": s * p.L_arm, "L_SRC": s * p.L_SRC}
    )
    assert derive_effective(scaled).omega_s == pytest.approx(
        derive_effective(p).omega_s / s, rel=1e-12
    )


def test_halfwidth_roundtrip_identity():
    p = nominal_params()
    e = derive_effective(p)
    assert e.gamma * p.tau_SRC == pytest.approx(p.T_SRM / 2.0, rel=1e-12)


def test_g_ratio_helper():
    p = nominal_params()
    for ratio in (0.5, 1.0, 1.01):
        q = with_g_ratio(p, ratio)
        e = derive_effective(q)
        assert e.g_om / e.omega_s == pytest.approx(ratio, rel=1e-12)
    assert pump_power_for_g_ratio(p, 1.0) == pytest.approx(7470.9, rel=1e-3)


def test_derived_quantities():
    p = nominal_params()
    assert p.tau_arm == pytest.approx(2 * 4000.0 / p.c, rel=1e-15)
    assert p.tau_SRC == pytest.approx(80.0 / p.c, rel=1e-15)
    assert p.R_ITM + p.T_ITM == 1.0
    assert p.gamma_m == 0.0  # Q_m = inf exactly
    q = PhysicalParams(**{**_asdict(p), "Q_m": 5000.0})
    assert q.gamma_m == pytest.approx(p.omega_m0 / 5000.0, rel=1e-12)


def test_config_roundtrip():
    p = nominal_params()
    text = serialize_config(p)
    q = parse_config(text)
    assert q == p
    # stability under a second round trip
    assert serialize_config(q) == text


def test_config_reads_inf_and_rejects_unknown():
    text = serialize_config(nominal_params())
    assert "Q_m = inf" in text
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(text + "bogus = 1\n")
    with pytest.raises(ConfigError, match="missing required"):
        parse_config("L_arm = 4000\n")


def test_validation_errors():
    d = _asdict(nominal_params())
    with pytest.raises(ConfigError):
        PhysicalParams(**{**d, "T_ITM": 1.5})
    with pytest.raises(ConfigError):
        PhysicalParams(**{**d, "L_arm": -1.0})
    with pytest.raises(ConfigError):
        PhysicalParams(**{**d, "P_b": -1.0})
    # pump off is allowed
    PhysicalParams(**{**d, "P_b": 0.0})


def test_overrides():
    p = nominal_params()
    q = apply_overrides(p, {"P_b": "3200", "lambda": "1.55e-6"})
    assert q.P_b == 3200.0
    assert q.lambda_ == 1.55e-6
    with pytest.raises(ConfigError):
        apply_overrides(p, {"nope": "1"})


def _asdict(p: PhysicalParams) -> dict:
    return {
        "L_arm": p.L_arm, "P_arm": p.P_arm, "T_ITM": p.T_ITM,
        "L_SRC": p.L_SRC, "T_SRM": p.T_SRM, "P_b": p.P_b,
        "lambda_": p.lambda_, "m": p.m, "omega_m0": p.omega_m0,
        "Q_m": p.Q_m, "c": p.c,
    }
