import math
from dataclasses import replace

import numpy as np
import pytest

from wlcsim import freq_domain as fd
from wlcsim import stability as st
from wlcsim.ideal import ideal_poles
from wlcsim.params import derive_effective, nominal_params, pump_power_for_g_ratio, with_g_ratio


def test_arm_allpass_is_unit_modulus(nominal):
    om = 2 * math.pi * np.logspace(0, 6, 300)
    t = st._t_cav(om, nominal)
    assert np.max(np.abs(np.abs(t) - 1.0)) < 1e-12


def test_open_loop_passive_limit(nominal, effective):
    om = 2 * math.pi * np.array([10.0, 1e3, 1e5])
    m = st.open_loop(om, nominal, effective, nominal.omega_m0, g=0.0)
    s_s = math.sqrt(nominal.R_SRM)
    pref = np.exp(1j * om * nominal.tau_SRC / 2.0)
    t1 = st._t_cav(om, nominal)
    t2 = np.conj(st._t_cav(2 * nominal.omega_m0 - om, nominal))
    np.testing.assert_allclose(m[:, 0, 0], -s_s * pref * t1, rtol=1e-12)
    np.testing.assert_allclose(m[:, 1, 1], -s_s * pref * t2, rtol=1e-12)
    assert np.max(np.abs(m[:, 0, 1])) < 1e-12
    assert np.max(np.abs(m[:, 1, 0])) < 1e-12


def test_open_loop_printed_pattern(nominal, effective, pump_offset):
    # entries obey [[T, T+s],[-s-T, -2s-T]] up to the common phase factor
    om = 2 * math.pi * np.array([50.0, 500.0])
    m = st.open_loop(om, nominal, effective, pump_offset)
    s_s = math.sqrt(nominal.R_SRM)
    pref = np.exp(1j * om * nominal.tau_SRC / 2.0)
    t1 = st._t_cav(om, nominal)
    t2 = np.conj(st._t_cav(2 * pump_offset - om, nominal))
    t_opt = m[:, 0, 0] / (pref * t1)
    np.testing.assert_allclose(m[:, 0, 1] / (pref * t2), t_opt + s_s, rtol=1e-9)
    np.testing.assert_allclose(m[:, 1, 0] / (pref * t1), -s_s - t_opt, rtol=1e-9)
    np.testing.assert_allclose(m[:, 1, 1] / (pref * t2), -2 * s_s - t_opt, rtol=1e-9)


def test_closed_form_matches_numeric_return(nominal, effective, pump_offset):
    # the printed optomechanical reflection approximates the numerically
    # eliminated return of the oscillator section (resolved-sideband form)
    om = 2 * math.pi * np.array([1000.0])
    m = st.open_loop(om, nominal, effective, pump_offset)
    pref = np.exp(1j * om * nominal.tau_SRC / 2.0)
    t1 = st._t_cav(om, nominal)
    t_opt = (m[:, 0, 0] / (pref * t1))[0]
    s_s = math.sqrt(nominal.R_SRM)
    srp = fd.src_return_pair(-pump_offset + om, nominal, pump_offset)[0]
    # compare the parametric parts (minus the passive mirror) in magnitude
    assert abs(srp[0, 0] - (-s_s)) == pytest.approx(abs(t_opt + s_s), rel=0.25)


def test_signal_factor_conjugate_symmetry(nominal, effective):
    # idler decoupled (g = 0): the signal-channel loop factor obeys
    # 1 + L(-W) = conj(1 + L(W))
    om = 2 * math.pi * np.array([7.0, 77.0, 770.0])
    mp_ = st.open_loop(om, nominal, effective, nominal.omega_m0, g=0.0)
    mm_ = st.open_loop(-om, nominal, effective, nominal.omega_m0, g=0.0)
    lhs = 1.0 + mm_[:, 0, 0]
    rhs = np.conj(1.0 + mp_[:, 0, 0])
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)


def test_reference_configuration_verdicts(nominal):
    assert st.nyquist(nominal, compensate=False).verdict == "unstable"
    assert st.nyquist(nominal, compensate=True).verdict == "stable"
    assert st.nyquist(nominal, compensate=True, g_ratio=1.0).verdict in (
        "stable", "marginal",
    )
    assert st.nyquist(nominal, compensate=True, g_ratio=1.01).verdict == "unstable"
    p0 = replace(nominal, P_b=0.0)
    assert st.nyquist(p0, compensate=False).verdict == "stable"


def test_contour_shape_and_format(nominal):
    c = st.nyquist(nominal, compensate=True, n_points=4001)
    assert np.all(np.diff(c.omega) > 0)
    assert np.all(np.isfinite(c.z))
    assert c.omega[0] == -c.omega[-1]
    assert isinstance(c.winding, int)


def test_agreement_with_single_mode_poles_deep_regime(nominal):
    # short recycling cavity, resolved sidebands: the verdicts must track
    # the g_om <= omega_s rule away from the marginal point
    base = replace(
        nominal, L_SRC=4.0, T_SRM=0.002, omega_m0=10 * nominal.omega_m0
    )
    rng = np.random.default_rng(77)
    ratios = np.concatenate([
        rng.uniform(0.3, 0.95, 10), rng.uniform(1.05, 1.7, 10),
    ])
    for ratio in ratios:
        p = replace(base, P_b=pump_power_for_g_ratio(base, float(ratio)))
        verdict = st.nyquist(p, compensate=True).verdict
        ideal = ideal_poles(derive_effective(p))
        expect = "unstable" if not ideal.stable else "stable"
        assert verdict == expect, f"ratio {ratio:.3f}: {verdict} != {expect}"
