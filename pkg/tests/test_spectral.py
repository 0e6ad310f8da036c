import math

import numpy as np
import pytest

from wlcsim import spectral as sp


def test_white_noise_level():
    fs = 1.0e6
    rng = np.random.default_rng(1)
    x = rng.normal(0.0, 1.0, 1 << 21)
    spec = sp.welch_psd(x, fs, nperseg=1 << 14)
    sel = (spec.freqs > 1e3) & (spec.freqs < 4e5)
    assert np.mean(spec.values[sel]) == pytest.approx(2.0 / fs, rel=0.05)


def test_sine_integrated_peak_power():
    fs = 100e3
    a = 0.7
    f0 = 5e3
    t = np.arange(1 << 20) / fs
    x = a * np.sin(2 * math.pi * f0 * t)
    spec = sp.welch_psd(x, fs, nperseg=1 << 14)
    df = spec.freqs[1] - spec.freqs[0]
    window = np.abs(spec.freqs - f0) < 10 * df
    assert np.sum(spec.values[window]) * df == pytest.approx(a**2 / 2.0, rel=0.02)


def test_parseval():
    fs = 2.0e5
    rng = np.random.default_rng(9)
    # colored stationary input
    x = rng.normal(size=1 << 21)
    x = np.convolve(x, np.ones(5) / 5.0, mode="same")
    spec = sp.welch_psd(x, fs, nperseg=1 << 13)
    assert spec.navg >= 100
    df = spec.freqs[1] - spec.freqs[0]
    assert np.sum(spec.values) * df == pytest.approx(np.var(x), rel=0.02)


def test_csd_self_is_psd():
    fs = 1.0e5
    rng = np.random.default_rng(2)
    x = rng.normal(size=1 << 18)
    pxx = sp.welch_psd(x, fs, nperseg=1 << 12)
    pxy = sp.welch_csd(x, x, fs, nperseg=1 << 12)
    np.testing.assert_allclose(pxy.values.real, pxx.values, rtol=1e-10)
    assert np.max(np.abs(pxy.values.imag)) < 1e-12 * np.max(pxx.values)


def test_csd_hermitian_under_swap():
    fs = 1.0e5
    rng = np.random.default_rng(4)
    x = rng.normal(size=1 << 17)
    y = np.roll(x, 3) + 0.1 * rng.normal(size=x.size)
    pxy = sp.welch_csd(x, y, fs, nperseg=1 << 12)
    pyx = sp.welch_csd(y, x, fs, nperseg=1 << 12)
    np.testing.assert_allclose(pxy.values, np.conj(pyx.values), rtol=1e-10, atol=0.0)


def test_delay_phase_slope():
    fs = 1.0e5
    rng = np.random.default_rng(6)
    x = rng.normal(size=1 << 18)
    nd = 7
    y = np.roll(x, nd)  # y(t) = x(t - nd/fs)
    tf = sp.estimate_tf(x, y, fs, nperseg=1 << 12)
    sel = (tf.freqs > 1e3) & (tf.freqs < 2e4)
    # positive-frequency convention: a delay has positive phase slope
    slope = np.polyfit(tf.freqs[sel], np.unwrap(np.angle(tf.values[sel])), 1)[0]
    assert slope == pytest.approx(2 * math.pi * nd / fs, rel=1e-3)


def test_tf_flat_gain():
    fs = 5.0e4
    rng = np.random.default_rng(11)
    h = rng.normal(size=1 << 17)
    tf = sp.estimate_tf(h, 3.0 * h, fs, nperseg=1 << 11)
    sel = tf.freqs > 0
    np.testing.assert_allclose(tf.values[sel].real, 3.0, rtol=1e-9)


def test_tf_invariant_to_input_level():
    fs = 5.0e4
    rng = np.random.default_rng(13)
    h = rng.normal(size=1 << 17)
    kernel = np.array([0.4, 0.3, 0.2, 0.1])
    y = np.convolve(h, kernel, mode="same")
    t1 = sp.estimate_tf(h, y, fs, nperseg=1 << 11)
    t2 = sp.estimate_tf(5.0 * h, 5.0 * y, fs, nperseg=1 << 11)
    sel = t1.freqs > 0
    num = np.abs(t1.values[sel] - t2.values[sel])
    den = np.abs(t1.values[sel])
    assert np.max(num / den) < 1e-10


def test_averaging_reduces_scatter():
    fs = 1.0e5
    rng = np.random.default_rng(17)
    nper = 1 << 11

    def scatter(n_samples):
        x = rng.normal(size=n_samples)
        spec = sp.welch_psd(x, fs, nperseg=nper)
        sel = (spec.freqs > 2e3) & (spec.freqs < 4.5e4)
        return np.std(spec.values[sel]) / np.mean(spec.values[sel])

    # doubling the record doubles the averages: scatter falls ~1/sqrt(2)
    ratios = [scatter(1 << 21) / scatter(1 << 20) for _ in range(4)]
    assert np.mean(ratios) == pytest.approx(1.0 / math.sqrt(2.0), abs=0.1)


def test_strain_refer_pointwise_and_mask():
    freqs = np.linspace(1.0, 100.0, 50)
    s_bb = sp.Spectrum(freqs, np.ones(50), 8, 4, 200.0)
    tf = sp.Spectrum(freqs, np.full(50, 2.0 + 0.0j), 8, 4, 200.0)
    out, masked = sp.strain_refer(s_bb, tf)
    np.testing.assert_allclose(out.values, 0.25)
    assert not masked.any()

    vals = np.full(50, 2.0 + 0.0j)
    vals[7] = 1e-12
    tf2 = sp.Spectrum(freqs, vals, 8, 4, 200.0)
    out2, masked2 = sp.strain_refer(s_bb, tf2)
    assert masked2[7] and np.isnan(out2.values[7])
    assert np.count_nonzero(masked2) == 1


def test_too_short_series_raises():
    with pytest.raises(ValueError, match="too short"):
        sp.welch_psd(np.zeros(40), 1.0e3, nperseg=256)
    with pytest.raises(ValueError, match="length mismatch"):
        sp.welch_csd(np.zeros(4096), np.zeros(1024), 1e3)
