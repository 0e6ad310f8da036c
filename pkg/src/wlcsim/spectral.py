"""Spectral estimation: averaged-periodogram PSD/CSD, transfer-function
identification, and strain referral.

Conventions: single-sided densities on positive frequencies; Hann window
with 50% overlap; no detrending (absolute levels matter here).  Transfer
functions are returned in the positive-frequency convention of the
frequency-domain module, where a pure delay has a positive phase slope;
estimates from sampled data are conjugated accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sig

DEFAULT_NPERSEG = 1 << 16
MIN_NPERSEG = 32


@dataclass(frozen=True)
class Spectrum:
    """Frequency grid [Hz] with values and averaging metadata."""

    freqs: np.ndarray
    values: np.ndarray
    nperseg: int
    navg: int
    fs: float

    def __post_init__(self):
        if self.freqs.shape != self.values.shape:
            raise ValueError("freqs/values shape mismatch")


def _check_length(x: np.ndarray, nperseg: int):
    if x.shape[0] < 2 * MIN_NPERSEG or x.shape[0] < 2 * nperseg:
        raise ValueError(
            f"series too short for averaging: {x.shape[0]} samples"
        )


def _navg(n: int, nperseg: int) -> int:
    step = nperseg // 2
    return max(1 + (n - nperseg) // step, 1)


def welch_psd(x: np.ndarray, fs: float, nperseg: int = DEFAULT_NPERSEG) -> Spectrum:
    """Single-sided PSD; the integral over [0, fs/2] equals the variance."""
    x = np.asarray(x)
    nperseg = max(min(nperseg, x.shape[0] // 2), MIN_NPERSEG)
    _check_length(x, nperseg)
    f, pxx = sig.welch(
        x, fs=fs, window="hann", nperseg=nperseg, noverlap=nperseg // 2,
        detrend=False, scaling="density",
    )
    return Spectrum(f, pxx, nperseg, _navg(x.shape[0], nperseg), fs)


def welch_csd(
    x: np.ndarray, y: np.ndarray, fs: float, nperseg: int = DEFAULT_NPERSEG
) -> Spectrum:
    """Single-sided cross spectral density <x y*> (Hermitian under swap)."""
    if x.shape[0] != y.shape[0]:
        raise ValueError("series length mismatch")
    nperseg = max(min(nperseg, x.shape[0] // 2), MIN_NPERSEG)
    _check_length(x, nperseg)
    f, pxy = sig.csd(
        x, y, fs=fs, window="hann", nperseg=nperseg, noverlap=nperseg // 2,
        detrend=False, scaling="density",
    )
    # scipy returns conj(X) Y; we keep <x conj(y)> = X conj(Y)
    return Spectrum(f, np.conj(pxy), nperseg, _navg(x.shape[0], nperseg), fs)


def estimate_tf(
    h: np.ndarray,
    y: np.ndarray,
    fs: float,
    nperseg: int = DEFAULT_NPERSEG,
    floor_rel: float = 1e-12,
) -> Spectrum:
    """Transfer function h -> y from cross/power ratio, S_yh / S_hh.

    Returned in the positive-frequency convention (delays have positive
    phase slope).  Bins where S_hh falls below ``floor_rel`` times its
    median are masked to NaN.
    """
    shh = welch_psd(h, fs, nperseg)
    syh = welch_csd(y, h, fs, nperseg)
    floor = floor_rel * np.median(shh.values)
    vals = np.where(shh.values > floor, syh.values / np.maximum(shh.values, floor), np.nan)
    # conjugate: sampled-data (engineering) convention -> physics convention
    return Spectrum(shh.freqs, np.conj(vals), shh.nperseg, shh.navg, fs)


def strain_refer(
    s_bb: Spectrum, tf: Spectrum, floor_rel: float = 1e-9
) -> tuple[Spectrum, np.ndarray]:
    """Divide an output PSD by |T|^2 pointwise.

    Returns (referred spectrum, mask of bins where |T| sat below the
    floor); masked bins carry NaN rather than silent zeros.
    """
    if s_bb.freqs.shape != tf.freqs.shape or not np.allclose(
        s_bb.freqs, tf.freqs, rtol=1e-12, atol=0.0
    ):
        raise ValueError("spectra are not on a common grid")
    mag2 = np.abs(tf.values) ** 2
    finite = np.isfinite(mag2)
    floor = floor_rel * np.nanmax(np.where(finite, mag2, np.nan))
    masked = ~finite | (mag2 < floor)
    vals = np.where(masked, np.nan, s_bb.values / np.where(masked, 1.0, mag2))
    return Spectrum(s_bb.freqs, vals, s_bb.nperseg, s_bb.navg, s_bb.fs), masked


def band_average(spec: Spectrum, f_lo: float, f_hi: float) -> float:
    """Mean of the values over [f_lo, f_hi] (NaN-aware)."""
    sel = (spec.freqs >= f_lo) & (spec.freqs <= f_hi)
    return float(np.nanmean(spec.values[sel].real))


def write_csv(path, spec: Spectrum, header_cols: str, extra_meta: dict | None = None):
    """CSV with '#'-prefixed metadata header lines."""
    meta = {
        "fs_hz": spec.fs,
        "nperseg": spec.nperseg,
        "navg": spec.navg,
        "window": "hann",
        "overlap": 0.5,
    }
    if extra_meta:
        meta.update(extra_meta)
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in meta.items():
            fh.write(f"# {k} = {v}\n")
        fh.write(f"{header_cols}\n")
        if np.iscomplexobj(spec.values):
            for f, v in zip(spec.freqs, spec.values):
                fh.write(f"{f:.10e},{v.real:.10e},{v.imag:.10e}\n")
        else:
            for f, v in zip(spec.freqs, spec.values):
                fh.write(f"{f:.10e},{v:.10e}\n")
