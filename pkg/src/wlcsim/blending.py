"""Optimal frequency-domain combination of two noisy readouts of the same
signal.

Both channels are first normalized by their strain transfer functions so
each reads x + n_i; the blend Z = w z1 + (1 - w) z2 then has noise PSD

    S = |w|^2 S11 + |1-w|^2 S22 + w (1 - w*) S12 + (1 - w) w* S21,

minimized bin by bin at

    w = (S22 - S21) / (S11 + S22 - S12 - S21),

with S21 = conj(S12).  The weights are applied in post-processing on
spectra; no causal filter realization is attempted.
"""

from __future__ import annotations

import numpy as np

DEGENERATE_WEIGHT = 0.5


def normalize(z_raw: np.ndarray, tf: np.ndarray, floor_rel: float = 1e-9):
    """Divide a channel spectrum series by its strain transfer function.

    Returns (normalized values, mask of floored bins).
    """
    mag = np.abs(tf)
    floor = floor_rel * np.nanmax(mag)
    masked = ~np.isfinite(mag) | (mag < floor)
    out = np.where(masked, np.nan, z_raw / np.where(masked, 1.0, tf))
    return out, masked


def optimal_weight(
    s11: np.ndarray,
    s22: np.ndarray,
    s12: np.ndarray,
    floor_rel: float = 1e-12,
) -> np.ndarray:
    """Pointwise minimum-variance weight for channel 1.

    ``s12`` is the cross spectrum <n1 conj(n2)>; bins with a degenerate
    denominator (identical channels) fall back to an even split.
    """
    s21 = np.conj(s12)
    denom = s11 + s22 - s12 - s21
    scale = np.abs(s11) + np.abs(s22)
    degenerate = np.abs(denom) <= floor_rel * np.maximum(scale, 1e-300)
    w = np.where(
        degenerate,
        DEGENERATE_WEIGHT,
        (s22 - s21) / np.where(degenerate, 1.0, denom),
    )
    return w


def blended_psd(
    w: np.ndarray,
    s11: np.ndarray,
    s22: np.ndarray,
    s12: np.ndarray,
) -> np.ndarray:
    """Noise PSD of the blend with weights ``w`` (real nonnegative for
    Hermitian-consistent inputs)."""
    s21 = np.conj(s12)
    u = 1.0 - w
    s = (
        np.abs(w) ** 2 * s11
        + np.abs(u) ** 2 * s22
        + w * np.conj(u) * s12
        + u * np.conj(w) * s21
    )
    return s.real


def optimal_blend(s11, s22, s12):
    """(weight, blended PSD) at the pointwise optimum."""
    w = optimal_weight(s11, s22, s12)
    return w, blended_psd(w, s11, s22, s12)
