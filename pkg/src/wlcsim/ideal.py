"""Single-mode, resolved-sideband model of the coupled cavity-filter system.

Everything here is closed form: the input-output coefficient, the
strain-referred shot-noise spectral density, and the characteristic
polynomial whose roots set stability.  Frequencies follow the e^{-i Omega t}
convention, so a root with positive imaginary part grows in time.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from .params import EffectiveParams


@dataclass(frozen=True)
class IdealIOResult:
    """Input-output solution at one sideband frequency.

    t_in_out   coefficient of b_in -> b_out (unit modulus for all real Omega)
    v_signal   response of b_out to strain h
    omega      evaluation frequency [rad/s]
    at_pole    True when the evaluation sits on (or numerically at) a pole
    """

    t_in_out: complex
    v_signal: complex
    omega: float
    at_pole: bool = False


@dataclass(frozen=True)
class PoleSet:
    """Roots of the closed-loop characteristic quadratic."""

    roots: tuple[complex, complex]
    stable: bool
    marginal: bool


_MARGINAL_RTOL = 1e-12


def ideal_io(omega: float, e: EffectiveParams) -> IdealIOResult:
    """Evaluate the single-mode input-output relation at ``omega`` [rad/s]."""
    g, ws, gam = e.g_om, e.omega_s, e.gamma
    denom = 1j * omega * (gam - 1j * omega) + g**2 - ws**2
    numer = 1j * omega * (gam + 1j * omega) - g**2 + ws**2
    scale = abs(1j * omega * gam) + abs(g**2 - ws**2) + omega**2
    at_pole = abs(denom) <= 1e-14 * max(scale, 1.0)
    if at_pole:
        return IdealIOResult(complex("nan"), complex("inf"), omega, True)
    t = numer / denom
    v = 1j * cmath.sqrt(2.0 * gam) * ws * e.alpha_sig / denom
    return IdealIOResult(t, v, omega, False)


def ideal_shot_noise_psd(grid, e: EffectiveParams) -> np.ndarray:
    """Strain-referred shot-noise PSD on ``grid`` [rad/s] (single-sided).

    Pointwise evaluation of

        S_hh = (Omega^2 gamma^2 + (g^2 - omega_s^2 + Omega^2)^2)
               / (4 gamma omega_s^2 alpha^2),

    finite for all Omega > 0.
    """
    omega = np.asarray(grid, dtype=float)
    g, ws, gam = e.g_om, e.omega_s, e.gamma
    num = omega**2 * gam**2 + (g**2 - ws**2 + omega**2) ** 2
    return num / (4.0 * gam * ws**2 * e.alpha_sig**2)


def ideal_poles(e: EffectiveParams) -> PoleSet:
    """Closed-form roots of Omega^2 + i gamma Omega + g^2 - omega_s^2 = 0.

    Stable iff no root has positive imaginary part, i.e. iff g_om <= omega_s.
    The balanced point g_om = omega_s leaves a root at DC and is flagged
    marginal (and counted as stable).
    """
    g, ws, gam = e.g_om, e.omega_s, e.gamma
    s = cmath.sqrt(4.0 * (ws**2 - g**2) - gam**2)
    r1 = (-1j * gam + s) / 2.0
    r2 = (-1j * gam - s) / 2.0
    marginal = abs(g - ws) <= _MARGINAL_RTOL * max(abs(ws), abs(g))
    stable = marginal or max(r1.imag, r2.imag) <= 0.0
    return PoleSet(roots=(r1, r2), stable=stable, marginal=marginal)
