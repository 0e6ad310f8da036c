"""MIMO Nyquist analysis of the loop at the input-mirror interface.

The open loop factorizes into the optomechanical return of the short
cavity (oscillator + end mirror) and the all-pass arm propagation.  The
optomechanical factor uses the resolved-sideband closed form with the
parametric rate identified with the derived g_om; the determinant of
(I + open loop) is swept along the real frequency axis and tested for
encirclement of the origin.

Care points, both verified against the time-domain classifier:

* the sweep must resolve near-origin grazes that recur every arm free
  spectral range, or whole turns alias away between samples (the base
  grid is dense and adaptively refined);
* the truncated sweep leaves a fractional-turn tail, removed by
  subtracting the winding of the passive (g = 0) loop on the same sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .freq_domain import compensate_spring
from .params import EffectiveParams, PhysicalParams, derive_effective


@dataclass(frozen=True)
class NyquistContour:
    """Sampled det(I + M_OL) along the real axis with its verdict.

    omega     sweep frequencies [rad/s], ordered
    z         determinant samples
    winding   net turns about the origin (passive-reference subtracted)
    verdict   "stable" | "unstable" | "marginal"
    """

    omega: np.ndarray
    z: np.ndarray
    winding: int
    verdict: str


def _t_cav(omega, p: PhysicalParams) -> np.ndarray:
    s_i = math.sqrt(p.R_ITM)
    e = np.exp(1j * omega * p.tau_arm)
    return (e - s_i) / (1.0 - s_i * e)


def open_loop(
    omega,
    p: PhysicalParams,
    e: EffectiveParams,
    pump_offset: float,
    g: float | None = None,
    spring_residual: float = 0.0,
    gamma_m: float | None = None,
) -> np.ndarray:
    """2x2 open-loop matrix at ``omega`` [rad/s], shape (..., 2, 2).

    ``pump_offset`` is the pump detuning in use; ``spring_residual`` is the
    offset between the dynamically centered detuning and the one in use
    (zero when compensated), which displaces the parametric resonance of
    the optomechanical return.  ``g`` defaults to the derived parametric
    rate g_om.  ``gamma_m`` overrides the mechanical damping (the sweep
    classifies the undamped system in the limit of infinitesimal positive
    damping, which keeps the optomechanical poles just off the real axis).
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if g is None:
        g = e.g_om
    s_s = math.sqrt(p.R_SRM)
    gm = p.gamma_m if gamma_m is None else gamma_m
    wp = pump_offset
    d = spring_residual

    denom = 2.0 * (
        (omega + d) * (omega - 2.0 * wp - d) + 1j * gm * (omega - wp)
    )
    t_opt = -s_s + 1j * (1.0 + s_s) ** 2 * g**2 * p.tau_SRC * p.omega_m0 / denom

    m_opt = np.empty(omega.shape + (2, 2), dtype=complex)
    pref = np.exp(1j * omega * p.tau_SRC / 2.0)
    m_opt[..., 0, 0] = t_opt
    m_opt[..., 0, 1] = t_opt + s_s
    m_opt[..., 1, 0] = -s_s - t_opt
    m_opt[..., 1, 1] = -2.0 * s_s - t_opt
    m_opt *= pref[..., None, None]

    m_cav = np.zeros(omega.shape + (2, 2), dtype=complex)
    m_cav[..., 0, 0] = _t_cav(omega, p)
    m_cav[..., 1, 1] = np.conj(_t_cav(2.0 * wp - omega, p))
    return m_opt @ m_cav


def _det_i_plus_ol(omega, p, e, pump_offset, g, spring_residual, gamma_m) -> np.ndarray:
    m = open_loop(omega, p, e, pump_offset, g, spring_residual, gamma_m)
    a = 1.0 + m[..., 0, 0]
    d = 1.0 + m[..., 1, 1]
    return a * d - m[..., 0, 1] * m[..., 1, 0]


def _swept_turns(evaluate, omega_grid: np.ndarray, max_refine: int = 18):
    """(grid, samples, turns) with adaptive bisection to sub-pi/2 steps."""
    W = omega_grid
    z = evaluate(W)
    for _ in range(max_refine):
        dphi = np.abs(np.diff(np.unwrap(np.angle(z))))
        bad = np.nonzero(dphi > math.pi / 2)[0]
        if bad.size == 0:
            break
        mid = (W[bad] + W[bad + 1]) / 2.0
        zm = evaluate(mid)
        W = np.insert(W, bad + 1, mid)
        z = np.insert(z, bad + 1, zm)
    else:
        raise RuntimeError("contour refinement failed to resolve phase steps")
    ang = np.unwrap(np.angle(z))
    return W, z, (ang[-1] - ang[0]) / (2.0 * math.pi)


_MARGINAL_RATE = 50.0  # [1/s]; growth slower than this counts as marginal


def nyquist(
    p: PhysicalParams,
    compensate: bool = True,
    g_ratio: float | None = None,
    omega_max: float | None = None,
    n_points: int = 20001,
) -> NyquistContour:
    """Sweep the loop determinant at the input-mirror interface and
    classify the closed loop.

    The loop is extracted numerically from the filter-cavity scattering
    (both factors open-loop stable), so origin encirclements count
    unstable closed-loop poles.  The encirclement count itself is
    evaluated by analytic continuation (root counting): the sampled
    contour is dominated by the fast idler-band phase, and unwrapped-
    argument accumulation on any affordable grid aliases whole turns away
    near its repeated close approaches to the origin.  The sampled
    contour is still returned for inspection and plotting.

    ``g_ratio`` sets the pump power to g_om = g_ratio * omega_s (None
    keeps the power in ``p``).  ``compensate`` selects the numerically
    centered pump offset versus the bare mechanical frequency.
    """
    from .freq_domain import closed_loop_poles, loop_determinant
    from .params import with_g_ratio

    if g_ratio is not None:
        p = with_g_ratio(p, g_ratio)

    wp = compensate_spring(p) if (compensate and p.P_b > 0) else p.omega_m0

    if omega_max is None:
        omega_max = 4.0 * max(wp, p.omega_m0)
    W = np.linspace(-omega_max, omega_max, 2 * (n_points // 2))
    z = loop_determinant(W, p, wp)

    poles = closed_loop_poles(p, wp)
    unstable = [r for r in poles if r.imag > _MARGINAL_RATE]
    marginal = [r for r in poles if abs(r.imag) <= _MARGINAL_RATE]
    winding = len(unstable)
    if winding > 0:
        verdict = "unstable"
    elif marginal:
        verdict = "marginal"
    else:
        verdict = "stable"
    return NyquistContour(omega=W, z=z, winding=winding, verdict=verdict)
