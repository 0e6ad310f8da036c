"""Figure rendering for the report outputs.

Every CLI command that writes a delimited file can also render a figure
next to it; these helpers keep the styling in one place.  All functions
save to file and return the path (no interactive backends).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_asd(path, freq_hz, curves, title=None, ylabel=r"strain ASD [1/$\sqrt{\mathrm{Hz}}$]"):
    """Log-log amplitude-spectral-density overlay.

    ``curves`` is a list of (label, values) with values in power units;
    square roots are taken here.
    """
    fig, ax = plt.subplots(figsize=(7, 5))
    for label, s in curves:
        s = np.asarray(s, dtype=float)
        ax.loglog(freq_hz, np.sqrt(np.abs(s)), label=label, lw=1.2)
    ax.set_xlabel("frequency [Hz]")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    return _finish(fig, path)


def plot_nyquist(path, z, title=None):
    """Real/imaginary contour of the loop determinant with the origin marked."""
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    ax.plot(z.real, z.imag, lw=0.4)
    ax.plot([0.0], [0.0], "r+", markersize=12, markeredgewidth=2)
    ax.set_xlabel(r"Re det(I + M$_{\rm OL}$)")
    ax.set_ylabel(r"Im det(I + M$_{\rm OL}$)")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.set_aspect("equal", adjustable="datalim")
    return _finish(fig, path)


def plot_timeseries(path, t, x, envelope_t=None, envelope=None, title=None,
                    ylabel="oscillator position [m]"):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(t, x, lw=0.3, alpha=0.6, label="response")
    if envelope is not None:
        ax.plot(envelope_t, envelope, "k", lw=1.4, label="envelope")
        ax.plot(envelope_t, -np.asarray(envelope), "k", lw=1.4)
    ax.set_xlabel("time [s]")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    return _finish(fig, path)


def plot_tf(path, freq_hz, curves, title=None):
    """Bode-style magnitude/phase overlay; curves = [(label, complex array)]."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for label, tf in curves:
        tf = np.asarray(tf)
        ax1.loglog(freq_hz, np.abs(tf), lw=1.2, label=label)
        ax2.semilogx(freq_hz, np.degrees(np.angle(tf)), lw=1.2, label=label)
    ax1.set_ylabel("|T|")
    ax2.set_ylabel("phase [deg]")
    ax2.set_xlabel("frequency [Hz]")
    for ax in (ax1, ax2):
        ax.grid(True, which="both", alpha=0.3)
    ax1.legend(loc="best", fontsize=9)
    if title:
        ax1.set_title(title)
    return _finish(fig, path)
