"""Discrete-time simulator of the full field network.

The system is split into compartments separated by propagation delays:
per step, all delay-line outputs are read first (they depend only on past
values), then the mirror junctions, then the oscillator update.  Fields
are complex envelopes in the rotating frame of the carrier; both cavities
are carrier-resonant so propagation adds no static phase.  The oscillator
kick and radiation-pressure coupling coefficients are shared with the
frequency-domain module, including the opposite kick signs of the two
propagation directions.

The oscillator uses the symmetric second difference

    x[n+1] - 2 x[n] + x[n-1]      x[n+1] - x[n-1]
    --------------------------- + gamma_m --------------- + w0^2 x[n] = F[n]/m
              dt^2                      2 dt

whose frequency error is O((w0 dt)^2).

All quantities are zero for t < 0; simulations are deterministic for a
fixed seed (inputs are drawn once with numpy's Generator and passed in).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .freq_domain import CouplingConstants, pump_offset_for
from .params import PhysicalParams


class GridError(ValueError):
    """Traversal times are not integer multiples of the time step."""


@dataclass
class SimConfig:
    """Run settings for the discrete-time engine.

    dt                 step [s]; None selects the SRC half-trip time
    duration           simulated span [s]
    transient_discard  span dropped before spectral analysis [s]
    seed               RNG seed for injected noise
    compensate         apply the numeric pump-offset compensation
    x0                 initial oscillator displacement [m]
    x_stride           decimation of the recorded oscillator track
    """

    duration: float
    dt: float | None = None
    transient_discard: float = 0.05
    seed: int = 0
    compensate: bool = True
    x0: float = 0.0
    x_stride: int = 7


@dataclass
class Network:
    """Compartment network: delays, junction coefficients, couplings."""

    p: PhysicalParams
    dt: float
    n_arm: int
    n_src: int
    pump_offset: float
    kick: float
    force: float
    drive: complex
    osc_c1: float
    osc_c2: float
    osc_cf: float


@dataclass
class FieldState:
    """Ring buffers of the propagating envelopes plus oscillator history."""

    net: Network
    a1: np.ndarray
    b1: np.ndarray
    b4: np.ndarray
    x: np.ndarray  # [x[n-1], x[n]]
    n: int = 0

    def as_tuple(self):
        return self.a1, self.b1, self.b4, self.x


@dataclass
class RunResult:
    """Recorded channels of one simulation run."""

    dt: float
    fs: float
    b_out: np.ndarray
    x: np.ndarray
    x_dt: float
    pump_offset: float
    injected: np.ndarray | None
    overflow_step: int  # -1 when the run completed without overflow
    config: SimConfig = field(repr=False, default=None)

    @property
    def overflowed(self) -> bool:
        return self.overflow_step >= 0


def default_dt(p: PhysicalParams) -> float:
    """The SRC half-trip time, the shortest traversal in the network."""
    return p.tau_SRC / 2.0


def discrete_dispersion_shift(omega_m0: float, dt: float) -> float:
    """Frequency offset of the symmetric-difference oscillator [rad/s].

    The scheme oscillates at arccos(1 - (w0 dt)^2 / 2) / dt, a positive
    O((w0 dt)^2) shift from the continuum.  The pump offset must track the
    discrete resonance, or the simulated system is centered differently
    from the frequency-domain model (at the default step this is a
    ~180 rad/s effect, larger than the stability margin at the nominal
    operating point).
    """
    return math.acos(1.0 - (omega_m0 * dt) ** 2 / 2.0) / dt - omega_m0


def _delay_steps(traversal: float, dt: float, name: str) -> int:
    n = traversal / dt
    n_int = round(n)
    if n_int < 1 or abs(n - n_int) > 1e-9 * max(n, 1.0):
        raise GridError(
            f"{name} traversal {traversal:.6e} s is not an integer multiple "
            f"of dt = {dt:.6e} s (ratio {n:.6f}); try dt = {traversal / max(n_int, 1):.6e}"
        )
    return n_int


def build(p: PhysicalParams, config: SimConfig, pump_offset: float | None = None) -> FieldState:
    """Construct the compartment network and a zeroed field state."""
    dt = config.dt if config.dt is not None else default_dt(p)
    if dt <= 0.0:
        raise GridError("dt must be positive")
    n_src = _delay_steps(p.tau_SRC / 2.0, dt, "SRC half-trip")
    n_arm = _delay_steps(p.tau_arm, dt, "arm round-trip")

    if pump_offset is None:
        if p.P_b > 0 and config.compensate:
            pump_offset = pump_offset_for(p, True) + discrete_dispersion_shift(
                p.omega_m0, dt
            )
        else:
            pump_offset = p.omega_m0
    cc = CouplingConstants.from_params(p, pump_offset)

    gm = p.gamma_m
    denom = 1.0 + gm * dt / 2.0
    net = Network(
        p=p,
        dt=dt,
        n_arm=n_arm,
        n_src=n_src,
        pump_offset=pump_offset,
        kick=cc.kick,
        force=cc.force,
        drive=2.0j * p.k_0 * p.A_arm * p.L_arm,
        osc_c1=(2.0 - (p.omega_m0 * dt) ** 2) / denom,
        osc_c2=-(1.0 - gm * dt / 2.0) / denom,
        osc_cf=dt**2 / (p.m * denom),
    )
    x = np.zeros(2)
    x[0] = config.x0
    x[1] = config.x0
    return FieldState(
        net=net,
        a1=np.zeros(n_arm, dtype=np.complex128),
        b1=np.zeros(n_src, dtype=np.complex128),
        b4=np.zeros(n_src, dtype=np.complex128),
        x=x,
    )


@njit(cache=True)
def _advance(
    a1buf,
    b1buf,
    b4buf,
    xs,
    n0,
    n_steps,
    n_arm,
    n_src,
    t_i,
    s_i,
    t_s,
    s_s,
    drive,
    kick,
    force,
    wp,
    dt,
    c1,
    c2,
    cf,
    b_in,
    h,
    bout_rec,
    x_rec,
    x_stride,
    limit,
):
    """Advance the network ``n_steps`` from absolute step ``n0``.

    ``b_in`` and ``h`` are indexed relative to ``n0`` and may be length-0
    (treated as zero input).  Records b_out at full rate and x decimated.
    Returns the absolute step at which an overflow was detected, or -1.
    """
    use_bin = b_in.shape[0] > 0
    use_h = h.shape[0] > 0
    for i in range(n_steps):
        n = n0 + i
        t = n * dt
        hv = h[i] if use_h else 0.0
        bv = b_in[i] if use_bin else 0.0j

        # delay-type outputs (depend only on the past and on x[n])
        a2 = a1buf[n % n_arm] + drive * hv
        cph = math.cos(wp * t)
        sph = math.sin(wp * t)
        eneg = complex(cph, -sph)  # pump phase e^{-i wp t}
        kick_term = 1j * kick * eneg * xs[1]
        b2 = b4buf[n % n_src] + kick_term
        b3 = b1buf[n % n_src] - kick_term

        # mirror junctions
        a1 = t_i * b3 + s_i * a2
        b4 = t_i * a2 - s_i * b3
        b1 = t_s * bv - s_s * b2
        bout = t_s * b2 + s_s * bv

        a1buf[n % n_arm] = a1
        b1buf[n % n_src] = b1
        b4buf[n % n_src] = b4

        # oscillator: force from the kicked-slot field combination
        diff = b2 - b3
        f_rad = force * 2.0 * (cph * diff.real - sph * diff.imag)
        x_next = c1 * xs[1] + c2 * xs[0] + cf * f_rad
        xs[0] = xs[1]
        xs[1] = x_next

        bout_rec[i] = bout
        if i % x_stride == 0:
            x_rec[i // x_stride] = xs[0]

        if (abs(x_next) > limit) or (abs(bout.real) + abs(bout.imag) > limit):
            return n
    return -1


_OVERFLOW_LIMIT = 1e150


def step(state: FieldState, b_in: complex = 0.0j, h: float = 0.0) -> complex:
    """Advance one step (unit-test path; long runs use the batch runners).

    Returns b_out at the completed step and mutates ``state`` in place.
    """
    net = state.net
    bout = np.empty(1, dtype=np.complex128)
    xrec = np.empty(1)
    ov = _advance(
        state.a1,
        state.b1,
        state.b4,
        state.x,
        state.n,
        1,
        net.n_arm,
        net.n_src,
        math.sqrt(net.p.T_ITM),
        math.sqrt(net.p.R_ITM),
        math.sqrt(net.p.T_SRM),
        math.sqrt(net.p.R_SRM),
        net.drive,
        net.kick,
        net.force,
        net.pump_offset,
        net.dt,
        net.osc_c1,
        net.osc_c2,
        net.osc_cf,
        np.array([b_in], dtype=np.complex128),
        np.array([h]),
        bout,
        xrec,
        1,
        _OVERFLOW_LIMIT,
    )
    state.n += 1
    if ov >= 0:
        raise OverflowError(f"field overflow at step {ov}")
    return complex(bout[0])


def _run(state: FieldState, n_steps: int, b_in: np.ndarray, h: np.ndarray,
         x_stride: int) -> tuple[np.ndarray, np.ndarray, int]:
    net = state.net
    bout = np.empty(n_steps, dtype=np.complex128)
    xrec = np.empty((n_steps + x_stride - 1) // x_stride)
    ov = _advance(
        state.a1,
        state.b1,
        state.b4,
        state.x,
        state.n,
        n_steps,
        net.n_arm,
        net.n_src,
        math.sqrt(net.p.T_ITM),
        math.sqrt(net.p.R_ITM),
        math.sqrt(net.p.T_SRM),
        math.sqrt(net.p.R_SRM),
        net.drive,
        net.kick,
        net.force,
        net.pump_offset,
        net.dt,
        net.osc_c1,
        net.osc_c2,
        net.osc_cf,
        np.ascontiguousarray(b_in, dtype=np.complex128),
        np.ascontiguousarray(h, dtype=np.float64),
        bout,
        xrec,
        x_stride,
        _OVERFLOW_LIMIT,
    )
    state.n += n_steps
    if ov >= 0:
        k = ov + 1
        bout[k:] = 0.0
        xrec[(k + x_stride - 1) // x_stride:] = 0.0
    return bout, xrec, ov


_EMPTY_C = np.zeros(0, dtype=np.complex128)
_EMPTY_F = np.zeros(0)


def run_step_response(
    p: PhysicalParams,
    config: SimConfig,
    amplitude: float = 1e-21,
    pump_offset: float | None = None,
) -> RunResult:
    """Drive a constant strain from t = 0 and record the response."""
    state = build(p, config, pump_offset)
    n_steps = int(round(config.duration / state.net.dt))
    h = np.full(n_steps, amplitude)
    bout, xrec, ov = _run(state, n_steps, _EMPTY_C, h, config.x_stride)
    return RunResult(
        dt=state.net.dt,
        fs=1.0 / state.net.dt,
        b_out=bout,
        x=xrec,
        x_dt=state.net.dt * config.x_stride,
        pump_offset=state.net.pump_offset,
        injected=None,
        overflow_step=ov,
        config=config,
    )


def run_noise(
    p: PhysicalParams,
    config: SimConfig,
    pump_offset: float | None = None,
) -> RunResult:
    """Inject white vacuum-like noise on b_in (both quadratures at unit
    single-sided PSD, i.e. variance 1/(2 dt) per quadrature); no strain.

    Note the injected level is INJECTED_OVER_VACUUM times the vacuum
    reference of the frequency-domain module; strain referral for overlay
    divides by that factor.
    """
    state = build(p, config, pump_offset)
    n_steps = int(round(config.duration / state.net.dt))
    rng = np.random.default_rng(config.seed)
    sigma = math.sqrt(1.0 / (2.0 * state.net.dt))
    b_in = rng.normal(0.0, sigma, n_steps) + 1j * rng.normal(0.0, sigma, n_steps)
    bout, xrec, ov = _run(state, n_steps, b_in, _EMPTY_F, config.x_stride)
    return RunResult(
        dt=state.net.dt,
        fs=1.0 / state.net.dt,
        b_out=bout,
        x=xrec,
        x_dt=state.net.dt * config.x_stride,
        pump_offset=state.net.pump_offset,
        injected=b_in,
        overflow_step=ov,
        config=config,
    )


def run_signal(
    p: PhysicalParams,
    config: SimConfig,
    h: np.ndarray | None = None,
    h_asd: float = 1e-22,
    pump_offset: float | None = None,
) -> RunResult:
    """Drive the strain input (white by default, or a custom series);
    noise off."""
    state = build(p, config, pump_offset)
    n_steps = int(round(config.duration / state.net.dt))
    if h is None:
        rng = np.random.default_rng(config.seed)
        # white strain with single-sided PSD h_asd^2
        sigma = h_asd * math.sqrt(1.0 / (2.0 * state.net.dt))
        h = rng.normal(0.0, sigma, n_steps)
    elif len(h) != n_steps:
        raise ValueError(f"custom strain length {len(h)} != {n_steps} steps")
    bout, xrec, ov = _run(state, n_steps, _EMPTY_C, h, config.x_stride)
    return RunResult(
        dt=state.net.dt,
        fs=1.0 / state.net.dt,
        b_out=bout,
        x=xrec,
        x_dt=state.net.dt * config.x_stride,
        pump_offset=state.net.pump_offset,
        injected=h,
        overflow_step=ov,
        config=config,
    )


# -- demodulation and channel extraction -------------------------------------


def demodulate(
    series: np.ndarray,
    offset: float,
    fs: float,
    out_fs: float = 100e3,
) -> tuple[np.ndarray, float]:
    """Mix ``series`` with e^{+i offset t} and decimate with an anti-alias
    linear-phase FIR (delay compensated by the resampler).

    offset = 0 extracts the carrier-band (signal) channel; offset = twice
    the pump detuning extracts the idler band.  Returns (baseband series,
    sample rate).
    """
    if abs(offset) * (1.0 / fs) >= math.pi:
        raise ValueError("offset folds past Nyquist at this sample rate")
    q = int(round(fs / out_fs))
    q = max(q, 1)
    from scipy.signal import resample_poly

    if offset != 0.0:
        t = np.arange(series.shape[0]) / fs
        series = series * np.exp(1j * offset * t)
    z = resample_poly(series, up=1, down=q)
    return z, fs / q


def quadrature(z: np.ndarray, theta: float = 0.0) -> np.ndarray:
    """Homodyne quadrature sqrt(2) Im(e^{i theta} z) of a baseband series."""
    if theta == 0.0:
        return math.sqrt(2.0) * z.imag
    return math.sqrt(2.0) * (np.exp(1j * theta) * z).imag


def discard_transient(series: np.ndarray, fs: float, t_discard: float) -> np.ndarray:
    n = int(round(t_discard * fs))
    return series[n:]


# -- step-response classification ---------------------------------------------


@dataclass(frozen=True)
class StepVerdict:
    """Boundedness classification of a step response."""

    stable: bool
    growth_rate: float  # log-envelope slope over the late window [1/s]
    growth_sigma: float
    growth_factor: float  # envelope(end) / envelope(mid)
    settle_time: float  # [s]; nan when never settled
    overflowed: bool


def envelope(x: np.ndarray, fs: float, block: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Block-RMS envelope of an oscillating record (block length in s)."""
    nb = max(int(round(block * fs)), 1)
    nblocks = x.shape[0] // nb
    if nblocks < 4:
        raise ValueError("record too short for envelope extraction")
    seg = x[: nblocks * nb].reshape(nblocks, nb)
    env = np.sqrt(np.mean(seg**2, axis=1))
    t = (np.arange(nblocks) + 0.5) * nb / fs
    return t, env


def classify_step(result: RunResult, growth_threshold: float = 4.0) -> StepVerdict:
    """Bounded/unbounded classification of a step run.

    Unstable when the run overflowed, or when the log-envelope slope over
    the last half is positive with 3 sigma significance AND the envelope
    grew by more than ``growth_threshold`` across that window (a marginal
    system settling into steady oscillation shows slow polynomial creep
    that the ratio floor ignores).
    """
    if result.overflowed:
        return StepVerdict(False, math.inf, 0.0, math.inf, math.nan, True)

    fs_x = 1.0 / result.x_dt
    t, env = envelope(result.x, fs_x)
    half = env.shape[0] // 2
    tw, ew = t[half:], env[half:]
    good = ew > 0.0
    if np.count_nonzero(good) < 8:
        return StepVerdict(True, 0.0, 0.0, 1.0, math.nan, False)
    tw, ew = tw[good], np.log(ew[good])
    A = np.vstack([tw, np.ones_like(tw)]).T
    coef, res_, *_ = np.linalg.lstsq(A, ew, rcond=None)
    slope = coef[0]
    dof = max(tw.shape[0] - 2, 1)
    resid = ew - A @ coef
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    sigma = math.sqrt(max(cov[0, 0], 0.0))
    factor = math.exp(ew[-1] - ew[0]) if ew.shape[0] > 1 else 1.0

    unstable = (slope > 3.0 * sigma) and (factor > growth_threshold)

    # settling time: last time the envelope leaves +-50% of its final level
    final = np.median(env[int(env.shape[0] * 0.75):])
    settle = math.nan
    if final > 0.0 and not unstable:
        outside = np.abs(env / final - 1.0) > 0.5
        idx = np.nonzero(outside)[0]
        settle = 0.0 if idx.size == 0 else float(t[min(idx[-1] + 1, t.shape[0] - 1)])
    return StepVerdict(not unstable, float(slope), float(sigma), float(factor), settle, False)
