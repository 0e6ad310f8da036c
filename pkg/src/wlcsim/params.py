"""Physical parameters of the arm-cavity / optomechanical-filter system.

All quantities are SI: lengths in m, powers in W, angular frequencies in rad/s.
Two fixed constants are used throughout and are not configurable:

    HBAR = 1.054571817e-34 J s
    C_LIGHT = 299792458.0 m/s

(the speed of light can still be overridden per-parameter-set for scaling
studies; the default is the physical value).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

HBAR = 1.054571817e-34  # J s
C_LIGHT = 299792458.0  # m/s

# Config keys, in canonical serialization order.  "lambda" is a Python
# keyword, so the attribute is spelled lambda_.
_CONFIG_KEYS = (
    "L_arm",
    "P_arm",
    "T_ITM",
    "L_SRC",
    "T_SRM",
    "P_b",
    "lambda",
    "m",
    "omega_m0",
    "Q_m",
    "c",
)
_KEY_TO_ATTR = {k: ("lambda_" if k == "lambda" else k) for k in _CONFIG_KEYS}


class ConfigError(ValueError):
    """Malformed or physically invalid configuration."""


@dataclass(frozen=True)
class PhysicalParams:
    """Mirror, cavity and oscillator parameters.

    L_arm      arm cavity length [m]
    P_arm      arm cavity circulating power [W]
    T_ITM      input test mass power transmissivity
    L_SRC      signal-recycling cavity length [m]
    T_SRM      signal-recycling mirror power transmissivity
    P_b        filter pump power at the oscillator [W] (0 = pump off)
    lambda_    carrier wavelength [m]
    m          oscillator mass [kg]
    omega_m0   bare mechanical resonance [rad/s]
    Q_m        mechanical quality factor; math.inf = undamped (exactly)
    c          speed of light [m/s]
    """

    L_arm: float
    P_arm: float
    T_ITM: float
    L_SRC: float
    T_SRM: float
    P_b: float
    lambda_: float
    m: float
    omega_m0: float
    Q_m: float = math.inf
    c: float = C_LIGHT

    def __post_init__(self):
        for name in ("L_arm", "P_arm", "L_SRC", "lambda_", "m", "omega_m0", "c"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)!r}")
        # P_b = 0 is a meaningful configuration (pump off).
        if self.P_b < 0.0:
            raise ConfigError(f"P_b must be >= 0, got {self.P_b!r}")
        for name in ("T_ITM", "T_SRM"):
            t = getattr(self, name)
            if not 0.0 < t < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {t!r}")
        if not self.Q_m > 0.0:
            raise ConfigError(f"Q_m must be > 0 or inf, got {self.Q_m!r}")

    # -- derived quantities ------------------------------------------------

    @property
    def omega_0(self) -> float:
        """Carrier angular frequency [rad/s]."""
        return 2.0 * math.pi * self.c / self.lambda_

    @property
    def k_0(self) -> float:
        """Carrier wavenumber [1/m]."""
        return self.omega_0 / self.c

    @property
    def tau_arm(self) -> float:
        """Arm cavity round-trip time [s]."""
        return 2.0 * self.L_arm / self.c

    @property
    def tau_SRC(self) -> float:
        """Signal-recycling cavity round-trip time [s]."""
        return 2.0 * self.L_SRC / self.c

    @property
    def R_ITM(self) -> float:
        return 1.0 - self.T_ITM

    @property
    def R_SRM(self) -> float:
        return 1.0 - self.T_SRM

    @property
    def A_arm(self) -> float:
        """Arm carrier amplitude sqrt(P_arm / 2 hbar omega_0) [sqrt(1/s)]."""
        return math.sqrt(self.P_arm / (2.0 * HBAR * self.omega_0))

    @property
    def A_b(self) -> float:
        """Pump amplitude at the oscillator, sqrt(P_b / 2 hbar omega_0)."""
        return math.sqrt(self.P_b / (2.0 * HBAR * self.omega_0))

    @property
    def gamma_m(self) -> float:
        """Mechanical damping rate [rad/s]; exactly 0 for Q_m = inf."""
        return self.omega_m0 / self.Q_m

    @property
    def fsr_src(self) -> float:
        """Free spectral range of the signal-recycling cavity [rad/s]."""
        return 2.0 * math.pi / self.tau_SRC


@dataclass(frozen=True)
class EffectiveParams:
    """Single-mode effective rates derived from :class:`PhysicalParams`.

    omega_s    arm <-> filter mode coupling rate [rad/s]
    g_om       pump-induced parametric coupling rate [rad/s]
    alpha_sig  strain signal coupling [1/(s^{1/2} strain)]
    gamma      filter-cavity half bandwidth [rad/s]
    gamma_m    mechanical damping rate [rad/s]
    omega_m    pump offset including the analytic spring-shift seed [rad/s]
    """

    omega_s: float
    g_om: float
    alpha_sig: float
    gamma: float
    gamma_m: float
    omega_m: float


def optical_spring_shift(p: PhysicalParams) -> float:
    """Analytic estimate of the pump-induced mechanical frequency shift [rad/s].

    Uses the round-trip SRC time as the characteristic delay.  This value
    only seeds the numeric compensation search
    (:func:`wlcsim.freq_domain.compensate_spring`), which is authoritative.
    """
    tau_b = p.tau_SRC
    return p.P_b * p.omega_0 / (2.0 * p.m * p.omega_m0**2 * p.c**2 * tau_b)


def derive_effective(p: PhysicalParams) -> EffectiveParams:
    """Map physical parameters to the effective single-mode rates."""
    omega_s = p.c * math.sqrt(p.T_ITM) / (2.0 * math.sqrt(p.L_arm * p.L_SRC))
    g_om = math.sqrt(
        8.0 * math.pi * p.P_b / (p.m * p.lambda_ * p.omega_m0 * p.L_SRC)
    )
    alpha_sig = math.sqrt(p.P_arm * p.L_arm * p.omega_0 / (p.c * HBAR))
    gamma = p.c * p.T_SRM / (4.0 * p.L_SRC)
    return EffectiveParams(
        omega_s=omega_s,
        g_om=g_om,
        alpha_sig=alpha_sig,
        gamma=gamma,
        gamma_m=p.gamma_m,
        omega_m=p.omega_m0 + optical_spring_shift(p),
    )


def phase_matching_ratio(p: PhysicalParams) -> float:
    """Negative-dispersion phase-matching ratio (1 = condition met).

    Computed with the pump power at the oscillator standing in for the
    filter power; equals (g_om/omega_s)^2 / 4 up to the tiny omega_m shift,
    so nominal parameters sit near 0.21, not 1.  Reported, never asserted.
    """
    e = derive_effective(p)
    lhs = 4.0 * p.omega_0 * p.P_b / (p.m * e.omega_m * p.c**2 * p.T_ITM)
    return lhs / (p.c / p.L_arm)


def pump_power_for_g_ratio(p: PhysicalParams, ratio: float) -> float:
    """Pump power [W] that sets g_om = ratio * omega_s."""
    if ratio < 0.0:
        raise ValueError("ratio must be >= 0")
    omega_s = p.c * math.sqrt(p.T_ITM) / (2.0 * math.sqrt(p.L_arm * p.L_SRC))
    g_target = ratio * omega_s
    return g_target**2 * p.m * p.lambda_ * p.omega_m0 * p.L_SRC / (8.0 * math.pi)


def with_g_ratio(p: PhysicalParams, ratio: float) -> PhysicalParams:
    """Copy of ``p`` with P_b adjusted so that g_om = ratio * omega_s."""
    return replace(p, P_b=pump_power_for_g_ratio(p, ratio))


# -- configuration file handling -------------------------------------------


def parse_config(text: str) -> PhysicalParams:
    """Parse a flat ``key = value`` config into :class:`PhysicalParams`.

    Lines starting with ``#`` and blank lines are ignored.  Unknown keys are
    errors.  ``Q_m = inf`` selects the undamped oscillator.  All keys except
    ``Q_m`` and ``c`` are required.
    """
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _KEY_TO_ATTR:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = float(val.strip())
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {val!r}") from exc

    missing = [k for k in _CONFIG_KEYS if k not in values and k not in ("Q_m", "c")]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")

    kwargs = {_KEY_TO_ATTR[k]: v for k, v in values.items()}
    return PhysicalParams(**kwargs)


def read_config(path) -> PhysicalParams:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(p: PhysicalParams) -> str:
    """Canonical config text for ``p`` (fixed key order, repr floats)."""
    lines = []
    for key in _CONFIG_KEYS:
        v = getattr(p, _KEY_TO_ATTR[key])
        lines.append(f"{key} = {'inf' if math.isinf(v) else repr(v)}")
    return "\n".join(lines) + "\n"


def apply_overrides(p: PhysicalParams, overrides: dict[str, str]) -> PhysicalParams:
    """Apply ``--set key=value`` style overrides to a parameter set."""
    kwargs = {}
    for key, val in overrides.items():
        if key not in _KEY_TO_ATTR:
            raise ConfigError(f"unknown override key {key!r}")
        try:
            kwargs[_KEY_TO_ATTR[key]] = float(val)
        except ValueError as exc:
            raise ConfigError(f"bad override value for {key!r}: {val!r}") from exc
    return replace(p, **kwargs)


def nominal_params() -> PhysicalParams:
    """Desk-scale nominal parameter set used by the examples and tests."""
    return PhysicalParams(
        L_arm=4000.0,
        P_arm=800e3,
        T_ITM=0.005,
        L_SRC=40.0,
        T_SRM=0.02,
        P_b=6.4e3,
        lambda_=1064e-9,
        m=10e-6,
        omega_m0=2.0 * math.pi * 1e5,
        Q_m=math.inf,
    )
