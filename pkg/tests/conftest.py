import numpy as np
import pytest

from wlcsim import freq_domain, time_domain
from wlcsim.params import derive_effective, nominal_params, with_g_ratio


@pytest.fixture(scope="session")
def nominal():
    return nominal_params()


@pytest.fixture(scope="session")
def effective(nominal):
    return derive_effective(nominal)


@pytest.fixture(scope="session")
def pump_offset(nominal):
    return freq_domain.compensate_spring(nominal)


@pytest.fixture(scope="session")
def threshold_params(nominal):
    """Pump power set exactly at the balanced point g_om = omega_s."""
    return with_g_ratio(nominal, 1.0)


@pytest.fixture(scope="session")
def signal_run(nominal):
    """2 s white-strain run, compensated, undamped (shared by several
    transfer-function tests)."""
    cfg = time_domain.SimConfig(duration=2.0, seed=7, compensate=True)
    return time_domain.run_signal(nominal, cfg, h_asd=1e-22)


@pytest.fixture(scope="session")
def noise_run(nominal):
    """2 s vacuum-noise run, compensated, undamped."""
    cfg = time_domain.SimConfig(duration=2.0, seed=21, compensate=True)
    return time_domain.run_noise(nominal, cfg)


def estimate_signal_tf(run, nperseg=1 << 15, t_discard=0.1):
    """(freqs, T) of the carrier-band phase quadrature from a signal run."""
    from wlcsim import spectral

    z, fs2 = time_domain.demodulate(run.b_out, 0.0, run.fs)
    y = time_domain.quadrature(z)
    h_dec, _ = time_domain.demodulate(run.injected.astype(complex), 0.0, run.fs)
    nd = int(t_discard * fs2)
    tf = spectral.estimate_tf(h_dec.real[nd:], y[nd:], fs2, nperseg)
    return tf, fs2
