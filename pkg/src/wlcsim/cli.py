"""Command-line front end.

Subcommands: ideal-spectrum, ideal-poles, full-spectrum, nyquist, td-run,
blend, compare.  All accept ``--config FILE`` plus targeted overrides
``--set key=value``; frequencies in output files are in Hz, everything
else SI.  Outputs are named ``<command>-<confighash>.<ext>`` and each run
writes a manifest alongside.  ``--plot`` renders a figure next to each
delimited output.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, blending, freq_domain, ideal, spectral, stability, time_domain
from .manifest import RunManifest, config_hash
from .params import (
    ConfigError,
    PhysicalParams,
    apply_overrides,
    derive_effective,
    nominal_params,
    parse_config,
    phase_matching_ratio,
    read_config,
    serialize_config,
    with_g_ratio,
)

_FMT = "%.10e"


def _load_params(args) -> PhysicalParams:
    p = read_config(args.config) if args.config else nominal_params()
    if args.set:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            k, _, v = item.partition("=")
            overrides[k.strip()] = v.strip()
        p = apply_overrides(p, overrides)
    return p


def _write_csv(path, header: str, columns, manifest_path_hint: str, meta: dict):
    cols = [np.asarray(c) for c in columns]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# manifest = {manifest_path_hint}\n")
        for k, v in meta.items():
            fh.write(f"# {k} = {v}\n")
        fh.write(header + "\n")
        for row in zip(*cols):
            fh.write(",".join(_FMT % v for v in row) + "\n")
    return path


def _grid_from_args(args) -> np.ndarray:
    return freq_domain.log_grid(args.fmin, args.fmax, args.points)


def cmd_ideal_spectrum(args, outdir: Path) -> int:
    p = _load_params(args)
    opts = {"fmin": args.fmin, "fmax": args.fmax, "points": args.points,
            "g_ratio": args.g_ratio}
    h = config_hash(p, "ideal-spectrum", opts)
    man = RunManifest("ideal-spectrum", h, None, opts)
    if args.g_ratio is not None:
        p = with_g_ratio(p, args.g_ratio)
    e = derive_effective(p)
    grid = _grid_from_args(args)
    s = ideal.ideal_shot_noise_psd(grid, e)
    csv = outdir / f"ideal-spectrum-{h}.csv"
    man.add(_write_csv(csv, "freq_hz,sqrt_Shh,Shh",
                       [grid / (2 * math.pi), np.sqrt(s), s],
                       f"ideal-spectrum-{h}.manifest.json",
                       {"g_om_over_omega_s": e.g_om / e.omega_s}))
    if args.plot:
        from . import plotting
        man.add(plotting.plot_asd(outdir / f"ideal-spectrum-{h}.png",
                                  grid / (2 * math.pi),
                                  [("single-mode model", s)]))
    man.write(outdir)
    print(csv)
    return 0


def cmd_ideal_poles(args, outdir: Path) -> int:
    p = _load_params(args)
    opts = {"g_ratio": args.g_ratio}
    h = config_hash(p, "ideal-poles", opts)
    man = RunManifest("ideal-poles", h, None, opts)
    if args.g_ratio is not None:
        p = with_g_ratio(p, args.g_ratio)
    e = derive_effective(p)
    ps = ideal.ideal_poles(e)
    verdict = "marginal" if ps.marginal else ("stable" if ps.stable else "unstable")
    payload = {
        "roots": [{"re": r.real, "im": r.imag} for r in ps.roots],
        "verdict": verdict,
    }
    out = outdir / f"ideal-poles-{h}.json"
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    man.add(out)
    man.write(outdir)
    print(out)
    return 0


def cmd_full_spectrum(args, outdir: Path) -> int:
    p = _load_params(args)
    compensate = args.compensate == "on"
    opts = {"fmin": args.fmin, "fmax": args.fmax, "points": args.points,
            "channel": args.channel, "compensate": args.compensate}
    h = config_hash(p, "full-spectrum", opts)
    man = RunManifest("full-spectrum", h, None, opts)

    grid = _grid_from_args(args)
    cs = freq_domain.full_spectra(p, grid, compensate=compensate)
    s_sig = cs.S_signal.copy()
    s_idl = cs.S_idler.copy()
    cross = cs.S_cross.copy()
    if args.channel == "signal":
        s_idl[:] = np.nan
        cross[:] = np.nan
    elif args.channel == "idler":
        s_sig[:] = np.nan
        cross[:] = np.nan

    e = derive_effective(p)
    meta = {
        "pump_offset_rad_s": cs.pump_offset,
        "spring_shift_rad_s": cs.pump_offset - p.omega_m0,
        "idler_theta_rad": cs.idler_theta,
        "idler_split_over_src_fsr": 2 * cs.pump_offset / p.fsr_src,
        "phase_matching_ratio": phase_matching_ratio(p),
        "g_om_over_omega_s": e.g_om / e.omega_s,
    }
    csv = outdir / f"full-spectrum-{h}.csv"
    man.add(_write_csv(
        csv,
        "freq_hz,sqrt_Shh_signal,sqrt_Shh_idler,re_cross,im_cross",
        [cs.freq_hz, np.sqrt(s_sig), np.sqrt(s_idl), cross.real, cross.imag],
        f"full-spectrum-{h}.manifest.json",
        meta,
    ))
    if args.plot:
        from . import plotting
        curves = [("signal channel", cs.S_signal), ("idler channel", cs.S_idler)]
        man.add(plotting.plot_asd(outdir / f"full-spectrum-{h}.png",
                                  cs.freq_hz, curves))
    man.write(outdir)
    print(csv)
    return 0


def cmd_nyquist(args, outdir: Path) -> int:
    p = _load_params(args)
    opts = {"compensate": args.compensate, "g_ratio": args.g_ratio,
            "omega_max": args.omega_max}
    h = config_hash(p, "nyquist", opts)
    man = RunManifest("nyquist", h, None, opts)
    contour = stability.nyquist(
        p,
        compensate=args.compensate == "on",
        g_ratio=args.g_ratio,
        omega_max=args.omega_max,
    )
    csv = outdir / f"nyquist-{h}.csv"
    man.add(_write_csv(csv, "omega_rad_s,re,im",
                       [contour.omega, contour.z.real, contour.z.imag],
                       f"nyquist-{h}.manifest.json", {}))
    out = outdir / f"nyquist-{h}.json"
    with open(out, "w", encoding="utf-8") as fh:
        json.dump({"winding": contour.winding, "verdict": contour.verdict}, fh, indent=2)
        fh.write("\n")
    man.add(out)
    if args.plot:
        from . import plotting
        man.add(plotting.plot_nyquist(outdir / f"nyquist-{h}.png", contour.z,
                                      title=f"verdict: {contour.verdict}"))
    man.write(outdir)
    print(out)
    return 0


def cmd_td_run(args, outdir: Path) -> int:
    p = _load_params(args)
    opts = {"mode": args.mode, "duration": args.duration, "seed": args.seed,
            "compensate": args.compensate, "g_ratio": args.g_ratio}
    h = config_hash(p, "td-run", opts)
    man = RunManifest("td-run", h, args.seed, opts)
    if args.g_ratio is not None:
        p = with_g_ratio(p, args.g_ratio)
    cfg = time_domain.SimConfig(
        duration=args.duration, seed=args.seed, compensate=args.compensate == "on"
    )
    if args.mode == "step":
        run = time_domain.run_step_response(p, cfg)
    elif args.mode == "noise":
        run = time_domain.run_noise(p, cfg)
    else:
        run = time_domain.run_signal(p, cfg)

    npz = outdir / f"td-run-{h}.npz"
    save = {
        "dt": run.dt,
        "duration": args.duration,
        "mode": args.mode,
        "pump_offset": run.pump_offset,
        "b_out": run.b_out,
        "x": run.x,
        "x_dt": run.x_dt,
        "overflow_step": run.overflow_step,
    }
    if run.injected is not None:
        save["injected"] = run.injected
    np.savez_compressed(npz, **save)
    man.add(npz)

    if args.mode == "step":
        v = time_domain.classify_step(run)
        out = outdir / f"td-run-{h}.json"
        with open(out, "w", encoding="utf-8") as fh:
            json.dump({
                "verdict": "stable" if v.stable else "unstable",
                "growth_rate_per_s": None if math.isinf(v.growth_rate) else v.growth_rate,
                "growth_factor": None if math.isinf(v.growth_factor) else v.growth_factor,
                "settle_time_s": None if math.isnan(v.settle_time) else v.settle_time,
                "overflowed": v.overflowed,
            }, fh, indent=2)
            fh.write("\n")
        man.add(out)
        print(out)
    else:
        print(npz)
    if args.plot:
        from . import plotting
        tx = np.arange(run.x.shape[0]) * run.x_dt
        try:
            te, env = time_domain.envelope(run.x, 1.0 / run.x_dt)
        except ValueError:
            te, env = None, None
        man.add(plotting.plot_timeseries(outdir / f"td-run-{h}.png", tx, run.x,
                                         te, env))
    man.write(outdir)
    return 0


def _read_spectra_csv(path):
    """Parse a '#'-annotated CSV into a dict of named columns."""
    names = None
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if names is None:
                names = [c.strip() for c in line.split(",")]
            else:
                rows.append([float(v) for v in line.split(",")])
    if names is None or not rows:
        raise ValueError(f"no data rows in {path}")
    arr = np.asarray(rows)
    return {n: arr[:, i] for i, n in enumerate(names)}


def cmd_blend(args, outdir: Path) -> int:
    p = _load_params(args)
    opts = {"spectra": str(args.spectra) if args.spectra else None,
            "td_noise": str(args.td_noise) if args.td_noise else None,
            "td_signal": str(args.td_signal) if args.td_signal else None,
            "seed": args.seed}
    h = config_hash(p, "blend", opts)
    man = RunManifest("blend", h, args.seed, opts)

    if args.spectra:
        data = _read_spectra_csv(args.spectra)
        freq = data["freq_hz"]
        s11 = data["sqrt_Shh_signal"] ** 2
        s22 = data["sqrt_Shh_idler"] ** 2
        s12 = data["re_cross"] + 1j * data["im_cross"]
    elif args.td_noise and args.td_signal:
        freq, s11, s22, s12 = _td_channel_spectra(args.td_noise, args.td_signal)
    else:
        print("blend: provide --spectra CSV or --td-noise/--td-signal NPZ pair",
              file=sys.stderr)
        return 2

    good = np.isfinite(s11) & np.isfinite(s22) & np.isfinite(s12) & (freq > 0)
    freq, s11, s22, s12 = freq[good], s11[good], s22[good], s12[good]
    w, s_blend = blending.optimal_blend(s11, s22, s12)

    csv = outdir / f"blend-{h}.csv"
    man.add(_write_csv(
        csv,
        "freq_hz,sqrt_S_signal,sqrt_S_idler,sqrt_S_blend,re_w,im_w",
        [freq, np.sqrt(s11), np.sqrt(s22), np.sqrt(np.abs(s_blend)), w.real, w.imag],
        f"blend-{h}.manifest.json", {},
    ))
    if args.plot:
        from . import plotting
        man.add(plotting.plot_asd(
            outdir / f"blend-{h}.png", freq,
            [("signal channel", s11), ("idler channel", s22), ("optimal blend", s_blend)],
        ))
    man.write(outdir)
    print(csv)
    return 0


def _td_channel_spectra(noise_npz, signal_npz, nperseg=1 << 15, t_discard=0.1):
    """Strain-referred channel spectra and cross spectrum from a noise run
    and a white-strain signal run (common parameters)."""
    rn = np.load(noise_npz)
    rs = np.load(signal_npz)
    if rs["mode"] != "signal" or rn["mode"] != "noise":
        raise ValueError("expected a noise-mode and a signal-mode run")
    fs = 1.0 / float(rn["dt"])
    wp = float(rn["pump_offset"])

    def channels(b_out):
        zs, fs2 = time_domain.demodulate(b_out, 0.0, fs)
        zi, _ = time_domain.demodulate(b_out, 2.0 * wp, fs)
        return zs, zi, fs2

    zs_n, zi_n, fs2 = channels(rn["b_out"])
    zs_s, zi_s, _ = channels(rs["b_out"])
    h_dec, _ = time_domain.demodulate(rs["injected"].astype(complex), 0.0, fs)
    h_dec = h_dec.real
    nd = int(t_discard * fs2)

    # homodyne angle for the idler from the measured transfer phases
    theta = _idler_theta_from_td(h_dec[nd:], zi_s[nd:], fs2, nperseg)

    y_sig_n = time_domain.quadrature(zs_n)[nd:]
    y_idl_n = time_domain.quadrature(zi_n, theta)[nd:]
    y_sig_s = time_domain.quadrature(zs_s)[nd:]
    y_idl_s = time_domain.quadrature(zi_s, theta)[nd:]

    t_sig = spectral.estimate_tf(h_dec[nd:], y_sig_s, fs2, nperseg)
    t_idl = spectral.estimate_tf(h_dec[nd:], y_idl_s, fs2, nperseg)
    s_y1 = spectral.welch_psd(y_sig_n, fs2, nperseg)
    s_y2 = spectral.welch_psd(y_idl_n, fs2, nperseg)
    s_y12 = spectral.welch_csd(y_sig_n, y_idl_n, fs2, nperseg)

    scale = freq_domain.INJECTED_OVER_VACUUM
    s11, _ = spectral.strain_refer(s_y1, t_sig)
    s22, _ = spectral.strain_refer(s_y2, t_idl)
    s12 = s_y12.values / (t_sig.values * np.conj(t_idl.values)) / scale
    return s_y1.freqs, s11.values / scale, s22.values / scale, s12


def _idler_theta_from_td(h, z_idl, fs, nperseg):
    """Empirical homodyne angle: align the low-band transfer phase of the
    complex idler baseband so its quadrature carries the signal."""
    tf_re = spectral.estimate_tf(h, z_idl.real, fs, nperseg)
    tf_im = spectral.estimate_tf(h, z_idl.imag, fs, nperseg)
    sel = (tf_re.freqs >= 5.0) & (tf_re.freqs <= 20.0)
    t_c = tf_re.values[sel] + 1j * tf_im.values[sel]
    # Y_theta = sqrt(2) Im(e^{i theta} z); maximize the band response
    ang = math.pi / 2.0 - np.angle(t_c)
    return float(np.angle(np.mean(np.exp(1j * ang))))


def cmd_compare(args, outdir: Path) -> int:
    p = _load_params(args)
    opts = {"fmin": args.fmin, "fmax": args.fmax, "points": args.points,
            "seed": args.seed, "td_duration": args.td_duration}
    h = config_hash(p, "compare", opts)
    man = RunManifest("compare", h, args.seed, opts)
    e = derive_effective(p)

    grid = _grid_from_args(args)
    freq_hz = grid / (2 * math.pi)
    s_ideal = ideal.ideal_shot_noise_psd(grid, e)
    cs = freq_domain.full_spectra(p, grid, compensate=True)

    band = (freq_hz >= 100.0) & (freq_hz <= 1000.0)
    fd_dev = float(np.mean(np.abs(cs.S_signal[band] / s_ideal[band] - 1.0)))

    poles = ideal.ideal_poles(e)
    ideal_verdict = "marginal" if poles.marginal else (
        "stable" if poles.stable else "unstable")
    contour = stability.nyquist(p, compensate=True)

    report = {
        "ideal_verdict": ideal_verdict,
        "nyquist_verdict": contour.verdict,
        "fd_vs_ideal_band_mean_dev": fd_dev,
        "band_hz": [100.0, 1000.0],
        "pump_offset_rad_s": cs.pump_offset,
    }

    columns = [freq_hz, np.sqrt(s_ideal), np.sqrt(cs.S_signal), np.sqrt(cs.S_idler)]
    header = "freq_hz,sqrt_Shh_ideal,sqrt_Shh_fd_signal,sqrt_Shh_fd_idler"

    if args.td_duration > 0:
        cfg = time_domain.SimConfig(duration=args.td_duration, seed=args.seed,
                                    compensate=True)
        step = time_domain.run_step_response(p, time_domain.SimConfig(
            duration=min(0.5, args.td_duration), compensate=True))
        verdict = time_domain.classify_step(step)
        report["td_verdict"] = "stable" if verdict.stable else "unstable"

        rs = time_domain.run_signal(p, cfg)
        h_dec, fs2 = time_domain.demodulate(rs.injected.astype(complex), 0.0, rs.fs)
        y = time_domain.quadrature(time_domain.demodulate(rs.b_out, 0.0, rs.fs)[0])
        nd = int(0.1 * fs2)
        tf_est = spectral.estimate_tf(h_dec.real[nd:], y[nd:], fs2)
        sel = (tf_est.freqs >= 10.0) & (tf_est.freqs <= 10e3)
        t_fd = freq_domain.signal_quadrature_tf(
            freq_domain.closed_loop_io(2 * math.pi * tf_est.freqs[sel], p, cs.pump_offset))
        mag = np.abs(tf_est.values[sel]) / np.abs(t_fd)
        dph = np.angle(tf_est.values[sel] / t_fd)
        report["td_vs_fd_tf_mag_dev"] = float(np.nanmean(np.abs(mag - 1.0)))
        report["td_vs_fd_tf_phase_deg"] = float(np.degrees(np.nanmean(np.abs(dph))))

    csv = outdir / f"compare-{h}.csv"
    man.add(_write_csv(csv, header, columns, f"compare-{h}.manifest.json", {}))
    out = outdir / f"compare-{h}.json"
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    man.add(out)
    if args.plot:
        from . import plotting
        man.add(plotting.plot_asd(
            outdir / f"compare-{h}.png", freq_hz,
            [("single-mode model", s_ideal), ("full model, signal", cs.S_signal),
             ("full model, idler", cs.S_idler)],
        ))
    man.write(outdir)
    print(out)
    return 0


def _add_common(sub):
    sub.add_argument("--config", help="key=value parameter file")
    sub.add_argument("--set", action="append", metavar="key=value",
                     help="override a config value (repeatable)")
    sub.add_argument("--outdir", default=".", help="output directory")
    sub.add_argument("--plot", action="store_true",
                     help="render a figure next to each delimited output")


def _add_grid(sub):
    sub.add_argument("--fmin", type=float, default=1.0)
    sub.add_argument("--fmax", type=float, default=20e3)
    sub.add_argument("--points", type=int, default=2000)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="wlcsim",
        description="Models of an interferometer arm coupled to an "
                    "optomechanical filter cavity.",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sp = ap.add_subparsers(dest="command", required=True)

    s = sp.add_parser("ideal-spectrum", help="single-mode shot-noise spectrum")
    _add_common(s)
    _add_grid(s)
    s.add_argument("--g-ratio", type=float, default=None,
                   help="set the parametric rate to this multiple of omega_s")
    s.set_defaults(func=cmd_ideal_spectrum)

    s = sp.add_parser("ideal-poles", help="single-mode pole stability")
    _add_common(s)
    s.add_argument("--g-ratio", type=float, default=None)
    s.set_defaults(func=cmd_ideal_poles)

    s = sp.add_parser("full-spectrum", help="two-channel strain noise spectra")
    _add_common(s)
    _add_grid(s)
    s.add_argument("--channel", choices=["signal", "idler", "both"], default="both")
    s.add_argument("--compensate", choices=["on", "off"], default="on")
    s.set_defaults(func=cmd_full_spectrum)

    s = sp.add_parser("nyquist", help="loop determinant contour and verdict")
    _add_common(s)
    s.add_argument("--compensate", choices=["on", "off"], default="on")
    s.add_argument("--g-ratio", type=float, default=None)
    s.add_argument("--omega-max", type=float, default=None,
                   help="sweep half-range [rad/s]; default 4x pump offset")
    s.set_defaults(func=cmd_nyquist)

    s = sp.add_parser("td-run", help="discrete-time simulation run")
    _add_common(s)
    s.add_argument("--mode", choices=["step", "noise", "signal"], required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--duration", type=float, default=1.0)
    s.add_argument("--compensate", choices=["on", "off"], default="on")
    s.add_argument("--g-ratio", type=float, default=None)
    s.set_defaults(func=cmd_td_run)

    s = sp.add_parser("blend", help="optimal two-channel blend")
    _add_common(s)
    s.add_argument("--spectra", help="full-spectrum CSV input")
    s.add_argument("--td-noise", help="td-run noise-mode NPZ")
    s.add_argument("--td-signal", help="td-run signal-mode NPZ")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_blend)

    s = sp.add_parser("compare", help="cross-model overlay and report")
    _add_common(s)
    _add_grid(s)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--td-duration", type=float, default=0.0,
                   help="seconds of time-domain simulation (0 = skip)")
    s.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        return args.func(args, outdir)
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"wlcsim {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
