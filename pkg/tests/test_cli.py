import json
from pathlib import Path

import numpy as np
import pytest

from wlcsim.cli import main
from wlcsim.params import nominal_params, serialize_config


@pytest.fixture()
def cfgfile(tmp_path):
    path = tmp_path / "params.cfg"
    path.write_text(serialize_config(nominal_params()))
    return str(path)


def _outputs(d, pattern):
    return sorted(f for f in Path(d).glob(pattern)
                  if not f.name.endswith(".manifest.json"))


def _read_csv(path):
    names, rows = None, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if names is None:
                names = line.split(",")
            else:
                rows.append([float(v) for v in line.split(",")])
    arr = np.asarray(rows)
    return names, {n: arr[:, i] for i, n in enumerate(names)}


def test_ideal_spectrum_columns_and_determinism(cfgfile, tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    for d in (d1, d2):
        assert main(["ideal-spectrum", "--config", cfgfile, "--outdir", str(d),
                     "--points", "50"]) == 0
    f1 = next(d1.glob("ideal-spectrum-*.csv"))
    f2 = next(d2.glob("ideal-spectrum-*.csv"))
    assert f1.name == f2.name
    assert f1.read_bytes() == f2.read_bytes()
    names, cols = _read_csv(f1)
    assert names == ["freq_hz", "sqrt_Shh", "Shh"]
    np.testing.assert_allclose(cols["sqrt_Shh"] ** 2, cols["Shh"], rtol=1e-9)


def test_ideal_poles_json(cfgfile, tmp_path):
    assert main(["ideal-poles", "--config", cfgfile, "--outdir", str(tmp_path)]) == 0
    payload = json.loads(_outputs(tmp_path, "ideal-poles-*.json")[0].read_text())
    assert payload["verdict"] == "stable"
    assert len(payload["roots"]) == 2
    assert {"re", "im"} == set(payload["roots"][0])


def test_full_spectrum_channel_selection(cfgfile, tmp_path):
    assert main(["full-spectrum", "--config", cfgfile, "--outdir", str(tmp_path),
                 "--points", "40", "--channel", "signal"]) == 0
    names, cols = _read_csv(next(tmp_path.glob("full-spectrum-*.csv")))
    assert names == ["freq_hz", "sqrt_Shh_signal", "sqrt_Shh_idler",
                     "re_cross", "im_cross"]
    assert np.all(np.isfinite(cols["sqrt_Shh_signal"]))
    assert np.all(np.isnan(cols["sqrt_Shh_idler"]))


def test_nyquist_outputs(cfgfile, tmp_path):
    assert main(["nyquist", "--config", cfgfile, "--outdir", str(tmp_path),
                 "--compensate", "on"]) == 0
    payload = json.loads(_outputs(tmp_path, "nyquist-*.json")[0].read_text())
    assert payload == {"winding": 0, "verdict": "stable"}
    names, cols = _read_csv(next(tmp_path.glob("nyquist-*.csv")))
    assert names == ["omega_rad_s", "re", "im"]
    assert np.all(np.diff(cols["omega_rad_s"]) > 0)


def test_td_run_step_verdict_and_npz(cfgfile, tmp_path):
    assert main(["td-run", "--mode", "step", "--duration", "0.2",
                 "--config", cfgfile, "--outdir", str(tmp_path)]) == 0
    payload = json.loads(_outputs(tmp_path, "td-run-*.json")[0].read_text())
    assert payload["verdict"] in ("stable", "unstable")
    data = np.load(next(tmp_path.glob("td-run-*.npz")))
    assert {"dt", "duration", "mode", "pump_offset", "b_out", "x"} <= set(data.files)


def test_blend_from_spectra(cfgfile, tmp_path):
    assert main(["full-spectrum", "--config", cfgfile, "--outdir", str(tmp_path),
                 "--points", "60"]) == 0
    spectra = next(tmp_path.glob("full-spectrum-*.csv"))
    assert main(["blend", "--spectra", str(spectra), "--config", cfgfile,
                 "--outdir", str(tmp_path)]) == 0
    names, cols = _read_csv(next(tmp_path.glob("blend-*.csv")))
    assert names == ["freq_hz", "sqrt_S_signal", "sqrt_S_idler", "sqrt_S_blend",
                     "re_w", "im_w"]
    s1 = cols["sqrt_S_signal"] ** 2
    s2 = cols["sqrt_S_idler"] ** 2
    sb = cols["sqrt_S_blend"] ** 2
    assert np.all(sb <= np.minimum(s1, s2) * (1 + 1e-9))


def test_compare_report(cfgfile, tmp_path):
    assert main(["compare", "--config", cfgfile, "--outdir", str(tmp_path),
                 "--points", "80"]) == 0
    payload = json.loads(_outputs(tmp_path, "compare-*.json")[0].read_text())
    assert payload["ideal_verdict"] == "stable"
    assert payload["nyquist_verdict"] == "stable"
    assert 0.0 < payload["fd_vs_ideal_band_mean_dev"] < 0.3


def test_override_changes_hash(cfgfile, tmp_path):
    assert main(["ideal-poles", "--config", cfgfile, "--outdir", str(tmp_path)]) == 0
    assert main(["ideal-poles", "--config", cfgfile, "--outdir", str(tmp_path),
                 "--set", "P_b=7470.9"]) == 0
    assert len(_outputs(tmp_path, "ideal-poles-*.json")) == 2


def test_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("L_arm = 4000\nunknown_key = 3\n")
    assert main(["ideal-poles", "--config", str(bad), "--outdir", str(tmp_path)]) == 1


def test_manifest_written_and_referenced(cfgfile, tmp_path):
    assert main(["ideal-spectrum", "--config", cfgfile, "--outdir", str(tmp_path),
                 "--points", "30"]) == 0
    man = json.loads(next(tmp_path.glob("*.manifest.json")).read_text())
    assert man["command"] == "ideal-spectrum"
    assert any(p.endswith(".csv") for p in man["outputs"])
    csv = next(tmp_path.glob("ideal-spectrum-*.csv"))
    first = csv.read_text().splitlines()[0]
    assert first.startswith("# manifest = ")


def test_console_script_and_version():
    import subprocess
    out = subprocess.run(["wlcsim", "--version"], capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.strip() == "0.1.0"


def test_plot_flag_writes_figures(cfgfile, tmp_path):
    assert main(["ideal-spectrum", "--config", cfgfile, "--outdir", str(tmp_path),
                 "--points", "30", "--plot"]) == 0
    assert len(list(tmp_path.glob("ideal-spectrum-*.png"))) == 1
