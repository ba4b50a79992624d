import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from affinesmile.cli import ConfigError, load_config, parse_config, run
from affinesmile.affine import StatePoint, bond_price
from affinesmile.models import CIRParams, VasicekParams, vasicek_sigma_limit_long_bond

CIR_MODEL = """
[model]
name = "cir"
kappa = 0.9
theta = 0.08888888888888889
delta = 0.18165902124584949
"""

VASICEK_MODEL = CIR_MODEL.replace('"cir"', '"vasicek"')


def _read(path):
    text = path.read_text()
    header, body = text.split("\n", 1)
    return header, list(csv.DictReader(io.StringIO(body)))


def _run(tmp_path, command, toml, *extra):
    cfg = tmp_path / "scenario.toml"
    cfg.write_text(toml)
    out = tmp_path / "out.csv"
    code = run([command, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def _float(v):
    return float(v) if v != "" else math.nan


def test_fig2_smile_schema(tmp_path):
    out = tmp_path / "fig2.csv"
    assert run(["smile", "--config", "fig2", "--out", str(out)]) == 0
    header, rows = _read(out)
    assert header.startswith("# affinesmile-csv schema=1 command=smile model=cir")
    assert list(rows[0]) == ["T", "k_minus_x", "sigma_exact", "sigma_bar0", "sigma_bar1", "sigma_bar2", "flags"]
    assert len(rows) == 4 * 41
    m = [float(r["k_minus_x"]) for r in rows if float(r["T"]) == 0.25]
    assert m[0] == pytest.approx(-0.1) and m[-1] == pytest.approx(0.1)
    # blank exact values always carry a flag
    assert all(r["flags"] for r in rows if r["sigma_exact"] == "")
    out2 = tmp_path / "again.csv"
    run(["smile", "--config", "fig2", "--out", str(out2)])
    assert out.read_text() == out2.read_text()


def test_vasicek_smile_exact_equals_sigma_bar0(tmp_path):
    toml = VASICEK_MODEL + "\n[scenario]\nT = 0.5\nTbar = 3.0\ny = [0.08]\nk_minus_x = [-0.05, 0.0, 0.05]\n"
    code, out = _run(tmp_path, "smile", toml)
    assert code == 0
    _, rows = _read(out)
    for r in rows:
        assert float(r["sigma_exact"]) == pytest.approx(float(r["sigma_bar0"]), abs=1e-6)
        assert float(r["sigma_bar2"]) == float(r["sigma_bar0"])


def test_empty_strike_grid_is_rejected(tmp_path, capsys):
    toml = CIR_MODEL + "\n[scenario]\nT = 0.5\nTbar = 2.0\ny = [0.08]\nk_minus_x = []\n"
    code, out = _run(tmp_path, "smile", toml)
    assert code == 2 and not out.exists()
    record = json.loads(capsys.readouterr().err.strip())
    assert record["error"] == "ConfigError" and "empty" in record["message"]


def test_unsorted_grid_and_bad_dates_rejected():
    base = {"model": {"name": "cir", "kappa": 0.9, "theta": 0.1, "delta": 0.1}}
    with pytest.raises(ConfigError):
        parse_config({**base, "scenario": {"T": 0.5, "Tbar": 2.0, "y": [0.08], "k_minus_x": [0.01, 0.0]}}, "smile")
    with pytest.raises(ConfigError):
        parse_config({**base, "scenario": {"T": 2.5, "Tbar": 2.0, "y": [0.08]}}, "smile")
    with pytest.raises(ConfigError):
        parse_config({**base, "scenario": {"T": 0.5, "Tbar": 2.0, "y": [0.08, 0.1]}}, "smile")
    with pytest.raises(ConfigError):
        parse_config({"model": {"name": "hull-white"}, "scenario": {}}, "smile")
    with pytest.raises(ConfigError):
        parse_config({**base, "scenario": {"T": 0.5, "Tbar": 2.0, "y": [0.08]}, "mc": {"pathz": 3}}, "smile")


def test_missing_config_is_reported(capsys):
    assert run(["smile", "--config", "no-such-scenario"]) == 2
    assert json.loads(capsys.readouterr().err)["exit_code"] == 2


@pytest.mark.parametrize("fig, bound", [("fig3", 0.002), ("fig5", 0.001)])
def test_error_surface_best_region(tmp_path, fig, bound):
    out = tmp_path / f"{fig}.csv"
    assert run(["error-surface", "--config", fig, "--out", str(out)]) == 0
    _, rows = _read(out)
    errs = [_float(r["rel_error"]) for r in rows]
    assert np.nanmin(errs) < bound


def test_single_cell_error_surface(tmp_path):
    toml = CIR_MODEL + "\n[scenario]\nT = 0.25\nTbar = 2.0\ny = [0.08]\nk_minus_x = [0.0]\n"
    code, out = _run(tmp_path, "error-surface", toml)
    assert code == 0
    _, rows = _read(out)
    assert len(rows) == 1 and float(rows[0]["rel_error"]) < 0.002


def test_error_surface_needs_exact_engine(tmp_path, capsys):
    out = tmp_path / "fv.csv"
    toml_path = tmp_path / "fv.toml"
    from affinesmile.cli import resolve_config_path

    text = resolve_config_path("fig6").read_text().replace("[sweep]\nrho = [-0.7, -0.3, 0.3, 0.7]", "")
    text = text.replace("delta2 = 0.28284271247461906", "delta2 = 0.28284271247461906\nrho = 0.3")
    toml_path.write_text(text)
    assert run(["error-surface", "--config", str(toml_path), "--out", str(out)]) == 3
    assert json.loads(capsys.readouterr().err)["error"] == "CapabilityError"


def test_fong_vasicek_smile_flags_missing_exact(tmp_path):
    out = tmp_path / "fig6.csv"
    assert run(["smile", "--config", "fig6", "--out", str(out)]) == 0
    _, rows = _read(out)
    assert list(rows[0])[0] == "rho"
    assert len(rows) == 4 * 4 * 41
    assert all(r["sigma_exact"] == "" and "exact:capability" in r["flags"] for r in rows)
    assert all(r["sigma_bar2"] != "" for r in rows)


def test_vasicek_term_structure(tmp_path):
    out = tmp_path / "fig1.csv"
    assert run(["vasicek-term", "--config", "fig1", "--out", str(out)]) == 0
    _, rows = _read(out)
    for Tbar in (1.0, 3.0, 5.0, 10.0):
        curve = [r for r in rows if float(r["Tbar"]) == Tbar]
        sig = np.array([float(r["sigma"]) for r in curve])
        assert np.all(np.diff(sig) > 0)
        assert sig[-1] == pytest.approx(float(curve[-1]["sigma_limit_expiry"]), rel=0.01)


def test_vasicek_term_limits(tmp_path):
    toml = VASICEK_MODEL + "\n[scenario]\nT = 0.5\nTbar = [0.5, 1e6]\ny = [0.08]\nt_grid = [0.0, 0.25]\n"
    code, out = _run(tmp_path, "vasicek-term", toml)
    assert code == 0
    _, rows = _read(out)
    assert all(float(r["sigma"]) == 0.0 for r in rows if float(r["Tbar"]) == 0.5)
    p = VasicekParams(0.9, 0.08888888888888889, 0.18165902124584949)
    for r in rows:
        if float(r["Tbar"]) == 1e6:
            ref = vasicek_sigma_limit_long_bond(p, float(r["t"]), 0.5)
            assert float(r["sigma"]) == pytest.approx(ref, abs=1e-4)


def test_price_vasicek_exact_matches_sigma0(tmp_path):
    toml = VASICEK_MODEL + "\n[scenario]\nT = 0.5\nTbar = 3.0\ny = [0.08]\nk_minus_x = [-0.02, 0.0, 0.02]\n"
    _, out = _run(tmp_path, "price", toml, "--engine", "exact")
    _, exact = _read(out)
    _, out = _run(tmp_path, "price", toml, "--engine", "bar0")
    _, bar0 = _read(out)
    for a, b in zip(exact, bar0):
        assert float(a["price"]) == pytest.approx(float(b["price"]), abs=1e-7)


@pytest.mark.slow
def test_price_cir_exact_vs_mc(tmp_path):
    toml = CIR_MODEL + "\n[scenario]\nT = 0.25\nTbar = 2.0\ny = [0.08]\nk_minus_x = [0.0]\n[mc]\npaths = 100000\nsteps_per_unit = 1000\n"
    _, out = _run(tmp_path, "price", toml, "--engine", "exact")
    _, exact = _read(out)
    code, out = _run(tmp_path, "price", toml, "--engine", "mc", "--seed", "5")
    assert code == 0
    _, mc = _read(out)
    assert abs(float(mc[0]["price"]) - float(exact[0]["price"])) <= 3 * float(mc[0]["stderr"])


def test_price_at_expiry_is_intrinsic(tmp_path):
    toml = CIR_MODEL + "\n[scenario]\nt = 0.5\nT = 0.5\nTbar = 2.0\ny = [0.08]\nk_minus_x = [-0.01, 0.01]\n"
    code, out = _run(tmp_path, "price", toml, "--engine", "bar2")
    assert code == 0
    _, rows = _read(out)
    x = math.log(bond_price(CIRParams(0.9, 0.08888888888888889, 0.18165902124584949), StatePoint(0.5, [0.08]), 2.0))
    assert "intrinsic" in rows[0]["flags"]
    assert float(rows[0]["price"]) == pytest.approx(math.exp(x) - math.exp(x - 0.01), rel=1e-12)
    assert float(rows[1]["price"]) == 0.0


def test_bundled_configs_load():
    for name, cmd in [("fig1", "vasicek-term"), ("fig2", "smile"), ("fig3", "error-surface"),
                      ("fig4", "smile"), ("fig5", "error-surface"), ("fig6", "smile")]:
        cfg = load_config(name, cmd)
        assert cfg.k_minus_x == tuple(sorted(cfg.k_minus_x))


def test_module_entry_point(tmp_path):
    out = tmp_path / "fig1.csv"
    proc = subprocess.run([sys.executable, "-m", "affinesmile", "vasicek-term", "--config", "fig1", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.read_text().startswith("# affinesmile-csv schema=1")
