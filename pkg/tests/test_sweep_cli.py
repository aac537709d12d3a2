import csv
import json
import math

import pytest

from wgmcqed.analysis import ModeMetrics
from wgmcqed.cqed import figures_from_metrics
from wgmcqed.physics import CESIUM_D2
from wgmcqed.sweep import cli
from wgmcqed.sweep.config import ConfigError, build, default_config, load_config, parse_value
from wgmcqed.sweep.pipeline import SweepRecord
from wgmcqed.sweep.report import CSV_COLUMNS, emit_report, table_rows, trend_checks


def _record(D, d, pol="TM", vm=20.0, ratio=0.4, q=1e9):
    m = ModeMetrics(mode_volume=vm, atom_site=(D / 2, 0.0), normalized_field_at_atom=ratio,
                    resonance_wavelength=0.852359, q_rad=q, polarization=pol)
    blue = ModeMetrics(mode_volume=vm, atom_site=(D / 2, 0.0), normalized_field_at_atom=ratio,
                       resonance_wavelength=0.85, q_rad=q, polarization=pol, m=101)
    red = ModeMetrics(mode_volume=vm, atom_site=(D / 2, 0.0), normalized_field_at_atom=ratio,
                      resonance_wavelength=0.855, q_rad=q, polarization=pol, m=100)
    f, b = figures_from_metrics(m, CESIUM_D2, 2.4e10)
    return SweepRecord(D=D, d=d, polarization=pol, m_blue=101, m_red=100, blue=blue, red=red, metrics=m,
                       figures=f, budget=b, fsr=2e12, provenance={"settings_hash": "abc"})


def _family(D=20.0):
    # V_m and Q rise with d, g falls
    return [_record(D, d, vm=5 + 10 * d, q=10 ** (8 + d)) for d in (0.75, 1.0, 1.5, 2.0)]


def test_defaults_and_overrides(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('[geometry]\nD = [16, 18]\nd = {start = 1.0, stop = 2.0, num = 3}\npolarizations = "TM"\n'
                 "[solver]\nn_eigs = 8\n")
    cfg = load_config(p, ["solver.per_wavelength=12", 'output.format="csv"'])
    sc = build(cfg)
    assert len(sc.grid) == 6
    assert [g.minor_diameter for g in sc.geometries[:3]] == [1.0, 1.5, 2.0]
    assert sc.pipeline.solver.per_wavelength == 12.0
    assert sc.pipeline.solver.n_eigs == 8
    assert sc.output_format == "csv"
    # the resolved config records every default
    assert cfg["solver"]["pml_thickness"] == 1.5 and cfg["water"]["thickness_nm"] == 0.2


@pytest.mark.parametrize("override", ["solver.nope=1", "geometry.D=[-1]", "geometry.polarizations=['XY']",
                                      "solver.per_wavelength=2", "output.format=\"pdf\"", "geometry.D=[]",
                                      "solver.quant_width=30"])
def test_invalid_config(override):
    with pytest.raises(ConfigError):
        load_config(None, [override])


def test_minor_larger_than_principal():
    with pytest.raises(ConfigError):
        build(load_config(None, ["geometry.D=[10]", "geometry.d=[12]"]))


def test_parse_value():
    assert parse_value("[1, 2]") == [1, 2]
    assert parse_value("1e-3") == 1e-3
    assert parse_value("sphere") == "sphere"


def test_csv_schema_and_json(tmp_path):
    recs = _family() + [SweepRecord(D=20.0, d=0.5, polarization="TM", status="failed", error="BracketError: x")]
    paths = emit_report(recs, tmp_path, "both", figures=(4, 7), table=True, config=default_config())
    names = {p.name for p in paths}
    assert {"records.csv", "records.json", "fig4_20_TM.csv", "fig7_20_TM.csv", "table1.csv"} <= names
    with open(tmp_path / "records.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert all(len(r) == len(CSV_COLUMNS) for r in rows)
    assert len(rows) == 1 + len(recs)
    doc = json.loads((tmp_path / "records.json").read_text())
    assert doc["schema_version"] == 1
    assert doc["counts"] == {"records": 5, "failed": 1}
    assert doc["config"]["solver"]["penalty"] == 1.0


def test_fig7_plot_data_monotone(tmp_path):
    emit_report(_family(), tmp_path, "csv", figures=(7,))
    with open(tmp_path / "fig7_20_TM.csv") as fh:
        rows = list(csv.reader(fh))[1:]
    d = [float(r[0]) for r in rows]
    g = [float(r[1]) for r in rows]
    assert d == sorted(d)
    assert all(a > b for a, b in zip(g, g[1:]))  # g rises as d decreases


def test_trend_checks_flag_violation():
    checks = trend_checks(_family())
    assert all(c["passed"] for c in checks if c["check"] != "Q_total near Q_mat for d > 1 um")
    bad = _family()
    bad[1] = _record(20.0, 1.0, vm=100.0, q=1e9)
    checks = {c["check"]: c["passed"] for c in trend_checks(bad)}
    assert not checks["V_m increasing in d"]


def test_table_contains_reference_rows():
    rows = table_rows(_family())
    systems = [r[0] for r in rows]
    assert "Toroid max g" in systems and "Toroid min N0" in systems
    fp = [r for r in rows if r[0].startswith("Fabry-Perot experimental")][0]
    assert fp[5:8] == ("110", 2.8e-4, 6.1e-3)
    tor = [r for r in rows if r[0] == "Toroid min N0"][0]
    # literal R = g^2 / kappa and its cyclic form differ by 2 pi
    assert tor[9] / tor[10] == pytest.approx(2 * math.pi)


def test_report_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    emit_report(_family(), a, "both", figures=(4, 5, 6, 7, 8, 9), table=True, config=default_config())
    emit_report(list(reversed(_family())), b, "both", figures=(4, 5, 6, 7, 8, 9), table=True,
                config=default_config())
    for p in sorted(a.iterdir()):
        assert p.read_bytes() == (b / p.name).read_bytes()


def test_empty_records_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], tmp_path)


def test_cli_parser_and_config_error(capsys):
    ap = cli.build_parser()
    args = ap.parse_args(["reproduce-figure", "9", "--override", "solver.n_eigs=4", "--jobs", "2"])
    assert args.figure == "9" and args.jobs == 2
    assert cli.main(["sweep", "--override", "geometry.D=[0]"]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_cli_cache_inspect(tmp_path, capsys):
    assert cli.main(["cache", "inspect", "--cache-dir", str(tmp_path)]) == 0
    assert "0 entries" in capsys.readouterr().out
    assert cli.main(["cache", "clear", "--cache-dir", str(tmp_path)]) == 0
