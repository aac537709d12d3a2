"""Report emission: CSV/JSON records, per-figure plot data and the comparison table.

Everything written here is a pure function of the records and the resolved
configuration (no timestamps, fixed float formatting, sorted keys), so reruns
from a warm cache produce byte-identical files.

CSV schema (one row per grid point, units in the header names)::

    D_um, d_um, polarization, status, error, m_blue, m_red,
    lambda_blue_um, lambda_red_um, Vm_um3, vm_resolved, atom_rho_um, atom_z_um,
    field_ratio, emax_convention, Q_rad, Q_rad_lower_bound, Q_mat, Q_water,
    Q_total, g_2pi_MHz, kappa_2pi_MHz, gamma_perp_2pi_MHz, rabi_2pi_MHz,
    n0, N0, g_over_max_rate, R_rad_per_s, R_cyclic_Hz, strong_coupling,
    FSR_GHz, settings_hash

``R_rad_per_s`` is g^2/kappa with angular rates; ``R_cyclic_Hz`` is the same
ratio with g/2pi and kappa/2pi.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .. import __version__
from ..analysis import VM_MIN_MINOR_DIAMETER
from ..cqed import REFERENCE_ROWS
from ..physics import TWO_PI

REPORT_SCHEMA_VERSION = 1

CSV_COLUMNS = (
    "D_um", "d_um", "polarization", "status", "error", "m_blue", "m_red",
    "lambda_blue_um", "lambda_red_um", "Vm_um3", "vm_resolved", "atom_rho_um", "atom_z_um",
    "field_ratio", "emax_convention", "Q_rad", "Q_rad_lower_bound", "Q_mat", "Q_water",
    "Q_total", "g_2pi_MHz", "kappa_2pi_MHz", "gamma_perp_2pi_MHz", "rabi_2pi_MHz",
    "n0", "N0", "g_over_max_rate", "R_rad_per_s", "R_cyclic_Hz", "strong_coupling",
    "FSR_GHz", "settings_hash",
)

# figure number -> (CSV column plotted against d, description)
FIGURE_SERIES = {
    4: ("Vm_um3", "mode volume vs minor diameter"),
    5: ("Q_rad", "radiation Q vs minor diameter"),
    6: ("Q_total", "total Q vs minor diameter"),
    7: ("g_2pi_MHz", "coupling rate g/2pi vs minor diameter"),
    8: ("n0", "critical photon number vs minor diameter"),
    9: ("N0", "critical atom number vs minor diameter"),
}
PROFILE_FIGURE = 3  # equatorial intensity profiles, one series per d

TABLE_COLUMNS = ("system", "source", "D_um", "d_um", "polarization", "g_2pi_MHz", "n0", "N0",
                 "g_over_max_rate", "R_rad_per_s", "R_cyclic_Hz", "R_printed")

QTOTAL_FLAT_FACTOR = 2.0


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return f"{x:.10g}"
    return str(x)


def _jsonable(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else fmt(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalars
        return _jsonable(obj.item())
    return obj


def record_row(rec) -> dict:
    row = dict.fromkeys(CSV_COLUMNS)
    row.update(D_um=rec.D, d_um=rec.d, polarization=rec.polarization, status=rec.status, error=rec.error,
               settings_hash=rec.provenance.get("settings_hash"))
    if not rec.ok:
        return row
    m, f, b = rec.metrics, rec.figures, rec.budget
    resolved = rec.d >= VM_MIN_MINOR_DIAMETER
    row.update(
        m_blue=rec.m_blue,
        m_red=rec.m_red,
        lambda_blue_um=rec.blue.resonance_wavelength,
        lambda_red_um=rec.red.resonance_wavelength,
        Vm_um3=m.mode_volume if resolved else None,
        vm_resolved=resolved,
        atom_rho_um=float(m.atom_site[0]),
        atom_z_um=float(m.atom_site[1]),
        field_ratio=m.normalized_field_at_atom,
        emax_convention=m.emax_convention,
        Q_rad=m.q_rad,
        Q_rad_lower_bound=m.q_rad_lower_bound,
        Q_mat=b.q_mat,
        Q_water=b.q_water,
        Q_total=b.q_total,
        g_2pi_MHz=f.g_mhz(),
        kappa_2pi_MHz=f.kappa_mhz(),
        gamma_perp_2pi_MHz=f.gamma_perp / TWO_PI / 1e6,
        rabi_2pi_MHz=f.rabi_frequency / TWO_PI / 1e6,
        n0=f.n0,
        N0=f.N0,
        g_over_max_rate=f.ratio,
        R_rad_per_s=f.info_rate,
        R_cyclic_Hz=f.info_rate / TWO_PI,
        strong_coupling=f.strong_coupling,
        FSR_GHz=None if rec.fsr is None else rec.fsr / 1e9,
    )
    return row


def record_json(rec) -> dict:
    out = {
        "geometry": {"D_um": rec.D, "d_um": rec.d},
        "polarization": rec.polarization,
        "status": rec.status,
        "error": rec.error,
        "m_bracket": [rec.m_blue, rec.m_red],
        "provenance": rec.provenance,
    }
    if rec.ok:
        out.update(
            blue=rec.blue.as_dict(),
            red=rec.red.as_dict(),
            metrics=rec.metrics.as_dict(),
            vm_resolved=rec.d >= VM_MIN_MINOR_DIAMETER,
            figures=rec.figures.as_dict(),
            budget={"q_rad": rec.budget.q_rad, "q_mat": rec.budget.q_mat, "q_water": rec.budget.q_water,
                    "q_total": rec.budget.q_total},
            fsr_hz=rec.fsr,
        )
    return _jsonable(out)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# sanity checks on the swept trends


def _families(records):
    fam = {}
    for r in records:
        if r.ok:
            fam.setdefault((r.D, r.polarization), []).append(r)
    for v in fam.values():
        v.sort(key=lambda r: r.d)
    return fam


def _check(name, D, pol, ok, detail=""):
    return {"check": name, "D_um": D, "polarization": pol, "passed": bool(ok), "detail": detail}


def trend_checks(records) -> list[dict]:
    """Monotonicity of the swept curves at fixed (D, pol), ordered by increasing d."""
    out = []
    for (D, pol), fam in sorted(_families(records).items()):
        if len(fam) < 2:
            continue
        ds = [r.d for r in fam]
        g = [r.figures.g for r in fam]
        ok = all(a > b for a, b in zip(g, g[1:]))
        out.append(_check("g decreasing in d", D, pol, ok, fmt_series(ds, [x / TWO_PI / 1e6 for x in g])))
        res = [r for r in fam if r.d >= VM_MIN_MINOR_DIAMETER]
        vm = [r.metrics.mode_volume for r in res]
        ok = all(a < b for a, b in zip(vm, vm[1:]))
        out.append(_check("V_m increasing in d", D, pol, ok, fmt_series([r.d for r in res], vm)))
        q = [r.metrics.q_rad for r in fam]
        ok = all(a < b or (math.isinf(a) and math.isinf(b)) for a, b in zip(q, q[1:]))
        out.append(_check("Q_rad increasing in d", D, pol, ok, fmt_series(ds, q)))
        if D >= 18:
            big = [r for r in fam if r.d > 1.0]
            if big:
                qm = big[0].budget.q_mat
                flat = all(qm / QTOTAL_FLAT_FACTOR <= r.budget.q_total <= qm for r in big)
                out.append(_check("Q_total near Q_mat for d > 1 um", D, pol, flat,
                                  fmt_series([r.d for r in big], [r.budget.q_total for r in big])))
    return out


def fmt_series(x, y) -> str:
    return " ".join(f"{fmt(float(a))}:{fmt(float(b))}" for a, b in zip(x, y))


# ---------------------------------------------------------------------------
# comparison table


def table_rows(records, q_total_floor: float = 1e7):
    """Computed rows (max-g toroid, min-N0 toroid, spheres) followed by the static reference rows."""
    ok = [r for r in records if r.ok]
    tor = [r for r in ok if r.d < r.D]
    sph = [r for r in ok if r.d == r.D]
    rows = []

    def computed(label, r):
        f = r.figures
        return (label, "computed", r.D, r.d, r.polarization, f.g_mhz(), f.n0, f.N0, f.ratio, f.info_rate,
                f.info_rate / TWO_PI, None)

    good = [r for r in tor if r.budget.q_total >= q_total_floor]
    if good:
        best = max(good, key=lambda r: (r.figures.g, -r.D, -r.d))
        rows.append(computed("Toroid max g", best))
    if tor:
        best = min(tor, key=lambda r: (r.figures.N0, r.D, r.d))
        rows.append(computed("Toroid min N0", best))
    for r in sph:
        rows.append(computed(f"Microsphere (D={fmt(r.D)} um)", r))
    for ref in REFERENCE_ROWS:
        g = (">" if ref.g_is_lower_bound else "") + fmt(ref.g_mhz)
        rows.append((ref.system, "reference", None, None, None, g, ref.n0, ref.N0, ref.ratio, None, None,
                     ref.info_rate))
    return rows


# ---------------------------------------------------------------------------
# emission


def _write(path: Path, text: str, written: list):
    path.write_text(text)
    written.append(path)


def emit_report(records, out_dir, fmt_="both", figures=(), table=False, config: dict | None = None):
    """Write the report files and return their paths.

    ``figures`` selects plot-data series (3..9); ``table`` adds the comparison table.
    """
    if not records:
        raise ValueError("no records to report")
    if fmt_ not in ("csv", "json", "both"):
        raise ValueError(f"unknown format {fmt_!r}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc
    records = sorted(records, key=lambda r: r.sort_key)
    written: list[Path] = []
    checks = trend_checks(records)

    if fmt_ in ("csv", "both"):
        rows = [record_row(r) for r in records]
        _write(out / "records.csv", _csv_text(CSV_COLUMNS, [[row[c] for c in CSV_COLUMNS] for row in rows]),
               written)
        _write(out / "checks.csv", _csv_text(("check", "D_um", "polarization", "passed", "detail"),
                                             [[c[k] for k in ("check", "D_um", "polarization", "passed",
                                                              "detail")] for c in checks]), written)
    if fmt_ in ("json", "both"):
        doc = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "code_version": __version__,
            "config": _jsonable(config or {}),
            "records": [record_json(r) for r in records],
            "checks": checks,
            "counts": {"records": len(records), "failed": sum(not r.ok for r in records)},
        }
        _write(out / "records.json", json.dumps(doc, sort_keys=True, indent=1) + "\n", written)
    if config is not None:
        prov = {"code_version": __version__, "config": _jsonable(config)}
        _write(out / "provenance.json", json.dumps(prov, sort_keys=True, indent=1) + "\n", written)

    fam = _families(records)
    for n in sorted(set(figures)):
        if n == PROFILE_FIGURE:
            for r in records:
                if r.ok and r.profile is not None:
                    rho, dens = r.profile
                    name = f"fig3_{fmt(r.D)}_{r.polarization}_d{fmt(r.d)}.csv"
                    _write(out / name, _csv_text(("rho_um", "density_norm"), zip(map(float, rho), map(float, dens))),
                           written)
            continue
        if n not in FIGURE_SERIES:
            raise ValueError(f"no plot data defined for figure {n}")
        col, _ = FIGURE_SERIES[n]
        for (D, pol), recs in sorted(fam.items()):
            rows = [record_row(r) for r in recs]
            pts = [(r["d_um"], r[col]) for r in rows if r[col] is not None]
            _write(out / f"fig{n}_{fmt(D)}_{pol}.csv", _csv_text(("d_um", col), pts), written)
    if table:
        _write(out / "table1.csv", _csv_text(TABLE_COLUMNS, table_rows(records)), written)
    return written
