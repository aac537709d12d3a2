"""Finite-element pipeline regressions; points are shared with the acceptance run."""

import math

import pytest

from wgmcqed.analysis import QuantizationRegion, compute_metrics, mode_volume
from wgmcqed.fem.mesh import ResonatorGeometry
from wgmcqed.fem.solver import SolverSettings
from wgmcqed.physics import C_LIGHT
from wgmcqed.sweep.pipeline import GeometrySolver, target_resonance
from wgmcqed.sweep.report import trend_checks

pytestmark = pytest.mark.slow

D20 = (0.65, 0.75, 1.0, 1.25, 1.5)


def test_bracket_d18_d2(solve):
    rec = solve(18.0, 2.0, "TM")
    assert rec.ok and abs(rec.m_blue - rec.m_red) == 1
    assert rec.blue.resonance_wavelength < 0.852359 < rec.red.resonance_wavelength
    assert math.isfinite(rec.metrics.mode_volume) and rec.metrics.q_rad > 0
    # bracket separation is one free spectral range
    sep = C_LIGHT / (rec.blue.resonance_wavelength * 1e-6) - C_LIGHT / (rec.red.resonance_wavelength * 1e-6)
    assert sep == pytest.approx(rec.fsr, rel=1e-12)


def test_d16_d1_bracket_regression(solve):
    rec = solve(16.0, 1.0, "TM")
    assert rec.ok
    # frozen from the first verified run of this pipeline
    assert rec.figures.g_mhz() == pytest.approx(517.6, rel=0.02)


def test_fsr_estimate_and_ordering(solve):
    rec = solve(16.0, 1.0, "TM")
    k = 2 * math.pi / rec.blue.resonance_wavelength
    n_eff = rec.m_blue / (k * 8.0)
    assert rec.fsr == pytest.approx(C_LIGHT / (math.pi * 16e-6 * n_eff), rel=0.2)
    assert solve(50.0, 50.0, "TM", water=True).fsr < solve(18.0, 18.0, "TM").fsr


def test_water_toroid_below_sphere(solve):
    sphere = solve(50.0, 50.0, "TM", water=True).q_water
    toroid = solve(50.0, 6.0, "TM", water=True).q_water
    assert toroid < sphere
    assert toroid > 0.2 * sphere  # slightly lower, not orders of magnitude


def test_d20_trends(solve):
    recs = [solve(20.0, d, "TM") for d in D20]
    checks = {c["check"]: c for c in trend_checks(recs)}
    assert checks["g decreasing in d"]["passed"], checks["g decreasing in d"]["detail"]
    assert checks["V_m increasing in d"]["passed"], checks["V_m increasing in d"]["detail"]
    assert checks["Q_rad increasing in d"]["passed"], checks["Q_rad increasing in d"]["detail"]


def test_tm_site_equatorial_and_te_migrates(solve):
    tm = solve(16.0, 0.75, "TM").metrics.atom_site
    te = solve(16.0, 0.75, "TE").metrics.atom_site
    assert tm[1] == pytest.approx(0.0, abs=1e-6) and tm[0] == pytest.approx(8.0, abs=1e-3)
    assert te[1] > 0.1 and te[0] < 8.0


def test_d16_d15_q_on_dropoff_branch(solve):
    q = solve(16.0, 1.5, "TM").metrics.q_rad
    assert 1e6 < q < 1e10


def test_d18_d3_both_families(solve):
    assert solve(18.0, 3.0, "TM").ok
    assert solve(18.0, 3.0, "TE").ok


def test_quantization_box_insensitivity(cache_root):
    from wgmcqed.sweep.cache import ModeCache

    gs = GeometrySolver(ResonatorGeometry(13.0, 3.5), "TM", 0.852359, SolverSettings(box_width=12, box_height=12),
                        ModeCache(cache_root))
    blue, _ = target_resonance(gs, 0.852359)
    assert blue.q_rad > 1e7
    v10, _ = mode_volume(blue, QuantizationRegion(10, 10))
    v12, _ = mode_volume(blue, QuantizationRegion(12, 12))
    assert abs(v12 / v10 - 1) < 1e-3
    m = compute_metrics(blue, QuantizationRegion(10, 10))
    assert m.clipped_fraction < 1e-4
