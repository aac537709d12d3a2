import math
from dataclasses import replace

import numpy as np
import pytest

from wgmcqed.analysis import (
    EPS_WEIGHTED,
    UNWEIGHTED,
    ModeMetrics,
    QuantizationRegion,
    compute_metrics,
    equatorial_profile,
    exterior_field_max,
    extrapolate_at_wavelength,
    field_maximum,
    free_spectral_range,
    harmonic_estimate_vm,
    mode_volume,
)
from wgmcqed.sphere import sphere_mode_volume


def _metrics(wl, vm, q, m=0, pol="TM", ratio=0.5):
    return ModeMetrics(mode_volume=vm, atom_site=(1.0, 0.0), normalized_field_at_atom=ratio,
                       resonance_wavelength=wl, q_rad=q, polarization=pol, m=m)


@pytest.mark.parametrize("conv", [EPS_WEIGHTED, UNWEIGHTED])
def test_sphere_vm_matches_analytic_field(small_sphere, conv):
    res, md, _ = small_sphere
    vm_fem, clipped = mode_volume(md, convention=conv)
    vm_ana, _ = sphere_mode_volume(res, 5.0, conv)
    assert abs(vm_fem / vm_ana - 1) < 1e-2
    assert clipped >= 0


def test_vm_invariant_under_field_scaling(small_sphere):
    _, md, _ = small_sphere
    scaled = replace(md, H=md.H * (3.7 - 2.1j))
    assert mode_volume(scaled)[0] == pytest.approx(mode_volume(md)[0], rel=1e-12)
    assert exterior_field_max(scaled)[1] == pytest.approx(exterior_field_max(md)[1], rel=1e-10)


def test_tm_site_on_equator(small_sphere):
    _, md, _ = small_sphere
    (rho, z), ratio = exterior_field_max(md)
    assert z == pytest.approx(0.0, abs=1e-6)
    assert rho == pytest.approx(2.5, abs=1e-6)
    assert 0 < ratio < 1


def test_emax_conventions_give_same_g_ratio(small_sphere):
    # eps-weighting rescales V_m and the field ratio together: ratio^2 / V_m is convention-free
    _, md, _ = small_sphere
    a = compute_metrics(md, convention=EPS_WEIGHTED)
    b = compute_metrics(md, convention=UNWEIGHTED)
    assert a.normalized_field_at_atom**2 / a.mode_volume == pytest.approx(
        b.normalized_field_at_atom**2 / b.mode_volume, rel=1e-3)
    dens, pos = field_maximum(md)
    assert dens > 0 and pos[0] < 2.5


def test_profile_peaks_inside(small_sphere):
    _, md, _ = small_sphere
    rho, dens = equatorial_profile(md)
    assert dens.max() == pytest.approx(1.0)
    assert rho[np.argmax(dens)] < 2.5
    assert np.all(dens >= 0)


def test_region_bounds():
    lo, hi, zh = QuantizationRegion(10, 10).bounds(9.0)
    assert (lo, hi, zh) == (4.0, 14.0, 5.0)
    assert QuantizationRegion(30, 4).bounds(9.0, rho_min=2.0)[0] == 2.0
    with pytest.raises(ValueError):
        QuantizationRegion(0, 1)


def test_extrapolation_rules():
    b = _metrics(0.85, 10.0, 1e8, m=101)
    r = _metrics(0.855, 10.0, 1e9, m=100)
    vm, q = extrapolate_at_wavelength(b, r, 0.8525)
    assert vm == 10.0
    assert q == pytest.approx(math.sqrt(1e8 * 1e9), rel=1e-12)
    # ln Q exactly linear across three orders: outer pair reproduces the middle value
    lam = [0.84, 0.85, 0.86]
    qs = [math.exp(30 + 40 * (x - 0.84)) for x in lam]
    vm, q = extrapolate_at_wavelength(_metrics(lam[0], 5, qs[0], 3), _metrics(lam[2], 7, qs[2], 2), lam[1])
    assert q == pytest.approx(qs[1], rel=1e-6)
    assert vm == pytest.approx(6.0)
    vm, q = extrapolate_at_wavelength(_metrics(0.85, 5, math.inf), _metrics(0.86, 7, 1e12), 0.855)
    assert math.isinf(q)
    with pytest.raises(ValueError):
        extrapolate_at_wavelength(b, r, 0.9)
    with pytest.raises(ValueError):
        extrapolate_at_wavelength(b, _metrics(0.855, 10, 1e9, pol="TE"), 0.8525)


def test_harmonic_estimate():
    assert harmonic_estimate_vm(50.0, 18.0, 18.0) == 50.0
    assert harmonic_estimate_vm(50.0, 1.0, 16.0) == pytest.approx(25.0)
    with pytest.raises(ValueError):
        harmonic_estimate_vm(50.0, 20.0, 18.0)


def test_fsr():
    a = _metrics(0.85, 10, 1e8, m=100)
    b = _metrics(0.855, 10, 1e8, m=99)
    fsr = free_spectral_range(a, b)
    assert fsr == pytest.approx(2.99792458e8 / 0.85e-6 - 2.99792458e8 / 0.855e-6, rel=1e-12)
    with pytest.raises(ValueError):
        free_spectral_range(a, _metrics(0.86, 10, 1e8, m=97))


def test_metrics_validation():
    with pytest.raises(ValueError):
        _metrics(0.85, -1.0, 1e8)
    with pytest.raises(ValueError):
        _metrics(0.85, 1.0, 1e8, ratio=1.5)
