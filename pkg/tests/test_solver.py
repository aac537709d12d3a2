import math
from dataclasses import replace

import numpy as np
import pytest

from wgmcqed.fem.mesh import ResonatorGeometry
from wgmcqed.fem.solver import (
    NoPhysicalModeError,
    OpticalMode,
    SolverSettings,
    classify_polarization,
    count_antinodes,
    estimate_wavenumber,
    filter_spurious,
    find_fundamental,
    mode_diagnostics,
    parity_for,
    solve_eigenmodes,
)
from wgmcqed.sphere import nearest_resonance

from conftest import LAMBDA_UM, N_SILICA


def test_small_sphere_matches_analytic(small_sphere):
    res, md, _ = small_sphere
    assert md.polarization == "TM"
    assert abs(md.resonance_wavelength / res.resonance_wavelength - 1) < 1e-4
    assert md.q_rad == pytest.approx(res.q_rad, rel=0.1)
    assert count_antinodes(md) == (1, 1)
    assert md.residual < 1e-6


def test_repeat_solve_bit_identical(small_sphere):
    res, md, settings = small_sphere
    modes, _ = solve_eigenmodes(ResonatorGeometry(5.0, 5.0), res.l, "even", res.k_re, settings)
    again = find_fundamental(modes, "TM")
    assert again.eigen_k == md.eigen_k


def test_shift_invariance(small_sphere):
    res, md, settings = small_sphere
    modes, _ = solve_eigenmodes(ResonatorGeometry(5.0, 5.0), res.l, "even", res.k_re * 1.003, settings)
    other = find_fundamental(modes, "TM")
    assert abs(other.eigen_k - md.eigen_k) / abs(md.eigen_k) < 1e-8


@pytest.mark.parametrize("factor", [0.5, 1.5])
def test_pml_strength_insensitivity(small_sphere, factor):
    res, md, settings = small_sphere
    s2 = replace(settings, pml_strength=settings.pml_strength * factor)
    modes, _ = solve_eigenmodes(ResonatorGeometry(5.0, 5.0), res.l, "even", res.k_re, s2)
    other = find_fundamental(modes, "TM")
    assert other.q_rad == pytest.approx(md.q_rad, rel=0.1)
    assert abs(other.k_re / md.k_re - 1) < 1e-5


def test_te_sphere_classified(small_sphere):
    res = nearest_resonance(N_SILICA, 2.5, "TE", LAMBDA_UM)
    modes, _ = solve_eigenmodes(ResonatorGeometry(5.0, 5.0), res.l, "odd", res.k_re, SolverSettings())
    md = find_fundamental(modes, "TE")
    assert md.polarization == "TE"
    assert abs(md.resonance_wavelength / res.resonance_wavelength - 1) < 1e-4


def test_gradient_field_rejected(small_sphere):
    _, md, _ = small_sphere
    mesh = md.mesh
    rho, z = mesh.nodes.T
    # H = grad(psi) for psi = f(rho, z) exp(i m phi): curl-free, large divergence
    f = np.exp(-((rho - 2.5) ** 2 + z**2))
    m = md.m
    H = np.array([-2 * (rho - 2.5) * f, (m / np.maximum(rho, 1e-9)) * f, -2 * z * f], dtype=complex)
    H[1] *= -1
    fake = OpticalMode(m=m, eigen_k=md.eigen_k, parity=md.parity, H=H, mesh=mesh, eps_interior=md.eps_interior,
                       pml=md.pml)
    fake.div_ratio, fake.box_fraction, fake.shares = mode_diagnostics(fake)
    assert fake.div_ratio > 1.0
    with pytest.raises(NoPhysicalModeError):
        filter_spurious([fake])
    assert filter_spurious([md]) == [md]


def test_classify_polarization_margin():
    assert classify_polarization((0.8, 0.1, 0.1)) == "TM"
    assert classify_polarization((0.1, 0.2, 0.7)) == "TE"
    assert classify_polarization((0.45, 0.1, 0.45)) == "hybrid"
    assert parity_for("TM") == "even" and parity_for("TE") == "odd"
    with pytest.raises(ValueError):
        parity_for("X")


def test_estimate_matches_sphere_root():
    geom = ResonatorGeometry(18.0, 18.0)
    res = nearest_resonance(N_SILICA, 9.0, "TM", LAMBDA_UM)
    k = estimate_wavenumber(geom, res.l, "TM", N_SILICA)
    assert abs(k / res.k_re - 1) < 5e-3
