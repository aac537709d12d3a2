import math

import pytest

from wgmcqed.analysis import ModeMetrics
from wgmcqed.cqed import (
    REFERENCE_ROWS,
    TOROID_REFERENCE_ROWS,
    StaleMetricsError,
    coupling_rate,
    cqed_figures,
    critical_atom_number,
    critical_photon_number,
    figures_from_metrics,
    figures_of_merit,
    row_consistency,
)
from wgmcqed.physics import CESIUM_D2, TWO_PI, kappa_from_q

GP = CESIUM_D2.gamma_perp
LAM = CESIUM_D2.wavelength


def test_measured_geometry_numbers():
    # g/2pi = 86 MHz with Q = 1.2e8 gives n0 = 4.6e-4 and N0 = 1.0e-3
    g = TWO_PI * 86e6
    assert critical_photon_number(g, GP) == pytest.approx(4.6e-4, rel=0.01)
    k = kappa_from_q(LAM, 1.2e8)
    assert k / TWO_PI / 1e6 == pytest.approx(1.47, rel=0.01)
    # printed to two significant figures: 1.0e-3 covers [0.95e-3, 1.05e-3)
    assert critical_atom_number(g, GP, k) == pytest.approx(1.0e-3, rel=0.05)


def test_projected_and_max_g_numbers():
    assert critical_photon_number(TWO_PI * 700e6, GP) == pytest.approx(7.0e-6, rel=0.01)
    k = kappa_from_q(LAM, 1e7)
    assert k / TWO_PI / 1e6 == pytest.approx(17.6, rel=0.01)
    ratio, _ = figures_of_merit(TWO_PI * 700e6, GP, k)
    assert ratio == pytest.approx(40, rel=0.03)


def test_trivial_identities():
    assert critical_photon_number(GP, GP) == 0.5
    assert critical_atom_number(GP, GP, GP) == pytest.approx(4 * critical_photon_number(GP, GP))
    assert figures_of_merit(GP, GP, GP)[0] == 1.0
    assert figures_of_merit(GP, GP, 0.0)[1] == math.inf
    with pytest.raises(ValueError):
        critical_photon_number(0.0, GP)


def test_coupling_rate_scaling_and_staleness():
    m = ModeMetrics(mode_volume=20.0, atom_site=(10.0, 0.0), normalized_field_at_atom=0.4,
                    resonance_wavelength=0.852359, q_rad=1e9, polarization="TM")
    g = coupling_rate(m, CESIUM_D2)
    m4 = ModeMetrics(mode_volume=80.0, atom_site=(10.0, 0.0), normalized_field_at_atom=0.4,
                     resonance_wavelength=0.852359, q_rad=1e9, polarization="TM")
    assert coupling_rate(m4, CESIUM_D2) == pytest.approx(g / 2, rel=1e-14)
    stale = ModeMetrics(mode_volume=20.0, atom_site=(10.0, 0.0), normalized_field_at_atom=0.4,
                        resonance_wavelength=0.86, q_rad=1e9, polarization="TM")
    with pytest.raises(StaleMetricsError):
        coupling_rate(stale, CESIUM_D2)


def test_budget_infinite_radiation():
    m = ModeMetrics(mode_volume=20.0, atom_site=(10.0, 0.0), normalized_field_at_atom=0.4,
                    resonance_wavelength=0.852359, q_rad=math.inf, polarization="TM")
    f, b = figures_from_metrics(m, CESIUM_D2, 2.4e10)
    assert b.q_total == 2.4e10
    assert f.q_total == 2.4e10
    f, b = figures_from_metrics(m, CESIUM_D2, 2.4e10, 1e11)
    assert b.q_total < 2.4e10


def test_figures_record():
    f = cqed_figures(TWO_PI * 430e6, CESIUM_D2, 2.2e10)
    assert f.strong_coupling
    assert f.rabi_frequency == 2 * f.g
    assert f.g_mhz() == pytest.approx(430.0)
    assert f.N0 / f.n0 == pytest.approx(4 * f.kappa / GP, rel=1e-14)
    assert set(f.as_dict()) >= {"g", "kappa", "n0", "N0", "ratio", "info_rate", "strong_coupling"}


@pytest.mark.parametrize("row", TOROID_REFERENCE_ROWS + REFERENCE_ROWS[:2] + REFERENCE_ROWS[4:5],
                         ids=lambda r: r.system)
def test_reference_row_self_consistency(row):
    g, kappa, ratio = row_consistency(row, GP)
    assert g / TWO_PI / 1e6 == pytest.approx(row.g_mhz, rel=0.15)
    assert ratio == pytest.approx(row.ratio, rel=0.15)


def test_reference_rows_static_content():
    fp = REFERENCE_ROWS[0]
    assert (fp.g_mhz, fp.n0, fp.N0) == (110.0, 2.8e-4, 6.1e-3)
