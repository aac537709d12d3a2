"""Strong-coupling figures of merit from mode metrics and an atomic transition.

All rates are angular (rad/s); ``*_mhz`` helpers give nu/2pi in MHz.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .analysis import ModeMetrics, _EDGES, _NODE_ETA, _NODE_XI, energy_integral
from .physics import (
    TWO_PI,
    AtomicTransition,
    QualityBudget,
    atomic_interaction_volume,
    kappa_from_q,
    total_quality,
)

UM3 = 1e-18
WATER_MONOLAYER_THICKNESS = 0.2e-9  # m
WATER_ABSORPTION_852 = 4.3  # 1/m, bulk liquid water near 850 nm
WATER_INDEX = 1.33
WAVELENGTH_MATCH = 1e-3


class StaleMetricsError(ValueError):
    pass


@dataclass(frozen=True)
class CqedFigures:
    g: float
    kappa: float
    n0: float
    N0: float
    ratio: float
    info_rate: float
    q_total: float
    gamma_perp: float

    @property
    def strong_coupling(self) -> bool:
        return self.g > max(self.gamma_perp, self.kappa)

    @property
    def rabi_frequency(self) -> float:
        return 2.0 * self.g

    def g_mhz(self) -> float:
        return self.g / TWO_PI / 1e6

    def kappa_mhz(self) -> float:
        return self.kappa / TWO_PI / 1e6

    def as_dict(self) -> dict:
        d = asdict(self)
        d["strong_coupling"] = self.strong_coupling
        return d


def coupling_rate(metrics: ModeMetrics, t: AtomicTransition, check_wavelength: bool = True) -> float:
    """g = gamma_perp |E(r)/E_max| sqrt(V_a / V_m), rad/s (V_m in um^3)."""
    if check_wavelength:
        mismatch = abs(metrics.resonance_wavelength * 1e-6 - t.wavelength) / t.wavelength
        if mismatch > WAVELENGTH_MATCH:
            raise StaleMetricsError(
                f"mode at {metrics.resonance_wavelength:.6f} um does not match transition at {t.wavelength * 1e6:.6f} um"
            )
    va = atomic_interaction_volume(t)
    return t.gamma_perp * metrics.normalized_field_at_atom * math.sqrt(va / (metrics.mode_volume * UM3))


def critical_photon_number(g: float, gamma_perp: float) -> float:
    if not g > 0:
        raise ValueError("g must be positive")
    return gamma_perp**2 / (2.0 * g * g)


def critical_atom_number(g: float, gamma_perp: float, kappa: float) -> float:
    if not g > 0:
        raise ValueError("g must be positive")
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    return 2.0 * gamma_perp * kappa / (g * g)


def figures_of_merit(g: float, gamma_perp: float, kappa: float):
    """(g / max(gamma_perp, kappa), g^2 / kappa)."""
    if not (g > 0 and gamma_perp > 0 and kappa >= 0):
        raise ValueError("rates must be positive")
    ratio = g / max(gamma_perp, kappa)
    info = math.inf if kappa == 0 else g * g / kappa
    return ratio, info


def cqed_figures(g: float, t: AtomicTransition, q_total: float, wavelength: float | None = None) -> CqedFigures:
    lam = t.wavelength if wavelength is None else wavelength
    kappa = kappa_from_q(lam, q_total)
    ratio, info = figures_of_merit(g, t.gamma_perp, kappa)
    return CqedFigures(
        g=g,
        kappa=kappa,
        n0=critical_photon_number(g, t.gamma_perp),
        N0=critical_atom_number(g, t.gamma_perp, kappa),
        ratio=ratio,
        info_rate=info,
        q_total=q_total,
        gamma_perp=t.gamma_perp,
    )


def figures_from_metrics(
    metrics: ModeMetrics, t: AtomicTransition, q_mat: float, q_water: float | None = None
) -> tuple[CqedFigures, QualityBudget]:
    # values flagged as lower bounds still enter the budget; only a
    # non-decaying eigenvalue (q_rad = inf) drops the radiation channel
    q_rad = metrics.q_rad
    budget = total_quality(q_rad, q_mat, q_water)
    g = coupling_rate(metrics, t)
    return cqed_figures(g, t, budget.q_total), budget


# ---------------------------------------------------------------------------
# surface water layer


def surface_energy_density(mode, n_gauss: int = 6):
    """Line integral over the dielectric boundary of the energy density of a thin
    exterior film, per unit film thickness and relative to the film permittivity.

    Returns (int |E_t|^2 dA, int |D_n / eps0|^2 dA) in full space, um^2, where
    the film field is built from the interior-side boundary field.
    """
    mesh = mode.mesh
    geom = mesh.geometry
    rc, a = geom.centre_rho, geom.minor_radius
    keep = ~mesh.pml[mesh.interface_elements]
    el_in = mesh.interface_elements[keep]
    edges = mesh.interface_edges[keep]
    gx, gw = np.polynomial.legendre.leggauss(n_gauss)
    t = 0.5 * (gx + 1)
    w = 0.5 * gw
    et2 = 0.0
    dn2 = 0.0
    for e, (v0, v1, _) in zip(el_in, edges):
        conn = mesh.elements[e]
        for sa, sb, _ in _EDGES:
            if {conn[sa], conn[sb]} == {v0, v1}:
                break
        xi = (1 - t) * _NODE_XI[sa] + t * _NODE_XI[sb]
        eta = (1 - t) * _NODE_ETA[sa] + t * _NODE_ETA[sb]
        x, E = mode.electric_field(xi, eta, np.array([e]))
        x = x[0]
        E = E[:, 0]
        # arc length element from the angle of the projected points
        ang = np.arctan2(x[:, 1], x[:, 0] - rc)
        th0 = math.atan2(mesh.nodes[conn[sa], 1], mesh.nodes[conn[sa], 0] - rc)
        th1 = math.atan2(mesh.nodes[conn[sb], 1], mesh.nodes[conn[sb], 0] - rc)
        ds = abs(th1 - th0) * a
        nr = np.cos(ang)
        nz = np.sin(ang)
        en = E[0] * nr + E[2] * nz
        et = np.abs(E[0] - en * nr) ** 2 + np.abs(E[1]) ** 2 + np.abs(E[2] - en * nz) ** 2
        dA = 2.0 * (2 * math.pi * x[:, 0]) * ds * w  # mirror half included
        et2 += float((et * dA).sum())
        dn2 += float((mode.eps_interior**2 * np.abs(en) ** 2 * dA).sum())
    return et2, dn2


def water_monolayer_q(
    mode,
    monolayer_thickness: float = WATER_MONOLAYER_THICKNESS,
    water_absorption: float = WATER_ABSORPTION_852,
    water_index: float = WATER_INDEX,
    wavelength: float | None = None,
) -> float:
    """Q_w = 2 pi n_w / (Gamma alpha_w lambda) for a film on the outer surface.

    Gamma is the fraction of eps|E|^2 energy inside the film; tangential E
    and normal D are carried over from the interior boundary field.
    ``wavelength`` defaults to the mode's resonance (m).
    """
    lam = mode.resonance_wavelength * 1e-6 if wavelength is None else wavelength
    et2, dn2 = surface_energy_density(mode)
    eps_w = water_index**2
    film = (eps_w * et2 + dn2 / eps_w) * monolayer_thickness * 1e6  # um^3 times density
    _, total = energy_integral(mode)
    gamma = film / total if total > 0 else 0.0
    if not gamma > 1e-300:
        return math.inf
    return 2 * math.pi * water_index / (gamma * water_absorption * lam)


# ---------------------------------------------------------------------------
# reference rows of the comparison table (not computed)


@dataclass(frozen=True)
class ReferenceRow:
    system: str
    g_mhz: float
    n0: float
    N0: float
    ratio: float
    info_rate: float
    g_is_lower_bound: bool = False


REFERENCE_ROWS = (
    ReferenceRow("Fabry-Perot experimental state-of-the-art", 110.0, 2.8e-4, 6.1e-3, 7.8, 5.4e3),
    ReferenceRow("Fabry-Perot projected limits", 770.0, 5.7e-6, 1.9e-4, 36.0, 1.7e5),
    ReferenceRow("Microsphere experimental (D=120 um)", 24.0, 5.5e-3, 3.0e-2, 7.2, 1.1e3),
    ReferenceRow("Microsphere theory max g (D=7.25 um)", 750.0, 6.1e-6, 7.3e-1, 0.01, 4.5e1),
    ReferenceRow("Microsphere theory min N0 (D=18 um)", 280.0, 4.3e-5, 3.1e-6, 107.0, 1.1e7),
    ReferenceRow("Photonic bandgap cavity", 17000.0, 7.6e-9, 6.4e-5, 3.9, 5.1e5),
)

# published toroid rows, used only for the self-consistency audit
TOROID_REFERENCE_ROWS = (
    ReferenceRow("Toroid theory max g", 700.0, 6.0e-6, 2.0e-4, 40.0, 1.6e5, g_is_lower_bound=True),
    ReferenceRow("Toroid theory min N0", 430.0, 2.0e-5, 2.0e-7, 165.0, 1.6e8),
)


def row_consistency(row: ReferenceRow, gamma_perp: float):
    """(g, kappa, implied ratio) from the row's n0 and N0 via the two critical-number identities."""
    g = gamma_perp / math.sqrt(2.0 * row.n0)
    kappa = row.N0 * g * g / (2.0 * gamma_perp)
    ratio, _ = figures_of_merit(g, gamma_perp, kappa)
    return g, kappa, ratio
