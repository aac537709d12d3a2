"""Physical constants, atomic transitions, materials and the scalar cavity algebra.

Angular quantities (gamma_perp, kappa, g) are always rad/s.  Lengths are SI
metres at this level; the FEM layer works in micrometres and converts at the
boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants as _sc

C_LIGHT = _sc.c
TWO_PI = 2.0 * math.pi

CESIUM_D2_WAVELENGTH = 852.359e-9
CESIUM_D2_GAMMA_PERP = TWO_PI * 2.61e6
SILICA_Q_MAT_852 = 2.4e10


@dataclass(frozen=True)
class AtomicTransition:
    gamma_perp: float  # rad/s
    wavelength: float  # m
    label: str = ""

    def __post_init__(self):
        if not self.gamma_perp > 0:
            raise ValueError(f"gamma_perp must be positive, got {self.gamma_perp}")
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")

    @property
    def interaction_volume(self) -> float:
        return atomic_interaction_volume(self)


CESIUM_D2 = AtomicTransition(CESIUM_D2_GAMMA_PERP, CESIUM_D2_WAVELENGTH, "Cs D2")


# three-term Sellmeier coefficients (B_i, C_i [um]) for fused silica
FUSED_SILICA_SELLMEIER = (
    (0.6961663, 0.0684043),
    (0.4079426, 0.1162414),
    (0.8974794, 9.896161),
)
FUSED_SILICA_RANGE = (0.21e-6, 3.71e-6)


@dataclass(frozen=True)
class MaterialModel:
    """Interior dielectric surrounded by a uniform exterior.

    ``interior_index`` is either a float or the string ``"fused_silica"``,
    which selects the Sellmeier law evaluated at the requested wavelength.
    """

    interior_index: float | str = "fused_silica"
    exterior_index: float = 1.0
    q_material: float = SILICA_Q_MAT_852

    def __post_init__(self):
        if not self.exterior_index >= 1.0:
            raise ValueError("exterior_index must be >= 1")
        if not self.q_material > 0:
            raise ValueError("q_material must be positive")
        if isinstance(self.interior_index, str):
            if self.interior_index != "fused_silica":
                raise ValueError(f"unknown dispersion law {self.interior_index!r}")
        elif not self.interior_index > self.exterior_index:
            raise ValueError("interior_index must exceed exterior_index")

    def index(self, wavelength: float) -> float:
        return evaluate_index(self, wavelength)

    def as_dict(self) -> dict:
        return {
            "interior_index": self.interior_index,
            "exterior_index": self.exterior_index,
            "q_material": self.q_material,
        }


def fused_silica_index(wavelength: float) -> float:
    lo, hi = FUSED_SILICA_RANGE
    if not lo <= wavelength <= hi:
        raise ValueError(
            f"wavelength {wavelength:g} m outside fused-silica validity range {lo:g}-{hi:g} m"
        )
    w2 = (wavelength * 1e6) ** 2
    n2 = 1.0 + sum(b * w2 / (w2 - c * c) for b, c in FUSED_SILICA_SELLMEIER)
    return math.sqrt(n2)


def evaluate_index(material: MaterialModel, wavelength: float) -> float:
    if isinstance(material.interior_index, str):
        n = fused_silica_index(wavelength)
        if n <= material.exterior_index:
            raise ValueError("dispersion law gives index below exterior index")
        return n
    return float(material.interior_index)


@dataclass(frozen=True)
class QualityBudget:
    q_rad: float
    q_mat: float
    q_water: float | None
    q_total: float

    def channels(self) -> dict:
        out = {"q_rad": self.q_rad, "q_mat": self.q_mat}
        if self.q_water is not None:
            out["q_water"] = self.q_water
        return out


def atomic_interaction_volume(t: AtomicTransition) -> float:
    """3 c lambda^2 / (4 pi gamma_perp), in m^3."""
    return 3.0 * C_LIGHT * t.wavelength**2 / (4.0 * math.pi * t.gamma_perp)


def kappa_from_q(wavelength: float, q: float) -> float:
    """Cavity field decay rate pi c / (lambda Q) in rad/s."""
    if not q > 0:
        raise ValueError(f"Q must be positive, got {q}")
    if math.isinf(q):
        return 0.0
    return math.pi * C_LIGHT / (wavelength * q)


def q_from_ringdown(photon_lifetime: float, wavelength: float) -> float:
    # Q = omega * tau for the energy decay time tau
    if photon_lifetime < 0:
        raise ValueError("photon lifetime must be non-negative")
    return TWO_PI * C_LIGHT * photon_lifetime / wavelength


def total_quality(q_rad: float, q_mat: float, q_water: float | None = None) -> QualityBudget:
    """Harmonic composition 1/Q = sum 1/Q_i.  ``inf`` marks an absent channel."""
    channels = [q_rad, q_mat] + ([q_water] if q_water is not None else [])
    for q in channels:
        if not q > 0:
            raise ValueError(f"quality factors must be positive, got {q}")
    inv = sum(0.0 if math.isinf(q) else 1.0 / q for q in channels)
    q_total = math.inf if inv == 0.0 else 1.0 / inv
    return QualityBudget(q_rad=q_rad, q_mat=q_mat, q_water=q_water, q_total=q_total)


def frequency_from_wavelength(wavelength):
    return C_LIGHT / np.asarray(wavelength)
