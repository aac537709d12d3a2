"""Single-point pipeline: bracket the atomic line with adjacent azimuthal orders,
post-process both modes and interpolate the metrics to the target wavelength."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import __version__
from ..analysis import (
    EPS_WEIGHTED,
    ModeMetrics,
    QuantizationRegion,
    compute_metrics,
    equatorial_profile,
    extrapolate_at_wavelength,
    free_spectral_range,
    interpolate_linear,
)
from ..cqed import (
    WATER_ABSORPTION_852,
    WATER_INDEX,
    WATER_MONOLAYER_THICKNESS,
    CqedFigures,
    figures_from_metrics,
    water_monolayer_q,
)
from ..fem.assembly import assemble_system
from ..fem.mesh import ResonatorGeometry, generate_mesh
from ..fem.solver import (
    NoPhysicalModeError,
    OpticalMode,
    SolverSettings,
    classify_polarization,
    estimate_wavenumber,
    filter_spurious,
    find_fundamental,
    mode_diagnostics,
    parity_for,
    pml_profiles,
    shift_invert_eigs,
)
from ..physics import CESIUM_D2, AtomicTransition, QualityBudget
from .cache import ModeCache, cache_key

log = logging.getLogger(__name__)

# number of eigensolves performed in this process (warm-cache reruns keep it at zero)
COUNTERS = {"eigensolves": 0}


class BracketError(RuntimeError):
    pass


@dataclass(frozen=True)
class WaterModel:
    enabled: bool = False
    thickness: float = WATER_MONOLAYER_THICKNESS  # m
    absorption: float = WATER_ABSORPTION_852  # 1/m
    index: float = WATER_INDEX


@dataclass(frozen=True)
class PipelineSettings:
    solver: SolverSettings = field(default_factory=SolverSettings)
    m_budget: int = 15
    region: QuantizationRegion = field(default_factory=QuantizationRegion)
    convention: str = EPS_WEIGHTED
    water: WaterModel = field(default_factory=WaterModel)
    shift_retries: tuple = (0.01, 0.02, 0.04, -0.01)

    def as_dict(self) -> dict:
        return {
            "solver": self.solver.as_dict(),
            "m_budget": self.m_budget,
            "region": asdict(self.region),
            "convention": self.convention,
            "water": asdict(self.water),
        }


@dataclass
class SweepRecord:
    D: float
    d: float
    polarization: str
    status: str = "ok"
    error: str = ""
    m_blue: int | None = None
    m_red: int | None = None
    blue: ModeMetrics | None = None
    red: ModeMetrics | None = None
    metrics: ModeMetrics | None = None
    figures: CqedFigures | None = None
    budget: QualityBudget | None = None
    q_water: float | None = None
    fsr: float | None = None
    profile: tuple | None = None  # (rho um, normalised density) along z = 0
    provenance: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def sort_key(self):
        return (self.D, self.d, self.polarization)


class GeometrySolver:
    """Mesh, pencil and mode store for one (geometry, polarization) pair."""

    def __init__(self, geom: ResonatorGeometry, pol: str, wavelength_um: float, settings: SolverSettings,
                 cache: ModeCache | None = None):
        self.geom = geom
        self.pol = pol
        self.parity = parity_for(pol)
        self.wavelength = wavelength_um
        self.settings = settings
        self.cache = cache
        self.n = geom.material.index(wavelength_um * 1e-6)
        self._mesh = None
        self._pml = None
        self._pencil = None
        self.modes: dict[int, OpticalMode] = {}

    @property
    def mesh(self):
        if self._mesh is None:
            self._mesh = generate_mesh(self.geom, self.settings.domain(), self.settings.resolution(self.wavelength))
            self._pml = pml_profiles(self._mesh, self.settings)
        return self._mesh

    @property
    def pencil(self):
        if self._pencil is None:
            mesh = self.mesh
            self._pencil = assemble_system(mesh, self.n**2, 1.0, self.parity, self.settings.penalty, *self._pml)
        return self._pencil

    def key_material(self, m: int) -> dict:
        return {
            "geometry": self.geom.as_dict(),
            "m": m,
            "polarization": self.pol,
            "wavelength_um": self.wavelength,
            "index": self.n,
            "solver": self.settings.as_dict(),
            "code": __version__,
        }

    def _make_mode(self, m, k, H) -> OpticalMode:
        mesh = self.mesh
        md = OpticalMode(m=m, eigen_k=complex(k), parity=self.parity, H=H, mesh=mesh,
                         eps_interior=self.n**2, pml=self._pml)
        md.div_ratio, md.box_fraction, md.shares = mode_diagnostics(md)
        md.polarization = classify_polarization(md.shares)
        return md

    def estimate(self, m: int) -> float:
        base = estimate_wavenumber(self.geom, m, self.pol, self.n)
        if self.modes:
            near = min(self.modes, key=lambda j: abs(j - m))
            base += self.modes[near].k_re - estimate_wavenumber(self.geom, near, self.pol, self.n)
        return base

    def mode(self, m: int, retries=(0.01, 0.02, 0.04, -0.01)) -> OpticalMode:
        if m in self.modes:
            return self.modes[m]
        km = self.key_material(m)
        hit = self.cache.load(km) if self.cache is not None else None
        if hit is not None:
            k, H, _ = hit
            md = self._make_mode(m, k, H)
        else:
            md = self._solve(m, retries)
            if self.cache is not None:
                self.cache.store(km, md.eigen_k, md.H, {"polarization": md.polarization,
                                                          "residual": md.residual})
        self.modes[m] = md
        return md

    def _solve(self, m, retries):
        from ..fem.solver import _normalise

        k0 = self.estimate(m)
        shifts = [k0] + [k0 * (1 + r) for r in retries]
        last = None
        for s in shifts:
            COUNTERS["eigensolves"] += 1
            ks, vecs, res = shift_invert_eigs(self.pencil, m, s, self.settings.n_eigs,
                                              self.settings.arpack_tol, self.settings.maxiter)
            cands = []
            for k, v, r in zip(ks, vecs.T, res):
                md = self._make_mode(m, k, _normalise(self.pencil.expand(v)))
                md.residual = float(r)
                cands.append(md)
            try:
                return find_fundamental(filter_spurious(cands), self.pol)
            except NoPhysicalModeError as exc:
                last = exc
                log.info("no fundamental near shift %.6f for m=%d, retrying", s, m)
        raise NoPhysicalModeError(f"{self.pol} fundamental not found for m={m}: {last}")


def initial_order(geom: ResonatorGeometry, pol: str, n: float, k_target: float) -> int:
    m = max(1, int(n * k_target * geom.outer_radius * 0.8))
    while estimate_wavenumber(geom, m + 1, pol, n) < k_target:
        m += 1
    # m is the last order below target per the estimate; pick the nearer of m, m+1
    lo = estimate_wavenumber(geom, m, pol, n)
    hi = estimate_wavenumber(geom, m + 1, pol, n)
    return m if k_target - lo < hi - k_target else m + 1


def target_resonance(gs: GeometrySolver, target_wavelength_um: float, m_budget: int = 15):
    """Adjacent-order fundamental modes (blue, red) bracketing the target wavelength.

    Returns (blue, red); for an exact hit both entries are the same mode.
    """
    kt = 2 * math.pi / target_wavelength_um
    m0 = initial_order(gs.geom, gs.pol, gs.n, kt)
    m = m0
    for _ in range(4 * m_budget):
        if abs(m - m0) > m_budget:
            break
        md = gs.mode(m)
        if abs(md.k_re - kt) <= 1e-12 * kt:
            return md, md
        below = md.k_re < kt
        nb = m + 1 if below else m - 1
        if nb in gs.modes or abs(nb - m0) <= m_budget:
            other = gs.mode(nb)
            if (other.k_re >= kt) == below:
                pair = sorted([md, other], key=lambda x: x.k_re, reverse=True)
                return pair[0], pair[1]
        # jump by the estimated number of free spectral ranges
        fsr = abs(gs.estimate(m + 1) - gs.estimate(m))
        step = max(1, int(round(abs(kt - md.k_re) / fsr)))
        m = m + step if below else m - step
    raise BracketError(f"no bracket within +/-{m_budget} orders of m={m0}")


def solve_point(geom: ResonatorGeometry, pol: str, transition: AtomicTransition = CESIUM_D2,
                settings: PipelineSettings | None = None, cache: ModeCache | None = None) -> SweepRecord:
    settings = settings or PipelineSettings()
    rec = SweepRecord(D=geom.principal_diameter, d=geom.minor_diameter, polarization=pol)
    rec.provenance = provenance(geom, pol, transition, settings)
    lam_um = transition.wavelength * 1e6
    gs = GeometrySolver(geom, pol, lam_um, settings.solver, cache)
    blue_mode, red_mode = target_resonance(gs, lam_um, settings.m_budget)
    blue = compute_metrics(blue_mode, settings.region, settings.convention)
    red = compute_metrics(red_mode, settings.region, settings.convention)
    rec.m_blue, rec.m_red = blue_mode.m, red_mode.m
    rec.blue, rec.red = blue, red
    if blue_mode is red_mode:
        vm, q = blue.mode_volume, blue.q_rad
        ratio = blue.normalized_field_at_atom
        site = blue.atom_site
    else:
        vm, q = extrapolate_at_wavelength(blue, red, lam_um)
        ratio = interpolate_linear(blue.resonance_wavelength, red.resonance_wavelength,
                                   blue.normalized_field_at_atom, red.normalized_field_at_atom, lam_um)
        near = blue if abs(blue.resonance_wavelength - lam_um) <= abs(red.resonance_wavelength - lam_um) else red
        site = near.atom_site
        rec.fsr = free_spectral_range(blue, red)
    near_mode = blue_mode if site == blue.atom_site else red_mode
    rec.profile = equatorial_profile(near_mode, settings.convention)
    rec.metrics = ModeMetrics(
        mode_volume=vm,
        atom_site=site,
        normalized_field_at_atom=ratio,
        resonance_wavelength=lam_um,
        q_rad=q,
        polarization=pol,
        m=0,
        emax_convention=settings.convention,
        q_rad_lower_bound=blue.q_rad_lower_bound or red.q_rad_lower_bound,
        clipped_fraction=max(blue.clipped_fraction, red.clipped_fraction),
    )
    if settings.water.enabled:
        wq = [water_monolayer_q(md, settings.water.thickness, settings.water.absorption, settings.water.index)
              for md in (blue_mode, red_mode)]
        if blue_mode is red_mode or not all(np.isfinite(wq)):
            rec.q_water = min(wq)
        else:
            rec.q_water = math.exp(interpolate_linear(blue.resonance_wavelength, red.resonance_wavelength,
                                                      math.log(wq[0]), math.log(wq[1]), lam_um))
    rec.figures, rec.budget = figures_from_metrics(rec.metrics, transition, geom.material.q_material, rec.q_water)
    return rec


def provenance(geom, pol, transition, settings: PipelineSettings) -> dict:
    body = {
        "geometry": geom.as_dict(),
        "polarization": pol,
        "transition": {"gamma_perp": transition.gamma_perp, "wavelength": transition.wavelength,
                       "label": transition.label},
        "settings": settings.as_dict(),
    }
    return {"settings_hash": cache_key(body), "code_version": __version__, **body}


def run_point_safe(args):
    """Worker entry: never raises, failures become structured records.

    Returns (record, number of eigensolves performed).
    """
    geom, pol, transition, settings, cache_root, cache_enabled = args
    before = COUNTERS["eigensolves"]
    cache = ModeCache(cache_root, cache_enabled) if cache_enabled else None
    try:
        rec = solve_point(geom, pol, transition, settings, cache)
    except Exception as exc:  # noqa: BLE001 - recorded, not swallowed
        rec = SweepRecord(D=geom.principal_diameter, d=geom.minor_diameter, polarization=pol,
                          status="failed", error=f"{type(exc).__name__}: {exc}")
        rec.provenance = provenance(geom, pol, transition, settings)
    return rec, COUNTERS["eigensolves"] - before
