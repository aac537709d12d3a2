"""Mode post-processing: mode volume, exterior field maximum, wavelength
interpolation between adjacent azimuthal orders, scaling estimates and FSR.

Lengths in micrometres, volumes in um^3.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .fem.assembly import QP_ETA, QP_W, QP_XI, geometry_at, p2_shape
from .fem.mesh import REGION_DIELECTRIC, Mesh
from .physics import C_LIGHT

EPS_WEIGHTED = "eps_weighted"
UNWEIGHTED = "unweighted"
VM_MIN_MINOR_DIAMETER = 0.65  # um; below this V_m depends on the quantization box
CLIP_WARN_FRACTION = 1e-4

# reference coordinates of the six P2 nodes
_NODE_XI = np.array([0.0, 1.0, 0.0, 0.5, 0.5, 0.0])
_NODE_ETA = np.array([0.0, 0.0, 1.0, 0.0, 0.5, 0.5])
# local (vertex, vertex, midside) node slots of each reference edge
_EDGES = ((0, 1, 3), (1, 2, 4), (2, 0, 5))


class ModeVolumeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class QuantizationRegion:
    """Square box (width x height, um) centred on the outer equatorial rim."""

    width: float = 10.0
    height: float = 10.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("box dimensions must be positive")

    def bounds(self, outer_radius: float, rho_min: float = 0.0):
        lo = max(outer_radius - 0.5 * self.width, rho_min)
        return lo, outer_radius + 0.5 * self.width, 0.5 * self.height


@dataclass(frozen=True)
class ModeMetrics:
    mode_volume: float  # um^3
    atom_site: tuple  # (rho, z) um
    normalized_field_at_atom: float
    resonance_wavelength: float  # um
    q_rad: float
    polarization: str
    m: int = 0
    emax_convention: str = EPS_WEIGHTED
    q_rad_lower_bound: bool = False
    clipped_fraction: float = 0.0

    def __post_init__(self):
        if not self.mode_volume > 0:
            raise ValueError("mode volume must be positive")
        if not 0 < self.normalized_field_at_atom <= 1 + 1e-12:
            raise ValueError(f"normalized field {self.normalized_field_at_atom} outside (0, 1]")

    @property
    def frequency(self) -> float:
        return C_LIGHT / (self.resonance_wavelength * 1e-6)

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# field sampling helpers


def _density(E, eps, convention):
    e2 = (np.abs(E) ** 2).sum(0)
    return eps * e2 if convention == EPS_WEIGHTED else e2


def nodal_field(mode, region_mask=None):
    """Element-averaged (recovered) E at the P2 nodes.

    Averages are taken separately over the elements selected by
    ``region_mask`` so that the normal-component jump at the interface is kept.
    Returns (E (3, n_nodes), counts).
    """
    mesh = mode.mesh
    els = np.flatnonzero(region_mask) if region_mask is not None else np.arange(mesh.n_elements)
    _, E = mode.electric_field(_NODE_XI, _NODE_ETA, els)  # (3, e, 6)
    acc = np.zeros((3, mesh.n_nodes), dtype=complex)
    cnt = np.zeros(mesh.n_nodes)
    idx = mesh.elements[els].ravel()
    for c in range(3):
        np.add.at(acc[c], idx, E[c].ravel())
    np.add.at(cnt, idx, 1.0)
    ok = cnt > 0
    acc[:, ok] /= cnt[ok]
    return acc, cnt


def field_maximum(mode, convention: str = EPS_WEIGHTED):
    """Global maximum of the chosen intensity density over the physical region.

    The recovered nodal field is scanned per material region, and the best
    node is refined by a quadratic fit through its element neighbourhood.
    Returns (density_max, (rho, z)).
    """
    mesh = mode.mesh
    best = (-1.0, None)
    for reg, eps in ((REGION_DIELECTRIC, mode.eps_interior), (1, 1.0)):
        mask = (mesh.region == reg) & ~mesh.pml
        if not mask.any():
            continue
        E, cnt = nodal_field(mode, mask)
        dens = _density(E, eps, convention)
        dens[cnt == 0] = -1.0
        i = int(np.argmax(dens))
        if dens[i] > best[0]:
            best = (float(dens[i]), i, reg, eps, mask)
    dmax, i, reg, eps, mask = best
    val, pos = _refine_max(mode, i, mask, eps, convention)
    if val > dmax:
        return val, pos
    return dmax, tuple(mesh.nodes[i])


def _refine_max(mode, node, mask, eps, convention):
    """Fit a quadratic to densities sampled in the elements around ``node``."""
    mesh = mode.mesh
    els = np.flatnonzero(mask & np.any(mesh.elements == node, axis=1))
    if len(els) == 0:
        return -1.0, None
    lat = [(a / 4, b / 4) for a in range(5) for b in range(5 - a)]
    xi = np.array([p[0] for p in lat])
    eta = np.array([p[1] for p in lat])
    x, E = mode.electric_field(xi, eta, els)
    dens = _density(E, eps, convention).ravel()
    pts = x.reshape(-1, 2)
    j = int(np.argmax(dens))
    centre = pts[j]
    d = pts - centre
    h = np.sqrt((d**2).sum(1)).max()
    if h == 0:
        return float(dens[j]), tuple(centre)
    s = d / h
    V = np.column_stack([np.ones(len(s)), s[:, 0], s[:, 1], s[:, 0] ** 2, s[:, 0] * s[:, 1], s[:, 1] ** 2])
    coef, *_ = np.linalg.lstsq(V, dens, rcond=None)
    H = np.array([[2 * coef[3], coef[4]], [coef[4], 2 * coef[5]]])
    g = coef[1:3]
    try:
        step = -np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
        return float(dens[j]), tuple(centre)
    if np.linalg.eigvalsh(H).max() >= 0 or np.hypot(*step) > 1.0:
        return float(dens[j]), tuple(centre)
    sx, sz = step
    val = coef[0] + coef[1] * sx + coef[2] * sz + coef[3] * sx * sx + coef[4] * sx * sz + coef[5] * sz * sz
    # the mirror plane z = 0 bounds the search
    if centre[1] + h * sz < 0:
        return float(dens[j]), tuple(centre)
    return float(val), (float(centre[0] + h * sx), float(centre[1] + h * sz))


def energy_integral(mode, region: QuantizationRegion | None = None):
    """Full-space 2 pi int eps |E|^2 rho drho dz over the region (mirror half included).

    Returns (inside_region, whole_physical_domain).
    """
    mesh = mode.mesh
    els = np.flatnonzero(~mesh.pml)
    x, E = mode.electric_field(QP_XI, QP_ETA, els)
    _, _, det = geometry_at(mesh, elements=els)
    eps = mode.eps_elements()[els][:, None]
    dens = eps * (np.abs(E) ** 2).sum(0)
    w = QP_W[None, :] * det * x[..., 0]
    total = 2.0 * 2.0 * math.pi * float((dens * w).sum())
    if region is None:
        return total, total
    lo, hi, zh = region.bounds(mesh.geometry.outer_radius, mesh.box[0])
    inside = (x[..., 0] >= lo) & (x[..., 0] <= hi) & (x[..., 1] <= zh)
    part = 2.0 * 2.0 * math.pi * float((dens * w * inside).sum())
    return part, total


def mode_volume(mode, region: QuantizationRegion | None = None, convention: str = EPS_WEIGHTED):
    """V_m = int eps |E|^2 dV / max(density), in um^3.

    Returns (V_m, clipped_fraction); a warning is issued when the region
    cuts away more than 1e-4 of the mode energy in the physical domain.
    """
    region = region or QuantizationRegion()
    part, total = energy_integral(mode, region)
    clipped = 1.0 - part / total if total > 0 else 0.0
    if clipped > CLIP_WARN_FRACTION:
        warnings.warn(f"quantization region clips {clipped:.2e} of the mode energy", ModeVolumeWarning)
    dmax, _ = field_maximum(mode, convention)
    return part / dmax, clipped


# ---------------------------------------------------------------------------
# exterior field


def _edge_reference_points(slot, t):
    a, b, _ = _EDGES[slot]
    xi = (1 - t) * _NODE_XI[a] + t * _NODE_XI[b]
    eta = (1 - t) * _NODE_ETA[a] + t * _NODE_ETA[b]
    return xi, eta


def _interface_slots(mesh: Mesh):
    """For each interface edge, the local edge slot in its exterior element and orientation."""
    out = []
    for (v0, v1, _), el in zip(mesh.interface_edges, mesh.interface_exterior_elements):
        conn = mesh.elements[el]
        for s, (a, b, _) in enumerate(_EDGES):
            if {conn[a], conn[b]} == {v0, v1}:
                out.append(s)
                break
        else:
            raise RuntimeError("interface edge not found in its exterior element")
    return np.array(out)


def exterior_field_max(mode, convention: str = EPS_WEIGHTED, samples: int = 5):
    """Largest exterior-side |E| on the dielectric boundary, normalised to E_max.

    Coarse scan over interface edges, then golden-section search along the
    best few edges.  Returns (atom_site (rho, z), |E(site)| / |E_max|).
    """
    mesh = mode.mesh
    phys = ~mesh.pml[mesh.interface_exterior_elements]
    edges = np.flatnonzero(phys)
    if len(edges) == 0:
        raise ValueError("no exterior interface inside the physical region")
    slots = _interface_slots(mesh)
    ext_el = mesh.interface_exterior_elements

    def sample(edge_ids, t):
        vals, pos = [], []
        for s in range(3):
            sel = edge_ids[slots[edge_ids] == s]
            if len(sel) == 0:
                continue
            xi, eta = _edge_reference_points(s, np.atleast_1d(t))
            x, E = mode.electric_field(xi, eta, ext_el[sel])
            vals.append((sel, (np.abs(E) ** 2).sum(0), x))
        return vals

    ts = np.linspace(0, 1, samples)
    best = (-1.0, None, None)
    scores = np.zeros(len(mesh.interface_edges))
    for sel, e2, x in sample(edges, ts):
        scores[sel] = e2.max(axis=1)
        j = np.unravel_index(np.argmax(e2), e2.shape)
        if e2[j] > best[0]:
            best = (float(e2[j]), tuple(x[j]), sel[j[0]])
    # golden-section refinement on the top edges
    top = edges[np.argsort(scores[edges])[::-1][:3]]
    for e in top:
        def neg(t, e=e):
            (sel, e2, _), = sample(np.array([e]), t)
            return -float(e2[0, 0])

        r = minimize_scalar(neg, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-6})
        if -r.fun > best[0]:
            (sel, e2, x), = sample(np.array([e]), r.x)
            best = (-r.fun, tuple(x[0, 0]), e)
    e2_site, site, _ = best
    dmax, _ = field_maximum(mode, convention)
    # the atom sits in vacuum (eps = 1) so both conventions use |E|^2 at the site
    ratio = math.sqrt(e2_site / dmax)
    if ratio <= 0:
        raise ValueError("exterior field below the numerical noise floor")
    return (float(site[0]), float(site[1])), min(ratio, 1.0)


def compute_metrics(mode, region: QuantizationRegion | None = None, convention: str = EPS_WEIGHTED) -> ModeMetrics:
    from .fem.solver import Q_LOWER_BOUND, Q_NOISE_FLOOR

    vm, clipped = mode_volume(mode, region, convention)
    site, ratio = exterior_field_max(mode, convention)
    q = mode.q_rad
    lb = q >= Q_LOWER_BOUND
    if q >= Q_NOISE_FLOOR:
        # decay rate below eigenvalue round-off: no usable radiation channel
        q = math.inf
    return ModeMetrics(
        mode_volume=vm,
        atom_site=site,
        normalized_field_at_atom=ratio,
        resonance_wavelength=mode.resonance_wavelength,
        q_rad=q,
        polarization=mode.polarization,
        m=mode.m,
        emax_convention=convention,
        q_rad_lower_bound=lb,
        clipped_fraction=clipped,
    )


def equatorial_profile(mode, convention: str = EPS_WEIGHTED, npts: int = 241, margin: float = 1.5):
    """Intensity density along z = 0 through the cross-section, normalised to its peak.

    Returns (rho, density) sampled from (rho_c - a - margin) to (R + margin), um.
    Each material region is interpolated from its own recovered nodal field.
    """
    from scipy.interpolate import LinearNDInterpolator

    mesh = mode.mesh
    geom = mesh.geometry
    lo = max(geom.centre_rho - geom.minor_radius - margin, mesh.box[0])
    hi = min(geom.outer_radius + margin, mesh.box[1])
    rho = np.linspace(lo, hi, npts)
    pts = np.column_stack([rho, np.zeros_like(rho)])
    inside = geom.inside(rho, 0.0)
    out = np.zeros(npts)
    for reg, eps, sel in ((REGION_DIELECTRIC, mode.eps_interior, inside), (1, 1.0, ~inside)):
        mask = (mesh.region == reg) & ~mesh.pml
        if not (mask.any() and sel.any()):
            continue
        E, cnt = nodal_field(mode, mask)
        nodes = np.flatnonzero(cnt > 0)
        dens = _density(E[:, nodes], eps, convention)
        interp = LinearNDInterpolator(mesh.nodes[nodes], dens, fill_value=0.0)
        out[sel] = interp(pts[sel])
    peak = out.max()
    if peak > 0:
        out /= peak
    return rho, np.clip(out, 0.0, None)


# ---------------------------------------------------------------------------
# interpolation, scaling, FSR


def extrapolate_at_wavelength(blue: ModeMetrics, red: ModeMetrics, target: float):
    """(V_m, Q_rad) at ``target``: V_m linear and ln Q_rad linear in wavelength."""
    if blue.polarization != red.polarization:
        raise ValueError("mismatched mode families")
    if blue.m and red.m and abs(blue.m - red.m) != 1:
        raise ValueError("bracketing modes must have adjacent m")
    l0, l1 = blue.resonance_wavelength, red.resonance_wavelength
    if not l0 < target < l1:
        raise ValueError(f"target {target} outside bracket ({l0}, {l1})")
    t = (target - l0) / (l1 - l0)
    vm = blue.mode_volume + t * (red.mode_volume - blue.mode_volume)
    if math.isinf(blue.q_rad) or math.isinf(red.q_rad):
        return vm, math.inf
    q = math.exp(math.log(blue.q_rad) + t * (math.log(red.q_rad) - math.log(blue.q_rad)))
    return vm, q


def interpolate_linear(blue_x, red_x, blue_v, red_v, target):
    t = (target - blue_x) / (red_x - blue_x)
    return blue_v + t * (red_v - blue_v)


def harmonic_estimate_vm(sphere_vm: float, d: float, D: float) -> float:
    """Sphere mode volume scaled by (d/D)^(1/4)."""
    if not 0 < d <= D:
        raise ValueError("need 0 < d <= D")
    return sphere_vm * (d / D) ** 0.25


def free_spectral_range(res_m: ModeMetrics, res_m1: ModeMetrics) -> float:
    """|nu(m+1) - nu(m)| in Hz."""
    if res_m.m and res_m1.m and abs(res_m1.m - res_m.m) != 1:
        raise ValueError("free spectral range needs consecutive m")
    if res_m.polarization != res_m1.polarization:
        raise ValueError("mismatched polarizations")
    return abs(res_m1.frequency - res_m.frequency)
