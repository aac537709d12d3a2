"""Meridional-plane meshes for torus cross-sections.

Lengths are micrometres.  Only the upper half plane z >= 0 is meshed; the
equatorial mirror plane is imposed as a boundary condition by the solver.
Elements are quadratic (6-node) triangles whose nodes on the dielectric
interface lie exactly on the circular cross-section.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import triangle

from ..physics import MaterialModel

REGION_DIELECTRIC = 0
REGION_EXTERIOR = 1
# absorbing-layer flags are stored separately so a PML element keeps its material

MARK_INTERFACE = 2
MARK_OUTER = 3


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class ResonatorGeometry:
    """Torus with outer (principal) diameter D and cross-section diameter d, in um.

    ``d == D`` is a sphere.
    """

    principal_diameter: float
    minor_diameter: float
    material: MaterialModel = field(default_factory=MaterialModel)

    def __post_init__(self):
        if not 0 < self.minor_diameter <= self.principal_diameter:
            raise ValueError("need 0 < d <= D")

    @property
    def is_sphere(self) -> bool:
        return self.minor_diameter == self.principal_diameter

    @property
    def minor_radius(self) -> float:
        return 0.5 * self.minor_diameter

    @property
    def centre_rho(self) -> float:
        return 0.5 * (self.principal_diameter - self.minor_diameter)

    @property
    def outer_radius(self) -> float:
        return 0.5 * self.principal_diameter

    def inside(self, rho, z):
        rho = np.asarray(rho)
        z = np.asarray(z)
        return (rho - self.centre_rho) ** 2 + z**2 < self.minor_radius**2

    def as_dict(self) -> dict:
        return {
            "D_um": self.principal_diameter,
            "d_um": self.minor_diameter,
            "material": self.material.as_dict(),
        }


@dataclass(frozen=True)
class DomainSpec:
    """Physical box (the quantization region) plus absorbing layers.

    The box is ``width`` x ``height`` centred on the outer equatorial rim;
    only its upper half is meshed.  ``rho_min_fraction`` clips the inner side
    away from the symmetry axis.
    """

    width: float = 10.0
    height: float = 10.0
    pml_thickness: float = 1.5
    pml_strength: float = 6.0
    pml_top: bool = True
    rho_min_fraction: float = 0.3

    def box(self, geom: ResonatorGeometry):
        r = geom.outer_radius
        rho_lo = max(r - 0.5 * self.width, self.rho_min_fraction * r)
        return rho_lo, r + 0.5 * self.width, 0.5 * self.height


@dataclass(frozen=True)
class Resolution:
    """Element-size law.

    ``per_wavelength`` elements per material wavelength in the mode core,
    ``far_per_wavelength`` far from it; sizes grow linearly with distance from
    the core at rate ``grading``.
    """

    wavelength: float = 0.852359
    per_wavelength: float = 10.0
    far_per_wavelength: float = 4.0
    grading: float = 0.25
    core_scale: float = 1.0

    def scaled(self, factor: float) -> "Resolution":
        return Resolution(
            self.wavelength,
            self.per_wavelength * factor,
            self.far_per_wavelength * factor,
            self.grading,
            self.core_scale,
        )


@dataclass
class Mesh:
    nodes: np.ndarray  # (N, 2) rho, z
    elements: np.ndarray  # (E, 6) quadratic connectivity
    region: np.ndarray  # (E,) REGION_*
    pml: np.ndarray  # (E,) bool, element lies in an absorbing layer
    boundary_nodes: dict  # name -> sorted node indices
    interface_edges: np.ndarray  # (K, 3) vertex, vertex, midside node on the dielectric boundary
    interface_elements: np.ndarray  # (K,) dielectric-side element of each interface edge
    interface_exterior_elements: np.ndarray  # (K,) exterior-side element of each interface edge
    box: tuple  # rho_lo, rho_hi, z_hi of the physical region
    pml_outer: tuple  # rho_pml_hi, z_pml_hi
    geometry: ResonatorGeometry | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def vertex_nodes(self) -> np.ndarray:
        return np.unique(self.elements[:, :3])


def _mode_core(geom: ResonatorGeometry, wavelength: float, core_scale: float):
    """Rectangle (rho0, rho1, z1) where the fundamental mode carries its energy."""
    n = geom.material.index(wavelength * 1e-6)
    k = 2 * math.pi / wavelength
    R = geom.outer_radius
    a = geom.minor_radius
    nu = n * k * R
    # vertical Gaussian width of the fundamental family, capped by the cross-section
    sigma_z = (R * a) ** 0.25 / math.sqrt(n * k)
    z1 = min(4.5 * sigma_z, a + 1.0) * core_scale
    w_in = min((4.0 * R / nu ** (2 / 3) + 0.3) * core_scale, 2.0 * a + 0.2)
    w_out = 0.9 * core_scale
    return R - w_in, R + w_out, z1


def _arc_points(geom: ResonatorGeometry, rect, spacing_fn):
    """Polyline vertices of the upper half circle clipped to ``rect``."""
    rho_lo, rho_hi, z_hi = rect
    rc, a = geom.centre_rho, geom.minor_radius
    ts = [0.0]
    t = 0.0
    while t < math.pi:
        p = (rc + a * math.cos(t), a * math.sin(t))
        h = spacing_fn(np.array([p[0]]), np.array([p[1]]))[0]
        t = min(math.pi, t + h / a)
        ts.append(t)
    ts = np.array(ts)
    pts = np.column_stack([rc + a * np.cos(ts), a * np.sin(ts)])
    pts[-1, 1] = 0.0
    inside = (pts[:, 0] >= rho_lo) & (pts[:, 0] <= rho_hi) & (pts[:, 1] <= z_hi)
    if not inside[0]:
        raise MeshError("outer rim of the resonator lies outside the domain")
    # keep the leading inside run, then clip it at the domain boundary
    stop = len(pts) if inside.all() else int(np.argmin(inside))
    run = pts[:stop]
    if stop < len(pts):
        t0, t1 = ts[stop - 1], ts[stop]
        for _ in range(60):
            tm = 0.5 * (t0 + t1)
            pm = (rc + a * math.cos(tm), a * math.sin(tm))
            if pm[0] >= rho_lo and pm[1] <= z_hi:
                t0 = tm
            else:
                t1 = tm
        pe = np.array([rc + a * math.cos(t0), a * math.sin(t0)])
        # snap onto the boundary line that was crossed
        if abs(pe[0] - rho_lo) < abs(pe[1] - z_hi):
            pe[0] = rho_lo
        else:
            pe[1] = z_hi
        if np.hypot(*(pe - run[-1])) < 1e-3 * a:
            run = run[:-1]
        run = np.vstack([run, pe])
    return run


def generate_mesh(
    geom: ResonatorGeometry,
    domain: DomainSpec | None = None,
    resolution: Resolution | None = None,
    max_passes: int = 8,
) -> Mesh:
    domain = domain or DomainSpec()
    resolution = resolution or Resolution()
    lam = resolution.wavelength
    n = geom.material.index(lam * 1e-6)
    rho_lo, rho_hi, z_hi = domain.box(geom)
    L = domain.pml_thickness
    rho_p = rho_hi + L
    z_p = z_hi + L if domain.pml_top else z_hi
    if geom.outer_radius >= rho_hi or rho_lo >= geom.outer_radius:
        raise MeshError("domain too small to contain the dielectric rim")

    c0, c1, cz = _mode_core(geom, lam, resolution.core_scale)
    h_in = lam / (n * resolution.per_wavelength)
    h_out_far = lam / resolution.far_per_wavelength
    h_in_far = lam / (n * resolution.far_per_wavelength)

    if geom.minor_diameter < 2 * h_in:
        raise MeshError(f"minor diameter {geom.minor_diameter} um below two elements")

    def size(rho, z):
        dr = np.maximum(np.maximum(c0 - rho, rho - c1), 0.0)
        dz = np.maximum(z - cz, 0.0)
        dist = np.hypot(dr, dz)
        far = np.where(geom.inside(rho, z), h_in_far, h_out_far)
        return np.minimum(h_in * (1.0 + resolution.grading * dist / h_in), far)

    arc = _arc_points(geom, (rho_lo, rho_p, z_p), size)

    def boundary_line(p, q):
        """Points from p to q (excluding q) spaced by the local size."""
        p, q = np.asarray(p, float), np.asarray(q, float)
        length = np.hypot(*(q - p))
        out = [p]
        s = 0.0
        while True:
            x = p + (q - p) * s / length
            s += float(size(np.array([x[0]]), np.array([x[1]]))[0])
            if s >= length - 1e-9:
                break
            out.append(p + (q - p) * s / length)
        return np.array(out)

    # outer boundary polygon, counter-clockwise, split at the PML lines and arc ends
    corner_pts = [(rho_lo, 0.0), (rho_p, 0.0), (rho_p, z_p), (rho_lo, z_p)]
    special = [tuple(arc[0]), tuple(arc[-1]), (rho_hi, 0.0), (rho_hi, z_p), (rho_p, z_hi), (rho_lo, z_hi)]
    if not domain.pml_top:
        special = [s for s in special if s not in ((rho_p, z_hi), (rho_lo, z_hi))]
    loop = []
    sides = [
        (corner_pts[0], corner_pts[1]),
        (corner_pts[1], corner_pts[2]),
        (corner_pts[2], corner_pts[3]),
        (corner_pts[3], corner_pts[0]),
    ]
    for p, q in sides:
        p, q = np.array(p), np.array(q)
        d = q - p
        length = np.hypot(*d)
        on = []
        for s in special:
            s = np.array(s)
            t = np.dot(s - p, d) / length**2
            if 1e-12 < t < 1 - 1e-12 and abs(d[0] * (s - p)[1] - d[1] * (s - p)[0]) < 1e-9 * length:
                on.append((t, s))
        on.sort(key=lambda x: x[0])
        stops = [p] + [s for _, s in on] + [q]
        for a_, b_ in zip(stops[:-1], stops[1:]):
            loop.extend(boundary_line(a_, b_))

    verts = [tuple(v) for v in loop]
    index = {}

    def vid(pt):
        key = (round(pt[0], 10), round(pt[1], 10))
        if key not in index:
            index[key] = len(verts_out)
            verts_out.append(pt)
        return index[key]

    verts_out: list = []
    segs, marks = [], []
    ring = [vid(v) for v in verts]
    for i in range(len(ring)):
        segs.append((ring[i], ring[(i + 1) % len(ring)]))
        marks.append(MARK_OUTER)
    # internal PML interfaces
    internal = [((rho_hi, 0.0), (rho_hi, z_p))]
    if domain.pml_top:
        internal.append(((rho_lo, z_hi), (rho_p, z_hi)))
    # split internal lines where they cross each other
    pieces = []
    if domain.pml_top:
        pieces = [
            ((rho_hi, 0.0), (rho_hi, z_hi)),
            ((rho_hi, z_hi), (rho_hi, z_p)),
            ((rho_lo, z_hi), (rho_hi, z_hi)),
            ((rho_hi, z_hi), (rho_p, z_hi)),
        ]
    else:
        pieces = internal
    for p, q in pieces:
        line = list(boundary_line(p, q)) + [np.array(q, float)]
        ids = [vid(tuple(v)) for v in line]
        for i in range(len(ids) - 1):
            segs.append((ids[i], ids[i + 1]))
            marks.append(1)
    arc_ids = [vid(tuple(v)) for v in arc]
    for i in range(len(arc_ids) - 1):
        segs.append((arc_ids[i], arc_ids[i + 1]))
        marks.append(MARK_INTERFACE)
    # the PML lines may cross the arc (sphere touching the top layer); triangle
    # splits intersecting segments itself
    pslg = {
        "vertices": np.array(verts_out, dtype=float),
        "segments": np.array(segs, dtype=np.int32),
        "segment_markers": np.array(marks, dtype=np.int32)[:, None],
    }
    h0 = float(size(np.array([rho_p]), np.array([z_p]))[0])
    tri = triangle.triangulate(pslg, f"pq30a{0.6 * h0 * h0:.6g}")
    for _ in range(max_passes):
        p = tri["vertices"]
        t = tri["triangles"]
        cen = p[t].mean(axis=1)
        target = size(cen[:, 0], cen[:, 1])
        target_area = math.sqrt(3) / 4 * target**2
        v = p[t]
        area = 0.5 * np.abs(
            (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
            - (v[:, 2, 0] - v[:, 0, 0]) * (v[:, 1, 1] - v[:, 0, 1])
        )
        if np.all(area <= 1.3 * target_area):
            break
        tri["triangle_max_area"] = target_area
        tri = triangle.triangulate(tri, "rpq30")
    return _finish(geom, tri, (rho_lo, rho_hi, z_hi), (rho_p, z_p), domain)


def _finish(geom, tri, box, pml_outer, domain) -> Mesh:
    p = np.array(tri["vertices"], dtype=float)
    t = np.array(tri["triangles"], dtype=np.int64)
    segs = np.array(tri["segments"], dtype=np.int64)
    smarks = np.array(tri["segment_markers"]).ravel()
    rc, a = geom.centre_rho, geom.minor_radius
    # orientation: counter-clockwise
    v = p[t]
    cross = (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) - (v[:, 2, 0] - v[:, 0, 0]) * (
        v[:, 1, 1] - v[:, 0, 1]
    )
    flip = cross < 0
    t[flip] = t[flip][:, [0, 2, 1]]

    iface = segs[smarks == MARK_INTERFACE]
    iface_vertices = np.unique(iface)
    # project interface vertices (including Steiner points) onto the circle
    d = p[iface_vertices] - np.array([rc, 0.0])
    r = np.hypot(d[:, 0], d[:, 1])
    p[iface_vertices] = np.array([rc, 0.0]) + d * (a / r)[:, None]
    p[p[:, 1] < 1e-13, 1] = 0.0

    cen = p[t].mean(axis=1)
    region = np.where(geom.inside(cen[:, 0], cen[:, 1]), REGION_DIELECTRIC, REGION_EXTERIOR)
    rho_lo, rho_hi, z_hi = box
    pml = (cen[:, 0] > rho_hi) | (domain.pml_top & (cen[:, 1] > z_hi))

    # quadratic midside nodes
    edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    es = np.sort(edges, axis=1)
    uniq, inv = np.unique(es, axis=0, return_inverse=True)
    inv = inv.ravel()
    nv = len(p)
    mids = 0.5 * (p[uniq[:, 0]] + p[uniq[:, 1]])
    iface_sorted = np.sort(iface, axis=1)
    iface_keys = {tuple(e) for e in iface_sorted.tolist()}
    is_iface = np.array([tuple(e) in iface_keys for e in uniq.tolist()], dtype=bool)
    dm = mids[is_iface] - np.array([rc, 0.0])
    rm = np.hypot(dm[:, 0], dm[:, 1])
    mids[is_iface] = np.array([rc, 0.0]) + dm * (a / rm)[:, None]
    nodes = np.vstack([p, mids])
    ne = len(t)
    mid_id = nv + inv
    elements = np.column_stack([t, mid_id[:ne], mid_id[ne : 2 * ne], mid_id[2 * ne :]])

    # interface edge -> adjacent elements
    iface_edge_ids = np.flatnonzero(is_iface)
    edge_elems = np.full((len(uniq), 2), -1, dtype=np.int64)
    elem_of = np.tile(np.arange(ne), 3)
    order = np.argsort(inv, kind="stable")
    for idx in order:
        e = inv[idx]
        slot = 0 if edge_elems[e, 0] < 0 else 1
        edge_elems[e, slot] = elem_of[idx]
    ie_in, ie_out, ie_nodes = [], [], []
    for e in iface_edge_ids:
        e0, e1 = edge_elems[e]
        if e1 < 0:
            continue  # interface segment lying on the outer boundary
        if region[e0] == REGION_DIELECTRIC:
            ie_in.append(e0)
            ie_out.append(e1)
        else:
            ie_in.append(e1)
            ie_out.append(e0)
        ie_nodes.append((uniq[e, 0], uniq[e, 1], nv + e))
    tol = 1e-9
    rho_p, z_p = pml_outer
    all_nodes = np.arange(len(nodes))
    bnd = {
        "equator": all_nodes[np.abs(nodes[:, 1]) < tol],
        "outer": all_nodes[
            (np.abs(nodes[:, 0] - rho_p) < tol)
            | (np.abs(nodes[:, 1] - z_p) < tol)
            | (np.abs(nodes[:, 0] - rho_lo) < tol)
        ],
    }
    return Mesh(
        nodes=nodes,
        elements=elements,
        region=region,
        pml=pml,
        boundary_nodes=bnd,
        interface_edges=np.array(ie_nodes, dtype=np.int64).reshape(-1, 3),
        interface_elements=np.array(ie_in, dtype=np.int64),
        interface_exterior_elements=np.array(ie_out, dtype=np.int64),
        box=box,
        pml_outer=pml_outer,
        geometry=geom,
    )


def element_quality(mesh: Mesh) -> np.ndarray:
    """Normalised shape quality 4 sqrt(3) A / sum(l^2) of the straight-sided triangles (1 = equilateral)."""
    v = mesh.nodes[mesh.elements[:, :3]]
    e0 = v[:, 1] - v[:, 0]
    e1 = v[:, 2] - v[:, 1]
    e2 = v[:, 0] - v[:, 2]
    area = 0.5 * (e0[:, 0] * (-e2[:, 1]) - e0[:, 1] * (-e2[:, 0]))
    s = (e0**2).sum(1) + (e1**2).sum(1) + (e2**2).sum(1)
    return 4 * math.sqrt(3) * area / s


def check_mesh(mesh: Mesh, min_quality: float = 0.2) -> dict:
    """Conformity and quality audit; raises MeshError on failure."""
    q = element_quality(mesh)
    if np.any(q <= 0):
        raise MeshError("inverted or degenerate elements")
    if q.min() < min_quality:
        raise MeshError(f"element quality {q.min():.3f} below {min_quality}")
    # conformity: every interior edge is shared by exactly two elements
    t = mesh.elements
    edges = np.sort(np.concatenate([t[:, [0, 1, 3]], t[:, [1, 2, 4]], t[:, [2, 0, 5]]])[:, :2], axis=1)
    mids = np.concatenate([t[:, 3], t[:, 4], t[:, 5]])
    uniq, inv, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
    if counts.max() > 2:
        raise MeshError("edge shared by more than two elements")
    # the shared midside node must be the same for both neighbours
    first = np.full(len(uniq), -1)
    inv = inv.ravel()
    for i, e in enumerate(inv):
        if first[e] < 0:
            first[e] = mids[i]
        elif first[e] != mids[i]:
            raise MeshError("hanging midside node")
    from .assembly import jacobian_determinants

    detj = jacobian_determinants(mesh)
    if np.any(detj <= 0):
        raise MeshError("curved element with non-positive Jacobian")
    return {"min_quality": float(q.min()), "n_elements": mesh.n_elements, "n_nodes": mesh.n_nodes}
