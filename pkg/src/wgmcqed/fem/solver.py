"""Shift-invert eigensolution of the FEM pencil and mode bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (
    QP_ETA,
    QP_W,
    QP_XI,
    PMLProfile,
    Pencil,
    assemble_system,
    field_derivatives,
    p2_shape,
)
from .mesh import REGION_DIELECTRIC, DomainSpec, Mesh, Resolution, ResonatorGeometry, generate_mesh

SPURIOUS_DIV_RATIO = 0.05  # ||div H|| / ||eps^-1/2 curl H|| above this -> spurious
MIN_BOX_FRACTION = 0.9  # fraction of energy that must sit inside the physical box
HYBRID_MARGIN = 0.05
Q_LOWER_BOUND = 1e10  # FEM radiation Q above this is reported as a lower bound
Q_NOISE_FLOOR = 1e13  # above this the eigenvalue's imaginary part is round-off


class EigenSolveError(RuntimeError):
    pass


class NoPhysicalModeError(EigenSolveError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    per_wavelength: float = 10.0
    far_per_wavelength: float = 4.0
    grading: float = 0.25
    core_scale: float = 1.0
    box_width: float = 10.0
    box_height: float = 10.0
    pml_thickness: float = 1.5
    pml_strength: float = 6.0
    penalty: float = 1.0
    n_eigs: int = 6
    arpack_tol: float = 1e-10
    maxiter: int = 3000

    def as_dict(self) -> dict:
        return dict(self.__dict__)

    def domain(self) -> DomainSpec:
        return DomainSpec(
            width=self.box_width,
            height=self.box_height,
            pml_thickness=self.pml_thickness,
            pml_strength=self.pml_strength,
        )

    def resolution(self, wavelength: float) -> Resolution:
        return Resolution(
            wavelength=wavelength,
            per_wavelength=self.per_wavelength,
            far_per_wavelength=self.far_per_wavelength,
            grading=self.grading,
            core_scale=self.core_scale,
        )


@dataclass
class OpticalMode:
    """One eigenmode on the meridional half plane (lengths in um, k in 1/um).

    ``eigen_k`` is the computed root (Im < 0 for a leaky mode under the
    exp(-i omega t) convention); ``k_im`` is the positive decay magnitude.
    ``H`` holds the reduced nodal unknowns (H_rho, -i H_phi... see assembly)
    as a (3, n_nodes) array.
    """

    m: int
    eigen_k: complex
    parity: str
    H: np.ndarray
    mesh: Mesh = field(repr=False)
    eps_interior: float = 1.0
    pml: tuple = field(default=(None, None), repr=False)
    polarization: str = "?"
    shares: tuple = (0.0, 0.0, 0.0)
    div_ratio: float = 0.0
    box_fraction: float = 1.0
    residual: float = 0.0

    @property
    def k_re(self) -> float:
        return self.eigen_k.real

    @property
    def k_im(self) -> float:
        return -self.eigen_k.imag

    @property
    def resonance_wavelength(self) -> float:
        return 2 * math.pi / self.k_re

    @property
    def q_rad(self) -> float:
        if self.k_im <= 0:
            return math.inf
        return self.k_re / (2 * self.k_im)

    @property
    def geometry(self) -> ResonatorGeometry:
        return self.mesh.geometry

    def eps_elements(self) -> np.ndarray:
        return np.where(self.mesh.region == REGION_DIELECTRIC, self.eps_interior, 1.0)

    def electric_field(self, xi=QP_XI, eta=QP_ETA, elements=None):
        """E = (i / (k eps)) curl H at reference points of each element.

        Returns x (E, Q, 2), E (3, E, Q) with components (rho, phi, z).
        """
        if elements is None:
            elements = np.arange(self.mesh.n_elements)
        N, dN = p2_shape(xi, eta)
        x, _, X, _, _ = field_derivatives(self.mesh, self.H, self.m, N, dN, elements, *self.pml)
        eps = self.eps_elements()[elements][:, None]
        pref = 1j / (self.eigen_k * eps)
        E = np.stack([pref * 1j * X[0], pref * X[1], pref * (-1j) * X[2]])
        return x, E


def pml_profiles(mesh: Mesh, settings: SolverSettings, top: bool = True):
    rho_lo, rho_hi, z_hi = mesh.box
    L = settings.pml_thickness
    pr = PMLProfile(rho_hi, L, settings.pml_strength)
    pz = PMLProfile(z_hi, L, settings.pml_strength) if top else None
    return pr, pz


def shift_invert_eigs(pencil: Pencil, m: int, k_shift: complex, count: int, tol=1e-12, maxiter=3000):
    """Eigenpairs of A x = k^2 B x with k^2 nearest ``k_shift**2``.

    Returns (k values, eigenvector matrix) ordered by distance from the shift.
    """
    A = pencil.A(m).tocsc()
    B = pencil.B.tocsr()
    sigma = complex(k_shift) ** 2
    try:
        lu = spla.splu((A - sigma * B).tocsc(), permc_spec="COLAMD")
    except RuntimeError as exc:
        raise EigenSolveError(f"factorisation failed: {exc}") from exc

    def mv(x):
        return lu.solve(B @ x)

    n = A.shape[0]
    op = spla.LinearOperator((n, n), matvec=mv, dtype=complex)
    # deterministic start vector
    v0 = np.cos(np.arange(n) * 0.7) + 1j * np.sin(np.arange(n) * 0.3) + 1.0
    count = min(count, n - 2)
    try:
        mu, vecs = spla.eigs(op, k=count, which="LM", v0=v0, tol=tol, maxiter=maxiter, ncv=min(n - 1, max(2 * count + 1, 30)))
    except spla.ArpackNoConvergence as exc:
        if len(exc.eigenvalues) == 0:
            raise EigenSolveError("ARPACK did not converge") from exc
        mu, vecs = exc.eigenvalues, exc.eigenvectors
    lam = sigma + 1.0 / mu
    k = np.sqrt(lam)
    k = np.where(k.real < 0, -k, k)
    order = np.lexsort((k.imag, k.real, np.abs(lam - sigma)))
    k, vecs = k[order], vecs[:, order]
    res = []
    for i in range(len(k)):
        x = vecs[:, i]
        r = A @ x - k[i] ** 2 * (B @ x)
        res.append(np.linalg.norm(r) / (np.linalg.norm(A @ x) + abs(k[i]) ** 2 * np.linalg.norm(B @ x)))
    return k, vecs, np.array(res)


def _normalise(H: np.ndarray) -> np.ndarray:
    """Fix the arbitrary complex scale: largest nodal entry real positive."""
    i = np.unravel_index(np.argmax(np.abs(H)), H.shape)
    return H / H[i]


def mode_diagnostics(mode: OpticalMode):
    """Divergence ratio, box energy fraction and polarization shares."""
    mesh = mode.mesh
    N, dN = p2_shape(QP_XI, QP_ETA)
    els = np.arange(mesh.n_elements)
    x, val, X, div, det = field_derivatives(mesh, mode.H, mode.m, N, dN, els, *mode.pml)
    eps = mode.eps_elements()[:, None]
    w = QP_W[None, :] * det * x[..., 0]  # rho weight (real coordinates)
    phys = ~mesh.pml
    curl2 = (np.abs(X) ** 2).sum(0) / eps
    div2 = np.abs(div) ** 2
    div_ratio = math.sqrt((div2[phys] * w[phys]).sum() / max((curl2[phys] * w[phys]).sum(), 1e-300))
    # energy density eps |E|^2 = |X|^2 / (|k|^2 eps)
    energy = curl2 * w
    total = energy.sum()
    box_fraction = float(energy[phys].sum() / total) if total > 0 else 0.0
    comp = (np.abs(X) ** 2 / eps)[:, phys] * w[phys]
    s = comp.reshape(3, -1).sum(1)
    s = s / s.sum()
    return div_ratio, box_fraction, tuple(float(v) for v in s)


def classify_polarization(shares) -> str:
    """TM when the radial share of eps|E|^2 dominates, TE when the vertical one does."""
    s_rho, s_phi, s_z = shares
    order = sorted(shares, reverse=True)
    if order[0] - order[1] < HYBRID_MARGIN:
        return "hybrid"
    if s_rho == order[0]:
        return "TM"
    if s_z == order[0]:
        return "TE"
    return "hybrid"


def filter_spurious(modes, div_threshold=SPURIOUS_DIV_RATIO, box_threshold=MIN_BOX_FRACTION):
    kept = [md for md in modes if md.div_ratio < div_threshold and md.box_fraction > box_threshold]
    if not kept:
        raise NoPhysicalModeError("no physical mode near shift")
    return kept


def solve_eigenmodes(
    geom: ResonatorGeometry,
    m: int,
    parity: str,
    k_shift: complex,
    settings: SolverSettings | None = None,
    wavelength: float = 0.852359,
    mesh: Mesh | None = None,
    pencil_cache: dict | None = None,
):
    """Assemble (or reuse) the pencil and return diagnosed mode candidates."""
    settings = settings or SolverSettings()
    if mesh is None:
        mesh = generate_mesh(geom, settings.domain(), settings.resolution(wavelength))
    n = geom.material.index(wavelength * 1e-6)
    pml = pml_profiles(mesh, settings)
    key = (id(mesh), parity, n)
    pencil = None if pencil_cache is None else pencil_cache.get(key)
    if pencil is None:
        pencil = assemble_system(mesh, n * n, 1.0, parity, settings.penalty, *pml)
        if pencil_cache is not None:
            pencil_cache[key] = pencil
    ks, vecs, res = shift_invert_eigs(pencil, m, k_shift, settings.n_eigs, settings.arpack_tol, settings.maxiter)
    modes = []
    for k, v, r in zip(ks, vecs.T, res):
        H = _normalise(pencil.expand(v))
        md = OpticalMode(m=m, eigen_k=complex(k), parity=parity, H=H, mesh=mesh, eps_interior=n * n, pml=pml, residual=float(r))
        md.div_ratio, md.box_fraction, md.shares = mode_diagnostics(md)
        md.polarization = classify_polarization(md.shares)
        modes.append(md)
    return modes, mesh


def estimate_wavenumber(geom: ResonatorGeometry, m: int, pol: str, n: float) -> float:
    """Asymptotic fundamental-mode wavenumber (1/um) for a torus at azimuthal order m.

    Sphere-like radial Airy terms plus a vertical zero-point term that grows
    as sqrt(R/a) when the cross-section is compressed; exact in form for the
    sphere (a = R) to leading orders.
    """
    R, a = geom.outer_radius, geom.minor_radius
    p = n if pol == "TE" else 1.0 / n
    nu = m + 0.5 * math.sqrt(R / a)
    zeta = 2.338107410459767
    nx = nu + 2 ** (-1 / 3) * zeta * nu ** (1 / 3) - p / math.sqrt(n * n - 1) + 0.3 * 2 ** (-2 / 3) * zeta**2 * nu ** (-1 / 3)
    return nx / (n * R)


def _cut_profile(tri_interp, p0, p1, npts=400):
    t = np.linspace(0.0, 1.0, npts)
    pts = np.outer(1 - t, p0) + np.outer(t, p1)
    return pts, tri_interp(pts)


def count_antinodes(mode: OpticalMode, threshold: float = 0.03, npts: int = 600, margin: float = 0.25):
    """Sign changes of the dominant magnetic component along radial and vertical cuts.

    The cuts pass through the maximum of that component; only samples above
    ``threshold`` of the peak count, so evanescent tails do not contribute.
    Cuts end ``margin`` um outside the cross-section.
    Returns (radial_lobes, vertical_lobes) counted over the full (mirrored) plane.
    """
    from scipy.interpolate import LinearNDInterpolator

    mesh = mode.mesh
    phys_nodes = np.unique(mesh.elements[~mesh.pml])
    H = mode.H[:, phys_nodes]
    c = int(np.argmax((np.abs(H) ** 2).sum(1)))
    h = H[c]
    i = int(np.argmax(np.abs(h)))
    h = (h * np.conj(h[i]) / abs(h[i])).real
    peak = abs(h[i])
    xy = mesh.nodes[phys_nodes]
    interp = LinearNDInterpolator(xy, h)
    rho_lo, rho_hi, z_hi = mesh.box
    r0, z0 = xy[i]

    def lobes(vals):
        v = np.nan_to_num(vals)
        sig = np.abs(v) > threshold * peak
        s = np.sign(v[sig])
        return 1 + int(np.count_nonzero(s[1:] != s[:-1])) if sig.any() else 0

    # cuts stop just outside the dielectric so radiated tails of low-Q modes do not count
    g = mesh.geometry
    lo = max(rho_lo, g.centre_rho - g.minor_radius - margin)
    hi = min(rho_hi, g.outer_radius + margin)
    _, rad = _cut_profile(interp, (lo, z0), (hi, z0), npts)
    _, ver = _cut_profile(interp, (r0, 0.0), (r0, min(z_hi, g.minor_radius + margin)), npts)
    n_rad = lobes(rad)
    n_half = lobes(ver)
    # mirror: component odd in z (forced zero at z = 0) doubles the lobe count
    odd = (mode.parity == "even" and c in (0, 1)) or (mode.parity == "odd" and c == 2)
    n_ver = 2 * n_half if odd else 2 * n_half - 1
    return n_rad, n_ver


def find_fundamental(modes, polarization: str | None = None):
    """Physical, single-antinode mode of the requested polarization nearest the shift."""
    for md in modes:
        if polarization is not None and md.polarization != polarization:
            continue
        if md.polarization == "hybrid":
            continue
        if count_antinodes(md) == (1, 1):
            return md
    raise NoPhysicalModeError(f"no single-antinode {polarization or ''} mode among candidates")


def parity_for(polarization: str) -> str:
    if polarization == "TM":
        return "even"
    if polarization == "TE":
        return "odd"
    raise ValueError(f"polarization must be TE or TM, got {polarization!r}")
