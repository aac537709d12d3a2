"""Closed-form dielectric-sphere whispering-gallery resonances.

Time convention is exp(-i omega t): outgoing exterior waves are h_l^(1) and
the resonance roots lie in the lower half of the complex k plane.  The
positive decay magnitude is exposed as ``k_im`` so that
``q_rad = k_re / (2 k_im)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import bessel

AIRY_ZEROS = (2.338107410459767, 4.087949444130971, 5.520559828095551, 6.786708090071759)
Q_RAD_FLOOR = 1e13  # k_im/k_re below 1/(2*floor) is reported as a lower bound


class RootFindingError(RuntimeError):
    pass


def _b(pol: str) -> int:
    if pol == "TM":
        return 1
    if pol == "TE":
        return 0
    raise ValueError(f"polarization must be 'TE' or 'TM', got {pol!r}")


@dataclass(frozen=True)
class SphereResonance:
    l: int
    polarization: str
    k: complex  # root of the characteristic equation, 1/m
    n: float
    radius: float
    radial_nodes: int = 0
    iterations: int = 0

    @property
    def k_re(self) -> float:
        return self.k.real

    @property
    def k_im(self) -> float:
        return -self.k.imag

    @property
    def resonance_wavelength(self) -> float:
        return 2.0 * math.pi / self.k_re

    @property
    def q_rad(self) -> float:
        if self.k_im <= 0:
            return math.inf
        return self.k_re / (2.0 * self.k_im)

    @property
    def q_rad_is_lower_bound(self) -> bool:
        return self.q_rad >= Q_RAD_FLOOR

    @property
    def size_parameter(self) -> complex:
        return self.k * self.radius

    def residual(self) -> complex:
        return characteristic_residual(self.k, self.l, self.n, self.radius, self.polarization)


class PoleProximityWarning(UserWarning):
    pass


def _sides(x: complex, l: int, n: float, b: int):
    lhs = n ** (1 - 2 * b) * bessel.riccati_logderiv_j(l, n * x)
    rhs = bessel.riccati_logderiv_h(l, x)
    return lhs, rhs


def characteristic_residual(k: complex, l: int, n: float, radius: float, pol: str) -> complex:
    """LHS - RHS of the sphere characteristic equation at wavenumber ``k``.

    LHS = n^(1-2b) [n k R j_l(n k R)]' / (n k R j_l(n k R)),
    RHS = [k R h_l(k R)]' / (k R h_l(k R)), with b = 1 (TM) or 0 (TE).
    """
    if k == 0:
        raise ValueError("k must be non-zero")
    lhs, rhs = _sides(complex(k) * radius, l, n, _b(pol))
    return lhs - rhs


def pole_proximity(k: complex, l: int, n: float, radius: float) -> float:
    """|j_{l+1}/j_l| at the interior argument; large values mean a nearby pole."""
    return abs(bessel.j_ratio(l, n * complex(k) * radius))


def _residual_and_derivative(x: complex, l: int, n: float, b: int):
    """Residual in the size parameter x = kR and its x-derivative.

    Uses the Riccati equation psi'' = (l(l+1)/z^2 - 1) psi, so that
    d/dz (psi'/psi) = l(l+1)/z^2 - 1 - (psi'/psi)^2 for both j and h.
    """
    lj = bessel.riccati_logderiv_j(l, n * x)
    lh = bessel.riccati_logderiv_h(l, x)
    pref = n ** (1 - 2 * b)
    ll = l * (l + 1)
    f = pref * lj - lh
    dlj = ll / (n * x) ** 2 - 1.0 - lj * lj
    dlh = ll / x**2 - 1.0 - lh * lh
    df = pref * n * dlj - dlh
    return f, df, pref * lj


def initial_guess(l: int, n: float, radius: float, pol: str, radial_order: int = 1) -> complex:
    """Asymptotic (large-l) estimate of the resonance wavenumber, 1/m."""
    if l < 1:
        raise ValueError("l must be >= 1")
    b = _b(pol)
    p = n if b == 0 else 1.0 / n
    nu = l + 0.5
    a = AIRY_ZEROS[radial_order - 1]
    nx = (
        nu
        + 2 ** (-1 / 3) * a * nu ** (1 / 3)
        - p / math.sqrt(n * n - 1)
        + 0.3 * 2 ** (-2 / 3) * a * a * nu ** (-1 / 3)
        - 2 ** (-1 / 3) * p * (n * n - 2 * p * p / 3) / (n * n - 1) ** 1.5 * a * nu ** (-2 / 3)
    )
    return complex(nx / (n * radius))


def _muller(fun, x0, x1, x2, tol, maxiter):
    f0, f1, f2 = fun(x0), fun(x1), fun(x2)
    for it in range(maxiter):
        h1, h2 = x1 - x0, x2 - x1
        d1, d2 = (f1 - f0) / h1, (f2 - f1) / h2
        a = (d2 - d1) / (h2 + h1)
        bb = a * h2 + d2
        disc = np.sqrt(bb * bb - 4 * a * f2 + 0j)
        den = bb + disc if abs(bb + disc) > abs(bb - disc) else bb - disc
        if den == 0:
            raise RootFindingError("Muller iteration degenerate")
        dx = -2 * f2 / den
        x0, x1, x2 = x1, x2, x2 + dx
        f0, f1, f2 = f1, f2, fun(x2)
        if abs(dx) < tol * abs(x2):
            return x2, it + 1
    raise RootFindingError("Muller iteration did not converge")


def count_radial_nodes(l: int, n: float, x_re: float) -> int:
    """Number of zeros of j_l(n x r/R) for 0 < r < R, i.e. of j_l on (0, n x)."""
    zmax = n * x_re
    zmin = max(1e-3, l - 6.0 * l ** (1 / 3) - 2.0)  # j_l has no zeros below ~l
    if zmin >= zmax:
        return 0
    npts = int(200 + 40 * (zmax - zmin))
    zs = np.linspace(zmin, zmax, npts)[:-1]
    vals = bessel.spherical_jn(l, zs).real
    s = np.sign(vals[np.abs(vals) > 0])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def find_sphere_resonance(
    l: int,
    n: float,
    radius: float,
    pol: str,
    guess: complex | None = None,
    tol: float = 1e-14,
    maxiter: int = 60,
    require_fundamental: bool = True,
) -> SphereResonance:
    """Damped Newton on the characteristic residual in x = kR, Muller fallback."""
    b = _b(pol)
    if guess is None:
        guess = initial_guess(l, n, radius, pol)
    x = complex(guess) * radius
    fx, dfx, _ = _residual_and_derivative(x, l, n, b)
    converged = False
    iterations = 0
    for it in range(maxiter):
        iterations = it + 1
        step = -fx / dfx
        lam = 1.0
        while True:
            xn = x + lam * step
            fn, dfn, _ = _residual_and_derivative(xn, l, n, b)
            if abs(fn) < abs(fx) or lam < 1e-4 or abs(fn) < 1e-300:
                break
            lam *= 0.5
        x_prev, x, fx, dfx = x, xn, fn, dfn
        dx = x - x_prev
        small = abs(dx) < tol * abs(x)
        # the real part converges first; keep polishing the tiny imaginary part
        im_ok = abs(dx.imag) <= 1e-9 * abs(x.imag) or abs(x.imag) < 1e-300
        if small and im_ok:
            converged = True
            break
        if lam < 1e-4:
            break
    if not converged:
        def fun(z):
            return _residual_and_derivative(z, l, n, b)[0]

        try:
            x, extra = _muller(fun, x * (1 - 1e-4), x * (1 + 1e-4), x, 1e-15, 200)
            iterations += extra
        except RootFindingError as exc:
            raise RootFindingError(f"no convergence for l={l}, {pol}, n={n}, R={radius}") from exc
    f, _, lhs = _residual_and_derivative(x, l, n, b)
    if not abs(f) <= 1e-8 * max(1.0, abs(lhs)):
        raise RootFindingError(f"converged to a non-root (pole?) for l={l}, {pol}")
    if x.real <= 0:
        raise RootFindingError("root with non-positive real part")
    nodes = count_radial_nodes(l, n, x.real)
    if require_fundamental and nodes != 0:
        raise RootFindingError(f"root for l={l} {pol} has {nodes} interior radial nodes")
    return SphereResonance(
        l=l, polarization=pol, k=x / radius, n=n, radius=radius, radial_nodes=nodes, iterations=iterations
    )


def resonance_ladder(n: float, radius: float, pol: str, l_values) -> list[SphereResonance]:
    return [find_sphere_resonance(l, n, radius, pol) for l in l_values]


def nearest_resonance(
    n: float, radius: float, pol: str, target_wavelength: float, index_of=None
) -> SphereResonance:
    """Fundamental resonance whose wavelength is nearest ``target_wavelength``.

    ``index_of`` optionally maps a wavelength to a refractive index so that a
    dispersive material is evaluated at each candidate's own wavelength.
    """
    k_t = 2 * math.pi / target_wavelength
    bpol = _b(pol)
    p = n if bpol == 0 else 1.0 / n
    # invert the leading asymptotic terms for l
    l0 = max(1, int(round(n * k_t * radius - 1.856 * (n * k_t * radius) ** (1 / 3) + p / math.sqrt(n * n - 1))))
    best = None
    for l in range(max(1, l0 - 4), l0 + 5):
        nn = n if index_of is None else index_of(target_wavelength)
        r = find_sphere_resonance(l, nn, radius, pol)
        if best is None or abs(r.resonance_wavelength - target_wavelength) < abs(
            best.resonance_wavelength - target_wavelength
        ):
            best = r
    return best


def bracketing_resonances(n: float, radius: float, pol: str, target_wavelength: float):
    """Adjacent-l fundamental resonances (blue, red) straddling the target."""
    centre = nearest_resonance(n, radius, pol, target_wavelength)
    other_l = centre.l + 1 if centre.resonance_wavelength > target_wavelength else centre.l - 1
    other = find_sphere_resonance(other_l, n, radius, pol)
    pair = sorted([centre, other], key=lambda r: r.resonance_wavelength)
    return pair[0], pair[1]


# ---------------------------------------------------------------------------
# fields


def _radial_functions(res: SphereResonance, r):
    """Radial function f(r) and d(r f)/dr with f = j_l(n k r) inside, c h_l(k r) outside.

    Normalised so that f is continuous at r = R with f(R) = 1.
    """
    l, n, R, k = res.l, res.n, res.radius, res.k
    r = np.asarray(r, dtype=float)
    inside = r <= R
    f = np.zeros(r.shape, dtype=complex)
    drf = np.zeros(r.shape, dtype=complex)
    jR = bessel.spherical_jn(l, np.array([n * k * R]))[0]
    hR = bessel.spherical_hn1(l, np.array([k * R]))[0]
    if np.any(inside):
        z = n * k * r[inside]
        jl = bessel.spherical_jn(l, z)
        jlm = bessel.spherical_jn(l - 1, z)
        f[inside] = jl / jR
        # d(r j_l(n k r))/dr = j_l + z j_l'(z), z j_l' = z j_{l-1} - (l+1) j_l
        drf[inside] = (z * jlm - l * jl) / jR
    out = ~inside
    if np.any(out):
        z = k * r[out]
        hl = bessel.spherical_hn1(l, z)
        hlm = bessel.spherical_hn1(l - 1, z)
        f[out] = hl / hR
        drf[out] = (z * hlm - l * hl) / hR
    return f, drf


def sphere_mode_field(res: SphereResonance, rho, z):
    """Exact electric field (E_rho, E_phi, E_z) at meridional points (rho, z).

    TE: E = f(r) X_ll.  TM: H = f(r) X_ll and E = (i / (k eps)) curl H.
    The l = m fundamental azimuthal family uses Y_ll ~ sin^l(theta) exp(i l phi),
    so no large-order Legendre evaluation is required.  Overall scale is arbitrary.
    """
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    r = np.hypot(rho, z)
    if np.any(r == 0):
        raise ValueError("field undefined at the origin")
    l = res.l
    st = rho / r
    ct = z / r
    f, drf = _radial_functions(res, r)
    slm1 = st ** (l - 1)
    # X_ll ~ s^(l-1) (theta_hat + i cos(theta) phi_hat), common factor dropped
    if res.polarization == "TE":
        e_r = np.zeros_like(f)
        e_t = f * slm1
        e_p = 1j * ct * slm1 * f
    else:
        eps = np.where(r <= res.radius, res.n**2, 1.0)
        # curl of f(r) s^(l-1) (theta_hat + i cos(theta) phi_hat) exp(i l phi)
        c_r = -1j * (l + 1) * f * slm1 * st / r
        c_t = -1j * ct * slm1 * drf / r
        c_p = slm1 * drf / r
        pref = 1j / (res.k * eps)
        e_r, e_t, e_p = pref * c_r, pref * c_t, pref * c_p
    e_rho = e_r * st + e_t * ct
    e_z = e_r * ct - e_t * st
    return e_rho, e_p, e_z


def sphere_mode_volume(res: SphereResonance, shell: float, convention: str = "eps_weighted", order: int = 200):
    """Oracle mode volume from the exact field, integrated in spherical coordinates.

    Integrates eps |E|^2 over r < R + ``shell`` (same length unit as the
    radius) with tensor Gauss-Legendre rules split at r = R, and normalises by
    the peak density found on the equatorial line.  Returns (V_m, (rho, z) of peak).
    """
    from scipy.optimize import minimize_scalar

    R = res.radius
    l = res.l
    eps_in = res.n**2
    # the angular envelope sin^l decays within a few l^-1/2 of the equator
    half = min(math.pi / 2, 12.0 / math.sqrt(l))
    tx, tw = np.polynomial.legendre.leggauss(order)
    theta = math.pi / 2 + half * tx
    wt = half * tw
    # radial support: field negligible deeper than ~ R (1 - 4 l^-2/3) inside
    r_in = max(1e-6 * R, R * (1 - 8.0 * l ** (-2 / 3)))
    total = 0.0
    for a, b, eps in ((r_in, R, eps_in), (R, R + shell, 1.0)):
        rx, rw = np.polynomial.legendre.leggauss(order)
        r = 0.5 * (b - a) * rx + 0.5 * (b + a)
        wr = 0.5 * (b - a) * rw
        # nudge interface points onto their own side
        rr, tt = np.meshgrid(r, theta, indexing="ij")
        rho = rr * np.sin(tt)
        z = rr * np.cos(tt)
        E = sphere_mode_field(res, rho, z)
        dens = eps * sum(np.abs(c) ** 2 for c in E)
        w = np.outer(wr * r**2, wt * np.sin(theta))
        total += 2 * math.pi * float((dens * w).sum())

    def density(r, eps):
        E = sphere_mode_field(res, np.array([r]), np.array([0.0]))
        e2 = sum(abs(c[0]) ** 2 for c in E)
        return eps * e2 if convention == "eps_weighted" else e2

    inner = minimize_scalar(lambda r: -density(r, eps_in), bounds=(r_in, R * (1 - 1e-12)), method="bounded",
                            options={"xatol": 1e-10 * R})
    peak, where = -inner.fun, inner.x
    # coarse-to-fine guard against a secondary interior maximum
    rs = np.linspace(r_in, R * (1 - 1e-12), 400)
    vals = np.array([density(r, eps_in) for r in rs])
    if vals.max() > peak:
        peak, where = float(vals.max()), float(rs[np.argmax(vals)])
    surf_out = density(R * (1 + 1e-12), 1.0)
    if surf_out > peak:
        peak, where = surf_out, R
    return total / peak, (float(where), 0.0)
