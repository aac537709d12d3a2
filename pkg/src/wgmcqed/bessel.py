"""Spherical Bessel and Hankel functions of complex argument.

Three evaluation routes, picked by stability:

* the ratio ``j_{l+1}/j_l`` by continued fraction (modified Lentz),
* ``j_l`` values by downward (Miller) recurrence normalised on ``j_0``/``j_1``,
* ``h_l^{(1)}`` by upward recurrence, which is stable for the dominant solution.
"""

from __future__ import annotations

import numpy as np

_TINY = 1e-300
_RESCALE = 1e200


class BesselOverflowError(ArithmeticError):
    """Raised when a requested value is outside double-precision range."""


def _check_arg(l, z):
    if l < 0:
        raise ValueError("order must be non-negative")
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise ValueError("argument must be non-zero")
    if np.any(np.abs(z.imag) > 700.0):
        raise BesselOverflowError("|Im z| > 700: spherical Bessel values overflow")
    return z


def j_ratio(l: int, z: complex, max_terms: int = 100000) -> complex:
    """``j_{l+1}(z) / j_l(z)`` from the continued fraction

    j_{l+1}/j_l = 1 / ((2l+3)/z - 1 / ((2l+5)/z - ...)).
    """
    z = complex(z)
    # Lentz on f = b0 + a1/(b1 + a2/(b2 + ...)), a_k = -1, b_k = (2l+3+2k)/z
    f = (2 * l + 3) / z
    if f == 0:
        f = _TINY
    c = f
    d = 0.0
    for k in range(1, max_terms):
        b = (2 * l + 3 + 2 * k) / z
        d = b - d
        if d == 0:
            d = _TINY
        c = b - 1.0 / c
        if c == 0:
            c = _TINY
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            return 1.0 / f
    raise ArithmeticError(f"continued fraction for j_{l} did not converge at z={z}")


def h_ratio(l: int, z: complex) -> complex:
    """``h_{l+1}(z) / h_l(z)`` for the outgoing Hankel function, by upward recurrence."""
    z = complex(z)
    s = 1.0 / z - 1j  # h_1/h_0
    for k in range(1, l + 1):
        s = (2 * k + 1) / z - 1.0 / s
    return s


def riccati_logderiv_j(l: int, z: complex) -> complex:
    """``[z j_l(z)]' / (z j_l(z))``."""
    return (l + 1) / z - j_ratio(l, z)


def riccati_logderiv_h(l: int, z: complex) -> complex:
    """``[z h_l(z)]' / (z h_l(z))``."""
    return (l + 1) / z - h_ratio(l, z)


def spherical_jn(l: int, z):
    """``j_l(z)`` for array ``z`` by vectorised Miller recurrence."""
    z = _check_arg(l, z)
    shape = z.shape
    z = z.ravel()
    start = int(l + np.max(np.abs(z)) + 40 + 2 * np.sqrt(l + np.max(np.abs(z))))
    start += start % 2
    jp1 = np.zeros_like(z)
    jk = np.full_like(z, _TINY)
    scale = np.zeros(z.shape)  # log10 rescale count carried by the recurrence
    out_l = None
    scale_l = None
    j1_raw = None
    if l == start:
        out_l, scale_l = jk.copy(), scale.copy()
    for k in range(start, 0, -1):
        jm1 = (2 * k + 1) / z * jk - jp1
        jp1, jk = jk, jm1
        big = np.abs(jk) > _RESCALE
        if np.any(big):
            jk[big] /= _RESCALE
            jp1[big] /= _RESCALE
            scale[big] += 1
        if k - 1 == l:
            out_l, scale_l = jk.copy(), scale.copy()
        if k - 1 == 1:
            j1_raw = (jk.copy(), scale.copy())
    j0_raw = jk
    j0_true = np.sin(z) / z
    j1_true = np.sin(z) / z**2 - np.cos(z) / z
    use1 = np.abs(j1_true) > np.abs(j0_true)
    norm = np.where(use1, j1_true / j1_raw[0], j0_true / j0_raw)
    ref_scale = np.where(use1, j1_raw[1], scale)
    if l == 0:
        return j0_true.reshape(shape)
    # raw * RESCALE**scale is invariant under rescaling
    with np.errstate(under="ignore", over="ignore", invalid="ignore"):
        factor = np.power(_RESCALE, (scale_l - ref_scale).astype(float))
        val = out_l * norm * factor
    val = np.where(np.isfinite(val), val, 0.0)
    return val.reshape(shape)


def spherical_hn1(l: int, z):
    """Outgoing ``h_l^{(1)}(z)`` for array ``z`` by upward recurrence."""
    z = _check_arg(l, z)
    e = np.exp(1j * z)
    h0 = -1j * e / z
    if l == 0:
        return h0
    h1 = -e * (z + 1j) / z**2
    hm, hk = h0, h1
    with np.errstate(over="raise", invalid="raise"):
        try:
            for k in range(1, l):
                hm, hk = hk, (2 * k + 1) / z * hk - hm
        except FloatingPointError as exc:
            raise BesselOverflowError(f"h_{l} overflows on the supplied arguments") from exc
    if not np.all(np.isfinite(hk)):
        raise BesselOverflowError(f"h_{l} overflows on the supplied arguments")
    return hk


def spherical_bessel_pair(l: int, z):
    """Return ``(j_l, j_l', h_l, h_l')`` at ``z`` (primes: d/dz).

    Derivatives use ``f_l' = f_{l-1} - (l+1)/z f_l`` (``f_0' = -f_1``).
    """
    z = _check_arg(l, z)
    jl = spherical_jn(l, z)
    hl = spherical_hn1(l, z)
    if l == 0:
        j1 = spherical_jn(1, z)
        h1 = spherical_hn1(1, z)
        return jl, -j1, hl, -h1
    jlm = spherical_jn(l - 1, z)
    hlm = spherical_hn1(l - 1, z)
    return jl, jlm - (l + 1) / z * jl, hl, hlm - (l + 1) / z * hl
