"""Weak form of the axisymmetric curl-curl problem for the magnetic field.

Fields are H(rho, z) exp(i m phi) with H_phi = -i b so that the reduced
unknowns (a, b, c) = (H_rho, b, H_z) enter real-coefficient forms:

    X_rho = m c / rho + d_z b
    X_phi = d_z a - d_rho c
    X_z   = d_rho b + b / rho + m a / rho        (curl H = (i X_rho, X_phi, -i X_z))
    div   = d_rho a + a / rho + m b / rho + d_z c

    A(m) = int [ eps^-1 X.X' + alpha div div' ] rho,   B = int H.H' rho

The absorbing layers replace (rho, z) by complex stretched coordinates, which
makes both matrices complex symmetric.  A(m) = K0 + m K1 + m^2 K2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import REGION_DIELECTRIC, Mesh

# collapsed (Duffy) Gauss-Legendre rule, exact to polynomial degree 7 on the triangle
_gl_x, _gl_w = np.polynomial.legendre.leggauss(4)
_u = 0.5 * (_gl_x + 1.0)
_wu = 0.5 * _gl_w
_U, _V = np.meshgrid(_u, _u, indexing="ij")
_W = np.outer(_wu, _wu) * (1.0 - _U)
QP_XI = _U.ravel()
QP_ETA = (_V * (1.0 - _U)).ravel()
QP_W = _W.ravel()


def p2_shape(xi, eta):
    """Quadratic Lagrange shape functions and reference gradients.

    Node order: three vertices, then midsides of edges (0,1), (1,2), (2,0).
    Returns N (..., 6) and dN (..., 6, 2).
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    l0 = 1.0 - xi - eta
    l1 = xi
    l2 = eta
    N = np.stack(
        [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0],
        axis=-1,
    )
    # d/dxi, d/deta with dl0 = (-1,-1), dl1 = (1,0), dl2 = (0,1)
    z = np.zeros_like(xi)
    dxi = np.stack([-(4 * l0 - 1), 4 * l1 - 1, z, 4 * (l0 - l1), 4 * l2, -4 * l2], axis=-1)
    deta = np.stack([-(4 * l0 - 1), z, 4 * l2 - 1, -4 * l1, 4 * l1, 4 * (l0 - l2)], axis=-1)
    return N, np.stack([dxi, deta], axis=-1)


_N, _dN = p2_shape(QP_XI, QP_ETA)


def geometry_at(mesh: Mesh, N=_N, dN=_dN, elements=None):
    """Physical points, inverse Jacobians and |det J| at reference points.

    Returns x (E, Q, 2), grads (E, Q, 6, 2) of the shape functions in
    physical coordinates, detj (E, Q).
    """
    el = mesh.elements if elements is None else mesh.elements[elements]
    xe = mesh.nodes[el]  # (E, 6, 2)
    x = np.einsum("qi,eid->eqd", N, xe)
    J = np.einsum("qik,eid->eqdk", dN, xe)  # J[d, k] = dx_d / dxi_k
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    # grad_x N = dN/dxi . inv(J)
    grads = np.einsum("qik,eqkd->eqid", dN, inv)
    return x, grads, det


def jacobian_determinants(mesh: Mesh) -> np.ndarray:
    return geometry_at(mesh)[2]


@dataclass(frozen=True)
class PMLProfile:
    """Quadratic stretching s(t) = 1 + i strength (t/L)^2 beyond ``start``."""

    start: float
    thickness: float
    strength: float

    def stretch(self, x):
        t = np.clip((x - self.start) / self.thickness, 0.0, None)
        s = 1.0 + 1j * self.strength * t**2
        xt = x + 1j * self.strength * self.thickness * t**3 / 3.0
        return xt, s


@dataclass
class Pencil:
    K0: sp.csr_matrix
    K1: sp.csr_matrix
    K2: sp.csr_matrix
    B: sp.csr_matrix
    free: np.ndarray  # retained dof indices
    n_nodes: int
    alpha: float

    def A(self, m: int) -> sp.csr_matrix:
        return (self.K0 + m * self.K1 + (m * m) * self.K2).tocsr()

    def expand(self, x):
        full = np.zeros(3 * self.n_nodes, dtype=complex)
        full[self.free] = x
        return full.reshape(3, self.n_nodes)


def stretched_coordinates(mesh: Mesh, x, pml_rho: PMLProfile | None, pml_z: PMLProfile | None):
    rho, z = x[..., 0], x[..., 1]
    if pml_rho is not None:
        rt, sr = pml_rho.stretch(rho)
    else:
        rt, sr = rho + 0j, np.ones_like(rho, dtype=complex)
    if pml_z is not None:
        zt, sz = pml_z.stretch(z)
    else:
        zt, sz = z + 0j, np.ones_like(z, dtype=complex)
    return rt, sr, zt, sz


def operator_pieces(N, grads, rt, sr, sz):
    """Per quadrature point, the m-independent (P) and m-linear (M) parts of
    X_rho, X_phi, X_z, div for each (component, local node) trial function.

    Returns P, M of shape (4, E, Q, 18) with local dof = comp * 6 + node.
    """
    E, Q = rt.shape
    q = 1.0 / rt
    Nq = np.broadcast_to(N, (E, Q, 6))
    dr = grads[..., 0] / sr[..., None]
    dz = grads[..., 1] / sz[..., None]
    qN = q[..., None] * Nq
    zero = np.zeros((E, Q, 6), dtype=complex)
    P = np.empty((4, E, Q, 18), dtype=complex)
    M = np.zeros((4, E, Q, 18), dtype=complex)
    # X_rho: b -> d_z b ; c -> m c/rho
    P[0] = np.concatenate([zero, dz, zero], axis=-1)
    M[0, ..., 12:] = qN
    # X_phi: a -> d_z a ; c -> -d_rho c
    P[1] = np.concatenate([dz, zero, -dr], axis=-1)
    # X_z: b -> d_rho b + b/rho ; a -> m a/rho
    P[2] = np.concatenate([zero, dr + qN, zero], axis=-1)
    M[2, ..., :6] = qN
    # div: a -> d_rho a + a/rho ; c -> d_z c ; b -> m b/rho
    P[3] = np.concatenate([dr + qN, zero, dz], axis=-1)
    M[3, ..., 6:12] = qN
    return P, M


def assemble_system(
    mesh: Mesh,
    eps_interior: float,
    eps_exterior: float = 1.0,
    parity: str = "even",
    alpha: float = 1.0,
    pml_rho: PMLProfile | None = None,
    pml_z: PMLProfile | None = None,
    chunk: int = 4000,
) -> Pencil:
    """Assemble K0, K1, K2, B on ``mesh``.

    ``parity`` fixes the equatorial mirror condition: ``"even"`` (H_rho =
    H_phi = 0 at z = 0, the family containing the TM fundamental) or ``"odd"``
    (H_z = 0, the TE family).  Outer boundaries carry H = 0.
    """
    nn = mesh.n_nodes
    ne = mesh.n_elements
    eps_e = np.where(mesh.region == REGION_DIELECTRIC, eps_interior, eps_exterior)
    rows, cols = [], []
    vals = {k: [] for k in ("K0", "K1", "K2", "B")}
    li = np.arange(18)
    comp = li // 6
    for s in range(0, ne, chunk):
        idx = np.arange(s, min(ne, s + chunk))
        x, grads, det = geometry_at(mesh, elements=idx)
        if np.any(det <= 0):
            raise ValueError("non-positive Jacobian in assembly")
        rt, sr, zt, sz = stretched_coordinates(mesh, x, pml_rho, pml_z)
        w = QP_W[None, :] * det * rt * sr * sz  # (E, Q)
        P, M = operator_pieces(_N, grads, rt, sr, sz)
        ce = (1.0 / eps_e[idx])[:, None] * w
        coef = np.stack([ce, ce, ce, alpha * w])  # (4, E, Q)
        K0 = np.einsum("oeq,oeqi,oeqj->eij", coef, P, P, optimize=True)
        K1 = np.einsum("oeq,oeqi,oeqj->eij", coef, P, M, optimize=True)
        K1 = K1 + K1.transpose(0, 2, 1)
        K2 = np.einsum("oeq,oeqi,oeqj->eij", coef, M, M, optimize=True)
        Bn = np.einsum("eq,qi,qj->eij", w, _N, _N, optimize=True)
        Be = np.zeros((len(idx), 18, 18), dtype=complex)
        for c in range(3):
            Be[:, c * 6 : (c + 1) * 6, c * 6 : (c + 1) * 6] = Bn
        gdof = comp[None, :] * nn + mesh.elements[idx][:, li % 6]  # (E, 18)
        rows.append(np.repeat(gdof, 18, axis=1).ravel())
        cols.append(np.tile(gdof, (1, 18)).ravel())
        vals["K0"].append(K0.ravel())
        vals["K1"].append(K1.ravel())
        vals["K2"].append(K2.ravel())
        vals["B"].append(Be.ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    nd = 3 * nn
    mats = {}
    for k, v in vals.items():
        m = sp.coo_matrix((np.concatenate(v), (rows, cols)), shape=(nd, nd)).tocsr()
        m.sum_duplicates()
        mats[k] = m
    fixed = constrained_dofs(mesh, parity)
    free = np.setdiff1d(np.arange(nd), fixed)
    sub = {k: m[free][:, free].tocsr() for k, m in mats.items()}
    return Pencil(sub["K0"], sub["K1"], sub["K2"], sub["B"], free, nn, alpha)


def constrained_dofs(mesh: Mesh, parity: str) -> np.ndarray:
    nn = mesh.n_nodes
    outer = mesh.boundary_nodes["outer"]
    eq = mesh.boundary_nodes["equator"]
    fixed = [outer, outer + nn, outer + 2 * nn]
    if parity == "even":
        fixed += [eq, eq + nn]
    elif parity == "odd":
        fixed += [eq + 2 * nn]
    else:
        raise ValueError("parity must be 'even' or 'odd'")
    return np.unique(np.concatenate(fixed))


def field_derivatives(mesh: Mesh, H, m: int, N, dN, elements, pml_rho=None, pml_z=None):
    """Evaluate H, X = (X_rho, X_phi, X_z) and div H at reference points of ``elements``.

    H is (3, n_nodes).  Returns x (E, Q, 2), Hq (3, E, Q), X (3, E, Q), div (E, Q).
    """
    x, grads, det = geometry_at(mesh, N, dN, elements)
    rt, sr, zt, sz = stretched_coordinates(mesh, x, pml_rho, pml_z)
    el = mesh.elements[elements]
    h = H[:, el]  # (3, E, 6)
    val = np.einsum("qi,cei->ceq", N, h)
    dr = np.einsum("eqi,cei->ceq", grads[..., 0], h) / sr
    dz = np.einsum("eqi,cei->ceq", grads[..., 1], h) / sz
    a, b, c = val
    q = 1.0 / rt
    X = np.stack([m * c * q + dz[1], dz[0] - dr[2], dr[1] + b * q + m * a * q])
    div = dr[0] + a * q + m * b * q + dz[2]
    return x, val, X, div, det
