"""Analytical two-layer building block.

The block stacks two layers along the local 2-axis: the interface normal is
``e2``.  Traction continuity acts on components 2 and 3 (``sigma22``,
``sigma12``; ``P22``, ``P12`` in finite strain) and in-plane compatibility on
component 1 (``eps11``; ``F11`` and ``F21`` in finite strain).  A block first
homogenizes its two children in the local frame and then rotates the result
into its parent's frame.

All functions broadcast over leading batch axes.  Volume fractions ``f1``
broadcast against ``D1[..., 0, 0]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBlock, SingularInterface
from .tensor_core import (
    finite_rotation_matrix,
    rotation_matrix,
    rotation_matrix_derivative,
)

GAMMA_TOL = 1e-30

_I23 = np.array([1, 2])
_I14 = np.array([0, 3])


def _gamma(D1, D2, f1):
    f1 = np.asarray(f1, dtype=float)
    gamma = f1 * D2[..., 0, 0] + (1.0 - f1) * D1[..., 0, 0]
    if np.any(~(gamma > GAMMA_TOL)):
        raise DegenerateBlock(f"non-positive interface denominator (min {np.min(gamma):.3e})")
    return gamma


def homogenize_small(D1, D2, f1) -> np.ndarray:
    """Homogenized compliance of the two-layer laminate before rotation."""
    D1 = np.asarray(D1, dtype=float)
    D2 = np.asarray(D2, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    f2 = 1.0 - f1
    g = _gamma(D1, D2, f1)
    d12 = D1[..., 0, 1] - D2[..., 0, 1]
    d13 = D1[..., 0, 2] - D2[..., 0, 2]
    ff = f1 * f2 / g

    out = np.empty(np.broadcast_shapes(D1.shape, D2.shape, f1.shape + (3, 3)))
    out[..., 0, 0] = D1[..., 0, 0] * D2[..., 0, 0] / g
    out[..., 0, 1] = (f1 * D1[..., 0, 1] * D2[..., 0, 0] + f2 * D2[..., 0, 1] * D1[..., 0, 0]) / g
    out[..., 0, 2] = (f1 * D1[..., 0, 2] * D2[..., 0, 0] + f2 * D2[..., 0, 2] * D1[..., 0, 0]) / g
    out[..., 1, 1] = f1 * D1[..., 1, 1] + f2 * D2[..., 1, 1] - ff * d12 * d12
    out[..., 1, 2] = f1 * D1[..., 1, 2] + f2 * D2[..., 1, 2] - ff * d13 * d12
    out[..., 2, 2] = f1 * D1[..., 2, 2] + f2 * D2[..., 2, 2] - ff * d13 * d13
    out[..., 1, 0] = out[..., 0, 1]
    out[..., 2, 0] = out[..., 0, 2]
    out[..., 2, 1] = out[..., 1, 2]
    return out


def block_forward(D1, D2, f1, theta) -> np.ndarray:
    """Homogenize then rotate: ``R(-theta) Dr R(theta)``."""
    Dr = homogenize_small(D1, D2, f1)
    return rotation_matrix(-np.asarray(theta)) @ Dr @ rotation_matrix(theta)


@dataclass
class BlockGradients:
    """Partial derivatives of one small-strain block at a point.

    ``dD1``/``dD2`` hold one full symmetric 3x3 matrix per independent input
    entry, ordered ``(11, 12, 13, 22, 23, 33)``.
    """

    dtheta: np.ndarray  # (..., 3, 3)
    drot: np.ndarray  # (..., 3, 3, 3, 3): d Dbar_ij / d Dr_kl
    df1: np.ndarray  # (..., 3, 3)
    dD1: np.ndarray  # (..., 6, 3, 3)
    dD2: np.ndarray  # (..., 6, 3, 3)


def _sym(m01, m02, m12, m00, m11, m22):
    out = np.empty(np.broadcast(m00, m01, m02, m11, m12, m22).shape + (3, 3))
    out[..., 0, 0] = m00
    out[..., 1, 1] = m11
    out[..., 2, 2] = m22
    out[..., 0, 1] = out[..., 1, 0] = m01
    out[..., 0, 2] = out[..., 2, 0] = m02
    out[..., 1, 2] = out[..., 2, 1] = m12
    return out


def _d_first_phase(D1, D2, f1, Dr):
    """dDr/dD1 for the six independent entries of D1."""
    f2 = 1.0 - f1
    g = f1 * D2[..., 0, 0] + f2 * D1[..., 0, 0]
    d12 = D1[..., 0, 1] - D2[..., 0, 1]
    d13 = D1[..., 0, 2] - D2[..., 0, 2]
    zero = np.zeros_like(g)
    a = f1 * D2[..., 0, 0] / g
    b = f1 * f2 / g
    c = f1 * f2 * f2 / (g * g)

    j11 = _sym(
        f2 * (D2[..., 0, 1] - Dr[..., 0, 1]) / g,
        f2 * (D2[..., 0, 2] - Dr[..., 0, 2]) / g,
        c * d13 * d12,
        f1 * D2[..., 0, 0] ** 2 / (g * g),
        c * d12 * d12,
        c * d13 * d13,
    )
    j12 = _sym(a, zero, -b * d13, zero, -2.0 * b * d12, zero)
    j13 = _sym(zero, a, -b * d12, zero, zero, -2.0 * b * d13)
    fz = f1 + zero
    j22 = _sym(zero, zero, zero, zero, fz, zero)
    j23 = _sym(zero, zero, fz, zero, zero, zero)
    j33 = _sym(zero, zero, zero, zero, zero, fz)
    return np.stack([j11, j12, j13, j22, j23, j33], axis=-3)


def homogenization_jacobians(D1, D2, f1, Dr=None):
    """Return ``(dDr/df1, dDr/dD1, dDr/dD2)`` at the given point."""
    D1 = np.asarray(D1, dtype=float)
    D2 = np.asarray(D2, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    if Dr is None:
        Dr = homogenize_small(D1, D2, f1)
    f2 = 1.0 - f1
    g = _gamma(D1, D2, f1)
    d11 = D1[..., 0, 0] - D2[..., 0, 0]
    d12 = D1[..., 0, 1] - D2[..., 0, 1]
    d13 = D1[..., 0, 2] - D2[..., 0, 2]
    k = (f1 * f1 * D2[..., 0, 0] - f2 * f2 * D1[..., 0, 0]) / (g * g)
    df = _sym(
        (d11 * Dr[..., 0, 1] + D1[..., 0, 1] * D2[..., 0, 0] - D2[..., 0, 1] * D1[..., 0, 0]) / g,
        (d11 * Dr[..., 0, 2] + D1[..., 0, 2] * D2[..., 0, 0] - D2[..., 0, 2] * D1[..., 0, 0]) / g,
        D1[..., 1, 2] - D2[..., 1, 2] + k * d13 * d12,
        d11 * Dr[..., 0, 0] / g,
        D1[..., 1, 1] - D2[..., 1, 1] + k * d12 * d12,
        D1[..., 2, 2] - D2[..., 2, 2] + k * d13 * d13,
    )
    dD1 = _d_first_phase(D1, D2, f1, Dr)
    # the block is symmetric under (1 <-> 2, f1 <-> f2)
    dD2 = _d_first_phase(D2, D1, f2, Dr)
    return df, dD1, dD2


def block_gradients(D1, D2, f1, theta) -> BlockGradients:
    """All partial derivatives of :func:`block_forward`."""
    theta = np.asarray(theta, dtype=float)
    Dr = homogenize_small(D1, D2, f1)
    Rp, Rm = rotation_matrix(theta), rotation_matrix(-theta)
    dRp, dRm = rotation_matrix_derivative(theta), rotation_matrix_derivative(-theta)
    dtheta = -dRm @ Dr @ Rp + Rm @ Dr @ dRp
    drot = np.einsum("...ik,...lj->...ijkl", Rm, Rp)
    df, dD1, dD2 = homogenization_jacobians(D1, D2, f1, Dr)
    return BlockGradients(dtheta=dtheta, drot=drot, df1=df, dD1=dD1, dD2=dD2)


def _sym_grad_to_full(g6):
    """Gradient w.r.t. independent entries -> symmetric full-matrix gradient."""
    G = np.empty(g6.shape[:-1] + (3, 3))
    G[..., 0, 0] = g6[..., 0]
    G[..., 1, 1] = g6[..., 3]
    G[..., 2, 2] = g6[..., 5]
    G[..., 0, 1] = G[..., 1, 0] = 0.5 * g6[..., 1]
    G[..., 0, 2] = G[..., 2, 0] = 0.5 * g6[..., 2]
    G[..., 1, 2] = G[..., 2, 1] = 0.5 * g6[..., 4]
    return G


def homogenize_small_vjp(D1, D2, f1, Dr, alpha):
    """Pull a full-matrix gradient ``alpha = dC/dDr`` back to the inputs.

    Returns ``(dC/dD1, dC/dD2, dC/df1)`` with the matrix gradients in the
    same symmetric full-matrix convention as ``alpha``.
    """
    df, dD1, dD2 = homogenization_jacobians(D1, D2, f1, Dr)
    g_f = np.einsum("...ij,...ij->...", alpha, df)
    g1 = np.einsum("...cij,...ij->...c", dD1, alpha)
    g2 = np.einsum("...cij,...ij->...c", dD2, alpha)
    return _sym_grad_to_full(g1), _sym_grad_to_full(g2), g_f


# ---------------------------------------------------------------- residual strain


def homogenize_residual_strain_local(D1, D2, de1, de2, f1) -> np.ndarray:
    """Homogenized residual strain of the laminate before rotation."""
    D1 = np.asarray(D1, dtype=float)
    D2 = np.asarray(D2, dtype=float)
    de1 = np.asarray(de1, dtype=float)
    de2 = np.asarray(de2, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    f2 = 1.0 - f1
    g = _gamma(D1, D2, f1)
    jump = de1[..., 0] - de2[..., 0]
    ff = f1 * f2 / g
    out = np.empty(np.broadcast_shapes(de1.shape, de2.shape, f1.shape + (3,)))
    out[..., 0] = (f1 * D2[..., 0, 0] * de1[..., 0] + f2 * D1[..., 0, 0] * de2[..., 0]) / g
    out[..., 1] = f1 * de1[..., 1] + f2 * de2[..., 1] - ff * (D1[..., 0, 1] - D2[..., 0, 1]) * jump
    out[..., 2] = f1 * de1[..., 2] + f2 * de2[..., 2] - ff * (D1[..., 0, 2] - D2[..., 0, 2]) * jump
    return out


def homogenize_residual_strain(D1, D2, de1, de2, f1, theta) -> np.ndarray:
    """Homogenized residual strain rotated into the parent frame."""
    local = homogenize_residual_strain_local(D1, D2, de1, de2, f1)
    return np.einsum("...ij,...j->...i", rotation_matrix(-np.asarray(theta)), local)


def _schur(D, de, e1):
    """Condense the normal-direction stress out of one layer.

    With component 1 of strain fixed to ``e1`` and shared stresses ``s`` on
    components 2 and 3, the layer strain on components 2, 3 is ``K s + r``.
    """
    inv = 1.0 / D[..., 0, 0]
    col = D[..., 1:, 0]
    K = D[..., 1:, 1:] - np.einsum("...i,...j->...ij", col, D[..., 0, 1:]) * inv[..., None, None]
    r = col * ((e1 - de[..., 0]) * inv)[..., None] + de[..., 1:]
    return K, r


def dehomogenize_small(parent_increment, D1, D2, de1, de2, f1, theta):
    """Split a parent strain increment between the two children.

    The parent increment is given in the parent frame; the children's
    increments are returned in the block's local frame.  Compatibility on
    component 1, traction continuity on components 2, 3 and the volume
    average are all satisfied exactly.
    """
    D1 = np.asarray(D1, dtype=float)
    D2 = np.asarray(D2, dtype=float)
    de1 = np.asarray(de1, dtype=float)
    de2 = np.asarray(de2, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    f2 = 1.0 - f1
    _gamma(D1, D2, f1)
    e = np.einsum("...ij,...j->...i", rotation_matrix(theta), parent_increment)
    K1, r1 = _schur(D1, de1, e[..., 0])
    K2, r2 = _schur(D2, de2, e[..., 0])
    fa = f1[..., None, None]
    fb = f2[..., None, None]
    rhs = e[..., 1:] - f1[..., None] * r1 - f2[..., None] * r2
    s = np.linalg.solve(fa * K1 + fb * K2, rhs[..., None])[..., 0]
    eps1 = np.empty(np.broadcast_shapes(e.shape, r1.shape[:-1] + (3,)))
    eps2 = np.empty_like(eps1)
    eps1[..., 0] = e[..., 0]
    eps2[..., 0] = e[..., 0]
    eps1[..., 1:] = np.einsum("...ij,...j->...i", K1, s) + r1
    eps2[..., 1:] = np.einsum("...ij,...j->...i", K2, s) + r2
    return eps1, eps2


# ---------------------------------------------------------------- finite strain


def _finite_parts(A1, A2, f1):
    A1 = np.asarray(A1, dtype=float)
    A2 = np.asarray(A2, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    f2 = 1.0 - f1
    Ahat = f2[..., None, None] * A1 + f1[..., None, None] * A2
    dA = A2 - A1
    H = Ahat[..., 1:3, 1:3]
    det = H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] * H[..., 1, 0]
    scale = np.maximum(np.abs(H).max(axis=(-2, -1)), 1e-300)
    if np.any(~(np.abs(det) > 1e-14 * scale * scale)):
        raise SingularInterface("interface 2x2 stiffness block is singular")
    return A1, A2, f1, f2, Ahat, dA, H


def finite_concentration(A1, A2, f1) -> np.ndarray:
    """4x4 concentration tensor mapping the block-average ``F`` to layer 1."""
    A1, A2, f1, f2, Ahat, dA, H = _finite_parts(A1, A2, f1)
    M = np.empty(np.broadcast_shapes(A1.shape, A2.shape)[:-2] + (2, 4))
    M[..., :, _I14] = f2[..., None, None] * dA[..., 1:3, :][..., :, _I14]
    M[..., :, 1:3] = A2[..., 1:3, 1:3]
    S = np.zeros(M.shape[:-2] + (4, 4))
    S[..., 0, 0] = 1.0
    S[..., 3, 3] = 1.0
    S[..., 1:3, :] = np.linalg.solve(H, M)
    return S


def homogenize_finite(A1, A2, f1) -> np.ndarray:
    """Homogenized first elasticity tensor of the laminate before rotation."""
    A1 = np.asarray(A1, dtype=float)
    A2 = np.asarray(A2, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    S1 = finite_concentration(A1, A2, f1)
    Ar = A2 - f1[..., None, None] * (A2 - A1) @ S1
    return 0.5 * (Ar + np.swapaxes(Ar, -1, -2))


def homogenize_residual_stress(A1, A2, dP1, dP2, f1) -> np.ndarray:
    """Homogenized residual first Piola-Kirchhoff stress before rotation."""
    A1, A2, f1, f2, Ahat, dA, H = _finite_parts(A1, A2, f1)
    dP1 = np.asarray(dP1, dtype=float)
    dP2 = np.asarray(dP2, dtype=float)
    jump = (dP1 - dP2)[..., 1:3]
    y = np.linalg.solve(H, jump[..., None])[..., 0]
    corr = np.einsum("...ij,...j->...i", dA[..., :, 1:3], y)
    return f1[..., None] * dP1 + f2[..., None] * dP2 + (f1 * f2)[..., None] * corr


def block_forward_finite(A1, A2, dP1, dP2, f1, theta):
    """Homogenize ``(A, dP)`` and rotate into the parent frame."""
    Rp = finite_rotation_matrix(theta)
    Rm = finite_rotation_matrix(-np.asarray(theta))
    Ar = homogenize_finite(A1, A2, f1)
    dPr = homogenize_residual_stress(A1, A2, dP1, dP2, f1)
    return Rm @ Ar @ Rp, np.einsum("...ij,...j->...i", Rm, dPr)


def dehomogenize_finite(parent_increment, A1, A2, dP1, dP2, f1, theta):
    """Split a parent ``dF`` (parent frame) between the two children (local frame)."""
    A1, A2, f1, f2, Ahat, dA, H = _finite_parts(A1, A2, f1)
    dP1 = np.asarray(dP1, dtype=float)
    dP2 = np.asarray(dP2, dtype=float)
    e = np.einsum("...ij,...j->...i", finite_rotation_matrix(theta), parent_increment)
    rhs = (
        np.einsum("...ij,...j->...i", A2[..., 1:3, 1:3], e[..., 1:3])
        + f2[..., None] * np.einsum("...ij,...j->...i", dA[..., 1:3, :][..., :, _I14], e[..., _I14])
        - f2[..., None] * (dP1 - dP2)[..., 1:3]
    )
    x = np.linalg.solve(H, rhs[..., None])[..., 0]
    F1 = np.array(np.broadcast_to(e, np.broadcast_shapes(e.shape, x.shape[:-1] + (4,))))
    F2 = F1.copy()
    F1[..., 1:3] = x
    safe = np.where(f2 > 0.0, f2, 1.0)[..., None]
    F2[..., 1:3] = np.where(f2[..., None] > 0.0, (e[..., 1:3] - f1[..., None] * x) / safe, e[..., 1:3])
    return F1, F2
