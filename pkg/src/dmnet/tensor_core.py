"""Mandel-notation algebra for 2D plane-strain tensors.

Strain/stress vectors are ``(e11, e22, sqrt(2) e12)`` so that the rotation
operator is orthogonal and contractions are plain dot products.  Every
function broadcasts over leading axes: ``theta`` may be an array and
matrices may carry arbitrary batch dimensions ``(..., 3, 3)``.
"""
from __future__ import annotations

import numpy as np

SQRT2 = np.sqrt(2.0)

# order of the six independent entries of a symmetric 3x3 matrix
SYM_INDEX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def _cs(theta):
    theta = np.asarray(theta, dtype=float)
    return np.cos(theta), np.sin(theta)


def rotation_matrix(theta) -> np.ndarray:
    """Mandel rotation operator ``R(theta)``; shape ``theta.shape + (3, 3)``."""
    c, s = _cs(theta)
    cc, ss, cs = c * c, s * s, c * s
    r = np.empty(np.shape(theta) + (3, 3))
    r[..., 0, 0] = cc
    r[..., 0, 1] = ss
    r[..., 0, 2] = SQRT2 * cs
    r[..., 1, 0] = ss
    r[..., 1, 1] = cc
    r[..., 1, 2] = -SQRT2 * cs
    r[..., 2, 0] = -SQRT2 * cs
    r[..., 2, 1] = SQRT2 * cs
    r[..., 2, 2] = cc - ss
    return r


def rotation_matrix_derivative(theta) -> np.ndarray:
    """``dR/dtheta`` evaluated at ``theta``."""
    theta = np.asarray(theta, dtype=float)
    s2, c2 = np.sin(2.0 * theta), np.cos(2.0 * theta)
    r = np.empty(theta.shape + (3, 3))
    r[..., 0, 0] = -s2
    r[..., 0, 1] = s2
    r[..., 0, 2] = SQRT2 * c2
    r[..., 1, 0] = s2
    r[..., 1, 1] = -s2
    r[..., 1, 2] = -SQRT2 * c2
    r[..., 2, 0] = -SQRT2 * c2
    r[..., 2, 1] = SQRT2 * c2
    r[..., 2, 2] = -2.0 * s2
    return r


def rotate_compliance(D, theta) -> np.ndarray:
    """Return ``R(-theta) D R(theta)``."""
    return rotation_matrix(-np.asarray(theta)) @ np.asarray(D) @ rotation_matrix(theta)


def rotate_vector(v, theta) -> np.ndarray:
    """Return ``R(-theta) v`` (local laminate frame -> parent frame)."""
    return np.einsum("...ij,...j->...i", rotation_matrix(-np.asarray(theta)), v)


def frobenius_norm(B) -> np.ndarray:
    """Frobenius norm over the trailing two axes."""
    B = np.asarray(B, dtype=float)
    return np.sqrt(np.sum(B * B, axis=(-2, -1)))


def finite_rotation_matrix(theta) -> np.ndarray:
    """Rotation operator acting on ``(F11, F22, F12, F21)`` vectors."""
    c, s = _cs(theta)
    cc, ss, cs = c * c, s * s, c * s
    r = np.empty(np.shape(theta) + (4, 4))
    r[..., 0, :] = np.stack([cc, ss, cs, cs], axis=-1)
    r[..., 1, :] = np.stack([ss, cc, -cs, -cs], axis=-1)
    r[..., 2, :] = np.stack([-cs, cs, cc, -ss], axis=-1)
    r[..., 3, :] = np.stack([-cs, cs, -ss, cc], axis=-1)
    return r


def is_spd(D) -> bool:
    """Sylvester's criterion on a single symmetric 3x3 matrix."""
    D = np.asarray(D, dtype=float)
    m1 = D[0, 0]
    m2 = D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0]
    m3 = np.linalg.det(D)
    return bool(m1 > 0.0 and m2 > 0.0 and m3 > 0.0)


def pack_sym(D) -> np.ndarray:
    """Six independent entries ``(D11, D12, D13, D22, D23, D33)``."""
    D = np.asarray(D, dtype=float)
    return np.stack([D[..., i, j] for i, j in SYM_INDEX], axis=-1)


def unpack_sym(d) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    D = np.empty(d.shape[:-1] + (3, 3))
    for n, (i, j) in enumerate(SYM_INDEX):
        D[..., i, j] = d[..., n]
        D[..., j, i] = d[..., n]
    return D


def tensor_to_mandel(t) -> np.ndarray:
    """Symmetric 2x2 tensor(s) to Mandel 3-vector(s)."""
    t = np.asarray(t, dtype=float)
    return np.stack([t[..., 0, 0], t[..., 1, 1], SQRT2 * t[..., 0, 1]], axis=-1)


def mandel_to_tensor(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    t = np.empty(v.shape[:-1] + (2, 2))
    t[..., 0, 0] = v[..., 0]
    t[..., 1, 1] = v[..., 1]
    t[..., 0, 1] = t[..., 1, 0] = v[..., 2] / SQRT2
    return t


def isotropic_compliance(E, nu) -> np.ndarray:
    """Plane-strain compliance of an isotropic solid in Mandel form."""
    E = np.asarray(E, dtype=float)
    nu = np.asarray(nu, dtype=float)
    k = (1.0 + nu) / E
    D = np.zeros(np.broadcast(E, nu).shape + (3, 3))
    D[..., 0, 0] = D[..., 1, 1] = k * (1.0 - nu)
    D[..., 0, 1] = D[..., 1, 0] = -k * nu
    D[..., 2, 2] = k
    return D


def orthotropic_compliance(E11, E22, G12, nu12) -> np.ndarray:
    """Orthotropic phase compliance in the form used for training data."""
    E11, E22, G12, nu12 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (E11, E22, G12, nu12)))
    D = np.zeros(E11.shape + (3, 3))
    D[..., 0, 0] = 1.0 / E11
    D[..., 1, 1] = 1.0 / E22
    D[..., 0, 1] = D[..., 1, 0] = -nu12 / E22
    D[..., 2, 2] = 1.0 / (2.0 * G12)
    return D


def reduce_angle(theta):
    """Map angles to ``[-pi/2, pi/2)``; a laminate rotated by pi is unchanged."""
    return (np.asarray(theta) + np.pi / 2) % np.pi - np.pi / 2
