"""Periodic spectral homogenization of pixel microstructures (plane strain).

Basic fixed-point scheme with a homogeneous reference medium: the strain
field is corrected by the Green operator of the reference medium applied to
the stress until the stress field is divergence free.
"""
from __future__ import annotations

import numpy as np

from ..errors import NoConvergence
from .micro import PixelMicrostructure

_R2 = np.sqrt(2.0)


def _green_operator(C0, n):
    """Mandel Green operator on the ``rfft2`` half grid, shape ``(n, n//2+1, 3, 3)``."""
    xi2 = np.fft.fftfreq(n) * n
    xi1 = np.fft.rfftfreq(n) * n
    X2, X1 = np.meshgrid(xi2, xi1, indexing="ij")
    B = np.zeros(X1.shape + (3, 2))
    B[..., 0, 0] = X1
    B[..., 1, 1] = X2
    B[..., 2, 0] = X2 / _R2
    B[..., 2, 1] = X1 / _R2
    K = np.einsum("...ai,ab,...bj->...ij", B, C0, B)
    K[0, 0] = np.eye(2)
    N = np.linalg.inv(K)
    G = np.einsum("...ai,...ij,...bj->...ab", B, N, B)
    G[0, 0] = 0.0
    # Nyquist modes have no consistent real derivative: drive their stress to zero
    nyq = np.zeros(X1.shape, dtype=bool)
    if n % 2 == 0:
        nyq[n // 2, :] = True
        nyq[:, -1] = True
        G[nyq] = np.linalg.inv(C0)
    norm = np.sqrt(X1 * X1 + X2 * X2)
    norm[0, 0] = 1.0
    Bunit = B / norm[..., None, None]
    Bunit[nyq] = 0.0
    return G, Bunit


def fft_homogenize(micro, D1, D2, tol: float = 1e-8, max_iter: int = 100_000) -> np.ndarray:
    """Effective compliance of a two-phase pixel grid.

    Three unit macroscopic strains are solved together; the stopping test is
    the RMS divergence of the stress field (unit wave vectors) relative to
    the mean stress.
    """
    phases = micro.phases if isinstance(micro, PixelMicrostructure) else np.asarray(micro)
    n = phases.shape[0]
    C1, C2 = np.linalg.inv(D1), np.linalg.inv(D2)
    C0 = 0.5 * (C1 + C2)
    G, Bunit = _green_operator(C0, n)
    mask = (phases == 1)[None, :, :, None]

    # weights of the half spectrum for Parseval sums
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0

    eps = np.broadcast_to(np.eye(3)[:, None, None, :], (3, n, n, 3)).copy()
    err = np.inf
    for it in range(max_iter):
        sig = np.where(mask, eps @ C1.T, eps @ C2.T)
        sh = np.fft.rfft2(sig, axes=(1, 2))
        div = np.einsum("...ai,k...a->k...i", Bunit, sh)
        num = np.sum(w[None, None, :, None] * np.abs(div) ** 2, axis=(1, 2, 3))
        mean = np.abs(sh[:, 0, 0, :])
        err = float(np.max(np.sqrt(num) / np.linalg.norm(mean, axis=-1)))
        if err < tol:
            break
        sh = np.einsum("...ab,k...b->k...a", G, sh)
        eps = eps - np.fft.irfft2(sh, s=(n, n), axes=(1, 2))
    else:
        raise NoConvergence(f"spectral solver did not converge in {max_iter} iterations", err)

    Cbar = np.mean(sig, axis=(1, 2)).T  # column k = mean stress under unit strain k
    Cbar = 0.5 * (Cbar + Cbar.T)
    D = np.linalg.inv(Cbar)
    return 0.5 * (D + D.T)
