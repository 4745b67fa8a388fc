"""Oracle objects mapping a phase compliance pair to a homogenized compliance."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .fft import fft_homogenize
from .laminate import laminate_global_phases
from .micro import PixelMicrostructure


class UniformOracle:
    """Homogeneous phase-1 medium: the target is the phase-1 compliance."""

    kind = "uniform"
    microstructure = "uniform"

    def __call__(self, D1, D2):
        return np.array(D1, dtype=float)


class LaminateOracle:
    """Two-phase laminate; phase compliances are read in the global frame."""

    kind = "laminate"

    def __init__(self, f1: float, theta: float = 0.0):
        if not 0.0 <= f1 <= 1.0:
            raise ConfigError("f1 must lie in [0, 1]")
        self.f1, self.theta = float(f1), float(theta)

    @property
    def microstructure(self) -> str:
        return f"laminate(f1={self.f1!r},theta={self.theta!r})"

    def __call__(self, D1, D2):
        return laminate_global_phases(D1, D2, self.f1, self.theta)


class FFTOracle:
    kind = "fft"

    def __init__(self, micro: PixelMicrostructure, tol: float = 1e-8, max_iter: int = 100_000):
        self.micro, self.tol, self.max_iter = micro, tol, max_iter

    @property
    def microstructure(self) -> str:
        return f"{self.micro.label}(n={self.micro.n},vf1={self.micro.vf1!r})"

    def __call__(self, D1, D2):
        return fft_homogenize(self.micro, D1, D2, self.tol, self.max_iter)
