"""Independent reference solvers: exact laminates and a spectral grid homogenizer."""
from .fft import fft_homogenize
from .laminate import (
    laminate_exact,
    laminate_global_phases,
    laminate_finite_driver,
    laminate_finite_exact,
    laminate_plastic_driver,
    laminate_residual_strain_exact,
    laminate_residual_stress_exact,
    laminate_split_exact,
)
from .micro import PixelMicrostructure

__all__ = [
    "PixelMicrostructure",
    "fft_homogenize",
    "laminate_exact",
    "laminate_global_phases",
    "laminate_finite_driver",
    "laminate_finite_exact",
    "laminate_plastic_driver",
    "laminate_residual_strain_exact",
    "laminate_residual_stress_exact",
    "laminate_split_exact",
]

from .base import FFTOracle, LaminateOracle, UniformOracle  # noqa: E402

__all__ += ["FFTOracle", "LaminateOracle", "UniformOracle"]
