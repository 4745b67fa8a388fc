"""Synthetic two-phase pixel microstructures.

Grids hold phase ids 1 and 2.  Row index runs along ``x2`` and column index
along ``x1``, so a "vertical" stripe pattern varies along ``x1``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import FormatError
from ..io import atomic_write_text


@dataclass(frozen=True)
class PixelMicrostructure:
    phases: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        p = np.asarray(self.phases)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("microstructure grid must be square")
        n = p.shape[0]
        if n < 1 or n & (n - 1):
            raise ValueError("grid size must be a power of two")
        if not np.all((p == 1) | (p == 2)):
            raise ValueError("phase ids must be 1 or 2")

    @property
    def n(self) -> int:
        return int(self.phases.shape[0])

    @property
    def vf1(self) -> float:
        return float(np.mean(self.phases == 1))

    def to_dict(self) -> dict:
        # file convention: 1 marks phase 1, 0 marks phase 2
        return {
            "n": self.n,
            "phases": (self.phases == 1).astype(int).ravel().tolist(),
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d) -> "PixelMicrostructure":
        try:
            n = int(d["n"])
            flat = np.asarray(d["phases"], dtype=int)
            label = str(d.get("label", "custom"))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed microstructure: {exc}") from exc
        if flat.size != n * n:
            raise FormatError(f"expected {n * n} pixels, got {flat.size}")
        if not np.all((flat == 0) | (flat == 1) | (flat == 2)):
            raise FormatError("pixel values must be 0/1 (or phase ids 1/2)")
        grid = flat.reshape(n, n)
        phases = grid if np.any(grid == 2) else np.where(grid == 1, 1, 2)
        try:
            return cls(phases, label)
        except ValueError as exc:
            raise FormatError(str(exc)) from exc

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "PixelMicrostructure":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from exc
        return cls.from_dict(data)


def uniform(n: int = 64, phase: int = 1) -> PixelMicrostructure:
    return PixelMicrostructure(np.full((n, n), phase), "uniform")


def stripes(n: int = 64, vf1: float = 0.5, periods: int = 1, vertical: bool = True) -> PixelMicrostructure:
    """Laminate of ``periods`` stripe pairs; phase-1 width rounded to pixels."""
    width = n // periods
    k = int(round(vf1 * width))
    line = np.where((np.arange(n) % width) < k, 1, 2)
    grid = np.tile(line, (n, 1)) if vertical else np.tile(line[:, None], (1, n))
    return PixelMicrostructure(grid, "laminate")


def inclusion(n: int = 64, vf1: float = 0.3) -> PixelMicrostructure:
    """Centered circular phase-1 inclusion in a phase-2 matrix."""
    c = (np.arange(n) + 0.5) - n / 2
    r2 = c[:, None] ** 2 + c[None, :] ** 2
    radius = np.sqrt(vf1 * n * n / np.pi)
    return PixelMicrostructure(np.where(r2 <= radius * radius, 1, 2), "matrix-inclusion")


def checkerboard(n: int = 64, cells: int = 2) -> PixelMicrostructure:
    idx = (np.arange(n) * cells) // n
    return PixelMicrostructure(np.where((idx[:, None] + idx[None, :]) % 2 == 0, 1, 2), "checkerboard")


def random_blob(n: int = 64, vf1: float = 0.5, correlation: float = 4.0, seed: int = 0) -> PixelMicrostructure:
    """Thresholded periodic Gaussian random field with an exact pixel fraction."""
    rng = np.random.default_rng(seed)
    field = ndimage.gaussian_filter(rng.standard_normal((n, n)), correlation, mode="wrap")
    k = int(round(vf1 * n * n))
    order = np.argsort(field, axis=None, kind="stable")
    flat = np.full(n * n, 2)
    flat[order[:k]] = 1
    return PixelMicrostructure(flat.reshape(n, n), "random-blob")


GENERATORS = {
    "uniform": uniform,
    "laminate": stripes,
    "inclusion": inclusion,
    "checkerboard": checkerboard,
    "random-blob": random_blob,
}
