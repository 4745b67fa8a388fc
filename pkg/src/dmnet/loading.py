"""Macroscopic load steps and paths for the online solver and the oracles.

A step prescribes, per component, either the kinematic measure (strain in
small strain, ``F`` in finite strain) or the conjugate stress at the end of
the step, reached in ``increments`` equal sub-increments.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

SMALL, FINITE = "small", "finite"
STRAIN, STRESS = "strain", "stress"


@dataclass(frozen=True)
class LoadStep:
    control: tuple  # "strain" | "stress" per component
    target: tuple
    increments: int = 1

    def __post_init__(self):
        if len(self.control) != len(self.target):
            raise ConfigError("control and target lengths differ")
        if any(c not in (STRAIN, STRESS) for c in self.control):
            raise ConfigError(f"unknown control tag in {self.control}")
        if self.increments < 1:
            raise ConfigError("increments must be >= 1")

    @property
    def strain_mask(self) -> np.ndarray:
        return np.array([c == STRAIN for c in self.control])


@dataclass(frozen=True)
class LoadPath:
    kind: str
    steps: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in (SMALL, FINITE):
            raise ConfigError(f"unknown path kind {self.kind!r}")
        n = 3 if self.kind == SMALL else 4
        for s in self.steps:
            if len(s.control) != n:
                raise ConfigError(f"{self.kind} path needs {n} constraints per step")

    @property
    def size(self) -> int:
        return 3 if self.kind == SMALL else 4

    def initial_kinematics(self) -> np.ndarray:
        return np.zeros(3) if self.kind == SMALL else np.array([1.0, 1.0, 0.0, 0.0])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "steps": [
                {"control": list(s.control), "target": list(s.target), "increments": s.increments}
                for s in self.steps
            ],
        }

    @classmethod
    def from_dict(cls, d) -> "LoadPath":
        try:
            steps = tuple(
                LoadStep(tuple(s["control"]), tuple(float(x) for x in s["target"]), int(s.get("increments", 1)))
                for s in d["steps"]
            )
            return cls(d["kind"], steps)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed load path: {exc}") from exc

    @classmethod
    def load(cls, path) -> "LoadPath":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def increment_targets(step: LoadStep, start_kin, start_stress):
    """Yield per-increment end targets for every component of ``step``.

    Prescribed components are interpolated linearly from their values at the
    start of the step.
    """
    start = np.where(step.strain_mask, start_kin, start_stress)
    end = np.asarray(step.target, dtype=float)
    for k in range(1, step.increments + 1):
        yield start + (end - start) * (k / step.increments)


def uniaxial_tension(steps: int = 25, to: float = 0.01) -> LoadPath:
    """Small strain: eps11 prescribed, sigma22 = sigma12 = 0."""
    return LoadPath(SMALL, (LoadStep((STRAIN, STRESS, STRESS), (to, 0.0, 0.0), steps),))


def loading_unloading(levels=(0.0025, 0.005, 0.0075, 0.01), increments: int = 10) -> LoadPath:
    """Cyclic uniaxial path: load to each level and unload to zero stress."""
    steps = []
    for lv in levels:
        steps.append(LoadStep((STRAIN, STRESS, STRESS), (lv, 0.0, 0.0), increments))
        steps.append(LoadStep((STRESS, STRESS, STRESS), (0.0, 0.0, 0.0), increments))
    return LoadPath(SMALL, tuple(steps))


def mixed_path(amplitude: float = 0.01, increments: int = 10) -> LoadPath:
    """eps11 and eps12 controlled with sigma22 = 0 in a closed three-leg loop."""
    c = (STRAIN, STRESS, STRAIN)
    g = np.sqrt(2.0) * amplitude  # Mandel shear slot
    legs = ((amplitude, 0.0, 0.0), (amplitude, 0.0, g), (0.0, 0.0, 0.0))
    return LoadPath(SMALL, tuple(LoadStep(c, leg, increments) for leg in legs))


def finite_uniaxial(steps: int = 50, to: float = 2.0) -> LoadPath:
    """Finite strain: F11 prescribed, P22 = 0, F12 = F21 = 0."""
    return LoadPath(FINITE, (LoadStep((STRAIN, STRESS, STRAIN, STRAIN), (to, 0.0, 0.0, 0.0), steps),))


BUILTIN_PATHS = {
    "uniaxial-tension": uniaxial_tension,
    "loading-unloading": loading_unloading,
    "mixed": mixed_path,
    "finite-uniaxial": finite_uniaxial,
}
