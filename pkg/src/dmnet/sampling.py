"""Training data: phase-property sampling, Latin hypercube designs and datasets.

Phase compliances are orthotropic plane-strain matrices built from
``(E11, E22, G12, nu12)``.  The overall modulus scale of phase 1 is fixed by
``E11 * E22 = 1``, leaving seven free design dimensions.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import FormatError, OracleFailure
from .io import atomic_write_text
from .rng import subseed
from .tensor_core import isotropic_compliance, orthotropic_compliance, pack_sym, unpack_sym

N_DIMS = 7

G_RATIO = (0.25, 0.5)
NU_RATIO = (0.3, 0.7)
LOG_PRODUCT = (-4.0, 4.0)
LOG_RATIO = (-1.0, 1.0)


@dataclass(frozen=True)
class PhaseProperties:
    E11: float
    E22: float
    G12: float
    nu12: float

    def compliance(self) -> np.ndarray:
        return orthotropic_compliance(self.E11, self.E22, self.G12, self.nu12)


def _lerp(u, lo_hi):
    lo, hi = lo_hi
    return lo + (hi - lo) * u


def _phase(log_product, log_ratio, ug, unu) -> PhaseProperties:
    E11 = 10.0 ** (0.5 * (log_product - log_ratio))
    E22 = 10.0 ** (0.5 * (log_product + log_ratio))
    scale = np.sqrt(E11 * E22)
    return PhaseProperties(
        float(E11),
        float(E22),
        float(_lerp(ug, G_RATIO) * scale),
        float(_lerp(unu, NU_RATIO) * np.sqrt(E22 / E11)),
    )


def sample_phase_pair(u) -> tuple:
    """Map a point of ``[0, 1]^7`` to two phase property sets.

    Layout: ``u[0:3]`` phase 1 (log-ratio, shear ratio, Poisson ratio),
    ``u[3:7]`` phase 2 (log-product, log-ratio, shear ratio, Poisson ratio).
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (N_DIMS,) or np.any((u < 0) | (u > 1)):
        raise ValueError(f"expected a point of the unit {N_DIMS}-cube")
    p1 = _phase(0.0, _lerp(u[0], LOG_RATIO), u[1], u[2])
    p2 = _phase(_lerp(u[3], LOG_PRODUCT), _lerp(u[4], LOG_RATIO), u[5], u[6])
    return p1, p2


def latin_hypercube(n_samples: int, dims: int, seed=None) -> np.ndarray:
    """One point per stratum in every dimension, randomly paired."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    return qmc.LatinHypercube(d=dims, seed=seed).random(n_samples)


@dataclass
class Dataset:
    Dp1: np.ndarray
    Dp2: np.ndarray
    Ddns: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.Dp1.shape[0])

    def subset(self, idx) -> "Dataset":
        Ddns = None if self.Ddns is None else self.Ddns[idx]
        return Dataset(self.Dp1[idx], self.Dp2[idx], Ddns, dict(self.meta))

    def to_jsonl(self) -> str:
        if self.Ddns is None:
            raise ValueError("dataset has no targets")
        head = {
            "oracle": self.meta.get("oracle"),
            "microstructure": self.meta.get("microstructure"),
            "seed": self.meta.get("seed"),
            "count": len(self),
        }
        lines = [json.dumps(head)]
        for s in range(len(self)):
            lines.append(
                json.dumps(
                    {
                        "id": s,
                        "Dp1": pack_sym(self.Dp1[s]).tolist(),
                        "Dp2": pack_sym(self.Dp2[s]).tolist(),
                        "Ddns": pack_sym(self.Ddns[s]).tolist(),
                    }
                )
            )
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        atomic_write_text(path, self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "Dataset":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise FormatError("empty dataset file")
        try:
            head = json.loads(lines[0])
            rows = [json.loads(ln) for ln in lines[1:]]
            Dp1 = unpack_sym(np.array([r["Dp1"] for r in rows], dtype=float).reshape(-1, 6))
            Dp2 = unpack_sym(np.array([r["Dp2"] for r in rows], dtype=float).reshape(-1, 6))
            Ddns = unpack_sym(np.array([r["Ddns"] for r in rows], dtype=float).reshape(-1, 6))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed dataset: {exc}") from exc
        if not isinstance(head, dict) or head.get("count") != len(rows):
            raise FormatError(f"header count {head.get('count') if isinstance(head, dict) else None} != {len(rows)} samples")
        if not rows:
            raise FormatError("dataset has no samples")
        return cls(Dp1, Dp2, Ddns, head)

    @classmethod
    def load(cls, path) -> "Dataset":
        with open(path) as fh:
            return cls.from_jsonl(fh.read())


def phase_inputs(n: int, seed) -> tuple:
    """``(Dp1, Dp2)`` stacks for ``n`` Latin-hypercube design points."""
    pts = latin_hypercube(n, N_DIMS, seed)
    pairs = [sample_phase_pair(u) for u in pts]
    Dp1 = np.array([p.compliance() for p, _ in pairs])
    Dp2 = np.array([q.compliance() for _, q in pairs])
    return Dp1, Dp2


def label_inputs(oracle, Dp1, Dp2, workers: int = 1) -> np.ndarray:
    """Query ``oracle`` for every pair; results keep the input order."""

    def one(s):
        try:
            return np.asarray(oracle(Dp1[s], Dp2[s]), dtype=float)
        except Exception as exc:  # noqa: BLE001 - reported with the sample index
            raise OracleFailure(f"sample {s}: {exc}", s) from exc

    idx = range(len(Dp1))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            out = list(ex.map(one, idx))
    else:
        out = [one(s) for s in idx]
    return np.array(out)


def build_dataset(oracle, n_train: int = 200, n_valid: int = 100, seed: int = 0, workers: int = 1):
    """Sample phase pairs and label them; validation uses a disjoint substream."""
    sets = []
    for label, n in (("train", n_train), ("valid", n_valid)):
        Dp1, Dp2 = phase_inputs(n, subseed(seed, f"sampling/{label}"))
        Ddns = label_inputs(oracle, Dp1, Dp2, workers)
        meta = {
            "oracle": getattr(oracle, "kind", type(oracle).__name__),
            "microstructure": getattr(oracle, "microstructure", None),
            "seed": seed,
            "split": label,
        }
        sets.append(Dataset(Dp1, Dp2, Ddns, meta))
    return sets[0], sets[1]


def testing_dataset_high_contrast(n: int = 100, seed: int = 0, oracle=None) -> Dataset:
    """Isotropic phases with ``E1 = 1`` and ``E2`` spanning six decades."""
    pts = latin_hypercube(n, 3, subseed(seed, "sampling/high-contrast"))
    nu1 = 0.005 + 0.49 * pts[:, 0]
    E2 = 10.0 ** (-3.0 + 6.0 * pts[:, 1])
    nu2 = 0.005 + 0.49 * pts[:, 2]
    Dp1 = isotropic_compliance(np.ones(n), nu1)
    Dp2 = isotropic_compliance(E2, nu2)
    Ddns = label_inputs(oracle, Dp1, Dp2) if oracle is not None else None
    meta = {"oracle": getattr(oracle, "kind", None), "microstructure": getattr(oracle, "microstructure", None), "seed": seed}
    return Dataset(Dp1, Dp2, Ddns, meta)
