"""Binary-tree material network.

The tree is stored as an implicit heap: layer ``i`` (``0..N``) holds ``2**i``
nodes and node ``(i, k)`` has children ``(i+1, 2k)`` and ``(i+1, 2k+1)``
(zero-based).  Leaves carry activations ``z`` and every node carries a
rotation angle; the leaf angles rotate the phase compliances entering the
bottom blocks.  Leaves with ``ReLU(z) = 0`` are inactive.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .building_block import homogenize_small
from .errors import DeadNetwork, FormatError
from .io import atomic_write_bytes
from .tensor_core import reduce_angle, rotate_compliance

CHECKPOINT_VERSION = 1


@dataclass
class MaterialNetwork:
    depth: int
    z: np.ndarray
    theta: list
    phase_of_leaf: np.ndarray
    seed: int | None = None
    history: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        self.z = np.asarray(self.z, dtype=float)
        self.theta = [np.asarray(t, dtype=float) for t in self.theta]
        self.phase_of_leaf = np.asarray(self.phase_of_leaf, dtype=int)
        n = 2**self.depth
        if self.z.shape != (n,) or self.phase_of_leaf.shape != (n,):
            raise ValueError("leaf arrays must have 2**depth entries")
        if len(self.theta) != self.depth + 1 or any(t.shape != (2**i,) for i, t in enumerate(self.theta)):
            raise ValueError("theta must hold 2**i angles at layer i = 0..depth")

    @property
    def n_leaves(self) -> int:
        return 2**self.depth

    @property
    def n_parameters(self) -> int:
        return self.z.size + sum(t.size for t in self.theta)

    def copy(self) -> "MaterialNetwork":
        return MaterialNetwork(
            self.depth,
            self.z.copy(),
            [t.copy() for t in self.theta],
            self.phase_of_leaf.copy(),
            self.seed,
            json.loads(json.dumps(self.history)),
        )

    def reported_angles(self) -> list:
        """Angles reduced to ``[-pi/2, pi/2)`` for display."""
        return [reduce_angle(t) for t in self.theta]


def children(i: int, k: int):
    return (i + 1, 2 * k), (i + 1, 2 * k + 1)


def default_phases(depth: int) -> np.ndarray:
    """Alternating assignment: leaves 0, 2, 4, ... take phase 1."""
    return np.where(np.arange(2**depth) % 2 == 0, 1, 2)


def init_random(depth: int, seed: int | None = None, rng=None) -> MaterialNetwork:
    """``z ~ U(0.2, 0.8)`` and ``theta ~ U(-pi/2, pi/2)``."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    rng = np.random.default_rng(seed) if rng is None else rng
    z = rng.uniform(0.2, 0.8, 2**depth)
    theta = [rng.uniform(-np.pi / 2, np.pi / 2, 2**i) for i in range(depth + 1)]
    return MaterialNetwork(depth, z, theta, default_phases(depth), seed)


def propagate_weights(net: MaterialNetwork):
    """Return ``(w, f)``: node weights per layer and block volume fractions.

    ``f[i][k]`` is the fraction of the first child of node ``(i, k)``; it is
    zero for dead nodes.
    """
    w = [None] * (net.depth + 1)
    w[net.depth] = np.maximum(net.z, 0.0)
    for i in range(net.depth - 1, -1, -1):
        w[i] = w[i + 1][0::2] + w[i + 1][1::2]
    if not w[0][0] > 0.0:
        raise DeadNetwork("all leaves are inactive")
    f = []
    for i in range(net.depth):
        wp = w[i]
        f.append(np.divide(w[i + 1][0::2], wp, out=np.zeros_like(wp), where=wp > 0.0))
    return w, f


def count_active(net: MaterialNetwork) -> int:
    return int(np.count_nonzero(net.z > 0.0))


def phase_volume_fraction(net: MaterialNetwork) -> float:
    w, _ = propagate_weights(net)
    return float(np.sum(w[-1][net.phase_of_leaf == 1]) / w[0][0])


def leaf_inputs(net: MaterialNetwork, Dp1, Dp2) -> np.ndarray:
    """Phase compliance per leaf, shape ``batch + (2**N, 3, 3)``."""
    Dp1 = np.asarray(Dp1, dtype=float)
    Dp2 = np.asarray(Dp2, dtype=float)
    sel = (net.phase_of_leaf == 1)[:, None, None]
    return np.where(sel, Dp1[..., None, :, :], Dp2[..., None, :, :])


def _combine(Dc1, Dc2, f):
    Dr = homogenize_small(Dc1, Dc2, f)
    fb = f[..., None, None]
    return np.where(fb == 1.0, Dc1, np.where(fb == 0.0, Dc2, Dr))


def forward_layers(net: MaterialNetwork, Dp1, Dp2, weights=None):
    """Bottom-up sweep returning per-layer data for backpropagation.

    ``layers[i]`` holds the rotated outputs ``D`` of layer ``i``; for
    ``i < N`` also the local homogenized ``Dr``.  Dead nodes carry harmless
    finite values and never reach the root because their parent fraction is
    exactly 0 or 1.
    """
    w, f = propagate_weights(net) if weights is None else weights
    N = net.depth
    Din = leaf_inputs(net, Dp1, Dp2)
    layers = [None] * (N + 1)
    D = rotate_compliance(Din, net.theta[N])
    layers[N] = {"Din": Din, "D": D}
    for i in range(N - 1, -1, -1):
        Dc1, Dc2 = D[..., 0::2, :, :], D[..., 1::2, :, :]
        Dr = _combine(Dc1, Dc2, f[i])
        D = rotate_compliance(Dr, net.theta[i])
        layers[i] = {"Dr": Dr, "D": D}
    return layers, (w, f)


def forward_elastic(net: MaterialNetwork, Dp1, Dp2) -> np.ndarray:
    """Homogenized compliance predicted by the network (broadcasts over samples)."""
    layers, _ = forward_layers(net, Dp1, Dp2)
    return layers[0]["D"][..., 0, :, :]


# ------------------------------------------------------------------ treemap


def to_treemap(net: MaterialNetwork) -> list:
    """Nested rectangles for active leaves; area equals normalized weight.

    Layer ``i`` splits its rectangle along x for even ``i`` and along y for
    odd ``i``, in proportion to the child weights.
    """
    w, _ = propagate_weights(net)
    total = w[0][0]
    rects = []

    def visit(i, k, x, y, dx, dy):
        if w[i][k] <= 0.0:
            return
        if i == net.depth:
            rects.append(
                {
                    "leaf": k,
                    "phase": int(net.phase_of_leaf[k]),
                    "x": x,
                    "y": y,
                    "width": dx,
                    "height": dy,
                    "area": float(w[i][k] / total),
                }
            )
            return
        (_, a), (_, b) = children(i, k)
        r = w[i + 1][a] / w[i][k]
        if i % 2 == 0:
            visit(i + 1, a, x, y, dx * r, dy)
            visit(i + 1, b, x + dx * r, y, dx * (1.0 - r), dy)
        else:
            visit(i + 1, a, x, y, dx, dy * r)
            visit(i + 1, b, x, y + dy * r, dx, dy * (1.0 - r))

    visit(0, 0, 0.0, 0.0, 1.0, 1.0)
    return rects


PHASE_COLORS = {1: "#d95f02", 2: "#1b9e77"}


def treemap_svg(rects, size: int = 400) -> str:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">'
    ]
    for r in rects:
        parts.append(
            '<rect x="{:.4f}" y="{:.4f}" width="{:.4f}" height="{:.4f}" fill="{}" stroke="white" stroke-width="1"/>'.format(
                r["x"] * size, r["y"] * size, r["width"] * size, r["height"] * size, PHASE_COLORS[r["phase"]]
            )
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ------------------------------------------------------------------ checkpoints


def to_dict(net: MaterialNetwork) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "depth": net.depth,
        "seed": net.seed,
        "z": net.z.tolist(),
        "theta": [t.tolist() for t in net.theta],
        "phase_of_leaf": net.phase_of_leaf.tolist(),
        "history": net.history,
    }


def save(net: MaterialNetwork) -> bytes:
    """Serialize to JSON bytes (floats written with shortest round-trip repr)."""
    return (json.dumps(to_dict(net), indent=1, sort_keys=True) + "\n").encode()


def load(data) -> MaterialNetwork:
    try:
        d = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise FormatError("checkpoint must be a JSON object")
    if d.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {d.get('version')!r} (expected {CHECKPOINT_VERSION})")
    try:
        return MaterialNetwork(
            int(d["depth"]),
            np.array(d["z"], dtype=float),
            [np.array(t, dtype=float) for t in d["theta"]],
            np.array(d["phase_of_leaf"], dtype=int),
            d.get("seed"),
            d.get("history") or {},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed checkpoint: {exc}") from exc


def save_file(net: MaterialNetwork, path) -> None:
    atomic_write_bytes(path, save(net))


def load_file(path) -> MaterialNetwork:
    with open(path, "rb") as fh:
        return load(fh.read())
