"""Tree surgery on a material network: reordering, pass-through deletion and
merging of similar sibling subtrees.

All operations work in place on the heap arrays and return the network.
Deleted nodes stay in the heap as pass-through nodes with zero angle, which
is equivalent to removing them.
"""
from __future__ import annotations

import numpy as np

from .network import MaterialNetwork, propagate_weights


def _span(i: int, k: int, j: int) -> slice:
    """Indices at layer ``j`` covered by the subtree rooted at ``(i, k)``."""
    n = 2 ** (j - i)
    return slice(k * n, (k + 1) * n)


def _swap(a: np.ndarray, s1: slice, s2: slice) -> None:
    tmp = a[s1].copy()
    a[s1] = a[s2]
    a[s2] = tmp


def _swap_subtrees(net: MaterialNetwork, i: int, k: int) -> None:
    """Exchange the two child subtrees of node ``(i, k)``."""
    for j in range(i + 1, net.depth + 1):
        s1, s2 = _span(i + 1, 2 * k, j), _span(i + 1, 2 * k + 1, j)
        _swap(net.theta[j], s1, s2)
    s1, s2 = _span(i + 1, 2 * k, net.depth), _span(i + 1, 2 * k + 1, net.depth)
    _swap(net.z, s1, s2)
    _swap(net.phase_of_leaf, s1, s2)


def reorder(net: MaterialNetwork) -> MaterialNetwork:
    """Make the first child of every node at least as heavy as the second."""
    for i in range(net.depth):
        w, _ = propagate_weights(net)
        for k in np.nonzero(w[i + 1][0::2] < w[i + 1][1::2])[0]:
            _swap_subtrees(net, i, int(k))
    return net


def delete_pass_through(net: MaterialNetwork) -> MaterialNetwork:
    """Collapse blocks with a single active child.

    The parent's angle is added to the surviving child's angle and then
    reset to zero, so the block becomes an identity pass-through.
    """
    w, f = propagate_weights(net)
    for i in range(net.depth):
        for k in range(2**i):
            if w[i][k] <= 0.0 or 0.0 < f[i][k] < 1.0:
                continue
            child = 2 * k if f[i][k] == 1.0 else 2 * k + 1
            net.theta[i + 1][child] += net.theta[i][k]
            net.theta[i][k] = 0.0
    return net


def angle_distance(a, b):
    """Distance between angles modulo pi, normalized to ``[0, 1/2]``."""
    d = np.abs(np.asarray(a) - np.asarray(b)) % np.pi
    return np.minimum(d, np.pi - d) / np.pi


def _chain_end(net: MaterialNetwork, f, i: int, k: int):
    """Follow single-child links from ``(i, k)``; return the first leaf or
    two-child block and the summed angle along the way."""
    theta = 0.0
    while True:
        theta += float(net.theta[i][k])
        if i == net.depth or 0.0 < f[i][k] < 1.0:
            return i, k, theta
        k = 2 * k if f[i][k] == 1.0 else 2 * k + 1
        i += 1


def subtree_signature(net: MaterialNetwork, i: int, k: int, weights=None):
    """Collapsed view of the active part of a subtree.

    Chains of single-child nodes are folded into their end node, whose angle
    becomes the chain's total.  Returns nested dicts, or ``None`` for a dead
    subtree.
    """
    w, f = propagate_weights(net) if weights is None else weights
    if w[i][k] <= 0.0:
        return None
    ri, rk, theta = _chain_end(net, f, i, k)
    sig = {"node": (ri, rk), "theta": theta}
    if ri == net.depth:
        sig["phase"] = int(net.phase_of_leaf[rk])
    else:
        sig["f"] = float(f[ri][rk])
        sig["children"] = (
            subtree_signature(net, ri + 1, 2 * rk, (w, f)),
            subtree_signature(net, ri + 1, 2 * rk + 1, (w, f)),
        )
    return sig


def signature_difference(s1, s2):
    """``(delta_f, delta_theta)`` or ``None`` when the collapsed shapes or
    leaf phases differ."""
    if s1 is None or s2 is None or ("phase" in s1) != ("phase" in s2):
        return None
    dt = float(angle_distance(s1["theta"], s2["theta"]))
    if "phase" in s1:
        return (0.0, dt) if s1["phase"] == s2["phase"] else None
    df = abs(s1["f"] - s2["f"])
    for c1, c2 in zip(s1["children"], s2["children"]):
        d = signature_difference(c1, c2)
        if d is None:
            return None
        df, dt = max(df, d[0]), max(dt, d[1])
    return df, dt


def _fold(net: MaterialNetwork, a: dict, b: dict) -> None:
    """Sum weights of matching leaves into ``a`` and average matching angles."""
    ta, tb = a["theta"], b["theta"]
    tb = tb + np.pi * np.round((ta - tb) / np.pi)
    ri, rk = a["node"]
    net.theta[ri][rk] += 0.5 * (ta + tb) - ta
    if "phase" in a:
        net.z[rk] += net.z[b["node"][1]]
    else:
        for ca, cb in zip(a["children"], b["children"]):
            _fold(net, ca, cb)


def _fuse(net: MaterialNetwork, i: int, k: int, s1: dict, s2: dict) -> None:
    """Fold the second child subtree of ``(i, k)`` into the first."""
    _fold(net, s1, s2)
    sb = _span(i + 1, 2 * k + 1, net.depth)
    net.z[sb] = np.minimum(net.z[sb], 0.0)


def merge_similar_subtrees(net: MaterialNetwork, tol_f: float = 0.05, tol_theta: float = 0.05) -> MaterialNetwork:
    """Merge sibling subtrees whose signatures differ by at most the tolerances."""
    for i in range(net.depth):
        for k in range(2**i):
            weights = propagate_weights(net)
            w, f = weights
            if w[i][k] <= 0.0 or not 0.0 < f[i][k] < 1.0:
                continue
            s1 = subtree_signature(net, i + 1, 2 * k, weights)
            s2 = subtree_signature(net, i + 1, 2 * k + 1, weights)
            d = signature_difference(s1, s2)
            if d is None or d[0] > tol_f or d[1] > tol_theta:
                continue
            _fuse(net, i, k, s1, s2)
    return delete_pass_through(net)


def compress(net: MaterialNetwork, tol_f: float = 0.05, tol_theta: float = 0.05) -> MaterialNetwork:
    """Reorder, merge similar siblings, then delete pass-through blocks."""
    reorder(net)
    merge_similar_subtrees(net, tol_f, tol_theta)
    return delete_pass_through(net)
