"""Online extrapolation of a trained network to nonlinear material laws.

Every load increment is solved by a fixed-point Newton loop:

1. evaluate each active leaf at its current strain increment, giving a
   tangent and a residual (``de = d_eps - D d_sigma`` or
   ``dP = P - P_n - A dF``);
2. homogenize tangents and residuals bottom-up through the active blocks;
3. solve the mixed macroscopic constraints at the root;
4. split the root increment top-down back to the leaves.

Only active leaves and blocks with two active children enter the plan;
chains of single-child blocks reduce to one rotation, so the work per
iteration is linear in the number of active leaves.
"""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .building_block import (
    dehomogenize_finite,
    dehomogenize_small,
    homogenize_finite,
    homogenize_residual_strain_local,
    homogenize_residual_stress,
    homogenize_small,
)
from .errors import (
    DegenerateBlock,
    InvertedElement,
    NewtonDivergence,
    NonConvergence,
    SingularInterface,
    SingularMacroSystem,
)
from .loading import FINITE, SMALL, LoadPath, increment_targets
from .materials import SmallState, green_strain, is_finite_law
from .network import MaterialNetwork, propagate_weights
from .tensor_core import finite_rotation_matrix, rotation_matrix

IDENTITY_F = np.array([1.0, 1.0, 0.0, 0.0])


@dataclass
class PlanNode:
    leaf: int | None  # heap index of the leaf, None for blocks
    phi: float  # rotation into the parent block's frame
    Phi: float  # total rotation from the global frame
    weight: float
    f: float = 1.0
    children: tuple = ()
    R: np.ndarray = None  # R(phi): parent frame -> node frame
    Rt: np.ndarray = None  # R(-phi)


def build_plan(net: MaterialNetwork, finite: bool = False) -> list:
    """Active nodes in post-order (children before parents); root last."""
    w, f = propagate_weights(net)
    rot = finite_rotation_matrix if finite else rotation_matrix
    plan: list = []

    def visit(i, k, phi, Phi):
        phi = phi + net.theta[i][k]
        Phi = Phi + net.theta[i][k]
        if i == net.depth:
            node = PlanNode(k, phi, Phi, float(w[i][k]))
        elif f[i][k] == 1.0:
            return visit(i + 1, 2 * k, phi, Phi)
        elif f[i][k] == 0.0:
            return visit(i + 1, 2 * k + 1, phi, Phi)
        else:
            c1 = visit(i + 1, 2 * k, 0.0, Phi)
            c2 = visit(i + 1, 2 * k + 1, 0.0, Phi)
            node = PlanNode(None, phi, Phi, float(w[i][k]), float(f[i][k]), (c1, c2))
        node.R, node.Rt = rot(phi), rot(-phi)
        plan.append(node)
        return len(plan) - 1

    visit(0, 0, 0.0, 0.0)
    return plan


def solve_mixed(M, r, x_known_mask, known):
    """Solve ``y = M x + r`` where each component fixes either ``x`` or ``y``.

    ``known[c]`` is the prescribed ``x_c`` where ``x_known_mask[c]`` and the
    prescribed ``y_c`` elsewhere.  Returns ``(x, y)``.
    """
    xm = np.asarray(x_known_mask, dtype=bool)
    ym = ~xm
    x = np.where(xm, known, 0.0)
    if ym.any():
        A = M[np.ix_(ym, ym)]
        rhs = known[ym] - M[np.ix_(ym, xm)] @ x[xm] - r[ym]
        if not np.all(np.isfinite(A)) or np.linalg.cond(A) > 1e14:
            raise SingularMacroSystem("macroscopic constraint block is singular")
        x[ym] = np.linalg.solve(A, rhs)
    y = M @ x + r
    y[ym] = known[ym]
    return x, y


def solve_macro_constraints_small(root_D, root_residual, strain_mask, prescribed):
    """Macro strain and stress increments for mixed control.

    ``prescribed[c]`` is a strain increment where ``strain_mask[c]`` and a
    stress increment elsewhere.
    """
    stress_mask = ~np.asarray(strain_mask, dtype=bool)
    dsig, deps = solve_mixed(np.asarray(root_D), np.asarray(root_residual), stress_mask, np.asarray(prescribed, dtype=float))
    return deps, dsig


@dataclass
class StepRecord:
    step: int
    kin: np.ndarray
    stress: np.ndarray
    iterations: int


@dataclass
class Response:
    kind: str
    records: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def kin(self) -> np.ndarray:
        return np.array([r.kin for r in self.records])

    @property
    def stress(self) -> np.ndarray:
        return np.array([r.stress for r in self.records])

    @property
    def iterations(self) -> np.ndarray:
        return np.array([r.iterations for r in self.records])

    def to_csv(self) -> str:
        n = 3 if self.kind == SMALL else 4
        names = ("eps", "sig") if self.kind == SMALL else ("F", "P")
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["step"] + [f"{names[0]}{c + 1}" for c in range(n)] + [f"{names[1]}{c + 1}" for c in range(n)] + ["iterations"])
        for r in self.records:
            wr.writerow([r.step] + [repr(float(v)) for v in r.kin] + [repr(float(v)) for v in r.stress] + [r.iterations])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "wall_time": self.wall_time,
                "step": [r.step for r in self.records],
                "kin": [r.kin.tolist() for r in self.records],
                "stress": [r.stress.tolist() for r in self.records],
                "iterations": [r.iterations for r in self.records],
            },
            indent=1,
        )


_RECOVERABLE = (NewtonDivergence, InvertedElement, NonConvergence, SingularInterface, SingularMacroSystem, DegenerateBlock)


class OnlineSolver:
    """Incremental solver for a network with one law per phase.

    ``laws`` maps phase id (1, 2) to a law object.  All leaves must be either
    small-strain or finite-strain laws.
    """

    def __init__(self, net: MaterialNetwork, laws, tol: float = 1e-8, max_iter: int = 50, max_bisections: int = 8):
        self.net = net
        self.laws = {1: laws[1], 2: laws[2]} if isinstance(laws, dict) else {1: laws[0], 2: laws[1]}
        kinds = {is_finite_law(l) for l in self.laws.values()}
        if len(kinds) != 1:
            raise ValueError("both phases must use the same kinematics")
        self.kind = FINITE if kinds.pop() else SMALL
        self.tol, self.max_iter, self.max_bisections = tol, max_iter, max_bisections
        self.plan = build_plan(net, self.kind == FINITE)
        self.leaves = [n for n in self.plan if n.leaf is not None]
        self.total_weight = self.plan[-1].weight
        self.leaf_law = {id(n): self.laws[int(net.phase_of_leaf[n.leaf])] for n in self.leaves}
        rot = finite_rotation_matrix if self.kind == FINITE else rotation_matrix
        self.leaf_to_global = {id(n): rot(-n.Phi) for n in self.leaves}
        self.reset()

    # ---------------------------------------------------------------- state

    @property
    def n_active(self) -> int:
        return len(self.leaves)

    def reset(self) -> None:
        if self.kind == SMALL:
            self.states = {id(n): self.leaf_law[id(n)].initial_state() for n in self.leaves}
        else:
            self.states = {id(n): (IDENTITY_F.copy(), np.zeros(4)) for n in self.leaves}
        self.leaf_evals = 0
        self._last = None

    def _average(self, vecs) -> np.ndarray:
        out = 0.0
        for n in self.leaves:
            out = out + (n.weight / self.total_weight) * (self.leaf_to_global[id(n)] @ vecs[id(n)])
        return out

    def macro(self):
        """Committed macro ``(kinematics, stress)`` in the global frame."""
        if self.kind == SMALL:
            kin = self._average({k: s.strain for k, s in self.states.items()})
            sig = self._average({k: s.stress for k, s in self.states.items()})
        else:
            kin = self._average({k: s[0] for k, s in self.states.items()})
            sig = self._average({k: s[1] for k, s in self.states.items()})
        return np.asarray(kin, dtype=float), np.asarray(sig, dtype=float)

    # ---------------------------------------------------------------- leaf laws

    def _eval_small(self, node, dstrain):
        r = self.leaf_law[id(node)].evaluate(self.states[id(node)], dstrain)
        self.leaf_evals += 1
        return r.compliance, r.residual, r.dstress, r.state

    def _eval_finite(self, node, dF):
        F_n, P_n = self.states[id(node)]
        F = F_n + dF
        try:
            P, A = self.leaf_law[id(node)].evaluate(F)
        except InvertedElement as exc:
            raise InvertedElement(f"leaf {node.leaf}: {exc}", node.leaf) from exc
        self.leaf_evals += 1
        dP = P - P_n
        return A, dP - A @ dF, dP, (F, P)

    # ---------------------------------------------------------------- sweeps

    def assemble_up(self, tangents, residuals):
        """Per-node ``(T, r)`` in each node's parent frame; root entry last."""
        out = [None] * len(self.plan)
        finite = self.kind == FINITE
        for idx, n in enumerate(self.plan):
            if n.leaf is not None:
                T, r = tangents[id(n)], residuals[id(n)]
            else:
                (T1, r1), (T2, r2) = out[n.children[0]], out[n.children[1]]
                if finite:
                    T = homogenize_finite(T1, T2, n.f)
                    r = homogenize_residual_stress(T1, T2, r1, r2, n.f)
                else:
                    T = homogenize_small(T1, T2, n.f)
                    r = homogenize_residual_strain_local(T1, T2, r1, r2, n.f)
            out[idx] = (n.Rt @ T @ n.R, n.Rt @ r)
        return out

    def distribute_down(self, assembled, root_increment):
        """Split a global-frame root increment into leaf increments (material frames)."""
        finite = self.kind == FINITE
        inc = [None] * len(self.plan)
        inc[-1] = root_increment
        leaf_inc = {}
        for idx in range(len(self.plan) - 1, -1, -1):
            n = self.plan[idx]
            local = n.R @ inc[idx]
            if n.leaf is not None:
                leaf_inc[id(n)] = local
                continue
            c1, c2 = n.children
            (T1, r1), (T2, r2) = assembled[c1], assembled[c2]
            if finite:
                inc[c1], inc[c2] = dehomogenize_finite(local, T1, T2, r1, r2, n.f, 0.0)
            else:
                inc[c1], inc[c2] = dehomogenize_small(local, T1, T2, r1, r2, n.f, 0.0)
        return leaf_inc

    # ---------------------------------------------------------------- increments

    def _solve_increment(self, mask, target, kin_n, sig_n, step_no):
        """Newton loop for one increment; commits leaf states on success."""
        finite = self.kind == FINITE
        evaluate = self._eval_finite if finite else self._eval_small
        zero = np.zeros(4 if finite else 3)
        known = np.where(mask, target - kin_n, target - sig_n)
        # x is the quantity multiplied by the tangent: stress (small) or F (finite)
        x_known = mask if finite else ~mask

        inc = self._predict(mask, known)
        if inc is None:
            inc = {id(n): zero for n in self.leaves}
        ev = {id(n): evaluate(n, inc[id(n)]) for n in self.leaves}
        sig_target = np.where(mask, 0.0, sig_n + known)
        trace = []
        for it in range(1, self.max_iter + 1):
            tangents = {k: e[0] for k, e in ev.items()}
            residuals = {k: e[1] for k, e in ev.items()}
            assembled = self.assemble_up(tangents, residuals)
            T0, r0 = assembled[-1]
            x, y = solve_mixed(T0, r0, x_known, known)
            full = self.distribute_down(assembled, x if finite else y)
            d = {k: full[k] - inc[k] for k in full}
            new_inc, new_ev, alpha = self._line_search(evaluate, inc, ev, d, sig_target)
            # mismatch between the linear model used and the true local response
            err, size = 0.0, 0.0
            for n in self.leaves:
                k = id(n)
                T, r = ev[k][0], ev[k][1]
                d_true = new_ev[k][2]
                if finite:
                    mis = (d_true - T @ new_inc[k] - r) / max(np.abs(T).max(), 1e-300)
                else:
                    mis = new_inc[k] - T @ d_true - r
                err = max(err, float(np.abs(mis).max()))
                size = max(size, float(np.abs(new_inc[k]).max()))
            rel = err / max(size, 1e-12)
            trace.append(rel)
            inc, ev = new_inc, new_ev
            if not np.isfinite(rel):
                break
            if alpha == 1.0 and rel < self.tol:
                for n in self.leaves:
                    self.states[id(n)] = ev[id(n)][3]
                self._last = (mask.copy(), known.copy(), inc)
                return it
        raise NewtonDivergence(f"increment {step_no}: no convergence in {len(trace)} iterations", trace, step_no)

    def _slope(self, ev, d, sig_target) -> float:
        """Directional derivative of the incremental potential along ``d``."""
        finite = self.kind == FINITE
        g = 0.0
        for n in self.leaves:
            k = id(n)
            stress = ev[k][3][1] if finite else ev[k][3].stress
            g += (n.weight / self.total_weight) * float(stress @ d[k])
        return g - float(sig_target @ self._average(d))

    def _line_search(self, evaluate, inc, ev, d, sig_target, eta=0.8, max_trials=6):
        """Damp the Newton step when it overshoots the minimum of the potential.

        The leaf potentials are convex, so the slope along ``d`` is monotone
        and regula falsi on it brackets the minimizer.
        """
        trial = lambda a: {k: inc[k] + a * d[k] for k in d}
        new_inc = trial(1.0)
        new_ev = {id(n): evaluate(n, new_inc[id(n)]) for n in self.leaves}
        g0 = self._slope(ev, d, sig_target)
        g1 = self._slope(new_ev, d, sig_target)
        if not (g0 < 0.0 and g1 > eta * abs(g0)):
            return new_inc, new_ev, 1.0
        lo, glo, hi, ghi = 0.0, g0, 1.0, g1
        a = 1.0
        for _ in range(max_trials):
            a = lo - glo * (hi - lo) / (ghi - glo)
            a = min(max(a, lo + 0.05 * (hi - lo)), hi - 0.05 * (hi - lo))
            new_inc = trial(a)
            new_ev = {id(n): evaluate(n, new_inc[id(n)]) for n in self.leaves}
            g = self._slope(new_ev, d, sig_target)
            if abs(g) <= eta * abs(g0):
                break
            if g > 0.0:
                hi, ghi = a, g
            else:
                lo, glo = a, g
        return new_inc, new_ev, a

    def _predict(self, mask, known):
        """Scale the previous converged leaf increments to the new macro increment."""
        if self._last is None:
            return None
        last_mask, last_known, last_inc = self._last
        if not np.array_equal(mask, last_mask):
            return None
        nrm = float(last_known @ last_known)
        if nrm == 0.0:
            return None
        s = float(known @ last_known) / nrm
        if not 0.0 < s <= 2.0:
            return None
        return {k: s * v for k, v in last_inc.items()}

    def _advance(self, mask, target, step_no, level=0):
        kin_n, sig_n = self.macro()
        saved = dict(self.states)
        try:
            return self._solve_increment(mask, target, kin_n, sig_n, step_no)
        except _RECOVERABLE:
            self.states = saved
            if level >= self.max_bisections:
                raise
        start = np.where(mask, kin_n, sig_n)
        mid = start + 0.5 * (target - start)
        return self._advance(mask, mid, step_no, level + 1) + self._advance(mask, target, step_no, level + 1)

    def run_path(self, path: LoadPath, callback=None) -> Response:
        if path.kind != self.kind:
            raise ValueError(f"{path.kind} path given to a {self.kind}-strain network")
        resp = Response(self.kind)
        kin, sig = self.macro()
        resp.records.append(StepRecord(0, kin, sig, 0))
        t0 = time.perf_counter()
        step_no = 0
        for step in path.steps:
            mask = step.strain_mask
            kin, sig = self.macro()
            for target in increment_targets(step, kin, sig):
                step_no += 1
                iters = self._advance(mask, target, step_no)
                kin, sig = self.macro()
                resp.records.append(StepRecord(step_no, kin, sig, iters))
                if callback is not None:
                    callback(self, resp.records[-1])
        resp.wall_time = time.perf_counter() - t0
        return resp

    # ---------------------------------------------------------------- statistics

    def leaf_statistics(self, bins: int = 20) -> dict:
        """Weighted Green-strain mean and max-shear per active leaf."""
        weights, mean, shear = [], [], []
        for n in self.leaves:
            st = self.states[id(n)]
            if self.kind == FINITE:
                E = green_strain(st[0])
            else:
                e = st.strain
                E = np.array([e[0], e[1], e[2] / np.sqrt(2.0)])
            weights.append(n.weight / self.total_weight)
            mean.append(0.5 * (E[0] + E[1]))
            shear.append(np.sqrt(0.25 * (E[0] - E[1]) ** 2 + E[2] ** 2))
        weights, mean, shear = map(np.asarray, (weights, mean, shear))
        out = {"weights": weights.tolist(), "E_mean": mean.tolist(), "E_maxshear": shear.tolist()}
        for name, v in (("E_mean", mean), ("E_maxshear", shear)):
            lo, hi = float(v.min()), float(v.max())
            if hi <= lo:
                hi = lo + 1e-12
            h, edges = np.histogram(v, bins=bins, range=(lo, hi), weights=weights)
            out[f"{name}_hist"] = {"counts": h.tolist(), "edges": edges.tolist()}
        return out


# ---------------------------------------------------------------- functional wrappers


def assemble_up_small(solver: OnlineSolver, tangents, residuals):
    return solver.assemble_up(tangents, residuals)


def distribute_down_small(solver: OnlineSolver, assembled, macro_increment):
    return solver.distribute_down(assembled, macro_increment)


def newton_step(solver: OnlineSolver, mask, target, step_no: int = 1) -> int:
    """Advance one increment to ``target``; returns Newton iterations used."""
    return solver._advance(np.asarray(mask, dtype=bool), np.asarray(target, dtype=float), step_no)


newton_step_small = newton_step
newton_step_finite = newton_step


def run_path(net: MaterialNetwork, laws, path: LoadPath, **kw) -> Response:
    return OnlineSolver(net, laws, **kw).run_path(path)


def single_block_network(f1: float, theta: float = 0.0, leaf_theta=(0.0, 0.0)) -> MaterialNetwork:
    """Depth-1 network: one block with phase-1 fraction ``f1``."""
    return MaterialNetwork(1, np.array([f1, 1.0 - f1]), [np.array([theta]), np.array(leaf_theta, dtype=float)], np.array([1, 2]))


__all__ = [
    "OnlineSolver",
    "Response",
    "SmallState",
    "build_plan",
    "run_path",
    "single_block_network",
    "solve_macro_constraints_small",
    "solve_mixed",
]
