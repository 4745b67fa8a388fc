"""Brute-force two-layer laminate solvers used as independent references.

Nothing here calls the closed-form block formulas.  Every routine assembles
the raw interface system (traction continuity across the layer normal ``e2``,
compatibility along the interface, volume averaging) and solves it with
dense linear algebra or a nonlinear root finder.  Frame changes use plain
2x2 tensor transformations rather than the Mandel rotation operators.
"""
from __future__ import annotations

import numpy as np
from scipy import optimize

from ..errors import NewtonDivergence, SingularSystem
from ..loading import FINITE, SMALL, LoadPath, increment_targets

_R2 = np.sqrt(2.0)


def _q(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def _sym_to_local(v, theta):
    """Mandel vector in the global frame -> laminate frame."""
    t = np.array([[v[0], v[2] / _R2], [v[2] / _R2, v[1]]])
    Q = _q(theta)
    t = Q @ t @ Q.T
    return np.array([t[0, 0], t[1, 1], _R2 * t[0, 1]])


def _sym_to_global(v, theta):
    return _sym_to_local(v, -theta)


def _frame_matrix(fn, theta, n):
    return np.column_stack([fn(e, theta) for e in np.eye(n)])


def _full_to_local(v, theta):
    """``(F11, F22, F12, F21)`` in the global frame -> laminate frame."""
    F = np.array([[v[0], v[2]], [v[3], v[1]]])
    Q = _q(theta)
    F = Q @ F @ Q.T
    return np.array([F[0, 0], F[1, 1], F[0, 1], F[1, 0]])


def _full_to_global(v, theta):
    return _full_to_local(v, -theta)


def _solve(M, rhs):
    if not np.all(np.isfinite(M)) or np.linalg.cond(M) > 1e14:
        raise SingularSystem("laminate interface system is singular")
    return np.linalg.solve(M, rhs)


# ----------------------------------------------------------------- linear


def laminate_exact(D1, D2, f1, theta=0.0) -> np.ndarray:
    """Effective compliance from three unit-stress solves of the interface system."""
    C1, C2 = np.linalg.inv(D1), np.linalg.inv(D2)
    f2 = 1.0 - f1
    # unknowns: layer strains e1 (3), e2 (3)
    M = np.zeros((6, 6))
    M[0, 0], M[0, 3] = 1.0, -1.0
    M[1:3, :3], M[1:3, 3:] = C1[1:], -C2[1:]
    M[3:, :3], M[3:, 3:] = f1 * C1, f2 * C2
    T = _frame_matrix(_sym_to_local, theta, 3)
    out = np.zeros((3, 3))
    for j in range(3):
        rhs = np.zeros(6)
        rhs[3:] = T[:, j]
        x = _solve(M, rhs)
        out[:, j] = T.T @ (f1 * x[:3] + f2 * x[3:])
    return 0.5 * (out + out.T)


def laminate_global_phases(D1, D2, f1, theta=0.0) -> np.ndarray:
    """Laminate at angle ``theta`` whose phase compliances are given in the global frame."""
    T = _frame_matrix(_sym_to_local, theta, 3)
    return laminate_exact(T @ D1 @ T.T, T @ D2 @ T.T, f1, theta)


def laminate_residual_strain_exact(D1, D2, de1, de2, f1, theta=0.0) -> np.ndarray:
    """Average strain of a laminate under zero average stress with eigenstrains."""
    f2 = 1.0 - f1
    # unknowns: layer stresses s1 (3), s2 (3)
    M = np.zeros((6, 6))
    rhs = np.zeros(6)
    M[0:2, 1:3], M[0:2, 4:6] = np.eye(2), -np.eye(2)
    M[2:5, :3], M[2:5, 3:] = f1 * np.eye(3), f2 * np.eye(3)
    M[5, :3], M[5, 3:] = D1[0], -D2[0]
    rhs[5] = de2[0] - de1[0]
    x = _solve(M, rhs)
    e1 = D1 @ x[:3] + de1
    e2 = D2 @ x[3:] + de2
    return _sym_to_global(f1 * e1 + f2 * e2, theta)


def laminate_split_exact(parent, D1, D2, de1, de2, f1, theta=0.0):
    """Layer strain increments (laminate frame) for a given average increment."""
    C1, C2 = np.linalg.inv(D1), np.linalg.inv(D2)
    f2 = 1.0 - f1
    e = _sym_to_local(parent, theta)
    M = np.zeros((6, 6))
    rhs = np.zeros(6)
    M[0, 0], M[0, 3] = 1.0, -1.0
    M[1:3, :3], M[1:3, 3:] = C1[1:], -C2[1:]
    rhs[1:3] = (C1 @ de1 - C2 @ de2)[1:]
    M[3:, :3], M[3:, 3:] = f1 * np.eye(3), f2 * np.eye(3)
    rhs[3:] = e
    x = _solve(M, rhs)
    return x[:3], x[3:]


def laminate_finite_exact(A1, A2, f1, theta=0.0) -> np.ndarray:
    """Effective 4x4 tangent from four unit-``F`` solves."""
    f2 = 1.0 - f1
    # unknowns: F1 (4), F2 (4); kinematic slots 0, 3 shared, traction slots 1, 2
    M = np.zeros((8, 8))
    M[0, 0], M[0, 4] = 1.0, -1.0
    M[1, 3], M[1, 7] = 1.0, -1.0
    M[2:4, :4], M[2:4, 4:] = A1[1:3], -A2[1:3]
    M[4:, :4], M[4:, 4:] = f1 * np.eye(4), f2 * np.eye(4)
    T = _frame_matrix(_full_to_local, theta, 4)
    out = np.zeros((4, 4))
    for j in range(4):
        rhs = np.zeros(8)
        rhs[4:] = T[:, j]
        x = _solve(M, rhs)
        out[:, j] = T.T @ (f1 * A1 @ x[:4] + f2 * A2 @ x[4:])
    return out


def laminate_residual_stress_exact(A1, A2, dP1, dP2, f1) -> np.ndarray:
    """Average stress ``A F + dP`` with zero average deformation increment."""
    f2 = 1.0 - f1
    M = np.zeros((8, 8))
    rhs = np.zeros(8)
    M[0, 0], M[0, 4] = 1.0, -1.0
    M[1, 3], M[1, 7] = 1.0, -1.0
    M[2:4, :4], M[2:4, 4:] = A1[1:3], -A2[1:3]
    rhs[2:4] = (dP2 - dP1)[1:3]
    M[4:, :4], M[4:, 4:] = f1 * np.eye(4), f2 * np.eye(4)
    x = _solve(M, rhs)
    return f1 * (A1 @ x[:4] + dP1) + f2 * (A2 @ x[4:] + dP2)


# ----------------------------------------------------------------- nonlinear drivers


def _small_scale(law) -> float:
    D = getattr(law, "elastic_compliance", None)
    if D is None:
        D = law.compliance
    return float(np.max(np.abs(np.linalg.inv(D))))


def _root(fun, x0, step, what):
    sol = optimize.root(fun, x0, method="hybr", options={"xtol": 1e-13, "maxfev": 4000})
    res = fun(sol.x)
    if not np.all(np.isfinite(res)) or np.max(np.abs(res)) > 1e-9:
        raise NewtonDivergence(f"{what}: interface solve failed", [float(np.max(np.abs(res)))], step)
    return sol.x


def laminate_plastic_driver(laws, f1, theta, path: LoadPath):
    """Integrate a small-strain two-layer laminate along ``path``.

    ``laws`` is a pair of small-strain laws (layer 1, layer 2).  Returns a dict
    with per-increment macro ``strain`` and ``stress`` arrays (global frame,
    Mandel) including the initial zero state.
    """
    if path.kind != SMALL:
        raise ValueError("small-strain path required")
    f2 = 1.0 - f1
    states = [laws[0].initial_state(), laws[1].initial_state()]
    scale = max(_small_scale(l) for l in laws)
    Tm = _frame_matrix(_sym_to_local, theta, 3)

    eps_g = np.zeros(3)
    sig_g = np.zeros(3)
    strains, stresses = [eps_g.copy()], [sig_g.copy()]
    guess = np.zeros(6)
    step_no = 0
    for step in path.steps:
        mask = step.strain_mask
        for target in increment_targets(step, eps_g, sig_g):
            step_no += 1

            def resid(x, commit=False):
                r1 = laws[0].evaluate(states[0], x[:3])
                r2 = laws[1].evaluate(states[1], x[3:])
                s1, s2 = r1.state.stress, r2.state.stress
                e_avg = Tm.T @ (f1 * r1.state.strain + f2 * r2.state.strain)
                s_avg = Tm.T @ (f1 * s1 + f2 * s2)
                macro = np.where(mask, e_avg - target, (s_avg - target) / scale)
                out = np.concatenate([[x[0] - x[3]], (s1 - s2)[1:] / scale, macro])
                if commit:
                    return out, (r1.state, r2.state), e_avg, s_avg
                return out

            x = _root(resid, guess, step_no, "plastic laminate")
            _, new_states, eps_g, sig_g = resid(x, commit=True)
            states = list(new_states)
            guess = x
            strains.append(eps_g.copy())
            stresses.append(sig_g.copy())
    return {"strain": np.array(strains), "stress": np.array(stresses), "states": states}


def laminate_finite_driver(laws, f1, theta, path: LoadPath):
    """Integrate a finite-strain two-layer laminate along ``path``.

    Returns per-increment macro ``F`` and ``P`` (global frame) including the
    undeformed start.
    """
    if path.kind != FINITE:
        raise ValueError("finite-strain path required")
    f2 = 1.0 - f1
    scale = max(float(np.max(np.abs(l.evaluate(np.array([1.0, 1.0, 0.0, 0.0]))[1]))) for l in laws)
    Tm = _frame_matrix(_full_to_local, theta, 4)

    F_g = np.array([1.0, 1.0, 0.0, 0.0])
    P_g = np.zeros(4)
    Fs, Ps = [F_g.copy()], [P_g.copy()]
    x = np.concatenate([F_g, F_g])
    step_no = 0
    for step in path.steps:
        mask = step.strain_mask
        for target in increment_targets(step, F_g, P_g):
            step_no += 1

            def resid(y, full=False):
                P1, _ = laws[0].evaluate(y[:4])
                P2, _ = laws[1].evaluate(y[4:])
                F_avg = Tm.T @ (f1 * y[:4] + f2 * y[4:])
                P_avg = Tm.T @ (f1 * P1 + f2 * P2)
                macro = np.where(mask, F_avg - target, (P_avg - target) / scale)
                out = np.concatenate([[y[0] - y[4], y[3] - y[7]], (P1 - P2)[1:3] / scale, macro])
                return (out, F_avg, P_avg) if full else out

            # predictor: shift both layers by the prescribed change
            dF = np.where(mask, target - F_g, 0.0)
            x0 = x + np.concatenate([Tm @ dF, Tm @ dF])
            x = _root(resid, x0, step_no, "finite laminate")
            _, F_g, P_g = resid(x, full=True)
            Fs.append(F_g.copy())
            Ps.append(P_g.copy())
    return {"F": np.array(Fs), "P": np.array(Ps)}
