"""Local constitutive laws evaluated at the active leaves.

Small-strain laws follow the contract ``evaluate(state, dstrain)`` and return
a :class:`SmallResponse` holding the stress increment, the tangent
compliance and the residual strain ``dstrain - D @ dstress``; the returned
state is a trial state that the caller commits on convergence.  Finite-strain
laws expose ``evaluate(F) -> (P, A)`` on ``(F11, F22, F12, F21)`` vectors.

Any object implementing the same methods can be used as a leaf law.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np

from .errors import InvertedElement, NonConvergence
from .tensor_core import SQRT2, isotropic_compliance

# ------------------------------------------------------------------ small strain


@dataclass(frozen=True)
class SmallState:
    """Committed state of one small-strain material point (material frame)."""

    strain: np.ndarray = field(default_factory=lambda: np.zeros(3))
    stress: np.ndarray = field(default_factory=lambda: np.zeros(3))
    stress33: float = 0.0
    plastic_strain: np.ndarray = field(default_factory=lambda: np.zeros(4))
    eqps: float = 0.0


@dataclass(frozen=True)
class SmallResponse:
    dstress: np.ndarray
    compliance: np.ndarray
    residual: np.ndarray
    state: SmallState


class SmallStrainLaw(Protocol):
    def initial_state(self) -> SmallState: ...

    def evaluate(self, state: SmallState, dstrain: np.ndarray) -> SmallResponse: ...


class ElasticLaw:
    """Linear elasticity given by a constant plane-strain compliance."""

    linear = True

    def __init__(self, compliance):
        self.compliance = np.array(compliance, dtype=float)
        self.stiffness = np.linalg.inv(self.compliance)

    @classmethod
    def isotropic(cls, E, nu):
        law = cls(isotropic_compliance(E, nu))
        law.E, law.nu = float(E), float(nu)
        return law

    def initial_state(self) -> SmallState:
        return SmallState()

    def evaluate(self, state: SmallState, dstrain) -> SmallResponse:
        dstrain = np.asarray(dstrain, dtype=float)
        dstress = self.stiffness @ dstrain
        new = replace(state, strain=state.strain + dstrain, stress=state.stress + dstress)
        return SmallResponse(dstress, self.compliance, np.zeros(3), new)


def elastic_evaluate(law: ElasticLaw, dstrain):
    """Return ``(dstress, D, residual)`` for a linear elastic law."""
    r = law.evaluate(law.initial_state(), dstrain)
    return r.dstress, r.compliance, r.residual


class HardeningTable:
    """Piecewise-linear yield stress ``a_k + h_k * eqps`` on ``[b_k, b_{k+1})``.

    ``yield_stress`` is left-continuous at breakpoints; plastic flow out of a
    breakpoint uses the right-hand limit, so an upward jump behaves as a
    corner where the stress can rise elastically.
    """

    def __init__(self, segments):
        segs = sorted((float(b), float(a), float(h)) for b, a, h in segments)
        if not segs or segs[0][0] != 0.0:
            raise ValueError("hardening table must start at eqps = 0")
        self.starts = np.array([s[0] for s in segs])
        self.intercepts = np.array([s[1] for s in segs])
        self.slopes = np.array([s[2] for s in segs])

    @property
    def initial_yield(self) -> float:
        return float(self.intercepts[0])

    def _seg(self, k, e):
        return self.intercepts[k] + self.slopes[k] * e

    def yield_stress(self, eqps: float) -> float:
        k = max(int(np.searchsorted(self.starts, eqps, side="left")) - 1, 0)
        return float(self._seg(k, eqps))

    def flow_stress(self, eqps: float) -> float:
        """Yield stress that must be exceeded for further plastic flow."""
        k = int(np.searchsorted(self.starts, eqps, side="right")) - 1
        return float(self._seg(k, eqps))

    def return_map(self, q_trial: float, eqps: float, three_g: float):
        """Solve ``q_trial - 3G dgamma in sigma_Y(eqps + dgamma)``.

        Returns ``(dgamma, H)`` with ``H`` the hardening slope active at the
        solution (``inf`` at a corner).
        """
        k = int(np.searchsorted(self.starts, eqps, side="right")) - 1
        n = len(self.starts)
        while k < n:
            a, h = self.intercepts[k], self.slopes[k]
            dg = (q_trial - a - h * eqps) / (three_g + h)
            hi = self.starts[k + 1] if k + 1 < n else np.inf
            if eqps + dg <= hi:
                return max(dg, 0.0), h
            dg_hi = hi - eqps
            if q_trial - three_g * dg_hi <= self._seg(k + 1, hi):
                return dg_hi, np.inf
            k += 1
        raise NonConvergence("return mapping ran past the hardening table")


# Mandel 4-vectors (11, 22, 33, sqrt2*12) for the plane-strain 3D stress state
_ONE4 = np.array([1.0, 1.0, 1.0, 0.0])
_IDEV4 = np.eye(4) - np.outer(_ONE4, _ONE4) / 3.0
_IP = [0, 1, 3]


class J2PlasticLaw:
    """Plane-strain von Mises plasticity with piecewise-linear isotropic hardening.

    The out-of-plane strain is held at zero and the out-of-plane stress is
    carried in the state; the network only sees the in-plane Mandel vector.
    """

    linear = False

    def __init__(self, E, nu, hardening: HardeningTable):
        self.E, self.nu = float(E), float(nu)
        self.G = E / (2.0 * (1.0 + nu))
        self.K = E / (3.0 * (1.0 - 2.0 * nu))
        self.hardening = hardening
        self.C4 = self.K * np.outer(_ONE4, _ONE4) + 2.0 * self.G * _IDEV4
        self.elastic_compliance = np.linalg.inv(self.C4[np.ix_(_IP, _IP)])

    def initial_state(self) -> SmallState:
        return SmallState()

    def _full_stress(self, state):
        s = state.stress
        return np.array([s[0], s[1], state.stress33, s[2]])

    def evaluate(self, state: SmallState, dstrain) -> SmallResponse:
        dstrain = np.asarray(dstrain, dtype=float)
        de4 = np.array([dstrain[0], dstrain[1], 0.0, dstrain[2]])
        sig_tr = self._full_stress(state) + self.C4 @ de4
        s = _IDEV4 @ sig_tr
        snorm = np.sqrt(s @ s)
        q_tr = np.sqrt(1.5) * snorm
        G = self.G
        if q_tr <= self.hardening.flow_stress(state.eqps) or snorm == 0.0:
            sig, C = sig_tr, self.C4
            dgamma, dep = 0.0, np.zeros(4)
        else:
            dgamma, H = self.hardening.return_map(q_tr, state.eqps, 3.0 * G)
            n = s / snorm
            dep = dgamma * np.sqrt(1.5) * n
            sig = sig_tr - 2.0 * G * dep
            inv_h = 0.0 if np.isinf(H) else 1.0 / (3.0 * G + H)
            C = (
                self.C4
                - (6.0 * G * G * dgamma / q_tr) * _IDEV4
                + 6.0 * G * G * (dgamma / q_tr - inv_h) * np.outer(n, n)
            )
        D = np.linalg.inv(C[np.ix_(_IP, _IP)])
        dstress = sig[_IP] - state.stress
        residual = dstrain - D @ dstress
        new = SmallState(
            strain=state.strain + dstrain,
            stress=sig[_IP],
            stress33=float(sig[2]),
            plastic_strain=state.plastic_strain + dep,
            eqps=state.eqps + dgamma,
        )
        return SmallResponse(dstress, D, residual, new)


def j2_evaluate(law: J2PlasticLaw, state: SmallState, dstrain):
    """Return ``(dstress, D_algorithmic, residual, trial_state)``."""
    r = law.evaluate(state, dstrain)
    return r.dstress, r.compliance, r.residual, r.state


def von_mises(state: SmallState) -> float:
    sig = np.array([state.stress[0], state.stress[1], state.stress33, state.stress[2]])
    s = _IDEV4 @ sig
    return float(np.sqrt(1.5 * s @ s))


# ------------------------------------------------------------------ finite strain

_F_INDEX = ((0, 0), (1, 1), (0, 1), (1, 0))


def vec_to_F(F4) -> np.ndarray:
    """``(F11, F22, F12, F21)`` -> 3x3 plane-strain deformation gradient."""
    F = np.eye(3)
    for n, (i, j) in enumerate(_F_INDEX):
        F[i, j] = F4[n]
    return F


def mat_to_vec(M) -> np.ndarray:
    return np.array([M[i, j] for i, j in _F_INDEX])


class FiniteStrainLaw(Protocol):
    def evaluate(self, F4) -> tuple[np.ndarray, np.ndarray]: ...


class MooneyRivlinLaw:
    """Compressible Mooney-Rivlin solid in plane strain.

    ``W = A (I-3) + B (II-3) + C (III^-2 - 1) + D (III-1)^2`` with ``I, II,
    III`` the invariants of ``C = F^T F`` (out-of-plane stretch fixed to 1).
    """

    def __init__(self, A, B, nu):
        if not (A > 0 and B > 0 and nu < 0.5):
            raise ValueError("Mooney-Rivlin needs A, B > 0 and nu < 0.5")
        self.A, self.B, self.nu = float(A), float(B), float(nu)
        self.C = 0.5 * A + B
        self.D = (A * (5.0 * nu - 2.0) + B * (11.0 * nu - 5.0)) / (2.0 * (1.0 - 2.0 * nu))

    @property
    def shear_modulus(self) -> float:
        return 2.0 * (self.A + self.B)

    def _check(self, F):
        J = np.linalg.det(F)
        if not J > 0.0:
            raise InvertedElement(f"det F = {J:.3e}")
        return J

    def energy(self, F4) -> float:
        F = vec_to_F(F4)
        self._check(F)
        Cg = F.T @ F
        I1 = np.trace(Cg)
        I2 = 0.5 * (I1 * I1 - np.trace(Cg @ Cg))
        I3 = np.linalg.det(Cg)
        return float(
            self.A * (I1 - 3) + self.B * (I2 - 3) + self.C * (I3**-2 - 1) + self.D * (I3 - 1) ** 2
        )

    def _second_pk(self, Cg):
        I1 = np.trace(Cg)
        I3 = np.linalg.det(Cg)
        Ci = np.linalg.inv(Cg)
        g1 = -2.0 * self.C * I3**-3 + 2.0 * self.D * (I3 - 1.0)
        g2 = 6.0 * self.C * I3**-4 + 2.0 * self.D
        eye = np.eye(3)
        S = 2.0 * (self.A * eye + self.B * (I1 * eye - Cg) + g1 * I3 * Ci)
        return S, Ci, I3, g1, g2

    def evaluate(self, F4):
        """First Piola-Kirchhoff stress and first elasticity tensor (4-vector form)."""
        F = vec_to_F(F4)
        self._check(F)
        Cg = F.T @ F
        S, Ci, I3, g1, g2 = self._second_pk(Cg)
        P = F @ S

        eye = np.eye(3)
        ii = np.einsum("ij,kl->ijkl", eye, eye)
        i4s = 0.5 * (np.einsum("ik,jl->ijkl", eye, eye) + np.einsum("il,jk->ijkl", eye, eye))
        cc = np.einsum("ij,kl->ijkl", Ci, Ci)
        codot = 0.5 * (np.einsum("ik,jl->ijkl", Ci, Ci) + np.einsum("il,jk->ijkl", Ci, Ci))
        d2W = (
            self.B * (ii - i4s)
            + g2 * I3 * I3 * cc
            + g1 * I3 * (cc - codot)
        )
        Cse = 4.0 * d2W
        A4 = np.einsum("jnpl,in,kp->ijkl", Cse, F, F) + np.einsum("jl,ik->ijkl", S, eye)
        A = np.empty((4, 4))
        for a, (i, j) in enumerate(_F_INDEX):
            for b, (k, l) in enumerate(_F_INDEX):
                A[a, b] = A4[i, j, k, l]
        return mat_to_vec(P), 0.5 * (A + A.T)


def mooney_rivlin_evaluate(law: MooneyRivlinLaw, F4):
    return law.evaluate(F4)


def green_strain(F4) -> np.ndarray:
    """In-plane Green strain ``(E11, E22, E12)`` of a deformation 4-vector."""
    F = vec_to_F(F4)[:2, :2]
    E = 0.5 * (F.T @ F - np.eye(2))
    return np.array([E[0, 0], E[1, 1], E[0, 1]])


# ------------------------------------------------------------------ registry

REFERENCE_HARDENING = ((0.0, 0.1, 5.0), (0.008, 0.14, 2.0))


def make_reference_materials() -> dict:
    """Named laws used in the extrapolation experiments (GPa / MPa)."""
    return {
        "p2-plastic": J2PlasticLaw(100.0, 0.3, HardeningTable(REFERENCE_HARDENING)),
        "p2-elastic": ElasticLaw.isotropic(100.0, 0.3),
        "p1-hard": ElasticLaw.isotropic(500.0, 0.19),
        "p1-soft": ElasticLaw.isotropic(1.0, 0.19),
        "p2-mr": MooneyRivlinLaw(100.0, 50.0, 0.49),
        "p1-mr-hard": MooneyRivlinLaw(1000.0, 500.0, 0.49),
        "p1-mr-soft": MooneyRivlinLaw(10.0, 5.0, 0.49),
    }


def is_finite_law(law) -> bool:
    return isinstance(law, MooneyRivlinLaw) or getattr(law, "finite_strain", False)


__all__ = [
    "SQRT2",
    "ElasticLaw",
    "HardeningTable",
    "J2PlasticLaw",
    "MooneyRivlinLaw",
    "SmallResponse",
    "SmallState",
    "elastic_evaluate",
    "green_strain",
    "j2_evaluate",
    "make_reference_materials",
    "mooney_rivlin_evaluate",
    "von_mises",
]
