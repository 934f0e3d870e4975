"""LTI plant container, closed-loop algebra, Lyapunov solving and
realizability (PBH) tests.

The plant is the five-matrix realization

    dx = A x dt + B1 u dt + B2 dw,      z = C x + D u,

with derived cost weights ``Q = CᵀC`` and ``R = DᵀD``.  Feedback gains are
plain ``(m, n)`` arrays with the negative-feedback convention ``u = -K x``;
disturbance gains are ``(q_w, n)`` arrays with ``w = L x``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import matops
from .errors import NumericalError

HURWITZ_EPS = 1e-9
FEEDTHROUGH_ORTH_TOL = 1e-8
_RANK_TOL = 1e-8


@dataclass(frozen=True)
class LtiPlant:
    """State-space realization with a control and a disturbance channel."""

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in ("A", "B1", "B2", "C", "D"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        if self.B1.shape[0] != n or self.B2.shape[0] != n:
            raise ValueError("B1/B2 row count must match the state dimension")
        if self.C.shape[1] != n:
            raise ValueError("C column count must match the state dimension")
        if self.D.shape != (self.C.shape[0], self.B1.shape[1]):
            raise ValueError("D must be (output x control)-shaped")
        for name in ("A", "B1", "B2", "C", "D"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite entries")
        cross = self.D.T @ self.C
        scale = 1.0 + np.abs(self.D).max() * np.abs(self.C).max()
        if np.abs(cross).max() > FEEDTHROUGH_ORTH_TOL * scale:
            warnings.warn(
                "DᵀC is not (numerically) zero; the cost has a state/control "
                "cross term that the solvers ignore",
                UserWarning,
                stacklevel=2,
            )

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B1.shape[1]

    @property
    def qw(self) -> int:
        return self.B2.shape[1]

    @property
    def rz(self) -> int:
        return self.C.shape[0]

    @property
    def Q(self) -> np.ndarray:
        return self.C.T @ self.C

    @property
    def R(self) -> np.ndarray:
        return self.D.T @ self.D

    def to_dict(self) -> dict:
        return {name: getattr(self, name).tolist() for name in ("A", "B1", "B2", "C", "D")}

    @classmethod
    def from_dict(cls, data: dict) -> "LtiPlant":
        return cls(**{name: np.asarray(data[name], dtype=float) for name in ("A", "B1", "B2", "C", "D")})

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "LtiPlant":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class AdmissibilityReport:
    """Stability and disturbance-attenuation verdict for one gain."""

    spectral_abscissa: float
    hinf_norm: float
    gamma: float
    admissible: bool


@dataclass(frozen=True)
class RealizabilityReport:
    """PBH test results for the plant's structural assumptions."""

    stabilizable: bool
    detectable: bool
    observable: bool
    stabilizable_margin: float
    detectable_margin: float
    observable_margin: float

    def to_dict(self) -> dict:
        return {
            "stabilizable": self.stabilizable,
            "detectable": self.detectable,
            "observable": self.observable,
            "stabilizable_margin": self.stabilizable_margin,
            "detectable_margin": self.detectable_margin,
            "observable_margin": self.observable_margin,
        }


def spectral_abscissa(a: np.ndarray) -> float:
    """Largest real part over the eigenvalues of ``a``."""
    return float(np.max(np.linalg.eigvals(np.atleast_2d(a)).real))


def is_hurwitz(a: np.ndarray, eps: float = HURWITZ_EPS) -> bool:
    return spectral_abscissa(a) < -eps


def _as_gain(k, rows: int, cols: int, name: str = "K") -> np.ndarray:
    k = np.atleast_2d(np.asarray(k, dtype=float))
    if k.shape != (rows, cols):
        raise ValueError(f"{name} must have shape ({rows}, {cols}), got {k.shape}")
    if not np.all(np.isfinite(k)):
        raise ValueError(f"{name} contains non-finite entries")
    return k


def closed_loop(plant: LtiPlant, k) -> LtiPlant:
    """Close the loop ``u = -K x``: realization (A - B1 K, 0, B2, C - D K, 0)."""
    k = _as_gain(k, plant.m, plant.n)
    return LtiPlant(
        A=plant.A - plant.B1 @ k,
        B1=np.zeros_like(plant.B1),
        B2=plant.B2,
        C=plant.C - plant.D @ k,
        D=np.zeros_like(plant.D),
    )


def transfer_value(plant: LtiPlant, omega: float) -> np.ndarray:
    """Disturbance-to-output transfer matrix ``C (jωI - A)⁻¹ B2``.

    The plant's own ``A`` and ``C`` are used, so pass a closed-loop
    realization (see :func:`closed_loop`) to evaluate ``T_zw(K)``.
    """
    s = 1j * float(omega)
    eigs = np.linalg.eigvals(plant.A)
    if np.min(np.abs(s - eigs)) < 1e-12 * (1.0 + abs(omega)):
        raise NumericalError(f"resolvent singular: jω={s} is an eigenvalue of A")
    return plant.C @ np.linalg.solve(s * np.eye(plant.n) - plant.A, plant.B2)


def solve_lyapunov(acl: np.ndarray, qrhs: np.ndarray) -> np.ndarray:
    """Solve ``Aᵀ X + X A + Q = 0`` for Hurwitz ``A`` via the Kronecker system.

    Returns the symmetric solution; raises :class:`NumericalError` when ``A``
    is not Hurwitz or the Kronecker system is near singular.
    """
    acl = np.atleast_2d(np.asarray(acl, dtype=float))
    qrhs = np.atleast_2d(np.asarray(qrhs, dtype=float))
    n = acl.shape[0]
    if qrhs.shape != (n, n):
        raise ValueError("Qrhs must match the state dimension")
    if np.max(np.abs(qrhs - qrhs.T)) > matops.SYM_TOL * (1.0 + np.abs(qrhs).max()):
        raise ValueError("Qrhs must be symmetric")
    if not is_hurwitz(acl):
        raise NumericalError(
            f"Lyapunov solve requires a Hurwitz matrix (abscissa={spectral_abscissa(acl):.3e})"
        )
    lhs = matops.kron(np.eye(n), acl.T) + matops.kron(acl.T, np.eye(n))
    cond = np.linalg.cond(lhs)
    if not np.isfinite(cond) or cond > 1e13:
        raise NumericalError(f"Kronecker Lyapunov system near singular (cond={cond:.3e})")
    x = matops.mat(np.linalg.solve(lhs, -matops.vec(qrhs)), n, n)
    x = 0.5 * (x + x.T)
    residual = np.linalg.norm(acl.T @ x + x @ acl + qrhs, "fro")
    if residual > 1e-10 * (1.0 + np.linalg.norm(x, "fro")):
        raise NumericalError(f"Lyapunov residual too large ({residual:.3e})")
    return x


def _pbh_margin(a: np.ndarray, other: np.ndarray, eigs, stacked: bool) -> tuple[bool, float]:
    """Smallest PBH singular value over the tested eigenvalues."""
    n = a.shape[0]
    margin = np.inf
    ok = True
    for lam in eigs:
        if stacked:
            pencil = np.vstack([lam * np.eye(n) - a, other])
        else:
            pencil = np.hstack([lam * np.eye(n) - a, other])
        smin = np.linalg.svd(pencil, compute_uv=False)[-1]
        margin = min(margin, float(smin))
        if smin <= _RANK_TOL * max(1.0, np.abs(pencil).max()):
            ok = False
    return ok, margin


def sqrtm_psd(q: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigen-decomposition."""
    w, v = np.linalg.eigh(np.atleast_2d(np.asarray(q, dtype=float)))
    w = np.clip(w, 0.0, None)
    return v @ np.diag(np.sqrt(w)) @ v.T


def check_realizability(plant: LtiPlant) -> RealizabilityReport:
    """PBH tests: stabilizable (A, B1), detectable (√Q, A), observable (C, A).

    Stabilizability is tested only at eigenvalues with ``Re λ >= -ε``,
    detectability dually; observability at every eigenvalue.
    """
    eigs = np.linalg.eigvals(plant.A)
    unstable = [lam for lam in eigs if lam.real >= -HURWITZ_EPS]
    stab, stab_margin = _pbh_margin(plant.A, plant.B1, unstable, stacked=False)
    sqrt_q = sqrtm_psd(plant.Q)
    det, det_margin = _pbh_margin(plant.A, sqrt_q, unstable, stacked=True)
    obs, obs_margin = _pbh_margin(plant.A, plant.C, eigs, stacked=True)
    return RealizabilityReport(
        stabilizable=stab,
        detectable=det,
        observable=obs,
        stabilizable_margin=stab_margin,
        detectable_margin=det_margin,
        observable_margin=obs_margin,
    )


def controllable_staircase(a: np.ndarray, b: np.ndarray):
    """Orthogonal decomposition into controllable/uncontrollable parts.

    Returns ``(abar, bbar, transform, controllable_dim)`` where
    ``abar = Mᵀ A M`` is block upper-triangular with the controllable block in
    the top-left, ``bbar = Mᵀ B`` and ``M`` is orthogonal.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    n = a.shape[0]
    krylov = [b]
    for _ in range(n - 1):
        krylov.append(a @ krylov[-1])
    ctrb = np.hstack(krylov)
    u, s, _ = np.linalg.svd(ctrb)
    if s.size == 0 or s[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(s > s[0] * max(ctrb.shape) * np.finfo(float).eps * 10))
    abar = u.T @ a @ u
    bbar = u.T @ b
    return abar, bbar, u, rank
