"""Model-based game-value solvers used as ground truth for the learner.

The stationary value matrix of the soft-constrained LQ zero-sum game solves

    P A + Aᵀ P - P (B1 R⁻¹ B1ᵀ - γ⁻² B2 B2ᵀ) P + Q = 0            (GARE)

with saddle-point policies ``u* = -R⁻¹ B1ᵀ P x`` and ``w* = γ⁻² B2ᵀ P x``.
Two independent routes are provided:

* :func:`solve_game` — the double-loop policy/disturbance iteration.  The
  inner loop holds the control gain ``K`` fixed and alternates between
  solving the *linear* Lyapunov-type equation

      A_clᵀ P + P A_cl + Q + Kᵀ R K - γ² Lᵀ L = 0,   A_cl = A - B1 K + B2 L,

  and refreshing ``L = γ⁻² B2ᵀ P``; the outer loop refreshes
  ``K = R⁻¹ B1ᵀ P``.  Substituting the fixed point back into the GARE forces
  the ``-γ² LᵀL`` disturbance term above (a ``-γ⁻² LᵀL`` variant does not
  reproduce the scalar closed form; see the unit tests).

* :func:`solve_gare_spectral` — a direct Hamiltonian invariant-subspace
  solution kept as a cross-check oracle.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import lti, matops
from .errors import NumericalError

DEFAULT_TOL = 1e-9
DEFAULT_MAX_OUTER = 20
DEFAULT_MAX_INNER = 30


@dataclass(frozen=True)
class GameIterate:
    """One (p, q)-indexed step of the double-loop iteration."""

    p: int
    q: int
    P: np.ndarray
    K: np.ndarray
    L: np.ndarray


@dataclass
class GareSolution:
    """Converged value matrix and saddle-point gains for one γ."""

    P: np.ndarray
    K_star: np.ndarray
    L_star: np.ndarray
    gamma: float
    residual: float
    converged: bool = True
    history: list = field(default_factory=list)


def riccati_residual(plant: lti.LtiPlant, p: np.ndarray, gamma: float) -> float:
    """Frobenius norm of the GARE left-hand side at ``P``."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if np.max(np.abs(p - p.T)) > matops.SYM_TOL * (1.0 + np.abs(p).max()):
        raise ValueError("P must be symmetric")
    s = plant.B1 @ np.linalg.solve(plant.R, plant.B1.T) - (plant.B2 @ plant.B2.T) / gamma**2
    lhs = p @ plant.A + plant.A.T @ p - p @ s @ p + plant.Q
    return float(np.linalg.norm(lhs, "fro"))


def closed_loop_matrix(plant: lti.LtiPlant, k, l) -> np.ndarray:
    """Two-player closed-loop transition matrix ``A - B1 K + B2 L``."""
    k = lti._as_gain(k, plant.m, plant.n)
    l = lti._as_gain(l, plant.qw, plant.n, name="L")
    return plant.A - plant.B1 @ k + plant.B2 @ l


def inner_iteration(plant: lti.LtiPlant, k, l, gamma: float) -> np.ndarray:
    """Value matrix of the frozen-gain pair ``(K, L)``.

    Solves ``A_clᵀ P + P A_cl + Q + KᵀRK - γ² LᵀL = 0`` with
    ``A_cl = A - B1 K + B2 L``; raises when the iterate left the admissible
    region (``A_cl`` not Hurwitz).
    """
    k = lti._as_gain(k, plant.m, plant.n)
    l = lti._as_gain(l, plant.qw, plant.n, name="L")
    acl = closed_loop_matrix(plant, k, l)
    if not lti.is_hurwitz(acl):
        raise NumericalError(
            f"iterate left the admissible region: A - B1 K + B2 L has "
            f"abscissa {lti.spectral_abscissa(acl):.3e}"
        )
    qrhs = plant.Q + k.T @ plant.R @ k - gamma**2 * (l.T @ l)
    return lti.solve_lyapunov(acl, qrhs)


def solve_gare_spectral(plant: lti.LtiPlant, gamma: float | None = None) -> np.ndarray:
    """Direct GARE solution from the stable Hamiltonian invariant subspace.

    ``gamma=None`` drops the disturbance term, giving the standard LQR
    Riccati solution.  Used as a cross-check oracle for :func:`solve_game`.
    """
    s = plant.B1 @ np.linalg.solve(plant.R, plant.B1.T)
    if gamma is not None:
        s = s - (plant.B2 @ plant.B2.T) / float(gamma) ** 2
    return solve_care_spectral(plant.A, None, plant.Q, None, s_matrix=s)


def solve_care_spectral(a, b, q, r, s_matrix=None) -> np.ndarray:
    """Solve ``AᵀP + PA - P S P + Q = 0`` via an ordered Schur decomposition.

    ``S`` defaults to ``B R⁻¹ Bᵀ``; pass ``s_matrix`` to override (used by
    the game solver where S carries the γ⁻² disturbance correction).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n = a.shape[0]
    if s_matrix is None:
        b = np.atleast_2d(np.asarray(b, dtype=float))
        r = np.atleast_2d(np.asarray(r, dtype=float))
        s_matrix = b @ np.linalg.solve(r, b.T)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    ham = np.block([[a, -s_matrix], [-q, -a.T]])
    _, z, sdim = scipy.linalg.schur(ham, sort="lhp")
    if sdim != n:
        raise NumericalError(
            f"Hamiltonian has {sdim} stable eigenvalues, expected {n}; "
            "no stabilizing Riccati solution"
        )
    u11 = z[:n, :n]
    u21 = z[n:, :n]
    if np.linalg.cond(u11) > 1e12:
        raise NumericalError("stable invariant subspace is close to singular")
    p = u21 @ np.linalg.inv(u11)
    return 0.5 * (p + p.T)


def solve_game(
    plant: lti.LtiPlant,
    gamma: float,
    k1,
    max_outer: int = DEFAULT_MAX_OUTER,
    max_inner: int = DEFAULT_MAX_INNER,
    tol: float = DEFAULT_TOL,
    check_hinf: bool = True,
    keep_history: bool = False,
) -> GareSolution:
    """Double-loop iteration from an admissible initial gain ``k1``.

    The disturbance gain starts at zero and is carried across outer steps;
    the inner loop stops on a relative ``ΔP`` below ``tol`` and the outer
    loop on a relative ``ΔK`` below ``tol``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    k1 = lti._as_gain(k1, plant.m, plant.n)
    if not lti.is_hurwitz(plant.A - plant.B1 @ k1):
        raise ValueError("K1 is not admissible: A - B1 K1 is not Hurwitz")
    if check_hinf:
        from .hinf import hinf_norm  # deferred: hinf imports this module

        norm = hinf_norm(plant, k1).norm
        if norm >= gamma:
            raise ValueError(
                f"K1 is not admissible: closed-loop norm {norm:.6g} >= gamma {gamma:g}"
            )

    k = k1.copy()
    l = np.zeros((plant.qw, plant.n))
    p = None
    history: list[GameIterate] = []
    converged = False
    for outer in range(1, max_outer + 1):
        p_prev_inner = None
        for inner in range(1, max_inner + 1):
            try:
                p = inner_iteration(plant, k, l, gamma)
            except NumericalError as exc:
                raise NumericalError(
                    f"{exc} at iterate (p={outer}, q={inner}) with "
                    f"K={k.tolist()} L={l.tolist()}"
                ) from exc
            l_new = plant.B2.T @ p / gamma**2
            if keep_history:
                history.append(GameIterate(p=outer, q=inner, P=p.copy(), K=k.copy(), L=l_new.copy()))
            if p_prev_inner is not None:
                dp = np.linalg.norm(p - p_prev_inner, "fro") / (1.0 + np.linalg.norm(p, "fro"))
                if dp <= tol:
                    l = l_new
                    break
            p_prev_inner = p
            l = l_new
        k_new = np.linalg.solve(plant.R, plant.B1.T @ p)
        dk = np.linalg.norm(k_new - k, "fro") / (1.0 + np.linalg.norm(k, "fro"))
        k = k_new
        if dk <= tol:
            converged = True
            break
    if not converged:
        warnings.warn("solve_game hit the outer iteration cap before tol", UserWarning)

    residual = riccati_residual(plant, p, gamma)
    a_gamma = plant.A - (
        plant.B1 @ np.linalg.solve(plant.R, plant.B1.T) - (plant.B2 @ plant.B2.T) / gamma**2
    ) @ p
    if not lti.is_hurwitz(a_gamma, eps=0.0):
        raise NumericalError("converged P does not make the game closed loop Hurwitz")
    return GareSolution(
        P=p,
        K_star=k,
        L_star=plant.B2.T @ p / gamma**2,
        gamma=float(gamma),
        residual=residual,
        converged=converged,
        history=history,
    )


def game_cost_trace(plant: lti.LtiPlant, p: np.ndarray) -> float:
    """Steady-state game cost ``trace(P B2 B2ᵀ)``."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if np.max(np.abs(p - p.T)) > matops.SYM_TOL * (1.0 + np.abs(p).max()):
        raise ValueError("P must be symmetric")
    return float(np.trace(p @ plant.B2 @ plant.B2.T))


def fixed_gain_value(plant: lti.LtiPlant, k, gamma: float, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Value matrix of a frozen control gain under worst-case disturbance.

    Iterates the inner loop to its fixed point, i.e. solves the GARE with
    ``K`` held fixed.  Divergence means ``K`` is not admissible for γ.
    """
    k = lti._as_gain(k, plant.m, plant.n)
    l = np.zeros((plant.qw, plant.n))
    p_prev = None
    for _ in range(max_iter):
        p = inner_iteration(plant, k, l, gamma)
        l = plant.B2.T @ p / gamma**2
        if p_prev is not None:
            if np.linalg.norm(p - p_prev, "fro") <= tol * (1.0 + np.linalg.norm(p, "fro")):
                return p
        p_prev = p
    raise NumericalError("fixed-gain value iteration did not converge; K may be inadmissible")


def policy_gradient(plant: lti.LtiPlant, k, gamma: float) -> np.ndarray:
    """Gradient of ``trace(P_γ B2 B2ᵀ)`` with respect to the control gain.

    ``∇J = 2 (R K - B1ᵀ P_γ) Λ_γ`` where ``Λ_γ`` solves the closed-loop
    controllability-Gramian Lyapunov equation of the worst-case loop.
    """
    k = lti._as_gain(k, plant.m, plant.n)
    if not lti.is_hurwitz(plant.A - plant.B1 @ k):
        raise NumericalError("policy_gradient requires a stabilizing gain")
    p = fixed_gain_value(plant, k, gamma)
    a_worst = plant.A - plant.B1 @ k + (plant.B2 @ plant.B2.T @ p) / gamma**2
    lam = lti.solve_lyapunov(a_worst.T, plant.B2 @ plant.B2.T)
    return 2.0 * (plant.R @ k - plant.B1.T @ p) @ lam
