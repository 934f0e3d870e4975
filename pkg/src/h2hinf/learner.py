"""Model-free recovery of the game-value iterates from trajectory data.

Derivation of the regression (pinned by the noise-free equivalence tests)
--------------------------------------------------------------------------
For a gain pair (K, L) with A_cl = A - B1 K + B2 L Hurwitz, the iterate value
P solves the frozen-gain equation

    A_clᵀ P + P A_cl + Q + KᵀRK - γ² LᵀL = 0.                       (*)

Along any trajectory of dx = (A x + B1 u) dt + B2 dw (u is whatever input was
actually applied), Ito's rule gives

    d(xᵀPx) = xᵀ(AᵀP + PA) x dt + 2 xᵀ P B1 u dt + 2 xᵀ P B2 dw
              + tr(B2ᵀ P B2) dt.

Substituting A = A_cl + B1 K - B2 L and eliminating A_clᵀP + PA_cl with (*):

    xᵀ(AᵀP + PA) x = -xᵀ Q̄ x + 2 xᵀ P B1 K x - 2 xᵀ P B2 L x,
    Q̄ = Q + KᵀRK - γ² LᵀL,

so integrating over a window [t_k, t_{k+1}]:

    xᵀPx |Δ = -∫ xᵀ Q̄ x dt + 2 ∫ (u + K x)ᵀ (B1ᵀP) x dt
              - 2 ∫ xᵀ P B2 L x dt + tr(B2ᵀPB2) Δt + martingale noise.

The unknowns θ = [svec(P); vec(B1ᵀP); tr(B2ᵀPB2)] enter linearly; B2 and L
are known, B1 is never needed (the gain update uses the learned B1ᵀP block).
With noise off the relation is exact to quadrature order, which pins every
sign and factor above.  The martingale term is zero-mean, so the least-squares
solution converges as the number of windows grows.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from . import lti, matops, simsde
from .errors import NumericalError

CONDITION_WARN = 1e12


@dataclass
class LearnerConfig:
    """Iteration bounds and regularization for the data-driven solver."""

    gamma: float
    max_outer: int = 20
    max_inner: int = 30
    tol: float = 1e-9
    ridge: float = 0.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration counts must be at least 1")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")


@dataclass
class LearnedIterate:
    """Least-squares estimate of one (p, q) iterate."""

    P_hat: np.ndarray
    B1tP_hat: np.ndarray
    trace_hat: float
    lsq_residual: float
    condition: float
    ill_conditioned: bool = False


@dataclass
class RobustGainsResult:
    """Final learned gains plus the per-iterate error history.

    ``history`` holds one record per (p, q) solve; ``outer_history`` holds
    one record per outer step with the error of the gain that step produced.
    """

    K_hat: np.ndarray
    L_hat: np.ndarray
    P_hat: np.ndarray
    history: list = field(default_factory=list)
    outer_history: list = field(default_factory=list)
    converged: bool = False


def solve_iterate(
    batch: simsde.RegressionBatch,
    k_gain,
    l_gain,
    gamma: float,
    qmat: np.ndarray,
    rmat: np.ndarray,
    b2: np.ndarray,
    ridge: float = 0.0,
) -> LearnedIterate:
    """Least-squares solve of the value regression at the gains ``(K, L)``.

    The batch's raw moment integrals are re-assembled for the requested
    gains, so one batch serves every (p, q) iterate.
    """
    n = batch.n
    m = batch.m
    k_gain = lti._as_gain(k_gain, m, n)
    l_gain = lti._as_gain(l_gain, np.atleast_2d(b2).shape[1], n, name="L")
    qbar = qmat + k_gain.T @ rmat @ k_gain - gamma**2 * (l_gain.T @ l_gain)
    theta, rhs, _, _ = simsde.assemble_regressor(
        batch.delta_quad,
        batch.ixx_raw,
        batch.ixu_raw,
        batch.delta_t,
        k_gain,
        l_gain,
        qbar,
        np.atleast_2d(np.asarray(b2, dtype=float)),
    )
    needed = simsde.unknown_count(n, m)
    sing = np.linalg.svd(theta, compute_uv=False)
    if sing.size < needed or sing[needed - 1] <= sing[0] * max(theta.shape) * np.finfo(float).eps:
        raise NumericalError(
            f"value regression is rank deficient ({int(np.sum(sing > sing[0] * 1e-12))}/{needed})"
        )
    condition = float(sing[0] / sing[needed - 1])
    ill = condition > CONDITION_WARN
    if ill:
        warnings.warn(f"value regression condition {condition:.3e} exceeds 1e12", UserWarning)
    if ridge > 0.0:
        theta_solve = np.vstack([theta, np.sqrt(ridge) * np.eye(needed)])
        rhs_solve = np.concatenate([rhs, np.zeros(needed)])
    else:
        theta_solve, rhs_solve = theta, rhs
    sol, _, _, _ = scipy.linalg.lstsq(theta_solve, rhs_solve, lapack_driver="gelsy")
    n1 = n * (n + 1) // 2
    p_hat = matops.smat(sol[:n1])
    p_hat = 0.5 * (p_hat + p_hat.T)
    b1tp = matops.mat(sol[n1 : n1 + m * n], m, n)
    residual = float(np.linalg.norm(theta @ sol - rhs))
    return LearnedIterate(
        P_hat=p_hat,
        B1tP_hat=b1tp,
        trace_hat=float(sol[-1]),
        lsq_residual=residual,
        condition=condition,
        ill_conditioned=ill,
    )


def robust_gains(
    batch: simsde.RegressionBatch,
    config: LearnerConfig,
    k1,
    qmat: np.ndarray,
    rmat: np.ndarray,
    b2: np.ndarray,
    reference: tuple | None = None,
) -> RobustGainsResult:
    """Double-loop data-driven iteration mirroring the model-based solver.

    The disturbance gain starts at zero and is carried across outer steps;
    the control gain update uses the *learned* B1ᵀP block.  When
    ``reference=(P_star, K_star)`` is supplied the history records relative
    errors against it.
    """
    b2 = np.atleast_2d(np.asarray(b2, dtype=float))
    n = batch.n
    m = batch.m
    k = lti._as_gain(k1, m, n)
    l = np.zeros((b2.shape[1], n))
    gamma = config.gamma
    p_star = k_star = None
    if reference is not None:
        p_star, k_star = (np.atleast_2d(np.asarray(x, dtype=float)) for x in reference)

    history = []
    outer_history = []
    it = None
    converged = False
    for outer in range(1, config.max_outer + 1):
        p_prev_inner = None
        for inner in range(1, config.max_inner + 1):
            try:
                it = solve_iterate(batch, k, l, gamma, qmat, rmat, b2, ridge=config.ridge)
            except NumericalError as exc:
                raise NumericalError(f"{exc} at iterate (p={outer}, q={inner})") from exc
            l_new = b2.T @ it.P_hat / gamma**2
            record = {
                "p": outer,
                "q": inner,
                "residual": it.lsq_residual,
                "condition": it.condition,
            }
            if p_star is not None:
                record["rel_err_P"] = float(
                    np.linalg.norm(it.P_hat - p_star, "fro") / np.linalg.norm(p_star, "fro")
                )
                record["rel_err_K"] = float(
                    np.linalg.norm(k - k_star, "fro") / np.linalg.norm(k_star, "fro")
                )
            history.append(record)
            if p_prev_inner is not None:
                dp = np.linalg.norm(it.P_hat - p_prev_inner, "fro") / (
                    1.0 + np.linalg.norm(it.P_hat, "fro")
                )
                if dp <= config.tol:
                    l = l_new
                    break
            p_prev_inner = it.P_hat
            l = l_new
        k_new = np.linalg.solve(rmat, it.B1tP_hat)
        outer_record = {"p": outer}
        if p_star is not None:
            outer_record["rel_err_P"] = float(
                np.linalg.norm(it.P_hat - p_star, "fro") / np.linalg.norm(p_star, "fro")
            )
            outer_record["rel_err_K"] = float(
                np.linalg.norm(k_new - k_star, "fro") / np.linalg.norm(k_star, "fro")
            )
        outer_history.append(outer_record)
        dk = np.linalg.norm(k_new - k, "fro") / (1.0 + np.linalg.norm(k, "fro"))
        k = k_new
        if dk <= config.tol:
            converged = True
            break
    return RobustGainsResult(
        K_hat=k,
        L_hat=b2.T @ it.P_hat / gamma**2,
        P_hat=it.P_hat,
        history=history,
        outer_history=outer_history,
        converged=converged,
    )


def apply_policy(
    plant: lti.LtiPlant,
    k_hat,
    l_hat,
    config: simsde.SimConfig,
    inject_worst_case: bool = False,
):
    """Closed-loop run under the learned control (and optional worst case).

    The learned disturbance policy is only *injected* into the dynamics when
    ``inject_worst_case`` is set; by default it is used for evaluation alone.
    Returns ``(trajectory, metrics)`` with settling time, overshoot and a
    quadratic regulation-cost estimate.
    """
    k_hat = lti._as_gain(k_hat, plant.m, plant.n)
    l_hat = lti._as_gain(l_hat, plant.qw, plant.n, name="L")
    sim_plant = plant
    if inject_worst_case:
        sim_plant = lti.LtiPlant(
            A=plant.A + plant.B2 @ l_hat,
            B1=plant.B1,
            B2=plant.B2,
            C=plant.C,
            D=plant.D,
        )
    run_cfg = replace(config, exploration=[])
    traj = simsde.simulate(sim_plant, k_hat, run_cfg)

    norms = np.linalg.norm(traj.states, axis=1)
    x0_norm = norms[0]
    metrics = {"final_norm": float(norms[-1])}
    if x0_norm > 0:
        band = 0.02 * x0_norm
        outside = np.nonzero(norms > band)[0]
        if outside.size == 0:
            metrics["settling_time"] = 0.0
        elif outside[-1] + 1 >= norms.size:
            metrics["settling_time"] = float("inf")   # never entered the band
        else:
            metrics["settling_time"] = float(traj.times[outside[-1] + 1])
        metrics["overshoot"] = float(max(norms.max() / x0_norm - 1.0, 0.0))
    dt = traj.dt
    x = traj.states[:-1]
    u = traj.inputs[:-1]
    cost = np.einsum("ki,ij,kj->", x, plant.Q, x) * dt + np.einsum("ki,ij,kj->", u, plant.R, u) * dt
    if inject_worst_case:
        w = x @ l_hat.T
        metrics["disturbance_energy"] = float(np.einsum("ki,ki->", w, w) * dt)
    metrics["quadratic_cost"] = float(cost)
    return traj, metrics
