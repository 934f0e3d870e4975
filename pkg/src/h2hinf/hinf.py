"""Closed-loop H-infinity norm computation and admissible-gain search.

The norm estimator brackets the peak singular value of the closed-loop
disturbance-to-output transfer matrix with a two-step scheme: a candidate
level ``γ = (1 + 2η) γ_lb`` is certified by the imaginary-axis eigenvalues of
the closed-loop Hamiltonian; when the certificate fails, the crossing
frequencies are refined into a larger lower bound by sampling the transfer
matrix at the midpoints between consecutive crossings.  The returned value
is within ``η`` relative of the true norm.

The Hamiltonian block signs follow the convention that makes the scalar case
``a=-1, b2=c=1`` produce eigenvalues ``λ² = a² - γ⁻² b² c²`` (imaginary
exactly when γ is below the norm), pinned by the unit tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gare, lti
from .errors import NumericalError

IMAG_EPS = 1e-7
DEFAULT_ETA = 1e-3
MAX_NORM_ITER = 100


def hamiltonian(plant: lti.LtiPlant, k, gamma: float) -> np.ndarray:
    """Closed-loop Hamiltonian matrix for the pair ``(γ, K)``.

    H = [[A - B1 K,             γ⁻¹ B2 B2ᵀ],
         [-γ⁻¹ (CᵀC + Kᵀ R K),  -(A - B1 K)ᵀ]]   with R = DᵀD.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    k = lti._as_gain(k, plant.m, plant.n)
    acl = plant.A - plant.B1 @ k
    top_right = (plant.B2 @ plant.B2.T) / gamma
    bottom_left = -(plant.Q + k.T @ plant.R @ k) / gamma
    return np.block([[acl, top_right], [bottom_left, -acl.T]])


def has_imaginary_eig(h: np.ndarray, eps: float = IMAG_EPS):
    """Check for imaginary-axis eigenvalues of a Hamiltonian matrix.

    Returns ``(found, omegas)`` with the sorted positive imaginary parts of
    any eigenvalue whose real part is within ``eps * (1 + |λ|)`` of zero.
    """
    eigs = np.linalg.eigvals(np.asarray(h, dtype=float))
    on_axis = eigs[np.abs(eigs.real) <= eps * (1.0 + np.abs(eigs))]
    omegas = np.sort(on_axis.imag[on_axis.imag > 0.0])
    return omegas.size > 0, omegas


def _sigma_max(plant_cl: lti.LtiPlant, omega: float) -> float:
    g = lti.transfer_value(plant_cl, omega)
    return float(np.linalg.svd(g, compute_uv=False)[0])


def _probe_frequency(acl: np.ndarray) -> float:
    """Eigenvalue magnitude of median size; lands near lightly damped modes."""
    mags = np.sort(np.abs(np.linalg.eigvals(acl)))
    return float(mags[mags.size // 2])


def gamma_lower_bound(plant: lti.LtiPlant, k, include_input_gain: bool = False) -> float:
    """Starting lower bound for the norm search.

    Probes the closed loop at DC and at a resonance-guess frequency.  With
    ``include_input_gain=True`` the bound also includes ``σ_max(B2)``; that
    term is a conservative initializer for choosing a robustness budget, not
    a valid norm lower bound, so the norm iteration leaves it off.
    """
    k = lti._as_gain(k, plant.m, plant.n)
    cl = lti.closed_loop(plant, k)
    if not lti.is_hurwitz(cl.A):
        raise NumericalError("gamma_lower_bound requires a Hurwitz closed loop")
    omega_p = _probe_frequency(cl.A)
    candidates = [_sigma_max(cl, 0.0), _sigma_max(cl, omega_p)]
    if include_input_gain:
        candidates.append(float(np.linalg.svd(plant.B2, compute_uv=False)[0]))
    return max(candidates)


@dataclass
class HinfResult:
    """Outcome of the two-step norm search."""

    norm: float
    peak_frequency: float
    iterations: int
    gamma_lb_history: list = field(default_factory=list)


def hinf_norm(plant: lti.LtiPlant, k, eta: float = DEFAULT_ETA) -> HinfResult:
    """Closed-loop H-infinity norm of ``T_zw(K)`` to relative accuracy ``eta``."""
    if not 0.0 < eta <= 0.1:
        raise ValueError("eta must lie in (0, 0.1]")
    k = lti._as_gain(k, plant.m, plant.n)
    cl = lti.closed_loop(plant, k)
    if not lti.is_hurwitz(cl.A):
        raise NumericalError("hinf_norm requires a Hurwitz closed loop")

    omega_p = _probe_frequency(cl.A)
    gamma_lb = max(_sigma_max(cl, 0.0), _sigma_max(cl, omega_p))
    peak = 0.0 if _sigma_max(cl, 0.0) >= _sigma_max(cl, omega_p) else omega_p
    if gamma_lb <= 1e-14:
        return HinfResult(norm=0.0, peak_frequency=0.0, iterations=0, gamma_lb_history=[0.0])

    history = [gamma_lb]
    for iteration in range(1, MAX_NORM_ITER + 1):
        gamma = (1.0 + 2.0 * eta) * gamma_lb
        found, omegas = has_imaginary_eig(hamiltonian(plant, k, gamma))
        if not found:
            return HinfResult(
                norm=0.5 * (gamma_lb + gamma),
                peak_frequency=peak,
                iterations=iteration,
                gamma_lb_history=history,
            )
        candidates = list(omegas)
        candidates.extend(0.5 * (omegas[:-1] + omegas[1:]))
        values = [(_sigma_max(cl, w), w) for w in candidates]
        best, best_w = max(values)
        if best <= gamma_lb:
            # crossing frequencies always sit at level gamma > gamma_lb
            raise NumericalError("hinf_norm failed to make progress on gamma_lb")
        gamma_lb, peak = best, float(best_w)
        history.append(gamma_lb)
    raise NumericalError(f"hinf_norm exceeded {MAX_NORM_ITER} iterations")


@dataclass
class GainSearchResult:
    """Admissible initial gain plus the full trade-off sweep.

    ``sweep`` holds one ``(pole, gain, norm)`` triple per candidate (norm is
    inf for candidates whose placement failed to stabilize).
    """

    gain: np.ndarray
    gamma_needed: float
    pole_set: list
    sweep: list = field(default_factory=list)
    chosen_pole: float = float("nan")


def _ackermann_gain(a: np.ndarray, b: np.ndarray, pole: float) -> np.ndarray:
    """Single-input gain placing every closed-loop pole at ``pole``."""
    n = a.shape[0]
    cols = [b]
    for _ in range(n - 1):
        cols.append(a @ cols[-1])
    ctrb = np.hstack(cols)
    if np.linalg.matrix_rank(ctrb) < n:
        raise NumericalError("pole placement needs a controllable pair")
    chi = np.linalg.matrix_power(a - pole * np.eye(n), n)
    last_row = np.zeros((1, n))
    last_row[0, -1] = 1.0
    return last_row @ np.linalg.solve(ctrb, chi)


def place_gain(a: np.ndarray, b1: np.ndarray, pole: float) -> np.ndarray:
    """Hurwitz gain parameterized by a desired decay pole ``pole < 0``.

    Single-input pairs use Ackermann placement (all poles at ``pole``);
    full-row-rank ``B1`` admits the exact min-norm assignment; otherwise an
    LQR design on the shifted pair ``(A + |pole| I, B1)`` guarantees every
    closed-loop eigenvalue has real part below ``pole``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b1 = np.atleast_2d(np.asarray(b1, dtype=float))
    n, m = b1.shape
    if pole >= 0:
        raise ValueError("pole candidates must lie in the open left half-plane")
    if m == 1:
        return _ackermann_gain(a, b1, pole)
    if np.linalg.matrix_rank(b1) == n:
        return b1.T @ np.linalg.solve(b1 @ b1.T, a - pole * np.eye(n))
    shifted = a + abs(pole) * np.eye(n)
    p = gare.solve_care_spectral(shifted, b1, np.eye(n), np.eye(m))
    return b1.T @ p


def find_admissible_gain(
    plant: lti.LtiPlant,
    gamma_target: float,
    pole_candidates,
    eta: float = DEFAULT_ETA,
) -> GainSearchResult:
    """Sweep the pole candidates for the first gain with norm below the target.

    The candidates must be negative and sorted ascending (most negative
    first).  Every candidate is evaluated so the full (pole, norm) trade-off
    curve is available even after the first admissible gain is found.
    """
    poles = [float(p) for p in pole_candidates]
    if not poles:
        raise ValueError("pole_candidates must be non-empty")
    if any(p >= 0 for p in poles):
        raise ValueError("pole candidates must lie in the open left half-plane")
    if any(nxt <= prev for prev, nxt in zip(poles, poles[1:])):
        raise ValueError("pole candidates must be sorted ascending")

    sweep = []
    chosen = None
    for pole in poles:
        gain = place_gain(plant.A, plant.B1, pole)
        if not lti.is_hurwitz(plant.A - plant.B1 @ gain):
            sweep.append((pole, gain, float("inf")))
            continue
        norm = hinf_norm(plant, gain, eta=eta).norm
        sweep.append((pole, gain, norm))
        if chosen is None and norm < gamma_target:
            chosen = (pole, gain, norm)
    if chosen is None:
        best = min(sweep, key=lambda item: item[2])
        raise NumericalError(
            f"no pole candidate meets gamma={gamma_target:g}; "
            f"best was pole={best[0]:g} with norm={best[2]:g}"
        )
    pole, gain, norm = chosen
    return GainSearchResult(
        gain=gain,
        gamma_needed=norm,
        pole_set=poles,
        sweep=sweep,
        chosen_pole=pole,
    )


def admissibility_report(plant: lti.LtiPlant, k, gamma: float, eta: float = DEFAULT_ETA) -> lti.AdmissibilityReport:
    """Populate the stability + attenuation verdict for ``(K, γ)``."""
    k = lti._as_gain(k, plant.m, plant.n)
    abscissa = lti.spectral_abscissa(plant.A - plant.B1 @ k)
    if abscissa < -lti.HURWITZ_EPS:
        norm = hinf_norm(plant, k, eta=eta).norm
    else:
        norm = float("inf")
    return lti.AdmissibilityReport(
        spectral_abscissa=abscissa,
        hinf_norm=norm,
        gamma=float(gamma),
        admissible=abscissa < -lti.HURWITZ_EPS and norm < gamma,
    )
