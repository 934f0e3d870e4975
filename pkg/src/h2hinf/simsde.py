"""Euler–Maruyama simulation of the disturbed plant and collection of the
per-interval trajectory integrals that feed the data-driven learner.

Trajectories are deterministic functions of the seed: all disturbance draws
come from one ``numpy.random.default_rng(seed)`` call and are stored on the
trajectory so learner runs can be replayed exactly.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import lti, matops
from .errors import DivergenceError, NumericalError

STATE_NORM_LIMIT = 1e9


def default_exploration(
    n_channels: int,
    n_freq: int = 12,
    low: float = 0.1,
    high: float = 50.0,
    amplitude: float = 1.0,
):
    """Per-channel sinusoid banks with log-spaced, channel-detuned frequencies.

    Channels get slightly scaled frequency sets so multi-input exploration
    stays linearly independent across channels.
    """
    base = np.logspace(np.log10(low), np.log10(high), n_freq)
    banks = []
    for c in range(n_channels):
        scale = 1.0 + 0.13 * c
        banks.append([(amplitude, float(w * scale)) for w in base])
    return banks


@dataclass
class SimConfig:
    """Integration setup for one trajectory.

    ``w_offset`` adds a constant deterministic disturbance through the B2
    channel (step-disturbance demos); it is independent of the Wiener noise.
    """

    dt: float = 1e-3
    horizon: float = 1.0
    seed: int = 0
    noise_on: bool = True
    exploration: list = field(default_factory=list)
    x0: np.ndarray | None = None
    w_offset: np.ndarray | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon < 100 * self.dt:
            raise ValueError("horizon must cover at least 100 steps")


@dataclass
class Trajectory:
    """Sampled closed-loop run, including the raw disturbance draws."""

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    disturbance_draws: np.ndarray
    dt: float

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    def to_csv(self, path) -> None:
        n = self.states.shape[1]
        m = self.inputs.shape[1]
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for k in range(self.times.size):
                row = [repr(float(self.times[k]))]
                row += [repr(float(v)) for v in self.states[k]]
                row += [repr(float(v)) for v in self.inputs[k]]
                writer.writerow(row)


def _exploration_signal(exploration, times: np.ndarray, m: int) -> np.ndarray:
    e = np.zeros((times.size, m))
    if not exploration:
        return e
    if len(exploration) != m:
        raise ValueError("exploration must list one sinusoid bank per input channel")
    for c, bank in enumerate(exploration):
        for amp, freq in bank:
            e[:, c] += amp * np.sin(freq * times)
    return e


def simulate(plant: lti.LtiPlant, k, config: SimConfig) -> Trajectory:
    """Integrate ``dx = (A x + B1 u) dt + B2 dw`` under ``u = -K x + e(t)``.

    Noisy runs take Euler–Maruyama steps; deterministic runs take Heun steps
    (second order, consistent with the trapezoidal batch integrals).  Raises
    :class:`DivergenceError` once the state norm passes ``1e9``.
    """
    k = lti._as_gain(k, plant.m, plant.n)
    n_steps = int(round(config.horizon / config.dt))
    times = np.arange(n_steps + 1) * config.dt

    acl = plant.A - plant.B1 @ k
    growth = np.max(np.abs(np.linalg.eigvals(np.eye(plant.n) + acl * config.dt)))
    if growth >= 1.0:
        warnings.warn(
            f"dt={config.dt:g} puts the Euler map outside the stability region "
            f"(spectral radius {growth:.3f})",
            UserWarning,
            stacklevel=2,
        )

    rng = np.random.default_rng(config.seed)
    if config.noise_on:
        draws = rng.standard_normal((n_steps, plant.qw))
    else:
        draws = np.zeros((n_steps, plant.qw))

    excitation = _exploration_signal(config.exploration, times, plant.m)
    x = np.zeros(plant.n) if config.x0 is None else np.asarray(config.x0, dtype=float).ravel()
    if x.size != plant.n:
        raise ValueError("x0 must match the state dimension")

    dt = config.dt
    eye = np.eye(plant.n)
    w_off = None
    if config.w_offset is not None:
        w_off = np.asarray(config.w_offset, dtype=float).ravel()
        if w_off.size != plant.qw:
            raise ValueError("w_offset must match the disturbance dimension")
    if config.noise_on:
        # Euler–Maruyama: x+ = (I + A_cl dt) x + B1 e dt + B2 sqrt(dt) xi
        step_matrix = eye + acl * dt
        drive = excitation[:-1] @ plant.B1.T * dt + draws @ plant.B2.T * np.sqrt(dt)
        if w_off is not None:
            drive = drive + (plant.B2 @ w_off) * dt
    else:
        # deterministic runs take a Heun step so the stored samples are
        # second-order consistent with the trapezoidal batch integrals
        step_matrix = eye + acl * dt + (acl @ acl) * (dt**2 / 2.0)
        pred = excitation[:-1] @ (plant.B1.T + dt * (acl @ plant.B1).T)
        drive = 0.5 * dt * (pred + excitation[1:] @ plant.B1.T)
        if w_off is not None:
            step_disturbance = plant.B2 @ w_off
            drive = drive + dt * (step_disturbance + 0.5 * dt * (acl @ step_disturbance))
    limit_sq = STATE_NORM_LIMIT**2
    states = np.empty((n_steps + 1, plant.n))
    states[0] = x
    for step in range(n_steps):
        x = step_matrix @ x + drive[step]
        if x @ x > limit_sq or not np.isfinite(x @ x):
            raise DivergenceError(f"state norm exceeded {STATE_NORM_LIMIT:g} at t={times[step + 1]:g}")
        states[step + 1] = x
    inputs = -(states @ k.T) + excitation
    return Trajectory(times=times, states=states, inputs=inputs, disturbance_draws=draws, dt=config.dt)


def ito_quadratic_increment(p: np.ndarray, traj: Trajectory, plant: lti.LtiPlant) -> dict:
    """Per-step decomposition of the stochastic differential of ``xᵀPx``.

    Returns the drift, control, noise and trace terms alongside the actual
    sampled increment; their sum reproduces the increment to O(dt) in
    expectation (exactly to O(dt²) per step when noise is off).
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    x = traj.states[:-1]
    u = traj.inputs[:-1]
    dt = traj.dt
    apa = plant.A.T @ p + p @ plant.A
    drift_state = np.einsum("ki,ij,kj->k", x, apa, x) * dt
    drift_control = 2.0 * np.einsum("ki,ij,jl,kl->k", x, p, plant.B1, u) * dt
    noise = 2.0 * np.einsum("ki,ij,jl,kl->k", x, p, plant.B2, traj.disturbance_draws) * np.sqrt(dt)
    trace = np.full(x.shape[0], np.trace(plant.B2.T @ p @ plant.B2) * dt)
    v = np.einsum("ki,ij,kj->k", traj.states, p, traj.states)
    actual = np.diff(v)
    return {
        "drift_state": drift_state,
        "drift_control": drift_control,
        "noise": noise,
        "trace": trace,
        "actual": actual,
    }


@dataclass
class RegressionBatch:
    """Per-interval trajectory integrals for the value regression.

    ``delta_quad``, the raw moment integrals and ``delta_t`` depend only on
    the data; ``i_q``, ``i_xu`` and ``i_xl`` are the blocks assembled for the
    gains stored on the batch and are re-derived from the raw integrals when
    the batch is reused at another iterate.
    """

    delta_quad: np.ndarray      # (N, n(n+1)/2) quad-basis increments
    i_q: np.ndarray             # (N,)   ∫ xᵀ Q̄ x dt
    i_xu: np.ndarray            # (N, m n) ∫ x ⊗ (u + K x) dt
    i_xl: np.ndarray            # (N, n²)  ∫ x ⊗ (B2 L x) dt
    delta_t: np.ndarray         # (N,)
    k_gain: np.ndarray
    l_gain: np.ndarray
    ixx_raw: np.ndarray         # (N, n, n) ∫ x xᵀ dt
    ixu_raw: np.ndarray         # (N, m n)  ∫ x ⊗ u dt
    qbar: np.ndarray
    regressor_rank: int

    @property
    def n(self) -> int:
        return self.ixx_raw.shape[1]

    @property
    def m(self) -> int:
        return self.k_gain.shape[0]

    @property
    def n_intervals(self) -> int:
        return self.delta_t.size

    def to_json(self, path) -> None:
        payload = {
            "delta_quad": self.delta_quad.tolist(),
            "i_q": self.i_q.tolist(),
            "i_xu": self.i_xu.tolist(),
            "i_xl": self.i_xl.tolist(),
            "delta_t": self.delta_t.tolist(),
            "k_gain": self.k_gain.tolist(),
            "l_gain": self.l_gain.tolist(),
            "ixx_raw": self.ixx_raw.tolist(),
            "ixu_raw": self.ixu_raw.tolist(),
            "qbar": self.qbar.tolist(),
            "regressor_rank": self.regressor_rank,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "RegressionBatch":
        with open(path) as fh:
            payload = json.load(fh)
        arrays = {key: np.asarray(val, dtype=float) for key, val in payload.items() if key != "regressor_rank"}
        return cls(regressor_rank=int(payload["regressor_rank"]), **arrays)


def unknown_count(n: int, m: int) -> int:
    """Unknowns of the value regression: svec(P), vec(B1ᵀP) and the trace."""
    return n * (n + 1) // 2 + m * n + 1


def _trapezoid_weights(n_samples: int, dt: float) -> np.ndarray:
    w = np.full(n_samples, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def assemble_regressor(
    delta_quad: np.ndarray,
    ixx_raw: np.ndarray,
    ixu_raw: np.ndarray,
    delta_t: np.ndarray,
    k_gain: np.ndarray,
    l_gain: np.ndarray,
    qbar: np.ndarray,
    b2: np.ndarray,
):
    """Build the linear system rows for unknowns [svec(P); vec(B1ᵀP); trace].

    Row k:  (delta_quad_k + 2 d_k)ᵀ svec(P) - 2 i_xu_kᵀ vec(B1ᵀP) - Δt_k c
            = -∫ xᵀ Q̄ x dt
    where d_k is the svec-dual of B2 L ∫xxᵀdt and i_xu folds the stored raw
    moments with the current control gain.
    """
    n = ixx_raw.shape[1]
    n_int = delta_t.size
    i_q = np.einsum("kij,ij->k", ixx_raw, qbar)
    k_fold = np.einsum("il,klj->kij", k_gain, ixx_raw)  # (N, m, n) = K ∫xxᵀ
    i_xu = ixu_raw + k_fold.transpose(0, 2, 1).reshape(n_int, -1)
    bl = b2 @ l_gain
    duals = np.empty((n_int, n * (n + 1) // 2))
    for idx in range(n_int):
        duals[idx] = matops.quad_dual(bl @ ixx_raw[idx])
    theta = np.hstack([
        delta_quad + 2.0 * duals,
        -2.0 * i_xu,
        -delta_t[:, None],
    ])
    rhs = -i_q
    return theta, rhs, i_q, i_xu


def collect_batch(
    traj: Trajectory,
    b2: np.ndarray,
    k_gain,
    l_gain,
    qbar: np.ndarray,
    interval_len: int,
) -> RegressionBatch:
    """Integrate the regression blocks over consecutive windows of the run.

    ``interval_len`` counts samples per window (>= 2); adjacent windows share
    their boundary sample.  Raises :class:`NumericalError` when the assembled
    regressor is column-rank deficient (persistent excitation violated).
    """
    if interval_len < 2:
        raise ValueError("interval_len must cover at least 2 samples")
    n = traj.states.shape[1]
    m = traj.inputs.shape[1]
    b2 = np.atleast_2d(np.asarray(b2, dtype=float))
    k_gain = lti._as_gain(k_gain, m, n)
    l_gain = lti._as_gain(l_gain, b2.shape[1], n, name="L")
    qbar = np.atleast_2d(np.asarray(qbar, dtype=float))

    steps_per = interval_len - 1
    n_int = traj.n_steps // steps_per
    if n_int < 1:
        raise ValueError("trajectory too short for the requested interval length")

    n1 = n * (n + 1) // 2
    delta_quad = np.empty((n_int, n1))
    ixx_raw = np.empty((n_int, n, n))
    ixu_raw = np.empty((n_int, m * n))
    delta_t = np.empty(n_int)
    for j in range(n_int):
        lo = j * steps_per
        hi = lo + steps_per
        xs = traj.states[lo : hi + 1]
        us = traj.inputs[lo : hi + 1]
        w = _trapezoid_weights(xs.shape[0], traj.dt)
        delta_quad[j] = matops.quad_basis(xs[-1]) - matops.quad_basis(xs[0])
        ixx_raw[j] = np.einsum("k,ki,kj->ij", w, xs, xs)
        uxt = np.einsum("k,ki,kj->ij", w, us, xs)   # (m, n) = ∫ u xᵀ dt
        ixu_raw[j] = uxt.reshape(-1, order="F")
        delta_t[j] = steps_per * traj.dt

    theta, _, i_q, i_xu = assemble_regressor(
        delta_quad, ixx_raw, ixu_raw, delta_t, k_gain, l_gain, qbar, b2
    )
    i_xl = np.einsum("ij,kjl->kil", b2 @ l_gain, ixx_raw).transpose(0, 2, 1).reshape(n_int, -1)
    needed = unknown_count(n, m)
    rank = int(np.linalg.matrix_rank(theta)) if np.any(theta) else 0
    if n_int < needed or rank < needed:
        raise NumericalError(
            f"persistent excitation violated: regressor rank {rank} < {needed} unknowns"
        )
    return RegressionBatch(
        delta_quad=delta_quad,
        i_q=i_q,
        i_xu=i_xu,
        i_xl=i_xl,
        delta_t=delta_t,
        k_gain=k_gain,
        l_gain=l_gain,
        ixx_raw=ixx_raw,
        ixu_raw=ixu_raw,
        qbar=qbar,
        regressor_rank=rank,
    )
