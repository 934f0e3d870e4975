"""Car cruise-control benchmark: longitudinal dynamics and data generation.

The speed dynamics combine an engine-torque term, rolling friction,
aerodynamic drag and road-slope gravity:

    m dv/dt = u2 u1 τ(v) - m g C_r sgn(v) - ½ ρ C_d A |v| v - m g sin(θ)

with the quadratic torque curve τ(v) = τ_max (1 - β (k_ω v / ω_max - 1)²).
The torque curve's internal speed factor (39) differs from the nominal gear
ratio (40); both are kept as printed.  Throttle excitation is piecewise
constant and the slope is block-held Gaussian noise so the identification
target (a finite-difference derivative) stays consistent with the inputs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CruiseParams:
    """Physical constants of the benchmark vehicle."""

    mass: float = 1600.0
    gear_ratio: float = 40.0
    rolling_coeff: float = 0.01
    drag_coeff: float = 0.32
    air_density: float = 1.3
    frontal_area: float = 2.4
    torque_beta: float = 0.4
    omega_max: float = 420.0
    torque_max: float = 190.0
    torque_speed_factor: float = 39.0
    gravity: float = 9.8
    slope_std: float = 0.2236

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if name == "slope_std":
                if value < 0:
                    raise ValueError("slope_std must be non-negative")
            elif value <= 0:
                raise ValueError(f"{name} must be positive")


def torque(v: float, params: CruiseParams = CruiseParams()) -> float:
    """Quadratic engine torque curve evaluated at vehicle speed ``v``."""
    ratio = params.torque_speed_factor * v / params.omega_max - 1.0
    return params.torque_max * (1.0 - params.torque_beta * ratio**2)


def cruise_rhs(v: float, u1: float, u2: float, theta: float, params: CruiseParams = CruiseParams()) -> float:
    """Vehicle acceleration dv/dt at speed ``v`` under (throttle, gear, slope)."""
    drive = u2 * u1 * torque(v, params)
    rolling = params.mass * params.gravity * params.rolling_coeff * np.sign(v)
    drag = 0.5 * params.air_density * params.drag_coeff * params.frontal_area * abs(v) * v
    gravity = params.mass * params.gravity * np.sin(theta)
    return float((drive - rolling - drag - gravity) / params.mass)


def generate_benchmark(
    params: CruiseParams = CruiseParams(),
    samples: int = 40000,
    seed: int = 0,
    dt: float = 0.01,
    v0: float = 20.0,
    throttle_range: tuple = (0.05, 0.6),
    throttle_hold: tuple = (1.0, 5.0),
    slope_hold_steps: int = 20,
):
    """Simulate an excitation run and return (t, speed, inputs) arrays.

    Throttle steps are uniform on ``throttle_range`` held for random
    durations; the gear input stays at the nominal ratio; the slope is
    zero-mean Gaussian held over ``slope_hold_steps`` samples.  RK4 with
    zero-order-hold inputs; fully determined by ``seed``.
    """
    if samples < 1000:
        raise ValueError("benchmark needs at least 1000 samples")
    rng = np.random.default_rng(seed)
    t = np.arange(samples) * dt

    u1 = np.empty(samples)
    k = 0
    while k < samples:
        hold = int(rng.uniform(*throttle_hold) / dt)
        u1[k : k + hold] = rng.uniform(*throttle_range)
        k += hold
    u2 = np.full(samples, params.gear_ratio)
    n_blocks = -(-samples // slope_hold_steps)
    blocks = rng.normal(0.0, params.slope_std, size=n_blocks)
    u3 = np.repeat(blocks, slope_hold_steps)[:samples]

    v = np.empty(samples)
    v[0] = v0
    for k in range(samples - 1):
        x = v[k]
        args = (u1[k], u2[k], u3[k], params)
        k1 = cruise_rhs(x, *args)
        k2 = cruise_rhs(x + 0.5 * dt * k1, *args)
        k3 = cruise_rhs(x + 0.5 * dt * k2, *args)
        k4 = cruise_rhs(x + dt * k3, *args)
        v[k + 1] = x + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    u = np.column_stack([u1, u2, u3])
    return t, v, u


def write_benchmark_csv(path, t, v, u) -> None:
    """Write the benchmark dataset as (t, z, u1, u2, u3) rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "z", "u1", "u2", "u3"])
        for k in range(t.size):
            writer.writerow(
                [repr(float(t[k])), repr(float(v[k]))] + [repr(float(x)) for x in u[k]]
            )


def read_benchmark_csv(path):
    """Read a dataset written by :func:`write_benchmark_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(x) for x in row] for row in reader])
    if header[0] != "t" or rows.shape[1] < 3:
        raise ValueError("expected columns t, z, u1[, ...]")
    return rows[:, 0], rows[:, 1], rows[:, 2:]
