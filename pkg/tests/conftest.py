"""Shared fixtures and generators for the test suite."""

import numpy as np
import pytest

from h2hinf import lti


def scalar_plant(a=-1.0, b1=1.0, b2=1.0, c=1.0, d=1.0):
    """Scalar plant with stacked output so Q = c², R = d², DᵀC = 0."""
    return lti.LtiPlant(
        A=[[a]],
        B1=[[b1]],
        B2=[[b2]],
        C=[[c], [0.0]],
        D=[[0.0], [d]],
    )


def random_stable_plant(rng, n, m=1, qw=1, margin=0.5):
    """Random Hurwitz plant with Q = I (observable) and R = I."""
    a = rng.normal(size=(n, n))
    shift = max(np.linalg.eigvals(a).real.max(), 0.0) + margin
    a = a - shift * np.eye(n)
    b1 = rng.normal(size=(n, m))
    b2 = rng.normal(size=(n, qw))
    c = np.vstack([np.eye(n), np.zeros((m, n))])
    d = np.vstack([np.zeros((n, m)), np.eye(m)])
    return lti.LtiPlant(A=a, B1=b1, B2=b2, C=c, D=d)


def grid_hinf_oracle(plant_cl, n_points=100_000, w_max=None):
    """Dense frequency-grid maximum singular value of C (jwI - A)^-1 B2."""
    a = plant_cl.A
    eigs = np.linalg.eigvals(a)
    if w_max is None:
        w_max = 50.0 * (1.0 + np.abs(eigs).max())
    omegas = np.concatenate([[0.0], np.logspace(-4, np.log10(w_max), n_points - 1)])
    # batched resolvent solve over the whole grid
    n = a.shape[0]
    eye = np.eye(n)
    lhs = 1j * omegas[:, None, None] * eye[None] - a[None]
    sol = np.linalg.solve(lhs, np.broadcast_to(plant_cl.B2, (omegas.size, *plant_cl.B2.shape)))
    tf = plant_cl.C[None] @ sol
    sv = np.linalg.svd(tf, compute_uv=False)[:, 0]
    return float(sv.max()), float(omegas[np.argmax(sv)])


def reference_cruise_plant():
    """Fixed benchmark linearization of the cruise model (scalar state, two
    controls, large-magnitude disturbance column), with the output map that
    keeps Q = 1, R = I and DᵀC = 0."""
    return lti.LtiPlant(
        A=[[100.0288]],
        B1=[[-193.072, 137.3123]],
        B2=[[-17014.7221, -10557.48189]],
        C=[[1.0], [0.0], [0.0]],
        D=[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
