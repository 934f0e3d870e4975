"""Acceptance suite: one pass/fail line per criterion (run with -s to stream).

Each criterion pins its tolerance here; nothing is deferred to later
calibration.  Expected values come from independent oracles: closed-form
roots, dense frequency grids, scipy Riccati solvers, finite differences and
the model-based double-loop solver.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import scipy.linalg

from h2hinf import gare, hinf, learner, lti, matops, pipeline, simsde

from conftest import grid_hinf_oracle, random_stable_plant, scalar_plant


@contextmanager
def criterion(num, desc):
    try:
        yield
    except Exception:
        print(f"[criterion {num}] FAIL — {desc}")
        raise
    print(f"[criterion {num}] PASS — {desc}")


def admissible_fixture(seed, n, m=1):
    rng = np.random.default_rng(seed)
    plant = random_stable_plant(rng, n, m=m, qw=1)
    k0 = np.zeros((m, n))
    gamma = 2.0 * max(hinf.hinf_norm(plant, k0).norm, 1.0)
    return plant, k0, gamma


def test_criterion_1_scalar_gare_fixture():
    with criterion(1, "scalar GARE fixture matches the quadratic-formula root to 1e-8, < 1 s"):
        # root of 1 - 2p - 0.75 p^2 = 0 via the quadratic formula
        p_oracle = (-2.0 + math.sqrt(4.0 + 3.0)) / 1.5
        plant = scalar_plant(a=-1.0, b1=1.0, b2=1.0, c=1.0, d=1.0)
        start = time.perf_counter()
        sol = gare.solve_game(plant, 2.0, [[0.0]])
        elapsed = time.perf_counter() - start
        assert abs(sol.P[0, 0] - p_oracle) <= 1e-8
        assert elapsed < 1.0


def test_criterion_2_hinf_norm_vs_grid_oracle():
    with criterion(2, "hinf_norm matches a 1e5-point grid oracle on 20 seeded systems, < 0.5 s each"):
        eta = 1e-3
        for seed in range(20):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(2, 5))
            plant = random_stable_plant(rng, n, m=1, qw=1, margin=0.3)
            k0 = np.zeros((1, n))
            start = time.perf_counter()
            result = hinf.hinf_norm(plant, k0, eta=eta)
            elapsed = time.perf_counter() - start
            oracle, _ = grid_hinf_oracle(lti.closed_loop(plant, k0), n_points=100_000)
            tol = max(eta, 0.01)
            assert abs(result.norm - oracle) <= tol * oracle, f"seed {seed}"
            assert elapsed < 0.5


def test_criterion_3_lqr_limit():
    with criterion(3, "solve_game at gamma=1e6 matches the H2 Riccati oracle to 1e-6"):
        for seed, n in ((0, 1), (1, 2), (2, 3)):
            plant, k0, _ = admissible_fixture(seed, n)
            sol = gare.solve_game(plant, 1e6, k0, check_hinf=False)
            oracle = scipy.linalg.solve_continuous_are(plant.A, plant.B1, plant.Q, plant.R)
            assert np.linalg.norm(sol.P - oracle) <= 1e-6 * np.linalg.norm(oracle)


def test_criterion_4_noise_free_learner_equivalence():
    with criterion(4, "noise-free robust_gains reproduces solve_game to 1e-4 on 10 plants"):
        for seed in range(10):
            rng = np.random.default_rng(1000 + seed)
            n = int(rng.integers(2, 4))
            m = int(rng.integers(1, 3))
            plant = random_stable_plant(rng, n, m=m, qw=1)
            k0 = np.zeros((m, n))
            gamma = 2.0 * max(hinf.hinf_norm(plant, k0).norm, 1.0)
            sol = gare.solve_game(plant, gamma, k0)
            expl = simsde.default_exploration(m, n_freq=12, low=0.1, high=5.0)
            cfg = simsde.SimConfig(
                dt=2e-4, horizon=6.0, noise_on=False, exploration=expl,
                x0=0.3 * np.ones(n),
            )
            traj = simsde.simulate(plant, k0, cfg)
            batch = simsde.collect_batch(
                traj, plant.B2, k0, np.zeros((1, n)), plant.Q, interval_len=251
            )
            res = learner.robust_gains(
                batch, learner.LearnerConfig(gamma=gamma), k0, plant.Q, plant.R, plant.B2
            )
            err_p = np.linalg.norm(res.P_hat - sol.P) / np.linalg.norm(sol.P)
            err_k = np.linalg.norm(res.K_hat - sol.K_star) / np.linalg.norm(sol.K_star)
            assert err_p <= 1e-4, f"seed {seed}: P error {err_p:.2e}"
            assert err_k <= 1e-4, f"seed {seed}: K error {err_k:.2e}"


def test_criterion_5_cruise_pipeline(tmp_path):
    with criterion(5, "cruise pipeline: <5% by outer step 2; noisy median <=5% over 5 seeds; <2 min"):
        start = time.perf_counter()
        config = pipeline.PipelineConfig(out_dir=str(tmp_path / "cruise"), seed=0, gamma=500.0)
        report = pipeline.run_pipeline(config)
        assert report["gain_search"]["admissible"]
        outer = report["learn"]["outer_history"]
        by_two = [rec for rec in outer if rec["p"] <= 2]
        assert by_two, "no outer iterations recorded"
        last = by_two[-1]
        assert last["rel_err_K"] < 0.05, f"K error {last['rel_err_K']:.3f} at outer step {last['p']}"
        assert last["rel_err_P"] < 0.05, f"P error {last['rel_err_P']:.3f} at outer step {last['p']}"

        # noisy-data robustness: median final error over 5 collection seeds
        plant = lti.LtiPlant.from_dict(
            {
                "A": report["linearize"]["A"],
                "B1": report["linearize"]["B1"],
                "B2": report["linearize"]["B2"],
                "C": [[1.0], [0.0], [0.0]],
                "D": [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            }
        )
        k1 = np.asarray(report["gain_search"]["gain"])
        sol = gare.solve_game(plant, 500.0, k1)
        finals_p, finals_k = [], []
        for seed in range(5):
            expl = simsde.default_exploration(
                plant.m, n_freq=config.exploration_n_freq,
                low=config.exploration_low, high=config.exploration_high,
                amplitude=config.exploration_amplitude,
            )
            cfg = simsde.SimConfig(
                dt=config.collect_dt, horizon=config.collect_horizon, seed=seed,
                noise_on=True, exploration=expl, x0=np.ones(plant.n),
            )
            traj = simsde.simulate(plant, k1, cfg)
            qbar = plant.Q + k1.T @ plant.R @ k1
            batch = simsde.collect_batch(
                traj, plant.B2, k1, np.zeros((plant.qw, plant.n)), qbar,
                interval_len=config.collect_interval,
            )
            res = learner.robust_gains(
                batch, learner.LearnerConfig(gamma=500.0), k1,
                plant.Q, plant.R, plant.B2,
            )
            finals_p.append(np.linalg.norm(res.P_hat - sol.P) / np.linalg.norm(sol.P))
            finals_k.append(np.linalg.norm(res.K_hat - sol.K_star) / np.linalg.norm(sol.K_star))
        assert np.median(finals_p) <= 0.05, f"median P error {np.median(finals_p):.3f}"
        assert np.median(finals_k) <= 0.05, f"median K error {np.median(finals_k):.3f}"
        assert time.perf_counter() - start < 120.0


def test_criterion_6_identification_quality(tmp_path):
    with criterion(6, "cruise identification: RRSE <= 0.1, sin(slope) selected, plant realizable"):
        config = pipeline.PipelineConfig(
            out_dir=str(tmp_path / "ident"), seed=0,
            stages=("identify", "linearize"),
        )
        report = pipeline.run_pipeline(config)
        assert report["identify"]["rrse"] <= 0.1
        labels = [t["label"] for t in report["identify"]["terms"]]
        assert any("sin(u3" in label for label in labels), labels
        plant = lti.LtiPlant.from_json(tmp_path / "ident" / "plant.json")
        realizability = lti.check_realizability(plant)
        assert realizability.stabilizable
        assert realizability.observable


def test_criterion_7_policy_gradient_finite_differences():
    with criterion(7, "analytic policy gradient matches central differences to 1e-4 at 10 gains"):
        checked = 0
        seed = 0
        while checked < 10:
            seed += 1
            rng = np.random.default_rng(2000 + seed)
            n = int(rng.integers(2, 4))
            plant, k0, gamma = admissible_fixture(2000 + seed, n)
            k = k0 + rng.normal(size=k0.shape) * 0.1
            if not lti.is_hurwitz(plant.A - plant.B1 @ k):
                continue
            if hinf.hinf_norm(plant, k).norm >= gamma:
                continue
            grad = gare.policy_gradient(plant, k, gamma)
            h = 1e-6
            fd = np.zeros_like(k)
            for i in range(k.shape[0]):
                for j in range(k.shape[1]):
                    kp = k.copy()
                    kp[i, j] += h
                    km = k.copy()
                    km[i, j] -= h
                    jp = gare.game_cost_trace(plant, gare.fixed_gain_value(plant, kp, gamma))
                    jm = gare.game_cost_trace(plant, gare.fixed_gain_value(plant, km, gamma))
                    fd[i, j] = (jp - jm) / (2 * h)
            denom = max(np.linalg.norm(fd), 1e-12)
            assert np.linalg.norm(grad - fd) / denom <= 1e-4
            checked += 1


def test_criterion_8_property_suites():
    with criterion(8, "matops round trips, Hamiltonian symmetry, PSD monotonicity, martingale decay"):
        # matops round trips are exact
        rng = np.random.default_rng(77)
        for _ in range(50):
            n = int(rng.integers(1, 6))
            p = rng.normal(size=(n, n))
            p = p + p.T
            assert np.array_equal(matops.smat(matops.svec(p)), p)
            v = rng.normal(size=n * (n + 1) // 2)
            assert np.array_equal(matops.svec(matops.smat(v)), v)

        # Hamiltonian spectra come in {λ, -λ, conj(λ), -conj(λ)} quadruples
        for seed in range(5):
            local = np.random.default_rng(seed)
            plant = random_stable_plant(local, 3, m=2, qw=2)
            k = local.normal(size=(2, 3)) * 0.2
            eigs = np.linalg.eigvals(hinf.hamiltonian(plant, k, 3.0))
            for lam in eigs:
                assert np.min(np.abs(eigs + lam)) <= 1e-8 * (1 + abs(lam))
                assert np.min(np.abs(eigs - lam.conjugate())) <= 1e-8 * (1 + abs(lam))

        # inner-loop PSD monotonicity within 1e-8*I
        for seed in range(3):
            plant, k0, gamma = admissible_fixture(100 + seed, 3)
            sol = gare.solve_game(plant, gamma, k0, keep_history=True)
            by_outer = {}
            for it in sol.history:
                by_outer.setdefault(it.p, []).append(it.P)
            for iterates in by_outer.values():
                for earlier, later in zip(iterates, iterates[1:]):
                    gap = later + 1e-8 * np.eye(3) - earlier
                    assert np.linalg.eigvalsh(gap).min() >= -1e-8

        # martingale residual decays ~1/sqrt(N) across three horizons
        plant = scalar_plant(a=-1.0)
        k = np.array([[0.0]])
        l = np.array([[0.0]])
        gamma = 4.0
        p_true = gare.inner_iteration(plant, k, l, gamma)
        unknowns = np.concatenate([
            matops.svec(p_true),
            matops.vec(plant.B1.T @ p_true),
            [float(np.trace(plant.B2.T @ p_true @ plant.B2))],
        ])
        qbar = plant.Q + k.T @ plant.R @ k - gamma**2 * (l.T @ l)
        medians = []
        for horizon in (2.0, 8.0, 32.0):
            residuals = []
            for seed in range(7):
                cfg = simsde.SimConfig(
                    dt=2e-4, horizon=horizon, seed=seed, noise_on=True,
                    exploration=simsde.default_exploration(1), x0=[0.5],
                )
                traj = simsde.simulate(plant, k, cfg)
                batch = simsde.collect_batch(traj, plant.B2, k, l, qbar, interval_len=21)
                theta, rhs, _, _ = simsde.assemble_regressor(
                    batch.delta_quad, batch.ixx_raw, batch.ixu_raw, batch.delta_t,
                    batch.k_gain, batch.l_gain, batch.qbar, plant.B2,
                )
                residuals.append(abs(np.mean(theta @ unknowns - rhs)))
            medians.append(np.median(residuals))
        assert medians[0] > medians[1] > medians[2]


def test_criterion_9_cli_determinism(tmp_path):
    with criterion(9, "identical configs and seeds reproduce byte-identical CSV/JSON outputs"):
        from h2hinf import cli

        outputs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = cli.main([
                "benchmark-gen", "--out-dir", str(out), "--samples", "2000", "--seed", "11",
            ])
            assert code == 0
            outputs.append((out / "cruise_data.csv").read_bytes())
        assert outputs[0] == outputs[1]

        reports = []
        for name in ("p1", "p2"):
            config = pipeline.PipelineConfig(
                out_dir=str(tmp_path / name), seed=2,
                benchmark_samples=8000, collect_horizon=20.0, deploy_horizon=2.0,
                pole_candidates=(-10.0, -5.0),
            )
            pipeline.run_pipeline(config)
            bundle = {}
            for path in sorted((tmp_path / name).iterdir()):
                if path.suffix in (".csv", ".json"):
                    bundle[path.name] = path.read_bytes()
            reports.append(bundle)
        assert reports[0].keys() == reports[1].keys()
        for key in reports[0]:
            assert reports[0][key] == reports[1][key], key
