"""End-to-end orchestration: identify, linearize, search, collect, learn, deploy.

Every run is fully determined by the config file (seeds included): repeated
runs write byte-identical CSV/JSON artifacts.  The report always records the
realizability booleans and the γ-admissibility verdict of the initial gain
before any learning stage executes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import cruise, gare, hinf, learner, lti, narmax, plots, simsde

STAGES = ("identify", "linearize", "gain_search", "collect", "learn", "deploy")
SCHEMA_VERSION = 1


class PipelineError(RuntimeError):
    """Stage failure carrying the completed artifacts for diagnosis."""

    def __init__(self, stage: str, artifacts: list, cause: Exception):
        super().__init__(f"pipeline stage {stage!r} failed: {cause}")
        self.stage = stage
        self.artifacts = list(artifacts)
        self.cause = cause


@dataclass
class PipelineConfig:
    """Declarative description of one pipeline run (JSON-serializable)."""

    schema_version: int = SCHEMA_VERSION
    stages: tuple = STAGES
    out_dir: str = "out"
    seed: int = 0
    gamma: float = 500.0

    # data source for identification; generated from the cruise benchmark
    # when no CSV is supplied
    data_csv: str | None = None
    benchmark_samples: int = 40000
    benchmark_dt: float = 0.01
    slope_std: float = 0.2236

    # identification
    ident_degree: int = 3
    ident_wrappers: tuple = ("sin", "signum")
    ident_err_threshold: float = 1e-4
    ident_max_terms: int = 10
    train_fraction: float = 0.75

    # linearization
    setpoint: float = 40.0
    gear_ratio: float = 40.0
    plant_json: str | None = None   # entry point when identify/linearize are skipped

    # admissible-gain search
    pole_candidates: tuple = (-10.0, -5.0, -2.0, -1.0)
    eta: float = 1e-3

    # data collection for the learner
    collect_dt: float = 1e-3
    collect_horizon: float = 60.0
    collect_interval: int = 201
    collect_noise: bool = True
    exploration_amplitude: float = 20.0
    exploration_n_freq: int = 12
    exploration_low: float = 0.5
    exploration_high: float = 20.0
    collect_x0: float = 1.0

    # learner iteration bounds
    max_outer: int = 20
    max_inner: int = 30
    learner_tol: float = 1e-9
    ridge: float = 0.0

    # deployment: regulate back to the setpoint under a road-slope step
    # (the slope angle is configurable and interpreted in degrees)
    deploy_horizon: float = 5.0
    deploy_dt: float = 1e-3
    deploy_speed0: float = 20.0
    deploy_slope_deg: float = 40.0
    deploy_noise: bool = False
    inject_worst_case: bool = False

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}")
        stages = tuple(self.stages)
        if not stages:
            raise ValueError("at least one stage required")
        try:
            start = STAGES.index(stages[0])
        except ValueError:
            raise ValueError(f"unknown stage {stages[0]!r}") from None
        if stages != STAGES[start : start + len(stages)]:
            raise ValueError(f"stages must be a contiguous run of {STAGES}")
        object.__setattr__(self, "stages", stages)
        if stages[0] not in ("identify", "gain_search"):
            raise ValueError("runs start at 'identify', or at 'gain_search' with plant_json")
        if stages[0] == "gain_search" and self.plant_json is None:
            raise ValueError("starting at gain_search requires plant_json")

    def to_json(self, path) -> None:
        payload = asdict(self)
        payload["stages"] = list(self.stages)
        payload["ident_wrappers"] = list(self.ident_wrappers)
        payload["pole_candidates"] = list(self.pole_candidates)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            payload = json.load(fh)
        for key in ("stages", "ident_wrappers", "pole_candidates"):
            if key in payload:
                payload[key] = tuple(payload[key])
        return cls(**payload)


def write_csv(path, header, rows) -> None:
    """CSV writer with full-precision repr floats (byte-stable)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (int, float, np.floating)) else v for v in row])


def identify_from_arrays(t, z, u, config: PipelineConfig):
    """Identification stage: derivative-target FROLS fit plus validation.

    The derivative target is a central difference (one-sided endpoints);
    training rows whose stencil straddles an input switch are masked out so
    block-held inputs stay consistent with the target.
    """
    dt = float(t[1] - t[0])
    dz = np.gradient(z, dt)
    split = int(len(z) * config.train_fraction)
    spec = narmax.RegressorSpec(
        z_lags=(0,),
        u_lags=tuple((0,) for _ in range(u.shape[1])),
        degree=config.ident_degree,
        wrappers=tuple(config.ident_wrappers),
    )
    design, terms, first = narmax.build_regressors(z[:split], u[:split], spec)
    rows = np.arange(first, split)
    interior = (rows >= 1) & (rows <= split - 2)
    same = np.all(
        u[np.clip(rows - 1, 0, None)] == u[np.clip(rows + 1, None, split - 1)], axis=1
    )
    keep = ~interior | same
    model = narmax.frols_fit(
        design[keep],
        dz[first:split][keep],
        terms,
        err_threshold=config.ident_err_threshold,
        max_terms=config.ident_max_terms,
        spec=spec,
        form="derivative",
    )
    pred, rrse = narmax.free_run_predict(model, u[split:], z[split : split + 1], z[split:], dt=dt)
    return model, pred, rrse, split, dt


def run_pipeline(config: PipelineConfig) -> dict:
    """Execute the configured stage run; returns the report dictionary."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report: dict = {"schema_version": SCHEMA_VERSION, "stages": list(config.stages)}
    artifacts: list[str] = []
    stage = config.stages[0]

    def record(path: Path) -> str:
        # report artifacts by name so the report stays out_dir-independent
        artifacts.append(path.name)
        return str(path)

    model = None
    plant = None
    try:
        if "identify" in config.stages:
            stage = "identify"
            if config.data_csv is not None:
                t, z, u = cruise.read_benchmark_csv(config.data_csv)
            else:
                params = cruise.CruiseParams(
                    gear_ratio=config.gear_ratio, slope_std=config.slope_std
                )
                t, z, u = cruise.generate_benchmark(
                    params,
                    samples=config.benchmark_samples,
                    seed=config.seed,
                    dt=config.benchmark_dt,
                )
                data_path = out / "cruise_data.csv"
                cruise.write_benchmark_csv(data_path, t, z, u)
                record(data_path)
            model, pred, rrse, split, _ = identify_from_arrays(t, z, u, config)
            model_path = out / "model.json"
            model.to_json(model_path)
            record(model_path)
            fit_path = out / "ident_fit.csv"
            write_csv(
                fit_path,
                ["t", "measured", "predicted", "residual"],
                [
                    (t[split + i], z[split + i], pred[i], pred[i] - z[split + i])
                    for i in range(len(pred))
                ],
            )
            record(fit_path)
            fig_path = out / "ident_fit.png"
            plots.identification_figure(t[split:], z[split:], pred, fig_path)
            record(fig_path)
            report["identify"] = {
                "rrse": rrse,
                "n_terms": len(model.terms),
                "terms": [
                    {"label": st.term.label(), "coefficient": st.coefficient, "err": st.err}
                    for st in model.terms
                ],
                "err_total": model.err_total,
            }

        if "linearize" in config.stages:
            stage = "linearize"
            eq = narmax.find_equilibrium(
                model,
                config.setpoint,
                [0.0, config.gear_ratio, 0.0],
                fixed={"z": config.setpoint, "u2": config.gear_ratio, "u3": 0.0},
            )
            plant = narmax.linearize(model, eq, ["control", "control", "disturbance"])
            plant_path = out / "plant.json"
            plant.to_json(plant_path)
            record(plant_path)
            report["linearize"] = {
                "equilibrium": {
                    "speed": eq.x_eq,
                    "inputs": eq.u_eq.tolist(),
                    "residual": eq.residual,
                },
                "A": plant.A.tolist(),
                "B1": plant.B1.tolist(),
                "B2": plant.B2.tolist(),
            }
        elif plant is None and config.plant_json is not None:
            plant = lti.LtiPlant.from_json(config.plant_json)

        k1 = None
        if "gain_search" in config.stages:
            stage = "gain_search"
            realizability = lti.check_realizability(plant)
            report["realizability"] = realizability.to_dict()
            search = hinf.find_admissible_gain(
                plant, config.gamma, list(config.pole_candidates), eta=config.eta
            )
            k1 = search.gain
            sweep_path = out / "pole_sweep.csv"
            gain_cols = [f"k{i + 1}{j + 1}" for i in range(plant.m) for j in range(plant.n)]
            write_csv(
                sweep_path,
                ["pole", *gain_cols, "hinf_norm"],
                [(pole, *gain.ravel(), norm) for pole, gain, norm in search.sweep],
            )
            record(sweep_path)
            fig_path = out / "pole_sweep.png"
            plots.pole_sweep_figure(search.sweep, config.gamma, fig_path)
            record(fig_path)
            verdict = hinf.admissibility_report(plant, k1, config.gamma, eta=config.eta)
            report["gain_search"] = {
                "chosen_pole": search.chosen_pole,
                "gain": k1.tolist(),
                "hinf_norm": search.gamma_needed,
                "admissible": verdict.admissible,
                "spectral_abscissa": verdict.spectral_abscissa,
                "gamma": config.gamma,
            }
            gain_path = out / "initial_gain.json"
            with open(gain_path, "w") as fh:
                json.dump({"K1": k1.tolist(), "pole": search.chosen_pole}, fh, indent=2, sort_keys=True)
                fh.write("\n")
            record(gain_path)

        batch = None
        if "collect" in config.stages:
            stage = "collect"
            expl = simsde.default_exploration(
                plant.m,
                n_freq=config.exploration_n_freq,
                low=config.exploration_low,
                high=config.exploration_high,
                amplitude=config.exploration_amplitude,
            )
            sim_cfg = simsde.SimConfig(
                dt=config.collect_dt,
                horizon=config.collect_horizon,
                seed=config.seed,
                noise_on=config.collect_noise,
                exploration=expl,
                x0=config.collect_x0 * np.ones(plant.n),
            )
            traj = simsde.simulate(plant, k1, sim_cfg)
            traj_path = out / "trajectory.csv"
            traj.to_csv(traj_path)
            record(traj_path)
            qbar = plant.Q + k1.T @ plant.R @ k1
            batch = simsde.collect_batch(
                traj, plant.B2, k1, np.zeros((plant.qw, plant.n)), qbar,
                interval_len=config.collect_interval,
            )
            batch_path = out / "batch.json"
            batch.to_json(batch_path)
            record(batch_path)
            report["collect"] = {
                "n_intervals": batch.n_intervals,
                "regressor_rank": batch.regressor_rank,
                "unknowns": simsde.unknown_count(plant.n, plant.m),
            }

        if "learn" in config.stages:
            stage = "learn"
            oracle = gare.solve_game(
                plant, config.gamma, k1,
                max_outer=config.max_outer, max_inner=config.max_inner,
                keep_history=True,
            )
            oracle_path = out / "gare_solution.json"
            with open(oracle_path, "w") as fh:
                json.dump(
                    {
                        "P": oracle.P.tolist(),
                        "K": oracle.K_star.tolist(),
                        "L": oracle.L_star.tolist(),
                        "gamma": oracle.gamma,
                        "residual": oracle.residual,
                    },
                    fh, indent=2, sort_keys=True,
                )
                fh.write("\n")
            record(oracle_path)
            lcfg = learner.LearnerConfig(
                gamma=config.gamma,
                max_outer=config.max_outer,
                max_inner=config.max_inner,
                tol=config.learner_tol,
                ridge=config.ridge,
            )
            result = learner.robust_gains(
                batch, lcfg, k1, plant.Q, plant.R, plant.B2,
                reference=(oracle.P, oracle.K_star),
            )
            hist_path = out / "history.csv"
            write_csv(
                hist_path,
                ["p", "q", "rel_err_P", "rel_err_K", "residual"],
                [
                    (rec["p"], rec["q"], rec["rel_err_P"], rec["rel_err_K"], rec["residual"])
                    for rec in result.history
                ],
            )
            record(hist_path)
            fig_path = out / "learning_errors.png"
            plots.learning_history_figure(result.history, fig_path)
            record(fig_path)
            gains_path = out / "gains.json"
            with open(gains_path, "w") as fh:
                json.dump(
                    {
                        "K_hat": result.K_hat.tolist(),
                        "L_hat": result.L_hat.tolist(),
                        "P_hat": result.P_hat.tolist(),
                        "gamma": config.gamma,
                    },
                    fh, indent=2, sort_keys=True,
                )
                fh.write("\n")
            record(gains_path)
            final_err_p = float(
                np.linalg.norm(result.P_hat - oracle.P, "fro") / np.linalg.norm(oracle.P, "fro")
            )
            final_err_k = float(
                np.linalg.norm(result.K_hat - oracle.K_star, "fro")
                / np.linalg.norm(oracle.K_star, "fro")
            )
            report["learn"] = {
                "converged": result.converged,
                "outer_steps": len(result.outer_history),
                "outer_history": result.outer_history,
                "final_rel_err_P": final_err_p,
                "final_rel_err_K": final_err_k,
            }
            report["learned_gains"] = {"K_hat": result.K_hat.tolist(), "L_hat": result.L_hat.tolist()}

        if "deploy" in config.stages:
            stage = "deploy"
            gains = report.get("learned_gains")
            k_hat = np.asarray(gains["K_hat"])
            l_hat = np.asarray(gains["L_hat"])
            deploy_cfg = simsde.SimConfig(
                dt=config.deploy_dt,
                horizon=config.deploy_horizon,
                seed=config.seed + 1,
                noise_on=config.deploy_noise,
                x0=(config.deploy_speed0 - config.setpoint) * np.ones(plant.n),
                w_offset=np.full(plant.qw, np.deg2rad(config.deploy_slope_deg)),
            )
            traj, metrics = learner.apply_policy(
                plant, k_hat, l_hat, deploy_cfg, inject_worst_case=config.inject_worst_case
            )
            deploy_path = out / "deploy_traj.csv"
            traj.to_csv(deploy_path)
            record(deploy_path)
            fig_path = out / "deploy_tracking.png"
            plots.trajectory_figure(
                traj, fig_path, state_labels=["speed (m/s)"], offset=[config.setpoint]
            )
            record(fig_path)
            metrics = {k: (v if np.isfinite(v) else None) for k, v in metrics.items()}
            report["deploy"] = {
                "metrics": metrics,
                "slope_step_deg": config.deploy_slope_deg,
                "final_speed": float(traj.states[-1, 0] + config.setpoint),
            }
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(stage, artifacts, exc) from exc

    report["artifacts"] = artifacts
    report_path = out / "report.json"
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report
