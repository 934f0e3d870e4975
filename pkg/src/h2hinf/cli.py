"""Command-line interface.

Subcommands: identify, linearize, hinf, synthesize, simulate, learn,
pipeline, benchmark-gen.  Exit codes: 0 success, 2 validation failure,
3 numerical failure.  Report paths write delimited data plus rendered
figures; identical configs and seeds reproduce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import cruise, gare, hinf, learner, lti, narmax, pipeline, plots, simsde
from .errors import NumericalError


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_gain(path) -> np.ndarray:
    with open(path) as fh:
        payload = json.load(fh)
    key = "K1" if "K1" in payload else "K_hat" if "K_hat" in payload else "K"
    return np.asarray(payload[key], dtype=float)


def cmd_benchmark_gen(args) -> int:
    out = _out_dir(args)
    params = cruise.CruiseParams(slope_std=args.slope_std)
    t, v, u = cruise.generate_benchmark(
        params, samples=args.samples, seed=args.seed, dt=args.dt
    )
    path = out / "cruise_data.csv"
    cruise.write_benchmark_csv(path, t, v, u)
    print(f"wrote {path} ({args.samples} samples)")
    return 0


def cmd_identify(args) -> int:
    out = _out_dir(args)
    t, z, u = cruise.read_benchmark_csv(args.data)
    config = pipeline.PipelineConfig(
        out_dir=str(out),
        ident_degree=args.degree,
        ident_err_threshold=args.err_threshold,
        ident_max_terms=args.max_terms,
        train_fraction=args.train_fraction,
    )
    model, pred, rrse, split, _ = pipeline.identify_from_arrays(t, z, u, config)
    model_path = out / "model.json"
    model.to_json(model_path)
    pipeline.write_csv(
        out / "ident_fit.csv",
        ["t", "measured", "predicted", "residual"],
        [(t[split + i], z[split + i], pred[i], pred[i] - z[split + i]) for i in range(len(pred))],
    )
    plots.identification_figure(t[split:], z[split:], pred, out / "ident_fit.png")
    print(f"identified {len(model.terms)} terms, held-out RRSE {rrse:.4g}")
    for st in model.terms:
        print(f"  {st.term.label():24s} coef={st.coefficient: .6g} err={st.err:.4g}")
    print(f"wrote {model_path}")
    return 0


def cmd_linearize(args) -> int:
    out = _out_dir(args)
    model = narmax.NarmaxModel.from_json(args.model)
    eq = narmax.find_equilibrium(
        model,
        args.setpoint,
        [0.0, args.gear, 0.0],
        fixed={"z": args.setpoint, "u2": args.gear, "u3": 0.0},
    )
    plant = narmax.linearize(model, eq, ["control", "control", "disturbance"])
    plant_path = out / "plant.json"
    plant.to_json(plant_path)
    report = lti.check_realizability(plant)
    print(f"equilibrium throttle {eq.u_eq[0]:.6g} (residual {eq.residual:.2e})")
    print(f"A={plant.A.tolist()} B1={plant.B1.tolist()} B2={plant.B2.tolist()}")
    print(f"stabilizable={report.stabilizable} observable={report.observable}")
    print(f"wrote {plant_path}")
    return 0


def cmd_hinf(args) -> int:
    out = _out_dir(args)
    plant = lti.LtiPlant.from_json(args.plant)
    poles = sorted(float(p) for p in args.poles.split(","))
    search = hinf.find_admissible_gain(plant, args.gamma, poles, eta=args.eta)
    gain_cols = [f"k{i + 1}{j + 1}" for i in range(plant.m) for j in range(plant.n)]
    pipeline.write_csv(
        out / "pole_sweep.csv",
        ["pole", *gain_cols, "hinf_norm"],
        [(pole, *gain.ravel(), norm) for pole, gain, norm in search.sweep],
    )
    plots.pole_sweep_figure(search.sweep, args.gamma, out / "pole_sweep.png")
    with open(out / "initial_gain.json", "w") as fh:
        json.dump({"K1": search.gain.tolist(), "pole": search.chosen_pole}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"admissible gain at pole {search.chosen_pole:g}: norm {search.gamma_needed:.6g} < {args.gamma:g}")
    return 0


def cmd_synthesize(args) -> int:
    if not args.model_based:
        raise ValueError("only --model-based synthesis is available")
    out = _out_dir(args)
    plant = lti.LtiPlant.from_json(args.plant)
    if args.k1 is not None:
        k1 = _load_gain(args.k1)
    else:
        poles = sorted(float(p) for p in args.poles.split(","))
        k1 = hinf.find_admissible_gain(plant, args.gamma, poles, eta=args.eta).gain
    sol = gare.solve_game(plant, args.gamma, k1, keep_history=True)
    with open(out / "gare_solution.json", "w") as fh:
        json.dump(
            {
                "P": sol.P.tolist(),
                "K": sol.K_star.tolist(),
                "L": sol.L_star.tolist(),
                "gamma": sol.gamma,
                "residual": sol.residual,
            },
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    rows = []
    records = []
    prev_k = None
    for it in sol.history:
        dk = float(np.linalg.norm(it.K - prev_k, "fro")) if prev_k is not None else 0.0
        residual = gare.riccati_residual(plant, it.P, args.gamma)
        rows.append((it.p, it.q, float(np.linalg.norm(it.P, "fro")), dk, residual))
        records.append({"dK": dk, "residual": residual})
        prev_k = it.K
    pipeline.write_csv(out / "iterations.csv", ["p", "q", "P_norm", "dK", "gare_residual"], rows)
    if records:
        plots.iteration_figure(records, out / "iterations.png")
    print(f"P={sol.P.tolist()}")
    print(f"K={sol.K_star.tolist()}")
    print(f"residual={sol.residual:.3e} converged={sol.converged}")
    return 0


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    plant = lti.LtiPlant.from_json(args.plant)
    k = _load_gain(args.gain) if args.gain else np.zeros((plant.m, plant.n))
    exploration = (
        simsde.default_exploration(plant.m, amplitude=args.exploration)
        if args.exploration > 0
        else []
    )
    cfg = simsde.SimConfig(
        dt=args.dt,
        horizon=args.tf,
        seed=args.seed,
        noise_on=not args.no_noise,
        exploration=exploration,
        x0=np.full(plant.n, args.x0),
    )
    traj = simsde.simulate(plant, k, cfg)
    traj.to_csv(out / "trajectory.csv")
    plots.trajectory_figure(traj, out / "trajectory.png")
    print(f"simulated {traj.n_steps} steps; final state norm "
          f"{float(np.linalg.norm(traj.states[-1])):.6g}")
    return 0


def cmd_learn(args) -> int:
    out = _out_dir(args)
    plant = lti.LtiPlant.from_json(args.plant)
    k1 = _load_gain(args.k1)
    expl = simsde.default_exploration(plant.m, amplitude=args.exploration)
    cfg = simsde.SimConfig(
        dt=args.dt, horizon=args.tf, seed=args.seed,
        noise_on=not args.no_noise, exploration=expl,
        x0=np.full(plant.n, args.x0),
    )
    traj = simsde.simulate(plant, k1, cfg)
    qbar = plant.Q + k1.T @ plant.R @ k1
    batch = simsde.collect_batch(
        traj, plant.B2, k1, np.zeros((plant.qw, plant.n)), qbar, interval_len=args.interval
    )
    reference = None
    if not args.no_oracle:
        sol = gare.solve_game(plant, args.gamma, k1)
        reference = (sol.P, sol.K_star)
    lcfg = learner.LearnerConfig(gamma=args.gamma, max_outer=args.max_outer, max_inner=args.max_inner)
    result = learner.robust_gains(batch, lcfg, k1, plant.Q, plant.R, plant.B2, reference=reference)
    if reference is not None:
        rows = [
            (r["p"], r["q"], r["rel_err_P"], r["rel_err_K"], r["residual"]) for r in result.history
        ]
        header = ["p", "q", "rel_err_P", "rel_err_K", "residual"]
    else:
        rows = [(r["p"], r["q"], r["residual"]) for r in result.history]
        header = ["p", "q", "residual"]
    pipeline.write_csv(out / "history.csv", header, rows)
    plots.learning_history_figure(result.history, out / "learning_errors.png")
    with open(out / "gains.json", "w") as fh:
        json.dump(
            {
                "K_hat": result.K_hat.tolist(),
                "L_hat": result.L_hat.tolist(),
                "P_hat": result.P_hat.tolist(),
                "gamma": args.gamma,
            },
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    print(f"learned K_hat={result.K_hat.tolist()} (converged={result.converged})")
    if reference is not None:
        print(f"final rel errors: P {result.history[-1]['rel_err_P']:.3e} "
              f"K {result.history[-1]['rel_err_K']:.3e}")
    return 0


def cmd_pipeline(args) -> int:
    if args.config:
        config = pipeline.PipelineConfig.from_json(args.config)
        if args.out_dir != ".":
            config = pipeline.PipelineConfig(**{**_config_dict(config), "out_dir": args.out_dir})
    else:
        config = pipeline.PipelineConfig(out_dir=args.out_dir, seed=args.seed, gamma=args.gamma)
    report = pipeline.run_pipeline(config)
    print(f"pipeline finished; report at {Path(config.out_dir) / 'report.json'}")
    if "learn" in report:
        print(f"final rel errors: P {report['learn']['final_rel_err_P']:.3e} "
              f"K {report['learn']['final_rel_err_K']:.3e}")
    return 0


def _config_dict(config: pipeline.PipelineConfig) -> dict:
    from dataclasses import asdict

    payload = asdict(config)
    payload["stages"] = tuple(config.stages)
    payload["ident_wrappers"] = tuple(config.ident_wrappers)
    payload["pole_candidates"] = tuple(config.pole_candidates)
    return payload


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="h2hinf",
        description="Data-driven mixed H2/H-infinity control synthesis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out-dir", default=".", help="artifact directory")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("benchmark-gen", help="generate the cruise-control dataset")
    add_common(p)
    p.add_argument("--samples", type=int, default=40000)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--slope-std", type=float, default=0.2236)
    p.set_defaults(func=cmd_benchmark_gen)

    p = sub.add_parser("identify", help="fit a polynomial model to I/O data")
    add_common(p)
    p.add_argument("--data", required=True, help="CSV with t, z, u1..")
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--err-threshold", type=float, default=1e-4)
    p.add_argument("--max-terms", type=int, default=10)
    p.add_argument("--train-fraction", type=float, default=0.75)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("linearize", help="equilibrium + Jacobian linearization")
    add_common(p)
    p.add_argument("--model", required=True, help="model.json from identify")
    p.add_argument("--setpoint", type=float, default=40.0)
    p.add_argument("--gear", type=float, default=40.0)
    p.set_defaults(func=cmd_linearize)

    p = sub.add_parser("hinf", help="pole sweep for an admissible initial gain")
    add_common(p)
    p.add_argument("--plant", required=True)
    p.add_argument("--gamma", type=float, default=500.0)
    p.add_argument("--poles", default="-10,-5,-2,-1", help="comma-separated candidates")
    p.add_argument("--eta", type=float, default=1e-3)
    p.set_defaults(func=cmd_hinf)

    p = sub.add_parser("synthesize", help="model-based GARE solution")
    add_common(p)
    p.add_argument("--plant", required=True)
    p.add_argument("--model-based", action="store_true")
    p.add_argument("--gamma", type=float, default=500.0)
    p.add_argument("--k1", help="JSON file with the initial gain")
    p.add_argument("--poles", default="-10,-5,-2,-1")
    p.add_argument("--eta", type=float, default=1e-3)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="closed-loop stochastic simulation")
    add_common(p)
    p.add_argument("--plant", required=True)
    p.add_argument("--gain", help="JSON gain file (zero gain when omitted)")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--tf", type=float, default=1.0)
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--exploration", type=float, default=0.0, help="sinusoid amplitude")
    p.add_argument("--no-noise", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("learn", help="data-driven robust gain iteration")
    add_common(p)
    p.add_argument("--plant", required=True)
    p.add_argument("--k1", required=True, help="JSON file with the admissible initial gain")
    p.add_argument("--gamma", type=float, default=500.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--tf", type=float, default=60.0)
    p.add_argument("--x0", type=float, default=1.0)
    p.add_argument("--interval", type=int, default=201)
    p.add_argument("--exploration", type=float, default=20.0)
    p.add_argument("--max-outer", type=int, default=20)
    p.add_argument("--max-inner", type=int, default=30)
    p.add_argument("--no-noise", action="store_true")
    p.add_argument("--no-oracle", action="store_true", help="skip the model-based reference")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("pipeline", help="run the configured stage sequence")
    add_common(p)
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--gamma", type=float, default=500.0)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except pipeline.PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.artifacts:
            print("completed artifacts:", file=sys.stderr)
            for path in exc.artifacts:
                print(f"  {path}", file=sys.stderr)
        return 2 if isinstance(exc.cause, (ValueError, OSError)) else 3
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
