"""Command-line surface for training, evaluation, figure data and the play
service.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path


log = logging.getLogger("coopconv")


class NoRuns(Exception):
    pass


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    from .config import ConfigError
    try:
        return args.func(args) or 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NoRuns as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coopconv",
        description="Separated rule/convention policy learning for "
                    "two-player cooperative games.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-partners", help="train a self-play partner population")
    p.add_argument("--env", required=True, choices=["bandit", "blocks", "hanabi"])
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--variant", choices=["train", "test"], default="train")
    p.add_argument("--m", type=int, default=4, help="bandit symmetric-context count")
    p.set_defaults(func=cmd_train_partners)

    p = sub.add_parser("train-ego", help="train a policy against the partner population")
    p.add_argument("--config", help="JSON experiment config file")
    p.add_argument("--env", choices=["bandit", "blocks", "hanabi"])
    p.add_argument("--method", default="ours",
                   choices=["ours", "baseline-agg", "baseline-modular", "fomaml"])
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--timesteps", type=int)
    p.add_argument("--hand-designed-only", action="store_true")
    p.add_argument("--low-dim-z", action="store_true")
    p.set_defaults(func=cmd_train_ego)

    p = sub.add_parser("adapt", help="adapt a trained policy to held-out partners")
    p.add_argument("--env", required=True, choices=["bandit", "blocks", "hanabi"])
    p.add_argument("--method", default="ours",
                   choices=["ours", "baseline-agg", "baseline-modular", "fomaml"])
    p.add_argument("--partner-set", default="hand", choices=["hand", "study", "population"])
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--m", type=int, default=2)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("transfer", help="fine-tune the task module on a tweaked task "
                                        "and report zero-shot recomposition scores")
    p.add_argument("--env", required=True, choices=["bandit", "blocks"])
    p.add_argument("--method", default="ours", choices=["ours", "baseline-modular"])
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("oracle-marginal", help="distance between a checkpoint's "
                                               "action distribution and the oracle marginals")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--m", type=int, default=4)
    p.set_defaults(func=cmd_oracle_marginal)

    p = sub.add_parser("lemma1", help="marginal-sufficiency report for the bandit")
    p.add_argument("--env", default="bandit", choices=["bandit"])
    p.add_argument("--m", type=int, default=4)
    p.set_defaults(func=cmd_lemma1)

    p = sub.add_parser("serve", help="start the live play service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8710)
    p.add_argument("--static-dir", help="directory with the browser client build")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("plot-data", help="aggregate run metrics into figure-keyed CSVs")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out", help="output directory (default: <run-dir>/figures)")
    p.set_defaults(func=cmd_plot_data)
    return parser


def cmd_train_partners(args) -> int:
    from .experiments import ensure_selfplay_partner
    task_kw = {"m": args.m} if args.env == "bandit" else {}
    for i in range(args.count):
        path = ensure_selfplay_partner(args.env, args.variant, i, task_kw)
        print(path)
    return 0


def cmd_train_ego(args) -> int:
    from .config import ExperimentConfig
    from .experiments import ensure_ego_run
    low_z = getattr(args, "low_dim_z", False)
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
        env, method, lam = cfg.env, cfg.method, cfg.lam
        seeds = cfg.seeds
        m = cfg.task.get("m", 4)
        timesteps = cfg.ppo.get("timesteps")
        low_z = cfg.z_mode == "low"
    else:
        if not args.env:
            raise FileNotFoundError("provide --config or --env")
        env, method, lam = args.env, args.method, args.lam
        seeds = [args.seed]
        m = args.m
        timesteps = args.timesteps
    if timesteps is None:
        from .training.ppo import default_config
        timesteps = default_config(env).timesteps
    population = "hand" if getattr(args, "hand_designed_only", False) else "split"
    for seed in seeds:
        run = ensure_ego_run(env, method, lam, seed, population=population,
                             task_kw={"m": m} if env == "bandit" else {},
                             low_dim_z=low_z, timesteps=timesteps)
        print(json.dumps(run))
    return 0


def cmd_adapt(args) -> int:
    from .experiments import adaptation_experiment
    res = adaptation_experiment(args.env, args.method, args.seeds,
                                partner_set=args.partner_set, m=args.m)
    print(json.dumps({k: v for k, v in res.items() if k != "curves"}, indent=2))
    return 0


def cmd_transfer(args) -> int:
    from .experiments import zeroshot_experiment
    res = zeroshot_experiment(args.env, args.method, args.seeds, m=args.m)
    print(json.dumps(res, indent=2))
    return 0


def cmd_oracle_marginal(args) -> int:
    from . import checkpoint as ckpt
    from .envs.bandit import make_arms_task
    from .experiments import bandit_marginal_distance, blocks_marginal_distance, partner_population
    policy, meta = ckpt.load_any(args.checkpoint)
    env = meta.get("env_id") or meta.get("env")
    if env == "bandit":
        d = bandit_marginal_distance(policy, make_arms_task(args.m))
    elif env == "blocks":
        d = blocks_marginal_distance(policy, partner_population("blocks", "train"))
    else:
        raise NoRuns("oracle marginals are defined for bandit and blocks only")
    print(json.dumps({"checkpoint": args.checkpoint, "env": env, "mean_D": d}))
    return 0


def cmd_lemma1(args) -> int:
    from .envs.bandit import make_arms_task
    from .oracles import bandit_best_response_table, lemma1_check
    from .partners import make_bandit_fixed_partners
    task = make_arms_task(args.m)
    table = bandit_best_response_table(task)
    report = {"task": f"arms-{args.m}", "contexts": []}
    all_ok = True
    for c in range(task.contexts):
        partners = make_bandit_fixed_partners(task, 4, "train")
        ok, rep = lemma1_check(partners, c, table, task)
        all_ok &= ok and rep.matches_oracle
        report["contexts"].append({
            "context": c + 1, "sufficient": ok,
            "matches_oracle": rep.matches_oracle,
            "marginal": [round(float(x), 6) for x in rep.marginal],
        })
    report["all_ok"] = all_ok
    print(json.dumps(report, indent=2))
    return 0 if all_ok else 3


def cmd_serve(args) -> int:
    import uvicorn
    from .service.app import build_app
    app = build_app(static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_plot_data(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise NoRuns(f"run directory {run_dir} does not exist")
    metric_files = sorted(run_dir.rglob("metrics.csv")) + sorted(run_dir.rglob("curves.csv"))
    done_files = sorted(run_dir.rglob("done.json"))
    if not metric_files and not done_files:
        raise NoRuns(f"no finished runs under {run_dir}")
    out_dir = Path(args.out) if args.out else run_dir / "figures"
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for path in metric_files:
        with open(path, newline="") as fh:
            rows += list(csv.DictReader(fh))
    rows.sort(key=lambda r: (r.get("run_id", ""), r.get("phase", ""),
                             r.get("partner_id", ""), int(r.get("timesteps") or 0)))
    with open(out_dir / "all_metrics.csv", "w", newline="") as fh:
        from .metrics import COLUMNS
        writer = csv.DictWriter(fh, fieldnames=COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    summaries = {}
    for path in done_files:
        payload = json.loads(path.read_text())
        summaries[str(path.parent.relative_to(run_dir))] = payload.get("result")
    (out_dir / "run_summaries.json").write_text(
        json.dumps(summaries, indent=2, sort_keys=True) + "\n")
    _write_figure_data(summaries, out_dir)
    print(str(out_dir))
    return 0


def _write_figure_data(summaries: dict, out_dir: Path) -> None:
    """Per-experiment aggregates: marginal distances, zero-shot scores, and
    adaptation curves, each as one tidy CSV."""
    marginal, zeroshot, adapt = [], [], []
    for name in sorted(summaries):
        result = summaries[name] or {}
        parts = name.split("/")
        if name.startswith("marginal/") and "mean_D" in result:
            marginal.append({"setting": parts[1], "run": parts[2],
                             "mean_D": result["mean_D"],
                             "per_seed": ";".join(repr(s) for s in result.get("per_seed", []))})
        elif name.startswith("zeroshot/") and "mean" in result:
            env_m, run = parts[1], parts[2]
            zeroshot.append({"setting": env_m, "run": run,
                             "mean_score": result["mean"],
                             "scores": ";".join(repr(s) for s in result.get("scores", []))})
        elif name.startswith("adapt/") and "auc" in result:
            adapt.append({"setting": parts[1], "run": parts[2],
                          "auc": result["auc"], "final": result["final"]})
    for fname, rows, cols in (
        ("marginal_distance.csv", marginal, ["setting", "run", "mean_D", "per_seed"]),
        ("zeroshot_scores.csv", zeroshot, ["setting", "run", "mean_score", "scores"]),
        ("adaptation_summary.csv", adapt, ["setting", "run", "auc", "final"]),
    ):
        if rows:
            with open(out_dir / fname, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=cols)
                writer.writeheader()
                writer.writerows(rows)


if __name__ == "__main__":
    sys.exit(main())
