"""Command-line entry point.

Subcommands: gen, train, eval, plan, dream, exec.  Exit codes: 0 success,
1 usage error, 2 runtime failure.  Every subcommand is deterministic given
its flags and seeds.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

BUNDLE_FILE = "bundle.vtpm"
STATE_FILE = "training_state.json"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vtp", description="latent-space visual task planner")
    sub = p.add_subparsers(dest="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)

    g = sub.add_parser("gen", parents=[common], help="generate episodes")
    g.add_argument("--scenario", choices=["blockworld", "nav4"], default="blockworld")
    g.add_argument("--episodes", type=int, required=True)
    g.add_argument("--policy", choices=["expert", "eps-random"], default="eps-random")
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", parents=[common], help="run one training stage")
    t.add_argument("--stage", required=True,
                   choices=["classifier", "autoencoder", "transform", "values"])
    t.add_argument("--data", required=True)
    t.add_argument("--iters", type=int, default=5000)
    t.add_argument("--batch", type=int, default=64)
    t.add_argument("--lambda", dest="lam", type=float, default=0.0)
    t.add_argument("--mode", choices=["naive", "linked"], default="linked")
    t.add_argument("--all-examples", action="store_true",
                   help="train the transform on failure episodes too")
    t.add_argument("--val-fraction", type=float, default=0.1)
    t.add_argument("--out", required=True)

    e = sub.add_parser("eval", parents=[common], help="evaluate trained models")
    e.add_argument("--models", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--subset", choices=["success", "all"], default="success")
    e.add_argument("--report", required=True)
    e.add_argument("--val-fraction", type=float, default=0.1)

    pl = sub.add_parser("plan", parents=[common], help="plan on a sampled scene")
    pl.add_argument("--models", required=True)
    pl.add_argument("--scenario", choices=["blockworld", "nav4"], default="blockworld")
    pl.add_argument("--samples", type=int, default=10)
    pl.add_argument("--depth", type=int, default=4)
    pl.add_argument("--out", required=True)

    d = sub.add_parser("dream", parents=[common], help="random latent rollout")
    d.add_argument("--models", required=True)
    d.add_argument("--steps", type=int, default=200)
    d.add_argument("--out", required=True)

    x = sub.add_parser("exec", parents=[common],
                       help="plan and execute in the simulator")
    x.add_argument("--models", required=True)
    x.add_argument("--scenario", choices=["blockworld", "nav4"], default="blockworld")
    x.add_argument("--samples", type=int, default=10)
    x.add_argument("--depth", type=int, default=4)
    x.add_argument("--out", default=None)
    return p


# --------------------------------------------------------------------------
# helpers


def _split_episodes(data_dir: Path, val_fraction: float):
    from . import dataset as ds

    entries = ds.read_manifest(data_dir / "manifest.jsonl")
    # the split seed is fixed so every stage sees the same held-out episodes
    train_entries, val_entries = ds.split(entries, val_fraction, seed=1234)
    return (ds.load_episodes(data_dir, train_entries),
            ds.load_episodes(data_dir, val_entries))


def load_models_dir(models_dir) -> "object":
    from . import models as M

    models_dir = Path(models_dir)
    bundle = M.load_bundle(models_dir / BUNDLE_FILE)
    state_path = models_dir / STATE_FILE
    if state_path.exists():
        bundle.trained = set(json.loads(state_path.read_text()).get("trained", []))
    return bundle


def _save_models_dir(bundle, models_dir) -> None:
    models_dir = Path(models_dir)
    models_dir.mkdir(parents=True, exist_ok=True)
    bundle.save(models_dir / BUNDLE_FILE)
    (models_dir / STATE_FILE).write_text(
        json.dumps({"scenario": bundle.scenario,
                    "trained": sorted(bundle.trained)}) + "\n")


def _gen_one(args_tuple):
    scenario, seed, policy = args_tuple
    from . import simworld as sw

    return sw.gen_episode(scenario, seed, policy)


# --------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    from . import dataset as ds

    jobs = [(args.scenario, args.seed + i, args.policy)
            for i in range(args.episodes)]
    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            episodes = list(pool.map(_gen_one, jobs, chunksize=16))
    else:
        episodes = [_gen_one(j) for j in jobs]
    manifest = ds.save_episodes(episodes, args.out)
    wins = sum(e.success for e in episodes)
    print(f"wrote {len(episodes)} episodes ({wins} successes) "
          f"to {args.out} (manifest {manifest.name})")
    return 0


def cmd_train(args) -> int:
    from . import models as M
    from . import training as T

    data_dir = Path(args.data)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_eps, val_eps = _split_episodes(data_dir, args.val_fraction)
    scenario = train_eps[0].scenario
    bundle_path = out_dir / BUNDLE_FILE
    if bundle_path.exists():
        bundle = load_models_dir(out_dir)
        if bundle.scenario != scenario:
            raise RuntimeError(f"models dir holds scenario {bundle.scenario!r}, "
                               f"data is {scenario!r}")
    else:
        bundle = M.ModelBundle(scenario, seed=args.seed)
    cfg = T.TrainConfig(iterations=args.iters, batch=args.batch, seed=args.seed)
    if args.stage == "classifier":
        metrics = T.train_classifier((train_eps, val_eps), cfg, bundle)
    elif args.stage == "autoencoder":
        metrics = T.train_autoencoder((train_eps, val_eps), cfg, bundle)
    elif args.stage == "transform":
        loss_cfg = T.LossConfig(lam=args.lam, mode=args.mode)
        metrics = T.train_transform((train_eps, val_eps), cfg, loss_cfg, bundle,
                                    success_only=not args.all_examples)
    else:
        metrics = T.train_value_heads((train_eps, val_eps), cfg, bundle)
    _save_models_dir(bundle, out_dir)
    curve = metrics.pop("curve", [])
    T.write_curve(out_dir / f"curve_{args.stage}.csv", curve)
    T.write_report(out_dir / f"metrics_{args.stage}.json", metrics)
    shown = {k: v for k, v in metrics.items() if k not in ("stage", "seed")}
    print(f"stage {args.stage} done: {json.dumps(shown)}")
    return 0


def cmd_eval(args) -> int:
    from . import training as T

    bundle = load_models_dir(args.models)
    train_eps, val_eps = _split_episodes(Path(args.data), args.val_fraction)
    report = {"stage": "eval", "seed": args.seed, "subset": args.subset}
    if {"autoencoder", "transform", "classifier"} <= bundle.trained:
        report.update(T.eval_recognizability(bundle, val_eps, subset=args.subset))
    if "values" in bundle.trained:
        report.update(T.eval_value_heads(bundle, val_eps))
    if "classifier" in bundle.trained:
        report["classifier_acc"] = T.classifier_accuracy(bundle, val_eps)
    if "autoencoder" in bundle.trained:
        report["recon_mae"] = T.reconstruction_mae(bundle, val_eps)
        report["baseline_mae"] = T.mean_image_baseline_mae(train_eps, val_eps)
    T.write_report(args.report, report)
    print(json.dumps({k: v for k, v in report.items() if v is not None}))
    return 0


def cmd_plan(args) -> int:
    from . import imaging, planner
    from . import simworld as sw

    bundle = load_models_dir(args.models)
    cfg = planner.PlannerConfig(max_depth=args.depth, n_samples=args.samples)
    scene = sw.random_scene(args.scenario, args.seed)
    x0 = sw.render(scene)
    result, _ = planner.plan(bundle, x0, x0, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = result.to_json_dict(bundle.catalog)
    payload["scenario"] = args.scenario
    payload["seed"] = args.seed
    (out_dir / "plan.json").write_text(json.dumps(payload, indent=2) + "\n")
    tiles = [x0]
    labels = ["x0"]
    for a, obs in zip(result.actions, result.observations):
        tiles.append(obs)
        labels.append(bundle.catalog.name(a))
    imaging.render_montage(tiles, labels, out_dir / "montage.png")
    print(json.dumps(payload))
    return 0


def cmd_dream(args) -> int:
    from . import imaging
    from . import models as M

    bundle = load_models_dir(args.models)
    rng = np.random.default_rng(args.seed)
    h0 = rng.uniform(1e-4, 1.0 - 1e-4, size=M.HIDDEN_SHAPE).astype(np.float32)
    states = bundle.dream(h0, steps=args.steps, rng=rng)
    final = states[-1]
    lo = min(float(h.min()) for h in states)
    hi = max(float(h.max()) for h in states)
    imaging.render_montage(
        [h0, bundle.decode(h0), final, bundle.decode(final)],
        ["h0", "decode h0", f"h{args.steps}", "decode"],
        args.out)
    print(json.dumps({"steps": args.steps, "min": lo, "max": hi,
                      "out": str(args.out)}))
    return 0


def closed_loop_exec(bundle, scenario: str, seed: int, cfg,
                     max_replans: int = 8) -> dict:
    """Plan, execute in the simulator, replan from the new frame; repeat.

    Returns outcome and bookkeeping.  An all-futures-fail verdict aborts; on
    that path the scene the planner saw is included for oracle auditing.
    """
    from . import planner
    from . import simworld as sw
    from .dataset import ROOT_ACTION

    scene = sw.random_scene(scenario, seed)
    x0 = sw.render(scene)
    last = ROOT_ACTION
    executed = []
    replans = 0
    while replans < max_replans:
        if sw.is_success(scene):
            return {"outcome": "success", "executed": executed,
                    "replans": replans}
        if not sw.legal_next(scene, last):
            break
        x = sw.render(scene) if executed else x0
        result, _ = planner.plan(bundle, x0, x, cfg, root_action=last)
        replans += 1
        if result.verdict == "all-futures-fail":
            return {"outcome": "all-futures-fail", "executed": executed,
                    "replans": replans, "scene": scene}
        for a in result.actions:
            scene, step_out = sw.step_action(scene, a)
            executed.append(int(a))
            last = int(a)
            if not step_out.succeeded:
                return {"outcome": "failure",
                        "reason": step_out.failure_reason.name.lower(),
                        "executed": executed, "replans": replans}
            if sw.is_success(scene):
                return {"outcome": "success", "executed": executed,
                        "replans": replans}
    return {"outcome": "success" if sw.is_success(scene) else "failure",
            "reason": "incomplete", "executed": executed, "replans": replans}


def cmd_exec(args) -> int:
    from . import planner

    bundle = load_models_dir(args.models)
    cfg = planner.PlannerConfig(max_depth=args.depth, n_samples=args.samples)
    result = closed_loop_exec(bundle, args.scenario, args.seed, cfg)
    result.pop("scene", None)
    payload = {"scenario": args.scenario, "seed": args.seed, **result}
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    print(json.dumps(payload))
    return 0


_COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "plan": cmd_plan,
    "dream": cmd_dream,
    "exec": cmd_exec,
}


def run(argv) -> int:
    """Dispatch a command line; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    if args.command is None:
        print(parser.format_usage(), file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except Exception as e:  # runtime failure: report, do not traceback-bomb
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
