"""Command-line entry point: ``glimpse <command> [flags]``.

Exit codes: 0 success, 1 usage or configuration error, 2 verification
failure (gradcheck / oracle), 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfglib
from . import render
from .autograd import ConfigurationError, UsageError, check_gradients, no_grad
from .autograd.opcases import OP_CASES
from .data import load_split, subset
from .env import EnvConfig
from .evaluate import classifier_full_accuracy, evaluate_runs
from .policies import NetworkConfig, PolicyParams, classify
from .trainer import collect
from .trainer.oracle import DEFAULT_CAP, enumerate_grad_check, expected_reward_grad, random_tiny_instance
from .trainer.train import load_training_checkpoint, train

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("glimpse")


class VerificationFailure(Exception):
    pass


# helpers ---------------------------------------------------------------------------

def _run_config(args) -> cfglib.RunConfig:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"train.seed={args.seed}")
    if args.out is not None:
        overrides.append(f"out={json.dumps(args.out)}")
    if getattr(args, "checkpoint", None):
        overrides.append(f"checkpoint={json.dumps(args.checkpoint)}")
    return cfglib.load(args.config, overrides)


def _out_dir(cfg: cfglib.RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset(cfg: cfglib.RunConfig, split: str):
    ds = load_split(split, cfg.data.dir)
    per_class = cfg.data.train_per_class if split == "train" else cfg.data.test_per_class
    if per_class:
        ds = subset(ds, per_class, cfg.data.subset_seed + (0 if split == "train" else 1), cfg.network.classes)
    return ds


def _checkpoint(cfg: cfglib.RunConfig):
    if not cfg.checkpoint:
        raise ConfigurationError("this command needs a checkpoint (--checkpoint PATH or checkpoint=...)")
    params, opt, meta = load_training_checkpoint(cfg.checkpoint)
    if params.cfg != cfg.network:
        log.info("using the checkpoint's network architecture %s", params.cfg)
    if "env" in meta:
        env = EnvConfig(**meta["env"])
        if env != cfg.env:
            log.info("using the checkpoint's environment %s", env)
    else:
        env = cfg.env
    return params, opt, meta, env


def _eval_mode(cfg: cfglib.RunConfig, meta: dict) -> str:
    return cfg.eval.mode or meta.get("mode", "i")


def _workers(args) -> int:
    return args.workers if args.workers else (os.cpu_count() or 1)


# commands --------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _run_config(args)
    out = _out_dir(cfg)
    (out / "config.json").write_text(cfg.dumps())
    train_ds, test_ds = _dataset(cfg, "train"), _dataset(cfg, "test")
    if cfg.checkpoint:
        params, opt, meta, _ = _checkpoint(cfg)
        start = int(meta["epoch"])
        if params.cfg != cfg.network:
            raise ConfigurationError(f"checkpoint network {params.cfg} differs from configured {cfg.network}")
    else:
        params = PolicyParams.init(cfg.network, np.random.default_rng([cfg.train.seed, 2**31]))
        opt, start = None, 0
    result = train(train_ds, test_ds, cfg.env, params, cfg.train, out_dir=out, opt=opt, start_epoch=start,
                   max_epochs=args.epochs)
    for m in result.metrics:
        print(f"epoch {m.epoch:3d} mode {m.mode:<3s} loss {m.train_loss:9.4f} train_acc {m.train_acc:.4f} "
              f"test_acc {m.test_acc:.4f} ({m.wall_seconds:.1f}s)")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    out = _out_dir(cfg)
    params, _, meta, env = _checkpoint(cfg)
    ds = _dataset(cfg, "test")
    mode = _eval_mode(cfg, meta)
    report = evaluate_runs(params, ds, env, mode, runs=cfg.eval.runs, seed=cfg.train.seed, alpha=cfg.eval.alpha,
                           workers=_workers(args))
    summary = dict(report.summary(), mode=mode, samples=len(ds))
    (out / "eval_summary.json").write_text(json.dumps(summary, indent=2))
    render.write_table(out / "eval_runs.csv", ("run", "top1", "top2"),
                       [(r, repr(float(a)), repr(float(b))) for r, (a, b) in enumerate(zip(report.top1, report.top2))])
    classes = params.cfg.classes
    render.write_table(out / "confusion.csv", ("true",) + tuple(f"pred_{k}" for k in range(classes)),
                       [[k] + [repr(float(v)) for v in row] for k, row in enumerate(report.confusion)])
    print(f"mode {mode}: top1 {summary['top1_mean']:.4f} +/- {summary['top1_halfwidth']:.4f}, "
          f"top2 {summary['top2_mean']:.4f} +/- {summary['top2_halfwidth']:.4f} "
          f"({report.runs} runs, t={report.t_value:.4f})")
    return EXIT_OK


def cmd_eval_classifier(args) -> int:
    cfg = _run_config(args)
    out = _out_dir(cfg)
    params, _, _, _ = _checkpoint(cfg)
    ds = _dataset(cfg, "test")
    top1, top2 = classifier_full_accuracy(params, ds)
    (out / "classifier_full.json").write_text(json.dumps({"top1": top1, "top2": top2, "samples": len(ds)}, indent=2))
    print(f"full-image classifier: top1 {top1:.4f} top2 {top2:.4f} on {len(ds)} images")
    return EXIT_OK


def parse_snapshots(text: str | None, env: EnvConfig) -> list[tuple[int, int]]:
    if not text:
        return [(e, 0) for e in range(env.episodes)] + [(env.episodes - 1, env.horizon - 1)]
    snaps = []
    for item in text.split(";"):
        try:
            e, t = (int(v) for v in item.split(","))
        except ValueError:
            raise ConfigurationError(f"snapshot {item!r} is not of the form e,t") from None
        if not (0 <= e < env.episodes and 0 <= t < env.horizon):
            raise ConfigurationError(f"snapshot ({e},{t}) outside {env.episodes} episodes x {env.horizon} steps")
        snaps.append((e, t))
    return snaps


def cmd_rollout(args) -> int:
    cfg = _run_config(args)
    out = _out_dir(cfg)
    params, _, meta, env = _checkpoint(cfg)
    snaps = parse_snapshots(args.snapshots, env)
    ds = load_split(args.split, cfg.data.dir)
    if not 0 <= args.index < len(ds):
        raise ConfigurationError(f"image index {args.index} outside 0..{len(ds) - 1}")
    mode = _eval_mode(cfg, meta)
    rng = np.random.default_rng([cfg.train.seed, args.index])
    batch = collect(ds.images[args.index], ds.labels[args.index], params, env, mode, rng, keep_snapshots=True)
    for e, t in snaps:
        y, pose, goal = batch.snapshots[(e, t)]
        stem = out / f"snapshot_e{e}_t{t}"
        render.write_pgm(f"{stem}.pgm", render.marked(y[0], pose[0], goal[0], env), scale=args.scale)
        render.write_pgm(f"{stem}_raw.pgm", render.to_gray(y[0]), scale=args.scale)
        render.write_raw(f"{stem}_raw.csv", y[0])
    render.write_trajectory(out / "trajectory.csv", batch)
    with no_grad():
        probs = classify(batch.final_image, params).data[0]
    render.write_prediction(out / "prediction.csv", probs, int(ds.labels[args.index]))
    print(f"image {args.index} (label {ds.labels[args.index]}): predicted {int(probs.argmax())}, "
          f"{len(snaps)} snapshots written to {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed or 0)
    failed = []
    for name, builder in OP_CASES:
        fn, leaves = builder(rng)
        res = check_gradients(fn, leaves, n_coords=args.coords, h=args.h, tol=args.tol, rng=rng, name=name)
        print(f"{'PASS' if res.passed else 'FAIL'} {name:<24s} coords={res.coords:4d} max_rel_err={res.max_rel_err:.3e}")
        if not res.passed:
            failed.append(name)
    if failed:
        raise VerificationFailure(f"finite-difference check failed for {', '.join(failed)}")
    return EXIT_OK


def tiny_configs(args) -> tuple[EnvConfig, NetworkConfig]:
    env = EnvConfig(n=args.n, c=1, m=args.m, step=args.step, episodes=args.episodes, horizon=args.horizon)
    net = NetworkConfig(in_channels=1, planner_width=args.width, planner_blocks=args.blocks,
                        classifier_width=args.width, classifier_blocks=args.blocks)
    return env, net


def cmd_oracle(args) -> int:
    env, net = tiny_configs(args)
    rng = np.random.default_rng(args.seed or 0)
    worst, worst_ablation = 0.0, 0.0
    for k in range(args.instances):
        image, label, pose, params = random_tiny_instance(rng, env, net)
        res = enumerate_grad_check(image, label, params, env, pose, mode=args.mode, cap=args.cap)
        ablation = enumerate_grad_check(image, label, params, env, pose, mode="i", cap=args.cap)
        direct = expected_reward_grad(image, label, params, env, pose, cap=args.cap)
        abl_diff = max(float(np.max(np.abs(ablation.expected_grad_j_hat[n] - direct[n]))) for n in direct)
        worst, worst_ablation = max(worst, res.max_abs_diff), max(worst_ablation, abl_diff)
        print(f"instance {k}: {res.n_trajectories} trajectories, sum p = {res.total_probability:.15f}, "
              f"max|E[grad J_hat] - grad J| = {res.max_abs_diff:.3e}, i.i.d. ablation diff = {abl_diff:.3e}")
    ok = worst < args.tol and worst_ablation < args.tol
    print(f"{'PASS' if ok else 'FAIL'} worst diff {worst:.3e}, worst ablation diff {worst_ablation:.3e} (tol {args.tol:g})")
    if not ok:
        raise VerificationFailure("enumeration oracle disagreement")
    return EXIT_OK


# parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides train.seed")
    common.add_argument("--workers", type=int, default=None, help="evaluation processes (default: all cores)")
    common.add_argument("--out", help="output directory (overrides out)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted override, e.g. env.m=6")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="glimpse", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="run the mode schedule")
    t.add_argument("--checkpoint", help="resume from this checkpoint")
    t.add_argument("--epochs", type=int, default=None, help="stop after this many epochs of the schedule")
    t.set_defaults(func=cmd_train)

    for name, func, text in (("eval", cmd_eval, "repeated stochastic evaluation"),
                             ("eval-classifier", cmd_eval_classifier, "classifier on unmasked images")):
        e = sub.add_parser(name, parents=[common], help=text)
        e.add_argument("--checkpoint")
        e.set_defaults(func=func)

    r = sub.add_parser("rollout", parents=[common], help="render one trajectory")
    r.add_argument("--checkpoint")
    r.add_argument("--index", type=int, default=0)
    r.add_argument("--split", choices=("train", "test"), default="test")
    r.add_argument("--snapshots", help="e,t pairs separated by ';' (default: start of each episode and the end)")
    r.add_argument("--scale", type=int, default=8, help="PGM pixel upscaling")
    r.set_defaults(func=cmd_rollout)

    g = sub.add_parser("gradcheck", parents=[common], help="finite-difference suite")
    g.add_argument("--coords", type=int, default=100)
    g.add_argument("--h", type=float, default=1e-5)
    g.add_argument("--tol", type=float, default=1e-4)
    g.set_defaults(func=cmd_gradcheck)

    o = sub.add_parser("oracle", parents=[common], help="exhaustive unbiasedness check")
    for flag, default in (("--n", 4), ("--m", 2), ("--step", 2), ("--episodes", 1), ("--horizon", 1),
                          ("--width", 2), ("--blocks", 1), ("--instances", 10), ("--cap", DEFAULT_CAP)):
        o.add_argument(flag, type=int, default=default)
    o.add_argument("--mode", choices=("i", "ii", "iii"), default="iii")
    o.add_argument("--tol", type=float, default=1e-9)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except VerificationFailure as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (ConfigurationError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
