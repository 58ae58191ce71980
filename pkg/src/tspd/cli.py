"""Command-line entry point: ``tspd <subcommand>``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import sys

from .environment import FeasibilityError, InvariantError, dump_trajectory
from .evaluation import evaluate, load_baselines, render_route, solve_one
from .instances import (
    FAMILIES,
    InstanceFormatError,
    InstanceValidationError,
    generate_instances,
    load_instance,
    load_instances,
    save_instances,
)
from .model import Model, ModelConfig
from .nn.checkpoint import CheckpointError
from .nn.tensor import NumericError
from .oracles import InstanceSizeError, exact_optimum, greedy_nearest, random_rollout
from .training import TrainConfig, TrainingError, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tspd", description="Truck-and-drone routing with a learned policy.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a seeded instance set")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--family", choices=FAMILIES[:2], default="random-corner-depot")
    g.add_argument("--scale", type=int, choices=(1, 100), default=100)
    g.add_argument("--alpha", type=float, default=2.0)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train actor and critic")
    t.add_argument("--n", type=int, required=True)
    t.add_argument("--epochs", type=int, default=10000)
    t.add_argument("--batch", type=int, default=64)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--mode", choices=("sync", "async"), default="async")
    t.add_argument("--out", required=True)
    t.add_argument("--tau", type=float, default=0.5)
    t.add_argument("--val-interval", type=int, default=200)
    t.add_argument("--lr-actor", type=float, default=TrainConfig.lr_actor)
    t.add_argument("--lr-critic", type=float, default=TrainConfig.lr_critic)
    t.add_argument("--d-h", type=int, default=ModelConfig.d_h)
    t.add_argument("--heads", type=int, default=ModelConfig.heads)
    t.add_argument("--layers", type=int, default=ModelConfig.layers)
    t.add_argument("--quiet", action="store_true")

    e = sub.add_parser("eval", help="evaluate a checkpoint on an instance directory")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--instances", required=True)
    e.add_argument("--strategy", choices=("greedy", "sample"), default="greedy")
    e.add_argument("--k", type=int, default=1)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--baseline")
    e.add_argument("--report", required=True)

    o = sub.add_parser("oracle", help="solve one instance with a reference method")
    o.add_argument("--instance", required=True)
    o.add_argument("--method", choices=("exact", "greedy", "random"), default="exact")
    o.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("solve", help="decode one instance with a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--instance", required=True)
    s.add_argument("--strategy", choices=("greedy", "sample"), default="greedy")
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--render")
    return p


def _cmd_generate(a) -> int:
    iset = generate_instances(a.n, a.count, a.seed, a.family, a.scale, a.alpha)
    root = save_instances(iset, a.out)
    print(f"wrote {len(iset)} instances to {root}")
    return EXIT_OK


def _cmd_train(a) -> int:
    model_cfg = ModelConfig(d_h=a.d_h, heads=a.heads, layers=a.layers, d_ff=4 * a.d_h, critic_hidden=a.d_h)
    cfg = TrainConfig(
        n=a.n, epochs=a.epochs, batch=a.batch, seed=a.seed, mode=a.mode, tau=a.tau,
        val_interval=a.val_interval, lr_actor=a.lr_actor, lr_critic=a.lr_critic, model=model_cfg,
    )

    def log(row):
        if not a.quiet and (row["epoch"] % 10 == 0 or row["epoch"] == cfg.epochs - 1):
            print(f"epoch {row['epoch']:>6}  cost {row['reward']:.3f}  critic {row['critic_loss']:.3f}  "
                  f"{row['seconds']:.1f}s", flush=True)

    res = train(cfg, a.out, log=log)
    print(f"best validation cost {res.best_val:.4f} at epoch {res.best_epoch}; outputs in {a.out}")
    return EXIT_OK


def _cmd_eval(a) -> int:
    model, _ = Model.load(a.ckpt)
    insts = list(load_instances(a.instances))
    if not insts:
        raise InstanceFormatError(f"no instances in {a.instances}")
    baselines = load_baselines(a.baseline) if a.baseline else None
    report = evaluate(model, insts, a.strategy, a.k, baselines, a.seed)
    csv_path, txt_path = report.write(a.report)
    print(report.to_text(), end="")
    print(f"report: {csv_path} and {txt_path}")
    return EXIT_OK


def _cmd_oracle(a) -> int:
    inst = load_instance(a.instance)
    if a.method == "exact":
        plan = exact_optimum(inst)
    elif a.method == "greedy":
        plan = greedy_nearest(inst)
    else:
        plan = random_rollout(inst, a.seed)
    print(f"cost {plan.cost!r}")
    print(" ".join(f"{agent[0]}{node}" for agent, node in plan.operations))
    return EXIT_OK


def _cmd_solve(a) -> int:
    model, _ = Model.load(a.ckpt)
    inst = load_instance(a.instance)
    traj = solve_one(model, inst, a.strategy, a.k, a.seed)
    print(dump_trajectory(traj, inst), end="")
    if a.render:
        render_route(traj, inst, a.render)
        print(f"route drawn to {a.render}")
    return EXIT_OK


COMMANDS = {
    "generate": _cmd_generate, "train": _cmd_train, "eval": _cmd_eval,
    "oracle": _cmd_oracle, "solve": _cmd_solve,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (NumericError, TrainingError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InstanceFormatError, InstanceValidationError, CheckpointError, InstanceSizeError,
            FeasibilityError, InvariantError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
