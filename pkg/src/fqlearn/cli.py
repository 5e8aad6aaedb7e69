"""Command-line entry point: train, eval, cross-play, oracle, grad-check.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import config as config_mod
from .errors import ConfigurationError, FQLError

USAGE, FAILURE = 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _load_config(path, overrides):
    cfg = config_mod.load(path) if path else config_mod.parse({})
    if overrides:
        cfg = config_mod.parse({**cfg.model_dump(mode="json"), **overrides})
    return cfg


def cmd_train(args) -> int:
    from .persistence import save_run
    from .training import train
    overrides = {k: v for k, v in (("seed", args.seed), ("rounds", args.rounds)) if v is not None}
    cfg = _load_config(args.config, overrides)
    every = max(cfg.rounds // 20, 1)

    def progress(k, row):
        if not args.quiet and k % every == 0:
            print(" ".join(f"{c}={row[c]:.4g}" for c in row), flush=True)

    result = train(cfg, progress)
    print(save_run(result, cfg, args.out))
    return 0


def cmd_eval(args) -> int:
    from .agents import load_learner
    from .envs.battle import BattleConfig
    from .envs.squeeze import optimal_total
    from .episodes import AttackAdjacentPolicy, RandomPolicy
    from .evaluation import cross_play, evaluate_squeeze
    learner = load_learner(args.checkpoint)
    meta = learner.meta
    if meta.get("environment") == "squeeze":
        env = config_mod.SqueezeSettings(**meta["squeeze"]).build()
        rewards = evaluate_squeeze(learner, env, args.episodes)
        _, best = optimal_total(env)
        print(f"final_reward={rewards[-1]!r} optimum={best!r} ratio={rewards[-1] / best:.4f}")
        return 0
    opponents = {"random": RandomPolicy(), "attack": AttackAdjacentPolicy(), "self": learner}
    report = cross_play(learner, opponents[args.opponent], args.episodes, args.seed,
                        config=BattleConfig(**meta["battle"]))
    print(json.dumps(report.to_dict(), indent=1))
    return 0


def cmd_cross_play(args) -> int:
    from .evaluation import cross_play
    report = cross_play(args.a, args.b, args.battles, args.seed, workers=args.workers)
    text = json.dumps(report.to_dict(), indent=1)
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(text)
    print(text)
    return 0


def cmd_oracle(args) -> int:
    from .envs.squeeze import optimal_total
    cfg = _load_config(args.config, None)
    env = cfg.squeeze_config()
    if args.n_agents is not None:
        env = config_mod.SqueezeSettings(n_agents=args.n_agents, targets=cfg.squeeze.targets).build()
    x, r = optimal_total(env)
    print(f"{x} {r!r}")
    return 0


def cmd_grad_check(args) -> int:
    from .diagnostics import TOLERANCE, gradient_suite
    worst, redrawn = gradient_suite(args.instances, args.seed, args.eps)
    for name, err in worst.items():
        print(f"{name:12s} {err:.3e}")
    top = max(worst.values())
    print(f"max_relative_error {top:.3e} (redrawn kink instances: {redrawn})")
    return 0 if top <= TOLERANCE else FAILURE


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fqlearn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train one run and write a run directory")
    t.add_argument("config", nargs="?", help="YAML run config (defaults if omitted)")
    t.add_argument("--out", default="runs", help="parent directory for run directories")
    t.add_argument("--seed", type=int)
    t.add_argument("--rounds", type=int, help="override the number of episodes/rounds")
    t.add_argument("-q", "--quiet", action="store_true")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="greedy evaluation of a saved checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--opponent", choices=["random", "attack", "self"], default="random",
                   help="battle opponent")
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(fn=cmd_eval)

    c = sub.add_parser("cross-play", help="battle checkpoint A against checkpoint B")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--battles", type=int, default=100)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--json", help="also write the report here")
    c.set_defaults(fn=cmd_cross_play)

    o = sub.add_parser("oracle", help="brute-force Gaussian Squeeze optimum")
    o.add_argument("--config")
    o.add_argument("--n-agents", type=int)
    o.set_defaults(fn=cmd_oracle)

    g = sub.add_parser("grad-check", help="finite-difference gradient suite")
    g.add_argument("--instances", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--eps", type=float, default=1e-5)
    g.set_defaults(fn=cmd_grad_check)
    return p


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    except FQLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILURE


if __name__ == "__main__":
    sys.exit(main())
