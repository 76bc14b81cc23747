"""Command-line entry points: generate / train / decode / oracle / check / experiment."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ._version import __version__
from .checks import CHECKS
from .decoder import beam_search, dump_decomposition_csv
from .harness import emit_report, load_config, run_experiment, train_run
from .model import InitSpec, LogitModel, load_model, save_model
from .objectives import TrainConfig
from .oracle import dump_oracle_csv, soft_q_backward
from .tasks import FAMILIES, TaskSpec, generate_task, load_task, save_task


def _add_generate(sub) -> None:
    p = sub.add_parser("generate", help="generate a task + demo file for one family")
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output task JSON path")
    p.add_argument("--depth", type=int)
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--branches", type=int)
    p.add_argument("--branch-depth", type=int)
    p.add_argument("--n-rewarded", type=int)
    p.add_argument("--n-demos", type=int)


def _cmd_generate(args) -> int:
    flags = {
        "depth": args.depth,
        "vocab_size": args.vocab_size,
        "branches": args.branches,
        "branch_depth": args.branch_depth,
        "n_rewarded": args.n_rewarded,
        "n_demos": args.n_demos,
    }
    params = {k: v for k, v in flags.items() if v is not None}
    mdp, demos = generate_task(args.family, args.seed, params)
    save_task(args.out, mdp, demos, TaskSpec(args.family, args.seed, params))
    print(f"wrote {args.out}: vocab={mdp.vocab.size} max_len={mdp.max_len} demos={len(demos)}")
    return 0


def _add_train(sub) -> None:
    p = sub.add_parser("train", help="train a model on a task's demonstrations")
    p.add_argument("--task", required=True)
    p.add_argument("--out", required=True, help="output model JSON path")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--v-weight", type=float, default=0.2)
    p.add_argument("--init", choices=("zeros", "gaussian"), default="gaussian")
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", help="optional per-epoch CSV log path")


def _cmd_train(args) -> int:
    mdp, demos = load_task(args.task)
    cfg = TrainConfig(
        v_weight=args.v_weight,
        lr=args.lr,
        epochs=args.epochs,
        init=InitSpec(args.init, args.sigma if args.init == "gaussian" else 0.0, args.seed),
    )
    model = LogitModel(mdp, cfg.init)
    model, log = train_run(model, demos, cfg)
    save_model(args.out, model)
    if args.log:
        header = "epoch,sft,v,overall,mean_soft_value_supervised,mean_value_gap"
        lines = [header] + [
            f"{e.epoch},{e.sft!r},{e.v!r},{e.overall!r},"
            f"{e.mean_soft_value_supervised!r},{e.mean_value_gap!r}"
            for e in log
        ]
        Path(args.log).write_text("\n".join(lines) + "\n")
    final = log[-1]
    print(
        f"wrote {args.out}: epochs={args.epochs} sft={final.sft:.6f} "
        f"v={final.v:.6f} overall={final.overall:.6f}"
    )
    return 0


def _add_decode(sub) -> None:
    p = sub.add_parser("decode", help="beam-search decode a prompt of a task")
    p.add_argument("--model", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--prompt", type=int, default=0, help="prompt index within the task")
    p.add_argument("--beam", type=int, default=5, help="beam width")
    p.add_argument("--trace", help="optional decode-trace JSON output path")
    p.add_argument("--decomposition", help="optional per-step score-decomposition CSV path")
    p.add_argument("--expand", choices=("global", "per-parent"), default="global")


def _cmd_decode(args) -> int:
    mdp, _ = load_task(args.task)
    model = load_model(args.model, mdp)
    if not 0 <= args.prompt < len(mdp.prompts):
        print(f"prompt index {args.prompt} out of range (task has {len(mdp.prompts)})", file=sys.stderr)
        return 1
    traj, trace = beam_search(model, mdp, mdp.prompts[args.prompt], args.beam, expand=args.expand)
    if args.trace:
        Path(args.trace).write_text(json.dumps(trace.to_doc(), indent=2) + "\n")
    if args.decomposition:
        dump_decomposition_csv(model, traj, args.decomposition)
    print(
        f"tokens={list(traj.final.tokens)} score={trace.pool[0].score:.6f} reward={traj.reward}"
    )
    return 0


def _add_oracle(sub) -> None:
    p = sub.add_parser("oracle", help="dump exact q*/v*/pi* for a task as CSV")
    p.add_argument("--task", required=True)
    p.add_argument("--out", required=True)


def _cmd_oracle(args) -> int:
    mdp, _ = load_task(args.task)
    table = soft_q_backward(mdp)
    dump_oracle_csv(table, args.out)
    print(f"wrote {args.out}: {len(table.q)} states")
    return 0


def _add_check(sub) -> None:
    p = sub.add_parser("check", help="run invariant suites; exit 0 only if all pass")
    p.add_argument("suites", nargs="+", choices=tuple(CHECKS) + ("all",))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true", help="run each suite at a tenth of its size")


def _cmd_check(args) -> int:
    names = tuple(CHECKS) if "all" in args.suites else tuple(dict.fromkeys(args.suites))
    quick_sizes = {
        "gradients": {"n_instances": 20},
        "telescoping": {"n_mdps": 10},
        "contraction": {"n_pairs": 10_000},
        "beam": {"n_width1": 100, "n_exhaustive": 10, "n_monotone": 10},
    }
    ok = True
    for name in names:
        kwargs = quick_sizes[name] if args.quick else {}
        result = CHECKS[name](seed=args.seed, **kwargs)
        print(result.line())
        ok = ok and result.passed
    return 0 if ok else 1


def _add_experiment(sub) -> None:
    p = sub.add_parser("experiment", help="run a full experiment config and emit reports")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)


def _cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    report = run_experiment(cfg, workers=args.workers, out_dir=args.out)
    paths = emit_report(report, args.out)
    print(f"wrote {paths['rows']} ({len(report.rows)} rows)")
    for agg in report.aggregates():
        print(
            f"v_weight={agg['v_weight']} width={agg['width']}: "
            f"greedy={agg['mean_greedy_accuracy']:.3f} beam={agg['mean_beam_accuracy']:.3f} "
            f"over_optimism={agg['mean_over_optimism_rate']:.3f}"
        )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="beamlab",
        description="Token-MDP training and beam-search decoding lab with exact oracles.",
    )
    parser.add_argument("--version", action="version", version=f"beamlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_generate(sub)
    _add_train(sub)
    _add_decode(sub)
    _add_oracle(sub)
    _add_check(sub)
    _add_experiment(sub)
    args = parser.parse_args(argv)
    handlers = {
        "generate": _cmd_generate,
        "train": _cmd_train,
        "decode": _cmd_decode,
        "oracle": _cmd_oracle,
        "check": _cmd_check,
        "experiment": _cmd_experiment,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
