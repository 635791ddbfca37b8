"""Command-line entry point: ``sherbet <stage> [options]``.

Only the standard library is imported at module level so that
``--threads`` can set the BLAS thread variables before numpy loads.
"""
import argparse
import json
import logging
import os
import sys

STAGES = ("gen-synth", "embed-hier", "build-graph", "pretrain-ssl", "finetune", "evaluate", "explain", "pipeline")
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--out", help="output directory for every artifact")
    common.add_argument("--threads", type=int, help="BLAS threads for this process")
    common.add_argument("--task", choices=("diagnosis", "heart-failure"))
    common.add_argument("--ontology", help="ontology CSV (parent,child); skips gen-synth")
    common.add_argument("--dataset", help="dataset JSON; needs --ontology")
    common.add_argument("--no-hyperbolic", action="store_true", help="random code embeddings")
    common.add_argument("--no-hierarchy", action="store_true", help="flat decoder over leaf codes only")
    common.add_argument("--no-ssl", action="store_true", help="skip self-supervised pre-training")
    common.add_argument("--no-graph", action="store_true", help="skip the graph layer")
    common.add_argument("-q", "--quiet", action="store_true", help="only log warnings")

    parser = argparse.ArgumentParser(prog="sherbet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        p = sub.add_parser(name, parents=[common])
        if name in ("evaluate", "explain"):
            p.add_argument("--checkpoint", default="finetune.ckpt",
                           help="checkpoint file name inside the output directory")
    return parser


def resolve_config(args):
    from .config import RunConfig, load_config

    previous = os.path.join(args.out, "config.resolved.json") if args.out else None
    if args.config:
        cfg = load_config(args.config)
    elif previous and os.path.exists(previous):
        # later stages pick up the configuration the run directory was built with
        cfg = load_config(previous)
    else:
        cfg = RunConfig()
    for key in ("seed", "out", "threads", "task", "ontology", "dataset"):
        value = getattr(args, key)
        if value is not None:
            setattr(cfg, key, value)
    for flag in ("hyperbolic", "hierarchy", "ssl", "graph"):
        if getattr(args, f"no_{flag}"):
            setattr(cfg.ablations, flag, False)
    return cfg.resolved()


def run_command(args):
    from . import pipeline as pl

    run = pl.Run(resolve_config(args))
    if args.command == "pipeline":
        return pl.pipeline(run)
    if args.command in ("evaluate", "explain"):
        return pl.STAGE_FUNCS[args.command](run, args.checkpoint)
    return pl.STAGE_FUNCS[args.command](run)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        for var in THREAD_VARS:
            os.environ[var] = str(args.threads)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    from .errors import SherbetError

    try:
        run_command(args)
    except SherbetError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "IOError", "message": str(exc)}, sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
