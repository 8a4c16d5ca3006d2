import argparse
import logging
import os
import sys
from typing import List, Optional

import uvicorn
from dotenv import load_dotenv
from pydantic import ValidationError

from . import config
from .adapters.oracles.factory import parse_hostport
from .core.errors import RelxError
from .core.models import (
    AttackConfig,
    ExtractionConfig,
    RefinementConfig,
    RunReport,
    TrainConfig,
)
from .core.orchestrator import Orchestrator, write_report
from .core.serialization import load_model
from .service.app import create_app
from .service.line_server import serve

logger = logging.getLogger(__name__)


def int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relx", description="Query-only extraction of two-layer ReLU networks"
    )
    subparsers = parser.add_subparsers(dest="command", required=True, help="Commands")

    # Train victim command
    train = subparsers.add_parser("train-victim", help="Train a victim network")
    train.add_argument("--d", type=int, required=True, help="Input width")
    train.add_argument("--h", type=int, required=True, help="Hidden width")
    train.add_argument("--k", type=int, required=True, help="Number of classes")
    train.add_argument(
        "--task",
        default="gaussian",
        help="gaussian | noisy | teacher | idx:<images>,<labels>",
    )
    train.add_argument("--n", type=int, default=2048, help="Synthetic dataset size")
    train.add_argument("--epochs", type=int, default=config.TRAIN_EPOCHS)
    train.add_argument("--lr", type=float, default=config.TRAIN_LEARNING_RATE)
    train.add_argument("--batch", type=int, default=config.TRAIN_BATCH_SIZE)
    train.add_argument("--optimizer", choices=["sgd", "adam"], default="sgd")
    train.add_argument("--temperature", type=float, default=1.0)
    train.add_argument("--seed", type=int, required=True, help="Data seed")
    train.add_argument("--init-seed", type=int, help="Defaults to --seed")
    train.add_argument("--shuffle-seed", type=int, help="Defaults to --seed")
    train.add_argument("--out", required=True, help="Model file to write")
    train.add_argument("--report", help="JSON report file")

    # Serve oracle command
    serve = subparsers.add_parser("serve-oracle", help="Serve a model as a logit oracle")
    serve.add_argument("--model", required=True, help="Model file")
    serve.add_argument("--listen", default="127.0.0.1:0", help="host:port")
    serve.add_argument("--http", action="store_true", help="Serve over HTTP instead")

    # Extract command
    ext = subparsers.add_parser("extract", help="Extract a network from an oracle")
    ext.add_argument(
        "--oracle", required=True, help="local:<file> | tcp:<host:port> | http://<host:port>"
    )
    ext.add_argument("--d", type=int, required=True)
    ext.add_argument("--h", type=int, required=True)
    ext.add_argument("--seed", type=int, required=True)
    ext.add_argument("--budget", type=int, help="Search-phase query budget")
    ext.add_argument("--out", required=True)
    ext.add_argument("--report")

    # Refine command
    ref = subparsers.add_parser("refine", help="Repair an extracted network by learning")
    ref.add_argument("--model", required=True)
    ref.add_argument("--oracle", required=True)
    ref.add_argument("--n", type=int, default=config.REFINE_DATASET_SIZE)
    ref.add_argument("--iters", type=int, default=config.REFINE_ITERATIONS)
    ref.add_argument("--lr", type=float, default=config.REFINE_LEARNING_RATE)
    ref.add_argument("--seed", type=int, required=True)
    ref.add_argument("--scalar-bias", action="store_true", help="Single shared bias adjustment")
    ref.add_argument("--out", required=True)
    ref.add_argument("--report")

    # Hard instance commands
    hard = subparsers.add_parser("gen-hard", help="Build a hard instance")
    kinds = hard.add_subparsers(dest="kind", required=True)
    rect = kinds.add_parser("rectangle", help="k-rectangle network")
    rect.add_argument("--d", type=int, required=True)
    rect.add_argument("--k", type=int, required=True)
    rect.add_argument("--p", type=int, required=True)
    rect.add_argument("--cell", type=int_list, required=True, help="j1,...,jk")
    rect.add_argument("--active", type=int_list, help="i1,...,ik (default 0..k-1)")
    rect.add_argument("--out", required=True)
    rect.add_argument("--report")
    subset = kinds.add_parser("subsetsum", help="Subset-sum network")
    subset.add_argument("--set", type=int_list, required=True, help="v1,v2,...")
    subset.add_argument("--target", type=int, required=True)
    subset.add_argument("--p", type=int, default=1)
    subset.add_argument("--out", required=True)
    subset.add_argument("--report")

    # Verify equivalence command
    equiv = subparsers.add_parser("verify-equiv", help="Compare two models on {0,1}^d")
    equiv.add_argument("a")
    equiv.add_argument("b")
    equiv.add_argument("--mode", choices=["bruteforce"], default="bruteforce")
    equiv.add_argument("--d", type=int, required=True)
    equiv.add_argument("--report")

    # Eval command
    ev = subparsers.add_parser("eval", help="Compare two models")
    ev.add_argument("metric", choices=["fidelity", "precision", "transfer"])
    ev.add_argument("--a", required=True, help="Model file")
    ev.add_argument("--b", required=True, help="Model file or oracle spec")
    ev.add_argument("--n", type=int, default=config.FIDELITY_SAMPLES)
    ev.add_argument("--seed", type=int, required=True)
    ev.add_argument("--eps", type=float, default=config.PGD_EPSILON)
    ev.add_argument("--iters", type=int, default=config.PGD_ITERATIONS)
    ev.add_argument("--report")

    return parser


def run(args: argparse.Namespace, orchestrator: Orchestrator) -> Optional[RunReport]:
    if args.command == "train-victim":
        cfg = TrainConfig(
            d=args.d,
            h=args.h,
            k=args.k,
            optimizer=args.optimizer,
            learning_rate=args.lr,
            batch_size=args.batch,
            epochs=args.epochs,
            init_seed=args.seed if args.init_seed is None else args.init_seed,
            shuffle_seed=args.seed if args.shuffle_seed is None else args.shuffle_seed,
            temperature=args.temperature,
        )
        report = orchestrator.train_victim(cfg, args.task, args.n, args.seed, args.out)
        print(f"Trained victim: train accuracy {report.metrics['train_accuracy']:.4f}")
        return report

    if args.command == "serve-oracle":
        net = load_model(args.model)
        if args.http:
            host, port = parse_hostport(args.listen)
            uvicorn.run(create_app(net), host=host, port=port)
        else:
            service = serve(net, args.listen)
            print(f"Serving on {service.endpoint}", flush=True)
            service.wait()
        return None

    if args.command == "extract":
        cfg = ExtractionConfig(seed=args.seed, search_budget=args.budget)
        report = orchestrator.extract(args.oracle, args.d, args.h, cfg, args.out)
        print(
            f"Extracted {report.metrics['neurons_found']} of {args.h} neurons "
            f"with {report.ledger['total']} queries"
        )
        return report

    if args.command == "refine":
        cfg = RefinementConfig(
            learning_rate=args.lr,
            iterations=args.iters,
            dataset_size=args.n,
            seed=args.seed,
            scalar_bias=args.scalar_bias,
        )
        report = orchestrator.refine(args.model, args.oracle, cfg, args.out)
        print(
            f"Fidelity {report.metrics['fidelity_before']:.4f} -> "
            f"{report.metrics['fidelity_after']:.4f}"
        )
        return report

    if args.command == "gen-hard":
        if args.kind == "rectangle":
            if len(args.cell) != args.k:
                raise ValueError(f"--cell needs {args.k} entries, got {len(args.cell)}")
            report = orchestrator.gen_rectangle(args.d, args.p, args.cell, args.active, args.out)
        else:
            report = orchestrator.gen_subsetsum(args.set, args.target, args.p, args.out)
        print(f"Wrote {args.out}")
        return report

    if args.command == "verify-equiv":
        report = orchestrator.verify_equiv(args.a, args.b, args.d)
        if report.metrics["result"] == "equivalent":
            print("Equivalent")
        else:
            print(f"Witness {report.metrics['witness']}")
        return report

    if args.command == "eval":
        attack = AttackConfig(epsilon=args.eps, iterations=args.iters)
        report = orchestrator.evaluate(args.metric, args.a, args.b, args.n, args.seed, attack)
        headline = {"fidelity": "fidelity", "precision": "mean_bits", "transfer": "rate"}
        print(f"{args.metric}: {report.metrics[headline[args.metric]]}")
        return report

    raise ValueError(f"unknown command {args.command!r}")


def dispatch(argv: Optional[List[str]] = None, orchestrator: Optional[Orchestrator] = None) -> int:
    """Run one command; 0 on success, 1 on a domain error, 2 on bad usage."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        report = run(args, orchestrator or Orchestrator())
        if report is not None:
            write_report(report, getattr(args, "report", None))
    except ValidationError as e:
        print(f"error: ValidationError: {e.errors()[0]['msg']}", file=sys.stderr)
        return 1
    except (RelxError, ValueError, OSError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        partial = getattr(e, "report", None)
        if partial is not None:
            write_report(partial, getattr(args, "report", None))
        return 1
    return 0


def main():
    # Load environment variables
    load_dotenv()
    logging.basicConfig(level=os.getenv("RELX_LOG_LEVEL", config.LOG_LEVEL))
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
