"""Command line entry point: ``scar {pretrain,scar,tradeoff,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .attacks import parse_eps_list
from .checkpoint import CheckpointError
from .config import ConfigError, load_config
from .data import CsvFormatError
from .runs import cmd_pretrain, cmd_scar, cmd_tradeoff, emit_report

EXIT_USAGE = 2


class UsageError(ValueError):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scar", description="Semi-supervised training with robust pseudo-label selection.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", required=True, help="experiment config (INI)")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--seed", type=int, help="master seed (overrides $SCAR_SEED and model.seed)")

    common(sub.add_parser("pretrain", help="semi-supervised pre-training"))
    sp = sub.add_parser("scar", help="fine-tune a checkpoint on robust pseudo-labels")
    common(sp)
    sp.add_argument("--checkpoint", help="pre-trained checkpoint (default: <out>/pretrain.ckpt)")
    sp = sub.add_parser("tradeoff", help="sensitivity/specificity sweep over eps")
    common(sp)
    sp.add_argument("--checkpoint", help="checkpoint to evaluate (default: <out>/pretrain.ckpt)")
    sp.add_argument("--eps-list", help='comma separated, e.g. "1/255,2/255,4/255"')
    sp = sub.add_parser("report", help="aggregate scar_summary.csv files into a table")
    sp.add_argument("runs", nargs="+", help="run directories or scar_summary.csv files")
    sp.add_argument("--out", help="directory for report.csv / report.txt")
    return p


def _run(args: argparse.Namespace) -> int:
    if args.command == "report":
        for path in args.runs:
            p = Path(path)
            if not (p / "scar_summary.csv" if p.is_dir() else p).exists():
                raise FileNotFoundError(f"run summary not found: {path}")
        _, text = emit_report([Path(r) for r in args.runs], Path(args.out) if args.out else None)
        sys.stdout.write(text)
        return 0

    cfg = load_config(args.config, seed=args.seed, out=args.out)
    if args.command == "pretrain":
        art = cmd_pretrain(cfg)
    elif args.command == "scar":
        art = cmd_scar(cfg, args.checkpoint)
    else:
        eps = None
        if args.eps_list is not None:
            try:
                eps = parse_eps_list(args.eps_list)
            except ValueError as exc:
                raise UsageError(f"--eps-list: {exc}") from None
            if not eps:
                raise UsageError("--eps-list is empty")
        art = cmd_tradeoff(cfg, args.checkpoint, eps)
    print(f"{args.command}: wrote {art.metrics} ({art.duration_s:.1f}s)")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _run(args)
    except (FileNotFoundError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, CsvFormatError, CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
