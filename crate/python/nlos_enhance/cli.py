from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import EnhancerConfig, load_band
from .nlt import NltError, read_nlt

EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_FORMAT = 3


class NotBuilt(RuntimeError):
    pass


def _train(args: argparse.Namespace) -> None:
    cfg = EnhancerConfig.load(args.config)
    load_band(args.calibration)
    files = sorted(Path(args.dataset).glob("*.nlt"))
    if not files:
        raise ValueError(f"no .nlt files in {args.dataset}")
    for p in files:
        if read_nlt(p).kind != "transient":
            raise ValueError(f"{p}: expected a transient")
    raise NotBuilt(f"training is not available in this build ({len(files)} files, seed {cfg.seed})")


def _predict(args: argparse.Namespace) -> None:
    load_band(args.calibration)
    if not Path(args.checkpoint).exists():
        raise ValueError(f"checkpoint {args.checkpoint} not found")
    f = read_nlt(args.input)
    if f.kind != "transient":
        raise ValueError(f"{args.input}: expected a transient, got {f.kind}")
    raise NotBuilt("prediction is not available in this build")


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlos-enhance")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit the enhancer on rendered transients")
    t.add_argument("dataset", help="directory of clean transient .nlt files")
    t.add_argument("--calibration", required=True, help="JSON from `nlos filter --calibration-out`")
    t.add_argument("--config", help="enhancer configuration JSON")
    t.add_argument("-o", "--output", required=True, help="checkpoint path")
    t.set_defaults(run=_train)

    q = sub.add_parser("predict", help="turn a partial transient into a phasor field")
    q.add_argument("input")
    q.add_argument("output")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--calibration", required=True)
    q.set_defaults(run=_predict)
    return p


def main(argv: list[str] | None = None) -> int:
    args = parser().parse_args(argv)
    try:
        args.run(args)
    except NltError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, NotBuilt) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
