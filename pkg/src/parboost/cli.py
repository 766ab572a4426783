"""``boost`` command-line entry point.

Exit status is 0 exactly when the run completed and every hard assertion
held.  Set ``BOOST_LOG`` (e.g. ``DEBUG``) to change verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import BoostError
from .harness import ExperimentConfig, oracle_value, run_experiment, tradeoff_grid


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boost", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--parallelism", type=int, help="worker count")
    common.add_argument(
        "--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one config value"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("run", "run the experiment a config describes"),
        ("grid", "run the (p, R, t) trade-off grid"),
        ("adversary", "measure learners on the hard instance"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("config", type=Path)
    v = sub.add_parser("verify", parents=[common], help="run the identity suite on micro-instances")
    v.add_argument("config", type=Path, nargs="?")
    o = sub.add_parser("oracle", help="exact majority-vote error for n flips of a beta-biased coin")
    o.add_argument("--n", type=int, required=True)
    o.add_argument("--beta", required=True)
    return parser


def _overrides(args) -> dict:
    out = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise SystemExit(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    for name in ("seed", "out", "parallelism"):
        value = getattr(args, name, None)
        if value is not None:
            out[f"experiment.{name}"] = value
    return out


def _config(args, mode=None) -> ExperimentConfig:
    overrides = _overrides(args)
    if mode is not None:
        overrides["experiment.mode"] = mode
    if args.config is None:
        text = "[experiment]\nmode = verify\nseed = 0\n"
        return ExperimentConfig.from_ini(text, overrides=overrides)
    return ExperimentConfig.load(args.config, overrides)


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("BOOST_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = _parser().parse_args(argv)
    try:
        if args.command == "oracle":
            print(oracle_value(args.n, args.beta))
            return 0
        if args.command == "grid":
            cfg = _config(args)
            out = Path(cfg.out)
            out.mkdir(parents=True, exist_ok=True)
            rows = tradeoff_grid(cfg, out / "grid.csv")
            failed = sum(r["status"] != "ok" for r in rows)
            print(f"{len(rows)} grid points, {failed} failed; wrote {out / 'grid.csv'}")
            return 0 if failed == 0 else 1
        mode = {"verify": "verify", "adversary": "adversary"}.get(args.command)
        record = run_experiment(_config(args, mode))
    except BoostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    summary = {"mode": record.mode, "ok": record.ok, "verdicts": record.verdicts}
    if record.error:
        summary["error"] = record.error
    if record.mode == "oracle" and record.complete:
        print(record.metrics["value"])
    print(json.dumps(summary, sort_keys=True))
    return 0 if record.ok else 1


if __name__ == "__main__":
    sys.exit(main())
