"""Command line entry point: ``actembed run | synth | sweep | check-gradients``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time

from . import __version__
from .config import defaults_help, parse_config
from .errors import ConfigError, DataError, InvalidConfig, NumericalError
from .experiment import STREAM_SYNTH, derive_seed, emit_report, run_experiment, sweep_alpha_beta
from .gradcheck import REL_TOL, check_gradients
from .ingest import generate_synthetic, write_canonical_csv

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4
SWEEP_GRID = (0.1, 0.2, 0.3)

log = logging.getLogger("actembed")


def _load(args):
    cfg = parse_config(args.config)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "score_all", False):
        changes["score_all"] = True
    if getattr(args, "out", None):
        changes["output_dir"] = args.out
    return dataclasses.replace(cfg, **changes) if changes else cfg


def cmd_run(args):
    cfg = _load(args)
    t0 = time.perf_counter()
    report = run_experiment(cfg)
    files = emit_report(report, cfg.output_dir, dump=args.dump)
    for note in report.notes:
        log.warning(note)
    for agg in report.aggregate():
        print(f"{agg['mode']:8s} k={agg['k']:<3d} acc={agg['acc_mean']:.4f}+-{agg['acc_std']:.4f} "
              f"ari={agg['ari_mean']:.4f} nmi={agg['nmi_mean']:.4f}")
    print(f"wrote {len(files)} files to {cfg.output_dir} in {time.perf_counter() - t0:.1f}s")
    return EXIT_OK


def cmd_synth(args):
    cfg = _load(argparse.Namespace(config=args.config, seed=args.seed))
    if cfg.synth is None:
        raise InvalidConfig(f"{args.config}: no [synthetic] section")
    sessions = generate_synthetic(cfg.synth, derive_seed(cfg.seed, STREAM_SYNTH))
    write_canonical_csv(sessions, args.out)
    print(f"wrote {len(sessions.sessions)} sessions to {args.out}")
    return EXIT_OK


def cmd_sweep(args):
    cfg = _load(args)
    lines = sweep_alpha_beta(cfg, args.alphas, args.betas, cfg.output_dir)
    for a, b, agg in lines:
        print(f"alpha={a} beta={b} {agg['mode']:8s} k={agg['k']:<3d} acc={agg['acc_mean']:.4f}")
    return EXIT_OK


def cmd_check_gradients(args):
    t0 = time.perf_counter()
    results = check_gradients(seed=args.seed)
    for r in results:
        shape = "-".join(map(str, r.shape))
        print(f"{'PASS' if r.passed else 'FAIL'} {shape:12s} {r.mode:8s} max_rel_error={r.max_rel_error:.3e}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks within {REL_TOL:g} "
          f"({time.perf_counter() - t0:.1f}s)")
    return EXIT_FAIL if failed else EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="actembed",
        description="Activity embeddings with temporal-coherence and locality-preserving losses.",
        epilog="config keys and defaults:\n" + defaults_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--version", action="version", version=f"actembed {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="cross-validated clustering experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="output directory (overrides experiment.output_dir)")
    run.add_argument("--seed", type=int)
    run.add_argument("--score-all", action="store_true", help="score train and test rows")
    run.add_argument("--dump", action="store_true", help="also write assignments and neighbour lists")
    run.set_defaults(func=cmd_run)

    synth = sub.add_parser("synth", help="write the synthetic dataset as canonical CSV")
    synth.add_argument("--config", required=True)
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int)
    synth.set_defaults(func=cmd_synth)

    sweep = sub.add_parser("sweep", help="run the experiment over an alpha/beta grid")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out")
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--score-all", action="store_true")
    sweep.add_argument("--alphas", type=float, nargs="+", default=list(SWEEP_GRID))
    sweep.add_argument("--betas", type=float, nargs="+", default=list(SWEEP_GRID))
    sweep.set_defaults(func=cmd_sweep)

    grad = sub.add_parser("check-gradients", help="finite-difference check of all loss modes")
    grad.add_argument("--seed", type=int, default=0)
    grad.set_defaults(func=cmd_check_gradients)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
