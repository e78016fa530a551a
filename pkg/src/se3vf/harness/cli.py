"""Command line entry point ``se3vf``.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from se3vf.filter import SolverError
from se3vf.harness.config import PRESETS, ConfigError, ExperimentConfig, load_config, preset
from se3vf.harness.outputs import emit_outputs
from se3vf.harness.runner import replay, run_batch, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


def _add_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--preset", choices=PRESETS, help="start from a bundled preset")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="se3vf", description="Variational SE(3) pose filter experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="one experiment")
    _add_source(p)
    p.add_argument("--seed", type=int, help="noise seed (default: first seed in the config)")
    p.add_argument("--out", type=Path, help="output directory (default: outputs.dir)")
    p.add_argument("--no-noise", action="store_true", help="noise-free measurements")

    p = sub.add_parser("batch", help="Monte-Carlo batch over seeds")
    _add_source(p)
    p.add_argument("--seeds", type=int, help="run seeds SEED .. SEED+N-1 instead of the config list")
    p.add_argument("--seed", type=int, default=0, help="first seed when --seeds is given")
    p.add_argument("--out", type=Path, help="write per-seed outputs under this directory")
    p.add_argument("--no-noise", action="store_true")

    p = sub.add_parser("replay", help="re-filter recorded measurements")
    p.add_argument("run_dir", type=Path, help="directory holding measurements.csv and truth.csv")
    _add_source(p)
    p.add_argument("--seed", type=int, help="seed label for the summary")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("validate-config", help="check a config file")
    _add_source(p)

    p = sub.add_parser("preset", help="print a preset as YAML")
    p.add_argument("name", choices=PRESETS)
    p.add_argument("--out", type=Path, help="write to this file instead of stdout")
    return parser


def _config(args, fallback: Path | None = None) -> ExperimentConfig:
    if args.config is not None:
        return load_config(args.config)
    if args.preset is not None:
        return preset(args.preset)
    if fallback is not None and fallback.exists():
        return load_config(fallback)
    raise ConfigError("--config: give --config <path> or --preset paper_sec6")


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _dispatch(args) -> int:
    if args.verb == "preset":
        text = preset(args.name).dump(args.out)
        if args.out is None:
            sys.stdout.write(text)
        return EXIT_OK

    if args.verb == "validate-config":
        cfg = _config(args)
        print(f"ok: {cfg.n_steps} steps of {cfg.h_s} s, seeds {cfg.seeds}")
        return EXIT_OK

    if args.verb == "run":
        cfg = _config(args)
        seed = cfg.seeds[0] if args.seed is None else args.seed
        result = run_experiment(cfg, seed, noise=not args.no_noise)
        emit_outputs(result, cfg, args.out)
        _print_json(result.summary.to_dict())
        return EXIT_OK

    if args.verb == "replay":
        cfg = _config(args, fallback=args.run_dir / "config.yaml")
        result = replay(cfg, args.run_dir / "measurements.csv", args.run_dir / "truth.csv", args.seed)
        if args.out is not None:
            emit_outputs(result, cfg, args.out)
        _print_json(result.summary.to_dict())
        return EXIT_OK

    # batch
    cfg = _config(args)
    seeds = cfg.seeds if args.seeds is None else list(range(args.seed, args.seed + args.seeds))
    if not seeds:
        raise ConfigError("--seeds: need at least one seed")
    batch = run_batch(cfg, seeds, noise=not args.no_noise, out_dir=args.out)
    report = {
        "aggregate": batch.aggregate,
        "runs": [s.to_dict() for _, s in batch.summaries],
        "failures": [{"seed": s, "error": m} for s, m in batch.failures],
    }
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        report_nt = dict(report, runs=[s.to_dict(timing=False) for _, s in batch.summaries])
        (args.out / "batch_summary.json").write_text(
            json.dumps(report_nt, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _print_json(report)
    for seed, msg in batch.failures:
        print(f"seed {seed}: {msg}", file=sys.stderr)
    return EXIT_SOLVER if batch.failures else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as err:
        print(f"solver error at step {err.step}: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except ValueError as err:
        # malformed CSV input during replay
        print(f"input error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
