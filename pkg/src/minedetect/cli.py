"""Command-line front end: ``minedetect run CONFIG --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime
error. On failure a one-line JSON error record goes to stderr and no
partial bundle is left behind.
"""

import argparse
import json
import logging
import re
import sys

from . import __version__
from .config import DEFENSES, parse_config
from .exceptions import (
    ConfigError,
    DataFormatError,
    EmptyDatasetError,
    EmptyShardError,
    InfeasiblePartitionError,
)
from .harness import run_experiment
from .output import aggregate_summary, json_text, render_bundle, write_files

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4
DATA_ERRORS = (DataFormatError, EmptyDatasetError, EmptyShardError, InfeasiblePartitionError)

log = logging.getLogger("minedetect")


def parse_seed_range(text):
    m = re.fullmatch(r"\s*(\d+)\s*(?:\.\.\s*(\d+)\s*)?", text)
    if not m:
        raise ConfigError(f"seeds: expected 'a..b' or a single seed, got {text!r}", key="seeds")
    lo = int(m.group(1))
    hi = int(m.group(2)) if m.group(2) is not None else lo
    if hi < lo:
        raise ConfigError("seeds: range end before start", key="seeds")
    return list(range(lo, hi + 1))


def build_parser():
    p = argparse.ArgumentParser(prog="minedetect", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment or a seed sweep")
    run.add_argument("config", help="path to a JSON config, or inline JSON text")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--baseline", choices=DEFENSES, help="override the config's defense")
    run.add_argument("--seeds", help="seed sweep, inclusive range 'a..b'")
    run.add_argument("--timing", action="store_true", help="record agg_wall_ms (not reproducible)")
    run.add_argument("-v", "--verbose", action="store_true")
    return p


def _error_record(kind, exc, code):
    rec = {"error": kind, "exit_code": code, "message": str(exc)}
    for attr in ("key", "field"):
        if getattr(exc, attr, None) is not None:
            rec[attr] = getattr(exc, attr)
    return json.dumps(rec, sort_keys=True)


def run(config_source, out_dir, baseline=None, seeds=None, timing=False):
    """Run and write bundles; returns the list of written paths."""
    config = parse_config(config_source)
    if baseline is not None:
        config = config.replace(defense=baseline)
    if seeds is None:
        report = run_experiment(config)
        return write_files(out_dir, render_bundle(report, timing))

    files, reports = {}, []
    for seed in parse_seed_range(seeds):
        report = run_experiment(config.replace(seed=seed))
        reports.append(report)
        for name, text in render_bundle(report, timing).items():
            files[f"seed_{seed}/{name}"] = text
    files["aggregate.json"] = json_text(aggregate_summary(reports))
    return write_files(out_dir, files)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        paths = run(args.config, args.out, args.baseline, args.seeds, args.timing)
    except ConfigError as exc:
        print(_error_record("config", exc, EXIT_CONFIG), file=sys.stderr)
        return EXIT_CONFIG
    except (*DATA_ERRORS, FileNotFoundError) as exc:
        print(_error_record("data", exc, EXIT_DATA), file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - every other failure maps to one exit code
        log.debug("run failed", exc_info=True)
        print(_error_record("runtime", exc, EXIT_RUNTIME), file=sys.stderr)
        return EXIT_RUNTIME
    for path in paths:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
