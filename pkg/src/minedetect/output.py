"""Bit-stable rendering of experiment results.

A bundle is four files: ``metrics.csv``, ``detections.csv``,
``summary.json`` and ``config.json``. CSVs open with a
``# schema_version=1 seed=N`` comment line, use LF line endings and print
floats with 17 significant digits. Wall-clock timings are left blank unless
requested, so two runs of the same config produce identical bytes.
"""

import csv
import io
import json
import math
import os
import shutil
import tempfile

import numpy as np

from .config import SCHEMA_VERSION

METRICS_HEADER = (
    "round",
    "accuracy",
    "fpr_sign_flip",
    "fpr_additive_noise",
    "fpr_unreliable",
    "n_excluded",
    "n_downweighted",
    "agg_wall_ms",
)
DETECTIONS_HEADER = ("round", "id", "role_truth", "d", "V", "Z", "E", "flagged_as")
BUNDLE_FILES = ("metrics.csv", "detections.csv", "summary.json", "config.json")


def fmt_float(v):
    if v is None:
        return ""
    v = float(v)
    return "" if not math.isfinite(v) else format(v, ".17g")


def _csv_text(seed, header, rows):
    buf = io.StringIO(newline="")
    buf.write(f"# schema_version={SCHEMA_VERSION} seed={seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def metrics_rows(report, timing=False):
    for r in report.rounds:
        yield (
            r.round,
            fmt_float(r.accuracy),
            fmt_float(r.fpr["sign_flip"]),
            fmt_float(r.fpr["additive_noise"]),
            fmt_float(r.fpr["unreliable"]),
            len(r.excluded_clients),
            len(r.downweighted_clients),
            fmt_float(r.agg_wall_ms) if timing else "",
        )


def detection_rows(report):
    roster = report.config.roster
    for r in report.rounds:
        det = r.detection
        for pos, cid in enumerate(det.roster):
            yield (
                r.round,
                cid,
                roster[cid],
                fmt_float(det.d[pos]),
                fmt_float(det.V[pos]),
                fmt_float(det.Z[pos]),
                fmt_float(det.E[pos]),
                det.category_of(cid),
            )


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def json_text(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def summary_dict(report, timing=False):
    out = {"schema_version": SCHEMA_VERSION}
    out.update(report.to_dict(timing=timing))
    return out


def config_dict(config):
    return config.to_dict()


def render_bundle(report, timing=False):
    """``{filename: text}`` for one experiment."""
    seed = report.config.seed
    return {
        "metrics.csv": _csv_text(seed, METRICS_HEADER, metrics_rows(report, timing)),
        "detections.csv": _csv_text(seed, DETECTIONS_HEADER, detection_rows(report)),
        "summary.json": json_text(summary_dict(report, timing)),
        "config.json": json_text(config_dict(report.config)),
    }


def aggregate_summary(reports):
    """Per-round mean/min/max accuracy across a seed sweep."""
    acc = np.array([r.accuracies for r in reports])
    return {
        "schema_version": SCHEMA_VERSION,
        "seeds": [r.config.seed for r in reports],
        "defense": reports[0].config.defense,
        "rounds": [
            {
                "round": t + 1,
                "mean_accuracy": float(acc[:, t].mean()),
                "min_accuracy": float(acc[:, t].min()),
                "max_accuracy": float(acc[:, t].max()),
            }
            for t in range(acc.shape[1])
        ],
        "avg_accuracy_by_seed": {str(r.config.seed): r.avg_accuracy for r in reports},
    }


def write_files(out_dir, files):
    """Write ``{relative path: text}`` atomically as a group.

    Everything is staged in a temporary directory next to ``out_dir`` and
    moved into place only once every file has been written; on failure the
    staging directory is removed and ``out_dir`` is left as it was.
    """
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    stage = tempfile.mkdtemp(prefix=".partial-", dir=out_dir)
    try:
        for rel, text in files.items():
            path = os.path.join(stage, rel)
            os.makedirs(os.path.dirname(path), exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        for rel in files:
            dest = os.path.join(out_dir, rel)
            os.makedirs(os.path.dirname(dest), exist_ok=True)
            os.replace(os.path.join(stage, rel), dest)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return [os.path.join(out_dir, rel) for rel in files]
