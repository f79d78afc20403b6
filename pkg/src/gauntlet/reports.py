"""Experiment execution and report persistence.

A report is a directory holding rows.csv (one line per trial), report.json
(config echo, aggregates, a replay hash of trial 0), and the summary
figure. All randomness flows through per-trial counter-derived seeds, so
identical configs produce byte-identical row files no matter the worker
pool; verification recomputes the aggregates from the rows and replays
trial 0 from the echoed config.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .core import canonical_json
from .errors import ConfigError, ReportIOError, TamperedReportError
from .presets import COLUMNS, RUNNERS, ExperimentConfig, trial_rng

ARTIFACT_VERSION = "0.1.0"

ROWS_FILE = "rows.csv"
REPORT_FILE = "report.json"


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: List[dict]
    aggregates: dict
    wall_clock_s: float
    out_dir: Optional[Path] = None
    figure_paths: List[Path] = field(default_factory=list)


def _cell(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_cell(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _quantile(sorted_values: List[float], q: float) -> float:
    idx = round(q * (len(sorted_values) - 1))
    return sorted_values[idx]


def compute_aggregates(rows: List[dict]) -> dict:
    metrics = sorted(float(r["metric"]) for r in rows)
    successes = [int(r["success"]) for r in rows]
    return {
        "rows": len(rows),
        "success_rate": sum(successes) / len(successes),
        "metric_mean": sum(metrics) / len(metrics),
        "metric_min": metrics[0],
        "metric_max": metrics[-1],
        "metric_q25": _quantile(metrics, 0.25),
        "metric_q50": _quantile(metrics, 0.50),
        "metric_q75": _quantile(metrics, 0.75),
    }


def row_hash(row: dict) -> str:
    return hashlib.sha256(canonical_json(row).encode()).hexdigest()


def run_trials(config: ExperimentConfig) -> List[dict]:
    """Execute every trial; rows come back sorted by trial index."""
    config.validate()
    runner = RUNNERS[config.runner_key()]
    columns = COLUMNS[config.runner_key()]

    def one(trial: int) -> dict:
        row = runner(config, trial, trial_rng(config.seed, trial))
        if list(row.keys()) != columns:
            raise ConfigError(
                f"runner for {config.experiment} produced columns {list(row)} != {columns}"
            )
        return row

    workers = int(os.environ.get("GAUNTLET_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(config.trials)))
    else:
        rows = [one(t) for t in range(config.trials)]
    rows.sort(key=lambda r: r["trial"])
    return rows


def rows_to_csv_bytes(columns: List[str], rows: List[dict]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue().encode()


def run_experiment(
    config: ExperimentConfig,
    out_dir: Optional[str] = None,
    render_figures: bool = True,
) -> ExperimentReport:
    """Run all trials, write rows.csv + report.json (+ figures), return the report."""
    start = time.monotonic()
    rows = run_trials(config)
    wall = time.monotonic() - start
    aggregates = compute_aggregates(rows)
    report = ExperimentReport(config=config, rows=rows, aggregates=aggregates, wall_clock_s=wall)

    target = out_dir if out_dir is not None else config.out
    if target is not None:
        base = Path(target) / config.experiment
        base.mkdir(parents=True, exist_ok=True)
        columns = COLUMNS[config.runner_key()]
        (base / ROWS_FILE).write_bytes(rows_to_csv_bytes(columns, rows))
        payload = {
            "artifact_version": ARTIFACT_VERSION,
            "config": config.to_json(),
            "columns": columns,
            "aggregates": aggregates,
            "trial0_hash": row_hash(rows[0]),
            "wall_clock_s": wall,
        }
        (base / REPORT_FILE).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        report.out_dir = base
        if render_figures:
            from .figures import render_report_figures

            report.figure_paths = render_report_figures(config.experiment, columns, rows, aggregates, base)
    return report


def load_rows(path: Path) -> List[dict]:
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        return [{k: _parse_cell(v) for k, v in row.items()} for row in reader]


def verify_report(report_dir: str) -> str:
    """Check a written report for self-consistency and replayability.

    Recomputes the aggregates from rows.csv against report.json, then
    replays trial 0 from the echoed config and compares its hash.
    Returns "OK" or raises TamperedReportError / ReportIOError.
    """
    base = Path(report_dir)
    json_path = base / REPORT_FILE
    csv_path = base / ROWS_FILE
    if not json_path.exists() or not csv_path.exists():
        raise ReportIOError(f"missing {REPORT_FILE} or {ROWS_FILE} under {base}")
    try:
        payload = json.loads(json_path.read_text())
        rows = load_rows(csv_path)
    except (OSError, json.JSONDecodeError) as exc:
        raise ReportIOError(f"unreadable report under {base}: {exc}") from exc
    if not rows:
        raise TamperedReportError("row file is empty")

    recomputed = compute_aggregates(rows)
    if recomputed != payload.get("aggregates"):
        raise TamperedReportError(
            f"aggregates mismatch: rows give {recomputed}, report says {payload.get('aggregates')}"
        )

    config = ExperimentConfig.from_json(payload["config"])
    replayed = RUNNERS[config.runner_key()](config, 0, trial_rng(config.seed, 0))
    if row_hash(replayed) != payload.get("trial0_hash"):
        raise TamperedReportError("trial 0 replay hash does not match the stored hash")
    if row_hash(rows[0]) != payload.get("trial0_hash"):
        raise TamperedReportError("stored first row does not match the trial 0 hash")
    return "OK"
