"""Writers for run artifacts: event log, per-peer CSV, summary JSON, sweep CSV."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Sequence

from motive.sim.metrics import PEER_COLUMNS, MetricsReport, dumps_events


def metrics_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PEER_COLUMNS)
    for p in report.peers:
        w.writerow([getattr(p, c) for c in PEER_COLUMNS])
    return buf.getvalue()


def summary_json(report: MetricsReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def sweep_csv(reports: Sequence[MetricsReport]) -> str:
    buf = io.StringIO()
    rows = [r.summary_row() for r in reports]
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def write_run(out: Path, events: list[dict], report: MetricsReport) -> dict[str, Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "events": out / "events.jsonl",
        "metrics": out / "metrics.csv",
        "summary": out / "summary.json",
    }
    paths["events"].write_text(dumps_events(events), encoding="utf-8")
    paths["metrics"].write_text(metrics_csv(report), encoding="utf-8")
    paths["summary"].write_text(summary_json(report), encoding="utf-8")
    return paths
