"""Figures rendered from an event log; written next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from motive.sim.metrics import MetricsReport  # noqa: E402


def _names(events: list[dict]) -> dict[int, str]:
    return {e["peer"]: e["name"] for e in events if e["type"] == "register"}


def rating_figure(events: list[dict], path: Path) -> None:
    names = _names(events)
    series: dict[int, tuple[list[int], list[float]]] = {pid: ([0], [None]) for pid in names}
    start = next(e for e in events if e["type"] == "run_start")
    for pid in names:
        series[pid][1][0] = start["ratings"]["default_rating"]
    for e in events:
        if e["type"] == "rating":
            xs, ys = series[e["ratee"]]
            xs.append(e["tick"])
            ys.append(e["rating"])
    fig, ax = plt.subplots(figsize=(7, 4))
    for pid, (xs, ys) in sorted(series.items()):
        ax.step(xs + [start["ticks"]], ys + [ys[-1]], where="post", label=names[pid])
    ax.axhline(start["ratings"]["threshold"], color="grey", linestyle="--", linewidth=1)
    ax.set_xlabel("tick")
    ax.set_ylabel("rating")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def money_figure(report: MetricsReport, path: Path) -> None:
    names = [p.name for p in report.peers]
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.2
    for j, (label, attr) in enumerate((("revenue", "revenue"), ("spent", "spent"),
                                       ("burned", "burned"), ("unpaid exposure", "unpaid_exposure"))):
        ax.bar([i + (j - 1.5) * width for i in range(len(names))],
               [getattr(p, attr) for p in report.peers], width, label=label)
    ax.set_xticks(range(len(names)), names, rotation=20, ha="right")
    ax.set_ylabel("tokens")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def ledger_figure(events: list[dict], path: Path) -> None:
    ticks, volume, burned = [0], [0], [0]
    for e in events:
        if e["type"] == "ledger" and e["kind"] in ("Transfer", "Burn"):
            ticks.append(e["tick"])
            volume.append(volume[-1] + (e["amount"] if e["kind"] == "Transfer" else 0))
            burned.append(burned[-1] + (e["amount"] if e["kind"] == "Burn" else 0))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.step(ticks, volume, where="post", label="transferred")
    ax.step(ticks, burned, where="post", label="burned")
    ax.set_xlabel("tick")
    ax.set_ylabel("cumulative tokens")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_figures(events: list[dict], report: MetricsReport, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "ratings.png", out / "money.png", out / "ledger.png"]
    rating_figure(events, paths[0])
    money_figure(report, paths[1])
    ledger_figure(events, paths[2])
    return paths
