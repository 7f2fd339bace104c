"""Command-line entry point: ``motive-sim run|replay|sweep``.

Exit codes: 0 success, 2 configuration or usage error, 3 invariant
violation or corrupt log.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from motive.errors import ConfigError, CorruptLog, InvariantViolation
from motive.sim.engine import Engine
from motive.sim.metrics import MetricsReport, load_events, replay
from motive.sim.output import metrics_csv, summary_json, sweep_csv, write_run
from motive.sim.scenario import Scenario, builtin_scenarios, load_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3


def resolve_scenario(ref: str) -> Scenario:
    """A path to a scenario file, or the name of a shipped scenario."""
    p = Path(ref)
    if p.is_file():
        return load_scenario(p)
    shipped = builtin_scenarios()
    if ref in shipped:
        return load_scenario(shipped[ref])
    raise ConfigError(f"no scenario file or shipped scenario named {ref!r} "
                      f"(shipped: {', '.join(sorted(shipped))})")


def parse_seeds(text: str) -> list[int]:
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split("..", 1))
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise ConfigError(f"bad seed range {text!r}; use A..B or a comma list") from None


def _run_one(args: tuple[Scenario, int]) -> MetricsReport:
    sc, seed = args
    return Engine(sc.with_seed(seed)).run().report


def cmd_run(ns) -> int:
    sc = resolve_scenario(ns.scenario)
    if ns.seed is not None:
        sc = sc.with_seed(ns.seed)
    result = Engine(sc).run()
    out = Path(ns.out)
    paths = write_run(out, result.events, result.report)
    if ns.figures:
        from motive.report import render_figures
        render_figures(result.events, result.report, out / "figures")
    sys.stdout.write(metrics_csv(result.report))
    r = result.report
    print(f"# scenario={r.scenario} seed={r.seed} events={r.events} agreements={r.agreements_admitted} "
          f"conservation_ok={r.conservation_ok} digest={r.log_digest}")
    print(f"# wrote {paths['events'].parent}")
    return EXIT_OK


def cmd_replay(ns) -> int:
    report = replay(load_events(ns.log))
    if ns.json:
        sys.stdout.write(summary_json(report))
    else:
        sys.stdout.write(metrics_csv(report))
        print(f"# events={report.events} conservation_ok={report.conservation_ok} digest={report.log_digest}")
    return EXIT_OK


def cmd_sweep(ns) -> int:
    sc = resolve_scenario(ns.scenario)
    seeds = parse_seeds(ns.seeds)
    jobs = [(sc, s) for s in seeds]
    if ns.jobs > 1:
        with ProcessPoolExecutor(ns.jobs) as ex:
            reports = list(ex.map(_run_one, jobs))
    else:
        reports = [_run_one(j) for j in jobs]
    text = sweep_csv(reports)
    if ns.out:
        out = Path(ns.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="motive-sim", description="Deterministic V2V service-exchange simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario and write its artifacts")
    r.add_argument("--scenario", required=True, help="scenario file or shipped scenario name")
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--figures", action="store_true", help="also render PNG figures into OUT/figures")
    r.set_defaults(fn=cmd_run)

    p = sub.add_parser("replay", help="recompute metrics from a stored event log")
    p.add_argument("--log", required=True)
    p.add_argument("--json", action="store_true", help="print the full summary as JSON")
    p.set_defaults(fn=cmd_replay)

    s = sub.add_parser("sweep", help="run one scenario over a range of seeds")
    s.add_argument("--scenario", required=True)
    s.add_argument("--seeds", required=True, help="A..B inclusive, or a comma list")
    s.add_argument("--out", help="directory for sweep.csv")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(fn=cmd_sweep)

    sub.add_parser("list", help="list shipped scenarios").set_defaults(
        fn=lambda ns: print("\n".join(sorted(builtin_scenarios()))) or EXIT_OK)
    return ap


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.fn(ns)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantViolation, CorruptLog) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
