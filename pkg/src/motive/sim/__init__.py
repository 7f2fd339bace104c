from motive.sim.engine import Engine, RunResult, run
from motive.sim.metrics import MetricsReport, replay, report_from_events
from motive.sim.scenario import Scenario, builtin_scenarios, load_scenario, loads_scenario

__all__ = [
    "Engine", "MetricsReport", "RunResult", "Scenario", "builtin_scenarios", "load_scenario",
    "loads_scenario", "replay", "report_from_events", "run",
]
