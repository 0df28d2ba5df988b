"""qkdbft: deterministic simulator and protocol library for a
Byzantine-fault-tolerant QKD relay network with information-theoretic
security primitives."""

from .bits import Bits
from .crypto import SecurityParams
from .scenario import ScenarioConfig, load_scenario, render_scenario
from .report import MetricsReport, build_report
from .simnet import World, run_world
from .topology import Graph

__all__ = [
    "Bits",
    "SecurityParams",
    "ScenarioConfig",
    "load_scenario",
    "render_scenario",
    "MetricsReport",
    "build_report",
    "World",
    "run_world",
    "Graph",
]

__version__ = "0.1.0"
