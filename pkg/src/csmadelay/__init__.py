"""Slot-level simulator and exact verification tools for a two-timescale
CSMA scheduler with rate control, job dropping and per-job deadlines."""

from .model import (
    ConfigError,
    ConflictGraph,
    GraphError,
    JobTypeSpec,
    SimConfig,
    build_graph,
    complete_graph,
    cycle_graph,
    derive_bounds,
    derive_epsilon,
    grid_graph,
    path_graph,
    resolve_job_type,
)
from .utility import AlphaFairUtility, LogUtility, make_utility
from .engine import MetricsSummary, Simulator, TraceRecord, audit_delays, run

__version__ = "0.1.0"
