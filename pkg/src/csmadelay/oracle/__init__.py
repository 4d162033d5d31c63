"""Brute-force checks: exact scheduling chain, drift inequality, offline benchmark."""

from .dtmc import (DtmcModel, OracleError, control_schedule_distribution, enumerate_independent_sets,
                   simulate_frozen_chain, stationary_distribution, total_variation, transition_matrix,
                   verify_detailed_balance)
from .drift import DriftTerms, check_record, drift_check, drift_constant
from .offline import OfflineResult, grid_optimum, offline_optimum

__all__ = [
    "DtmcModel", "OracleError", "control_schedule_distribution", "enumerate_independent_sets",
    "simulate_frozen_chain", "stationary_distribution", "total_variation", "transition_matrix",
    "verify_detailed_balance", "DriftTerms", "check_record", "drift_check", "drift_constant",
    "OfflineResult", "grid_optimum", "offline_optimum",
]
