"""Entanglement tests for bosonic states of two or more modes."""

from .fock import (
    FockBasis,
    OperatorMatrix,
    QuantumState,
    build_basis,
    dumps_state,
    expectation,
    fock_state,
    loads_state,
    mixed_state,
    pure_state,
    vacuum,
)
from .interferometer import (
    consistency_check,
    predict_mean,
    predict_variance,
    sample_measurements,
)
from .spin import SpinFrame, evaluate_frame, principal_frame, spin_operators
from .states import (
    binomial_state,
    case3_counterexample,
    coherent_mixture,
    make_state,
    noon_state,
    relative_phase_state,
    verstraete_state,
)
from .witness import BatteryConfig, WitnessReport, run_battery, verdict_summary

__all__ = [
    "FockBasis", "OperatorMatrix", "QuantumState", "build_basis", "dumps_state", "expectation",
    "fock_state", "loads_state", "mixed_state", "pure_state", "vacuum",
    "SpinFrame", "evaluate_frame", "principal_frame", "spin_operators",
    "binomial_state", "case3_counterexample", "coherent_mixture", "make_state", "noon_state",
    "relative_phase_state", "verstraete_state",
    "BatteryConfig", "WitnessReport", "run_battery", "verdict_summary",
    "consistency_check", "predict_mean", "predict_variance", "sample_measurements",
]
