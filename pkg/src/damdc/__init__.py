"""Diffusion LMS with adaptive tap selection for sparse cooperative spectrum estimation."""
from .algorithms import ALGORITHMS, AlgorithmConfig, NodeState, RegressionSnapshot
from .config import ExperimentConfig, load_preset, parse_config
from .harness import run_experiment, write_artifacts
from .network import build_topology, metropolis_weights, validate_combiner
from .spectrum import BasisBank, SpectrumScenario

__all__ = [
    "ALGORITHMS", "AlgorithmConfig", "NodeState", "RegressionSnapshot",
    "ExperimentConfig", "load_preset", "parse_config",
    "run_experiment", "write_artifacts",
    "build_topology", "metropolis_weights", "validate_combiner",
    "BasisBank", "SpectrumScenario",
]
