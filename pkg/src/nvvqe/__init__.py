"""Variational eigensolver for a nitrogen-vacancy electron/nuclear spin register."""

from .ansatz import AnsatzParams, ground_state_angles, prepare_trial_state
from .config import ExperimentConfig, parse_config
from .dynamics import HardwareParams, NoiseModel
from .qcore import PauliString, PauliSum, default_hamiltonian
from .vqe import Backend, OptimizerConfig, run_vqe

__version__ = "0.1.0"
