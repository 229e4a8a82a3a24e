"""Cavity-mediated qubit teleportation with continuous homodyne readout
and past-quantum-state retrodiction of the Bell outcome."""

from .config import ExperimentConfig, load_config
from .hilbert import DensityOperator, HilbertSpaceLayout, Ket, OperatorMatrix
from .pqs import BELL_OUTCOMES, BellOutcome, EffectMatrix, RetrodictionResult
from .results import ResultRow, ResultTable
from .sme import HomodyneRecord, PhaseSpec, SmeParams
from .teleport import FidelityEstimate, ProtocolConfig, RunResult

__version__ = "0.1.0"

__all__ = [
    "BELL_OUTCOMES",
    "BellOutcome",
    "DensityOperator",
    "EffectMatrix",
    "ExperimentConfig",
    "FidelityEstimate",
    "HilbertSpaceLayout",
    "HomodyneRecord",
    "Ket",
    "OperatorMatrix",
    "PhaseSpec",
    "ProtocolConfig",
    "ResultRow",
    "ResultTable",
    "RetrodictionResult",
    "RunResult",
    "SmeParams",
    "load_config",
]
