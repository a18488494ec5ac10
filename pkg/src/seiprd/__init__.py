"""SEIPRD epidemic model calibration and scoring-rule forecast evaluation."""
from seiprd.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
