"""
One-dimensional bar fracture with moving-mesh (X-Mesh) energy minimization.

Phase-field and lip-field damage models on a symmetric bar under imposed
elongation, solved either on a fixed uniform mesh or with node positions
treated as unknowns.
"""

from .model import TABLE1, TABLE2, MaterialParams, ModelKind, derive, validity
from .quasistatic import History, LoadSchedule, StepState, run

__version__ = "0.1.0"

__all__ = [
    "TABLE1", "TABLE2", "MaterialParams", "ModelKind", "derive", "validity",
    "History", "LoadSchedule", "StepState", "run",
]
