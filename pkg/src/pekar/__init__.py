"""Pekar-Tomasevich N-polaron functional: grid minimisation, exact identities
and explicit strong-coupling error bounds."""

__version__ = "0.1.0"

from .fields import FieldSpec, ScaledField, scale_fields
from .functional import EnergyReport, HartreeState, PolaronParams, pekar_energy
from .grid import Grid3D, GridFunction
from .solver import SolveConfig, SolveResult, minimize

__all__ = ["EnergyReport", "FieldSpec", "Grid3D", "GridFunction", "HartreeState", "PolaronParams",
           "ScaledField", "SolveConfig", "SolveResult", "__version__", "minimize", "pekar_energy",
           "scale_fields"]
