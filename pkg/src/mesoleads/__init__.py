"""Quantum-jump thermodynamics of fermionic systems coupled to mesoscopic leads."""
from .lead_model import ExtendedSystem, ReservoirSpec, assemble, fermi_dirac, single_dot

__all__ = ["ExtendedSystem", "ReservoirSpec", "assemble", "fermi_dirac", "single_dot"]
__version__ = "0.1.0"
