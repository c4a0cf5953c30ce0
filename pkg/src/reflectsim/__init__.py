"""Focal-point control of mechanically steered reflector arrays."""

__version__ = "0.1.0"
