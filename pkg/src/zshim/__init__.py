"""Simulation and calibration toolkit for slice-wise realtime z-shimming."""

__version__ = "0.1.0"
