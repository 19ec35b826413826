"""Robust inner solvers, radius calibration and a Gaussian-mixture testbed
for distributionally robust preference learning."""

__version__ = "0.1.0"
