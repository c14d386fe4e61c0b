"""Simulation and pointwise estimation of multistable processes."""
__version__ = "0.1.0"
