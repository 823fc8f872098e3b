"""Simulation and analysis toolkit for photoexcited-triplet quantum sensors."""

__version__ = "0.1.0"
