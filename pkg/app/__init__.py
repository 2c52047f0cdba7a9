"""Continuous-time quantum walk search: simulation, bounds and ground-state preparation"""

__version__ = "1.0.0"
