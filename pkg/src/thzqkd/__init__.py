"""Simulator for RIS-assisted MIMO continuous-variable QKD at THz frequencies."""

__version__ = "0.1.0"
