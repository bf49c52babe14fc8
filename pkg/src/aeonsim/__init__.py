"""Simulator and calibration/benchmarking toolchain for exchange-only
triple-dot spin qubits."""

__version__ = "0.1.0"

from . import benchmarking, calibration, device, hilbert, rotations  # noqa: F401
