"""Simulator and analytics toolkit for a three-qubit phase-flip code with
ancilla-mediated stabilizer measurements and real-time Pauli-frame feedback."""

__version__ = "0.1.0"
