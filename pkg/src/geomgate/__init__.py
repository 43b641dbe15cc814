"""Two-qubit unconventional geometric phase gates in cavity QED.

Simulation and verification tools for conditional phase-space displacement
of a cavity mode driven by two dispersively coupled three-level atoms.
"""

__version__ = "0.1.0"
