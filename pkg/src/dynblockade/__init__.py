"""Dynamical photon blockade in a driven Kerr mode.

Lindblad dynamics of a single dissipative nonlinear mode under a
continuous drive combined with periodic short pulses, with equal-time
and two-time second-order coherence.
"""

__version__ = "0.1.0"

from .dynamics import DriveSchedule, ModeParams, PulseEvent, Trajectory, evolve
from .fock_core import FockSpace
from .observables import g2_equal

__all__ = ["DriveSchedule", "FockSpace", "ModeParams", "PulseEvent", "Trajectory", "evolve", "g2_equal", "__version__"]
