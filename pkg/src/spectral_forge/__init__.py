"""Construction and certification of operators with eigenvalues embedded
in the absolutely continuous spectrum.

The toolkit builds piecewise oscillatory decaying potentials (and the
corresponding rotationally symmetric metric profiles) block by block, each
block forcing one tracked solution to decay while every other tracked
energy stays norm-bounded, and certifies every quantitative contract on
the integration grid.
"""

from .errors import SpectralForgeError
from .ode import EnergyShift, StateVec, Trajectory, propagate
from .schedule import (Budget, ConstructionPlan, EigenLedger,
                       PiecewisePotential, assemble, plan,
                       whole_line_extend)
from .wvn import BlockParams, WvnSegment, build_block

__version__ = "0.1.0"

__all__ = [
    "SpectralForgeError", "EnergyShift", "StateVec", "Trajectory",
    "propagate", "Budget", "ConstructionPlan", "EigenLedger",
    "PiecewisePotential", "assemble", "plan", "whole_line_extend",
    "BlockParams", "WvnSegment", "build_block", "__version__",
]
