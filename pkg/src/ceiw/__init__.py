"""ceiw: a numerical workbench for one convex-integration correction step
for the isentropic compressible Euler equations on the 3-torus.

The package builds dissipative relaxed-flow tuples, performs one inductive
momentum correction with full error reassembly, optionally bifurcates
solutions by a weight sign flip, and verifies every exactly-checkable
identity of the construction.
"""

__version__ = "0.1.0"

from .schedule import (Constants, ParameterSchedule, RelationReport,
                       build_schedule, check_parameter_relations)
from .fields import (Grid3, ScalarField, SymTensorField, TimeSampledField,
                     VectorField)

__all__ = [
    "Constants", "ParameterSchedule", "RelationReport", "build_schedule",
    "check_parameter_relations", "Grid3", "ScalarField", "SymTensorField",
    "TimeSampledField", "VectorField",
]
