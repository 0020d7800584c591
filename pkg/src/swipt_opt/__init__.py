"""
Energy-optimal configuration of cellular networks with simultaneous wireless
information and power transfer.

Modules
-------
core       domain types, validation, BS power and harvester curves
geometry   Voronoi overlap area, cell-population kernel, serving distance law
perf       mean per-bit delays and the downlink interference fixed point
harvest    harvested-power profile and its distribution
objective  network power, constraint slacks, penalty fitness
solver     genetic algorithm and grid search
simulator  Monte Carlo validation on a torus
config     scenario files, units and presets
cli        ``swipt-opt`` command
"""

from .core import (
    DecisionVector,
    EhMode,
    ScenarioConfig,
    ValidationError,
    validate,
    with_decision,
)
from .objective import FitnessWeights, evaluate
from .perf import NonConvergence, evaluate_performance

__version__ = "0.1.0"

__all__ = [
    "DecisionVector",
    "EhMode",
    "FitnessWeights",
    "NonConvergence",
    "ScenarioConfig",
    "ValidationError",
    "evaluate",
    "evaluate_performance",
    "validate",
    "with_decision",
]
