"""Solver suite for multicommodity capacitated fixed-charge network design."""

__version__ = "0.1.0"

from .model import (
    Arc,
    Commodity,
    FlowSolution,
    Instance,
    SampleSet,
    Solution,
    check_feasibility,
    design_distance,
    evaluate_objective,
)

__all__ = [
    "Arc",
    "Commodity",
    "FlowSolution",
    "Instance",
    "SampleSet",
    "Solution",
    "check_feasibility",
    "design_distance",
    "evaluate_objective",
    "__version__",
]
