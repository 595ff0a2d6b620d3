"""Deterministic work-model clock.

Wall clocks make time-budgeted searches irreproducible, so every budget,
trajectory timestamp and primal-integral in this package is measured on a
virtual clock: solvers charge the clock with an operation-count estimate
(roughly flops) and the count maps to "seconds" through a fixed rate. Two
runs with the same seed therefore see identical timestamps everywhere.

The rate below is calibrated so that one virtual second is on the order of
one real second of desk-scale solving on a laptop-class CPU; budgets stay
meaningful while determinism is exact.
"""

from __future__ import annotations

WORK_UNITS_PER_SECOND = 4.0e7

# Fixed overhead charges, in work units.
LP_SOLVE_OVERHEAD = 8.0e4
LP_PIVOT_OVERHEAD = 1.2e4
NODE_OVERHEAD = 6.0e4


class WorkClock:
    """Monotone virtual clock advanced by explicit work charges."""

    __slots__ = ("_units",)

    def __init__(self) -> None:
        self._units = 0.0

    def charge(self, units: float) -> None:
        if units > 0.0:
            self._units += units

    def charge_seconds(self, seconds: float) -> None:
        self.charge(seconds * WORK_UNITS_PER_SECOND)

    def now(self) -> float:
        """Virtual seconds elapsed since construction."""
        return self._units / WORK_UNITS_PER_SECOND
