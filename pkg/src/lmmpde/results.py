"""Result containers shared by the PDE and Monte Carlo pricers."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class PriceEstimate:
    """Scalar price with provenance.

    For PDE-expansion results stderr/lower/upper are None; Monte Carlo
    results carry a standard error and, for primal-dual runs, bounds.
    All values are time-0 prices (terminal-relative values rebased by the
    initial terminal-bond price).
    """

    value: float
    method: str
    stderr: float | None = None
    lower: float | None = None
    upper: float | None = None

    @property
    def midpoint(self) -> float:
        if self.lower is None or self.upper is None:
            return self.value
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class BoundEstimate:
    """Primal-dual Monte Carlo output: lower bound, duality gap, and their
    standard errors, all in time-0 price units."""

    lower: float
    stderr: float
    gap: float
    gap_stderr: float

    @property
    def upper(self) -> float:
        return self.lower + self.gap

    @property
    def midpoint(self) -> float:
        return self.lower + 0.5 * self.gap
