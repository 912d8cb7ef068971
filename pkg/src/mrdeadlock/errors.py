"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for all mrdeadlock errors."""


class SafetyViolationError(ToolkitError):
    """Two robots are closer than the safety margin.

    Carries the penetration depth ``Ds - ||dp||`` so the caller can decide
    whether to abort the run or just report it.
    """

    def __init__(self, penetration: float, pair: tuple[int, int] | None = None):
        self.penetration = float(penetration)
        self.pair = pair
        where = f" (pair {pair})" if pair is not None else ""
        super().__init__(f"safety margin violated{where}: penetration {penetration:.3e} m")


class CoincidentRobotsError(ToolkitError):
    """Two robots occupy the same position; pairwise quantities are undefined."""


class BoundarySingularityError(ToolkitError):
    """Constraint bound evaluated at ||dp|| = Ds with nonzero radial velocity.

    The middle term of the bound divides by sqrt(||dp|| - Ds); it is only
    defined on the boundary when the radial velocity vanishes too.
    """


class ZeroVectorError(ToolkitError):
    """An operation received a zero vector where a direction is required."""


class DegenerateGeometryError(ToolkitError):
    """A geometric construction is degenerate (e.g. robot on the assembly centroid)."""


class QPInfeasibleError(ToolkitError):
    """The per-robot QP admits no feasible control."""

    def __init__(self, message: str, snapshot: dict | None = None):
        self.snapshot = snapshot or {}
        super().__init__(message)


class SimulationAbort(ToolkitError):
    """A scenario run stopped on a fatal condition (infeasibility, safety breach).

    ``kind`` is a short diagnostic class suitable for stderr / exit reporting.
    """

    def __init__(self, kind: str, message: str, snapshot: dict | None = None):
        self.kind = kind
        self.snapshot = snapshot or {}
        super().__init__(f"[{kind}] {message}")


class UnsupportedScenarioError(ToolkitError):
    """The resolution supervisor cannot handle this configuration (e.g. N >= 4)."""
