"""Pairwise safety index, constraint bound and per-robot inequality assembly.

The safety index for a robot pair is

    h = sqrt(2 (alpha_i + alpha_j) (||dp|| - Ds)) + dp.dv / ||dp||

and keeping dh/dt >= -h^3 along double-integrator dynamics is equivalent to
the linear control constraint  -dp.du <= b  with the bound built below.
Each pair constraint is split between the two robots in proportion to their
acceleration limits, giving one linear row per neighbor in each robot's QP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import GoalSpec, Params, RobotState, Vec2, WorldState, pd_control, v_dot, v_norm, v_sub
from .errors import BoundarySingularityError, CoincidentRobotsError, SafetyViolationError

# Width of the band around ||dp|| = Ds treated as exactly on the boundary.
# sqrt() amplifies float noise near the boundary (sqrt(20 * 1ulp) ~ 5e-8), so
# constructed boundary states would otherwise never evaluate to h = 0.
BOUNDARY_SNAP = 1e-12

# Tolerance for the 0/0 middle term of the bound at the boundary: the term is
# defined as 0 when both |dp.dv| and ||dp|| - Ds are below this.
EPS_NUM = 1e-9


@dataclass(frozen=True)
class NeighborKind:
    """Row provenance: collision-avoidance constraint against robot j."""

    j: int


@dataclass(frozen=True)
class BoxFaceKind:
    """Row provenance: acceleration box face (axis in {0, 1}, sign in {+1, -1})."""

    axis: int
    sign: int


RowKind = NeighborKind | BoxFaceKind


@dataclass(frozen=True)
class ConstraintRow:
    """One linear inequality a.u <= b_hat of a per-robot QP."""

    a: Vec2
    b_hat: float
    kind: RowKind

    @property
    def is_neighbor(self) -> bool:
        return isinstance(self.kind, NeighborKind)


def _pair_scalars(zi: RobotState, zj: RobotState) -> tuple[Vec2, Vec2, float, float]:
    """(dp, dv, ||dp||, dp.dv) for the ordered pair (i, j); dp = p_i - p_j."""
    dp = v_sub(zi.p, zj.p)
    dv = v_sub(zi.v, zj.v)
    return dp, dv, v_norm(dp), v_dot(dp, dv)


def safety_index(zi: RobotState, zj: RobotState, params: Params, i: int = 0, j: int = 1) -> float:
    """Pairwise safety index h_ij; defined for ||dp|| >= Ds.

    Raises CoincidentRobotsError at ||dp|| = 0 and SafetyViolationError
    (carrying the penetration depth) when ||dp|| < Ds beyond the boundary
    snap band.
    """
    dp, dv, r, pv = _pair_scalars(zi, zj)
    if r == 0.0:
        raise CoincidentRobotsError(f"robots {i} and {j} coincide")
    eps = r - params.ds
    if eps < -BOUNDARY_SNAP:
        raise SafetyViolationError(penetration=-eps, pair=(i, j))
    asum = params.alpha_of(i) + params.alpha_of(j)
    core = 0.0 if eps <= BOUNDARY_SNAP else math.sqrt(2.0 * asum * eps)
    return core + pv / r


def safety_index_signed(zi: RobotState, zj: RobotState, params: Params, i: int = 0, j: int = 1) -> float:
    """Total-function extension of the safety index, odd in (||dp|| - Ds).

    Below the safety margin the radicand is negative and the strict index is
    undefined; for logging and post-hoc audits we extend it continuously as
    -sqrt(2 (alpha_i + alpha_j) (Ds - ||dp||)) + dp.dv / ||dp||, so a
    violation shows up as a negative value instead of an exception.
    """
    dp, dv, r, pv = _pair_scalars(zi, zj)
    if r == 0.0:
        raise CoincidentRobotsError(f"robots {i} and {j} coincide")
    eps = r - params.ds
    asum = params.alpha_of(i) + params.alpha_of(j)
    if abs(eps) <= BOUNDARY_SNAP:
        core = 0.0
    else:
        core = math.copysign(math.sqrt(2.0 * asum * abs(eps)), eps)
    return core + pv / r


def constraint_bound(zi: RobotState, zj: RobotState, params: Params, i: int = 0, j: int = 1) -> float:
    """Bound b_ij of the pairwise constraint -dp.du <= b_ij.

    b = ||dp|| h^3 + (a_i+a_j) dp.dv / sqrt(2 (a_i+a_j)(||dp|| - Ds))
        + ||dv||^2 - (dp.dv)^2 / ||dp||^2

    On the boundary the middle term is 0/0; it is defined as 0 when both
    |dp.dv| and ||dp|| - Ds are below EPS_NUM (the deadlock states live
    exactly there), and a BoundarySingularityError is raised when the
    distance is on the boundary but the radial velocity is not.
    """
    dp, dv, r, pv = _pair_scalars(zi, zj)
    if r == 0.0:
        raise CoincidentRobotsError(f"robots {i} and {j} coincide")
    eps = r - params.ds
    if eps < -BOUNDARY_SNAP:
        raise SafetyViolationError(penetration=-eps, pair=(i, j))
    asum = params.alpha_of(i) + params.alpha_of(j)
    if eps < EPS_NUM:
        if abs(pv) < EPS_NUM:
            middle = 0.0
        else:
            raise BoundarySingularityError(
                f"pair ({i},{j}): ||dp|| - Ds = {eps:.3e} with dp.dv = {pv:.3e}"
            )
    else:
        middle = asum * pv / math.sqrt(2.0 * asum * eps)
    h = safety_index(zi, zj, params, i, j)
    return r * h * h * h + middle + v_dot(dv, dv) - (pv * pv) / (r * r)


def decentralized_rows(
    zi: RobotState, zj: RobotState, params: Params, i: int = 0, j: int = 1
) -> tuple[ConstraintRow, ConstraintRow]:
    """Split the pair constraint between robots i and j.

    Robot i receives  -dp_ij . u_i <= alpha_i/(alpha_i+alpha_j) b_ij  and
    robot j the mirrored row; the two shares sum to b_ij.
    """
    b = constraint_bound(zi, zj, params, i, j)
    dp = v_sub(zi.p, zj.p)
    ai, aj = params.alpha_of(i), params.alpha_of(j)
    asum = ai + aj
    row_i = ConstraintRow(a=(-dp[0], -dp[1]), b_hat=(ai / asum) * b, kind=NeighborKind(j))
    row_j = ConstraintRow(a=(dp[0], dp[1]), b_hat=(aj / asum) * b, kind=NeighborKind(i))
    return row_i, row_j


def box_rows(alpha_i: float) -> tuple[ConstraintRow, ...]:
    """The four acceleration-limit rows, in the fixed order +x, +y, -x, -y."""
    return (
        ConstraintRow(a=(1.0, 0.0), b_hat=alpha_i, kind=BoxFaceKind(axis=0, sign=+1)),
        ConstraintRow(a=(0.0, 1.0), b_hat=alpha_i, kind=BoxFaceKind(axis=1, sign=+1)),
        ConstraintRow(a=(-1.0, 0.0), b_hat=alpha_i, kind=BoxFaceKind(axis=0, sign=-1)),
        ConstraintRow(a=(0.0, -1.0), b_hat=alpha_i, kind=BoxFaceKind(axis=1, sign=-1)),
    )


def assemble_qp(i: int, world: WorldState, goals: GoalSpec, params: Params):
    """Build robot i's QP: objective center u_hat and M + 4 constraint rows.

    Every other robot is a neighbor.  Row order is fixed (neighbors by
    ascending id, then box faces +x, +y, -x, -y) so active-set indices are
    reproducible across runs.
    """
    from .qp import QPProblem  # local import to keep the module DAG acyclic

    zi = world.robots[i]
    u_hat = pd_control(zi, goals.pd[i], params)
    rows: list[ConstraintRow] = []
    for j in range(world.n):
        if j == i:
            continue
        row_i, _ = decentralized_rows(zi, world.robots[j], params, i, j)
        rows.append(row_i)
    rows.extend(box_rows(params.alpha_of(i)))
    return QPProblem(u_hat=u_hat, rows=tuple(rows))


def pair_indices(n: int) -> tuple[tuple[int, int], ...]:
    """All unordered robot pairs (i, j), i < j, in ascending order."""
    return tuple((i, j) for i in range(n) for j in range(i + 1, n))


def min_pair_distance(world: WorldState) -> float:
    return min(
        v_norm(v_sub(world.robots[i].p, world.robots[j].p))
        for i, j in pair_indices(world.n)
    ) if world.n > 1 else math.inf
