"""Deadlock detection, set membership and the analytical deadlock families.

A robot is deadlocked when its QP output and velocity are (numerically) zero
while its PD reference is not, i.e. it is stuck away from its goal with at
least one collision-avoidance multiplier strictly positive; the multipliers
then balance the goal attraction as a repulsive contact force.  System
deadlock requires every robot to be deadlocked at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .cbf import assemble_qp, pair_indices, safety_index_signed
from .core import (
    GoalSpec,
    Params,
    RobotState,
    Vec2,
    WorldState,
    goal_direction,
    goal_separation,
    pd_control,
    unit_vector,
    v_add,
    v_dot,
    v_norm,
    v_scale,
    v_sub,
)
from .errors import SafetyViolationError, ZeroVectorError
from .qp import QPProblem, QPSolution, solve_qp


@dataclass(frozen=True)
class DeadlockThresholds:
    """Numerical thresholds realizing the exact-equality deadlock conditions.

    eps_u      control-norm threshold (m/s^2)
    eps_v      velocity-norm threshold (m/s)
    eps_goal   minimum distance-to-goal for a robot to count as stuck (m)
    eps_mu     minimum neighbor-multiplier magnitude
    """

    eps_u: float
    eps_v: float
    eps_goal: float
    eps_mu: float

    def __post_init__(self):
        if min(self.eps_u, self.eps_v, self.eps_goal, self.eps_mu) <= 0.0:
            raise ValueError("all thresholds must be strictly positive")

    @classmethod
    def from_params(cls, params: Params) -> "DeadlockThresholds":
        # Defaults scale with the problem data; the source only asks for
        # "small thresholds".
        return cls(
            eps_u=1e-3 * params.kp * params.ds,
            eps_v=1e-3,
            eps_goal=0.1 * params.ds,
            eps_mu=1e-6,
        )


def geometric_tol(params: Params) -> float:
    """Default tolerance for distance-at-margin tests."""
    return 1e-6 * params.ds


@dataclass(frozen=True)
class DeadlockReport:
    """Per-robot verdict with every measured quantity behind it."""

    robot: int
    verdict: bool
    u_star_norm: float
    v_norm: float
    goal_dist: float
    active_multipliers: tuple[tuple[int, float], ...]
    force_balance_residual: float


@dataclass(frozen=True)
class ThreeRobotCategory:
    """Geometric class of a three-robot deadlock candidate.

    category "A": all three pairs at the safety margin;
    category "B": exactly the two pairs containing ``center`` at the margin;
    category "none": not a deadlock geometry.
    """

    category: str
    center: int | None = None


def detect_deadlock(
    i: int,
    world: WorldState,
    goals: GoalSpec,
    params: Params,
    qp_solution: QPSolution,
    thresholds: DeadlockThresholds,
    problem: QPProblem | None = None,
) -> DeadlockReport:
    """Evaluate the four deadlock conditions for robot i.

    ``problem`` may be passed to avoid re-assembling the QP used to produce
    ``qp_solution``; it is only needed for the force-balance residual and the
    neighbor-row multipliers.
    """
    if qp_solution.status != "optimal":
        raise ValueError("detect_deadlock expects an optimal QP solution")
    if problem is None:
        problem = assemble_qp(i, world, goals, params)
    z = world.robots[i]
    u_star_norm = v_norm(qp_solution.u_star)
    vel_norm = v_norm(z.v)
    goal_dist = v_norm(v_sub(z.p, goals.pd[i]))

    active = []
    force = list(pd_control(z, goals.pd[i], params))
    max_neighbor_mu = 0.0
    for k in qp_solution.active_set:
        mu = qp_solution.mu_star[k]
        active.append((k, mu))
        if problem.rows[k].is_neighbor:
            max_neighbor_mu = max(max_neighbor_mu, mu)
    for k, row in enumerate(problem.rows):
        mu = qp_solution.mu_star[k]
        if mu != 0.0:
            force[0] -= 0.5 * mu * row.a[0]
            force[1] -= 0.5 * mu * row.a[1]

    verdict = (
        u_star_norm <= thresholds.eps_u
        and vel_norm <= thresholds.eps_v
        and goal_dist >= thresholds.eps_goal
        and max_neighbor_mu > thresholds.eps_mu
    )
    return DeadlockReport(
        robot=i,
        verdict=verdict,
        u_star_norm=u_star_norm,
        v_norm=vel_norm,
        goal_dist=goal_dist,
        active_multipliers=tuple(active),
        force_balance_residual=v_norm((force[0], force[1])),
    )


def system_deadlock(
    world: WorldState,
    goals: GoalSpec,
    params: Params,
    solutions: tuple[QPSolution, ...],
    thresholds: DeadlockThresholds,
    problems: tuple[QPProblem, ...] | None = None,
) -> bool:
    """True iff every robot is in deadlock."""
    for i in range(world.n):
        problem = problems[i] if problems is not None else None
        if not detect_deadlock(i, world, goals, params, solutions[i], thresholds, problem).verdict:
            return False
    return True


def two_robot_multiplier(a: Vec2, u_hat: Vec2, b_hat: float) -> float:
    """Closed-form multiplier of a single active row: mu = 2 (a.u_hat - b_hat) / ||a||^2."""
    aa = v_dot(a, a)
    if aa == 0.0:
        raise ZeroVectorError("constraint row direction is the zero vector")
    return 2.0 * (v_dot(a, u_hat) - b_hat) / aa


# ---------------------------------------------------------------------------
# analytical families
# ---------------------------------------------------------------------------

def collinear_family(goals: GoalSpec, params: Params, alpha: float) -> tuple[RobotState, RobotState]:
    """Two-robot deadlock family: both robots at rest on the goal line.

    p1 = alpha pd1 + (1 - alpha) pd2,  p2 = p1 - Ds e_beta,  alpha in (0, 1).
    Requires D_G > Ds so the construction is nondegenerate.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if len(goals) < 2:
        raise ValueError("two goals required")
    d_g = goal_separation(goals, 0, 1)
    if not d_g > params.ds:
        raise ValueError(f"goal separation {d_g} must exceed the safety margin {params.ds}")
    e = goal_direction(goals, 0, 1)
    pd1, pd2 = goals.pd[0], goals.pd[1]
    p1 = v_add(v_scale(pd1, alpha), v_scale(pd2, 1.0 - alpha))
    p2 = v_sub(p1, v_scale(e, params.ds))
    return RobotState.at_rest(p1), RobotState.at_rest(p2)


def boundedness_identity(world: WorldState, goals: GoalSpec, params: Params) -> float:
    """Residual of the two-robot deadlock identity

        ||p1 - pd1|| + ||p2 - pd2|| = Ds + D_G.

    Zero exactly on the collinear family; strictly positive off it.
    """
    if world.n != 2:
        raise ValueError("the boundedness identity is a two-robot statement")
    d1 = v_norm(v_sub(world.robots[0].p, goals.pd[0]))
    d2 = v_norm(v_sub(world.robots[1].p, goals.pd[1]))
    return abs(d1 + d2 - (params.ds + goal_separation(goals, 0, 1)))


def classify_three_robot(world: WorldState, params: Params, tol: float) -> ThreeRobotCategory:
    """Classify a three-robot configuration by which pairs sit at the margin."""
    if world.n != 3:
        raise ValueError("three robots required")
    dist = {}
    for i, j in pair_indices(3):
        d = v_norm(v_sub(world.robots[i].p, world.robots[j].p))
        if d < params.ds - tol:
            raise SafetyViolationError(penetration=params.ds - d, pair=(i, j))
        dist[(i, j)] = d
    tight = {pair for pair, d in dist.items() if abs(d - params.ds) <= tol}
    if len(tight) == 3:
        return ThreeRobotCategory(category="A")
    if len(tight) == 2:
        (a1, b1), (a2, b2) = sorted(tight)
        common = {a1, b1} & {a2, b2}
        if len(common) == 1:
            return ThreeRobotCategory(category="B", center=common.pop())
    return ThreeRobotCategory(category="none")


def _symmetric_goals(r_goal: float) -> GoalSpec:
    return GoalSpec(pd=tuple(v_scale(unit_vector(2.0 * math.pi * i / 3.0), r_goal) for i in range(3)))


def three_robot_family_catA(params: Params, r_goal: float) -> tuple[WorldState, GoalSpec]:
    """Equilateral three-robot deadlock against goals at radius R.

    Robots sit at Ds/sqrt(3) opposite their goals: p_i = Ds/sqrt(3) e(2pi(i-1)/3 + pi).
    """
    if r_goal <= 0.0:
        raise ValueError("goal radius must be positive")
    rho = params.ds / math.sqrt(3.0)
    robots = tuple(
        RobotState.at_rest(v_scale(unit_vector(2.0 * math.pi * i / 3.0 + math.pi), rho))
        for i in range(3)
    )
    return WorldState(robots=robots, t=0.0), _symmetric_goals(r_goal)


def three_robot_family_catB(params: Params, r_goal: float) -> tuple[WorldState, GoalSpec]:
    """Open-chain three-robot deadlock: p1 = Ds e(pi), p2 = 0, p3 = Ds e(pi/3).

    Robot 2 carries both active constraints; the outer pair is separated by
    Ds sqrt(3) > Ds.
    """
    if r_goal <= 0.0:
        raise ValueError("goal radius must be positive")
    ds = params.ds
    robots = (
        RobotState.at_rest(v_scale(unit_vector(math.pi), ds)),
        RobotState.at_rest((0.0, 0.0)),
        RobotState.at_rest(v_scale(unit_vector(math.pi / 3.0), ds)),
    )
    return WorldState(robots=robots, t=0.0), _symmetric_goals(r_goal)


def catB_parametrized(
    params: Params, r_goal: float, theta: float, alpha_angle: float
) -> tuple[WorldState, GoalSpec]:
    """Continuous category-B family parametrized by the two chain angles.

    theta in (-pi/6, 0) is the bearing of p2 - p1 and alpha_angle in
    (pi/6, pi/2) the bearing of p3 - p2; both chain links have length Ds and
    robot 2 carries both active constraints.  p1 is the closed-form anchor
    with the shared -1 / (2 sin(alpha - theta)) prefactor.
    """
    if r_goal <= 0.0:
        raise ValueError("goal radius must be positive")
    if not (-math.pi / 6.0 < theta < 0.0):
        raise ValueError(f"theta must lie in (-pi/6, 0), got {theta}")
    if not (math.pi / 6.0 < alpha_angle < math.pi / 2.0):
        raise ValueError(f"alpha_angle must lie in (pi/6, pi/2), got {alpha_angle}")
    ds, r = params.ds, r_goal
    a, th = alpha_angle, theta
    s = math.sin(a - th)
    if s == 0.0:
        raise ValueError("sin(alpha - theta) vanished; parameters out of range")
    pre = -1.0 / (2.0 * s)
    p1 = (
        pre * (
            2.0 * ds * math.cos(th) * s
            + 2.0 * r * math.cos(th) * math.sin(a - math.pi / 3.0)
            + 2.0 * r * math.cos(a) * math.sin(th)
        ),
        pre * (
            math.sin(th)
            * (3.0 * r * math.sin(a) + 2.0 * ds * s - math.sqrt(3.0) * r * math.cos(a))
        ),
    )
    p2 = v_add(p1, v_scale(unit_vector(th), ds))
    p3 = v_add(p2, v_scale(unit_vector(a), ds))
    robots = (RobotState.at_rest(p1), RobotState.at_rest(p2), RobotState.at_rest(p3))
    return WorldState(robots=robots, t=0.0), _symmetric_goals(r_goal)


def verify_boundary_membership(
    world: WorldState, goals: GoalSpec, params: Params, tol: float = 1e-8
) -> bool:
    """Check that a system-deadlock candidate sits on the safe-set boundary.

    Solves each robot's QP and requires (a) every robot to carry at least
    one active collision-avoidance row (otherwise the state is not a
    deadlock candidate at all) and (b) |h_ij| <= tol for every pair whose
    constraint is active.
    """
    active_pairs: set[tuple[int, int]] = set()
    for i in range(world.n):
        problem = assemble_qp(i, world, goals, params)
        sol = solve_qp(problem)
        if sol.status != "optimal":
            return False
        mine = [problem.rows[k] for k in sol.active_set if problem.rows[k].is_neighbor]
        if not mine:
            return False
        for row in mine:
            j = row.kind.j
            active_pairs.add((min(i, j), max(i, j)))
    for i, j in sorted(active_pairs):
        h = safety_index_signed(world.robots[i], world.robots[j], params, i, j)
        if abs(h) > tol:
            return False
    return True
