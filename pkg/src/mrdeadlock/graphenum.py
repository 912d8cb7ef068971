"""Counting and embedding the contact graphs admissible in system deadlock.

An active pairwise constraint is an undirected edge between robot vertices,
so candidate deadlock configurations are connected labeled graphs whose edges
realize distance Ds in the plane and whose non-edges stay strictly farther
apart.  This module provides the exact connected-graph recurrence, the
combinatorial upper/lower bounds, exhaustive enumeration for small N and a
restart-based geometric feasibility checker.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize

Edge = tuple[int, int]

# Non-edges must exceed Ds strictly; the optimizer is given this finite gap.
NONEDGE_MARGIN_FACTOR = 1e-3


@dataclass(frozen=True)
class LabeledGraph:
    """Simple graph on vertices 0..n-1; edges canonically sorted, no self-loops."""

    n: int
    edges: tuple[Edge, ...]

    def __post_init__(self):
        canon = []
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise ValueError("self-loops are not allowed")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge ({u},{v}) out of range for n={self.n}")
            e = (min(u, v), max(u, v))
            if e in seen:
                raise ValueError(f"duplicate edge {e}")
            seen.add(e)
            canon.append(e)
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    def non_edges(self) -> tuple[Edge, ...]:
        present = set(self.edges)
        return tuple(
            (u, v) for u in range(self.n) for v in range(u + 1, self.n) if (u, v) not in present
        )

    def is_connected(self) -> bool:
        if self.n <= 1:
            return True
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        seen = {0}
        stack = [0]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n

    def degree_sequence(self) -> tuple[int, ...]:
        deg = [0] * self.n
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return tuple(deg)


@dataclass(frozen=True)
class EmbeddingResult:
    """Outcome of the planar realizability search for one graph."""

    feasible: bool
    positions: tuple[tuple[float, float], ...] | None
    max_violation: float


def upper_bound(n: int) -> int:
    """All graphs on n labeled vertices: 2^C(n,2)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 2 ** math.comb(n, 2)


def lower_bound(n: int) -> int:
    """Closed-form count of regular-polygon and open-chain rearrangements.

    (n+1) (n-1)! / 2 for n >= 3; defined as 1 for n = 1, 2 to match the
    quoted small-n sequence.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n < 3:
        return 1
    return (n + 1) * math.factorial(n - 1) // 2


def connected_count(n: int) -> int:
    """Exact number of connected graphs on n labeled vertices.

    d_N = 2^C(N,2) - (1/N) sum_{k=1}^{N-1} k C(N,k) 2^C(N-k,2) d_k
    evaluated in exact rational arithmetic.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    d: list[Fraction] = [Fraction(0)] * (n + 1)
    d[1] = Fraction(1)
    for m in range(2, n + 1):
        total = Fraction(2 ** math.comb(m, 2))
        acc = Fraction(0)
        for k in range(1, m):
            acc += k * math.comb(m, k) * (2 ** math.comb(m - k, 2)) * d[k]
        d[m] = total - acc / m
    result = d[n]
    if result.denominator != 1:
        raise ArithmeticError(f"recurrence produced a non-integer count for n={n}")
    return int(result)


def enumerate_connected(n: int) -> list[LabeledGraph]:
    """All connected labeled graphs on n vertices, by exhaustive subset search.

    Deterministic order: ascending bitmask over the lexicographically sorted
    pair list.  Limited to n <= 6 (2^15 subsets).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > 6:
        raise ValueError("exhaustive enumeration is limited to n <= 6")
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    out: list[LabeledGraph] = []
    for mask in range(2 ** len(pairs)):
        edges = tuple(pairs[b] for b in range(len(pairs)) if mask >> b & 1)
        g = LabeledGraph(n=n, edges=edges)
        if g.is_connected():
            out.append(g)
    return out


def graph_seed(g: LabeledGraph, attempt: int) -> int:
    """Deterministic per-(graph, attempt) RNG seed."""
    key = f"{g.n}:{g.edges}".encode()
    return (zlib.crc32(key) << 16) ^ attempt


def _violation(g: LabeledGraph, pos: np.ndarray, ds: float, margin: float) -> float:
    worst = 0.0
    for u, v in g.edges:
        d = float(np.hypot(*(pos[u] - pos[v])))
        worst = max(worst, abs(d - ds))
    for u, v in g.non_edges():
        d = float(np.hypot(*(pos[u] - pos[v])))
        worst = max(worst, max(0.0, ds + margin - d))
    return worst


def _objective(x: np.ndarray, g: LabeledGraph, ds: float, margin: float) -> tuple[float, np.ndarray]:
    pos = x.reshape(g.n, 2)
    f = 0.0
    grad = np.zeros_like(pos)
    for u, v in g.edges:
        diff = pos[u] - pos[v]
        d = math.hypot(diff[0], diff[1])
        if d < 1e-12:
            d = 1e-12
        err = d - ds
        f += err * err
        gvec = (2.0 * err / d) * diff
        grad[u] += gvec
        grad[v] -= gvec
    gap = ds + margin
    for u, v in g.non_edges():
        diff = pos[u] - pos[v]
        d = math.hypot(diff[0], diff[1])
        if d < 1e-12:
            d = 1e-12
        short = gap - d
        if short > 0.0:
            f += short * short
            gvec = (-2.0 * short / d) * diff
            grad[u] += gvec
            grad[v] -= gvec
    return f, grad.ravel()


def embed_graph(g: LabeledGraph, ds: float, attempts: int = 200, tol: float = 1e-6) -> EmbeddingResult:
    """Search for planar positions with edge distances Ds and non-edges > Ds.

    Penalized least squares from seeded random restarts; feasibility is
    declared from a post-hoc re-check of all pairwise distances, independent
    of the optimizer's own residual.  Infeasibility is probabilistic: it is
    only reported after every restart fails.
    """
    if not g.is_connected():
        raise ValueError("embed_graph expects a connected graph")
    if ds <= 0.0:
        raise ValueError("ds must be positive")
    margin = NONEDGE_MARGIN_FACTOR * ds
    if g.n == 1:
        return EmbeddingResult(feasible=True, positions=((0.0, 0.0),), max_violation=0.0)

    best = math.inf
    best_pos: np.ndarray | None = None
    span = ds * max(1.0, math.sqrt(g.n))
    for attempt in range(attempts):
        rng = np.random.default_rng(graph_seed(g, attempt))
        x0 = rng.uniform(-span, span, size=2 * g.n)
        res = minimize(
            _objective,
            x0,
            args=(g, ds, margin),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": 500, "ftol": 1e-16, "gtol": 1e-12},
        )
        pos = res.x.reshape(g.n, 2)
        worst = _violation(g, pos, ds, margin)
        if worst < best:
            best = worst
            best_pos = pos
        if worst <= tol:
            return EmbeddingResult(
                feasible=True,
                positions=tuple((float(p[0]), float(p[1])) for p in pos),
                max_violation=worst,
            )
    return EmbeddingResult(
        feasible=False,
        positions=tuple((float(p[0]), float(p[1])) for p in best_pos) if best_pos is not None else None,
        max_violation=best,
    )


def admissible_report(
    n: int, ds: float = 1.0, attempts: int = 200, tol: float = 1e-6
) -> list[tuple[LabeledGraph, EmbeddingResult]]:
    """Embedding verdict for every connected labeled graph on n vertices."""
    if n > 4:
        raise ValueError("the admissibility census is limited to n <= 4")
    return [(g, embed_graph(g, ds, attempts, tol)) for g in enumerate_connected(n)]


def count_admissible(n: int, ds: float = 1.0, attempts: int = 200) -> int:
    """Number of connected labeled graphs on n vertices that embed feasibly."""
    return sum(1 for _, res in admissible_report(n, ds, attempts) if res.feasible)


def census_table(n_max: int = 4, ds: float = 1.0, attempts: int = 200) -> list[dict]:
    """Rows of the enumeration table: n, upper, connected, admissible, lower."""
    rows = []
    for n in range(1, n_max + 1):
        rows.append(
            {
                "n": n,
                "upper": upper_bound(n),
                "connected": connected_count(n),
                "admissible": count_admissible(n, ds, attempts),
                "lower": lower_bound(n),
            }
        )
    return rows
