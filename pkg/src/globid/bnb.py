"""Best-first branch-and-bound over a box, generic in the bounded problem.

The algorithm keeps a priority queue of boxes ordered by lower bound,
repeatedly splits the box with the smallest bound, scores both children on
creation (best-first selection needs their bounds), updates the incumbent
with the objective at each child's center, and prunes every box whose lower
bound certifies it cannot beat the incumbent by more than the tolerance:

    prune kappa  when  UB <= (1 + eps) * L(kappa) + eps_abs.

The absolute slack eps_abs matters because the optima of interest are
numerically zero, where a purely relative test never fires.

A problem implements: objective_at(p) -> (x, value), bound_on(box) ->
BoundReport, validate(box) -> None | violation, and dim.
"""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import bound as bound_mod
from . import wiener
from .numerics import (
    COARSE_POINTS_DEFAULT,
    K_HI_DEFAULT,
    K_LO_DEFAULT,
    least_squares,
)
from .wiener import Box, InvertibilityError, ProblemConfig, WienerModel

log = logging.getLogger("globid.bnb")

LOG_FLOOR = 1e-300


@dataclass(order=True)
class Node:
    L: float
    insertion_seq: int
    box: Box = field(compare=False)


@dataclass
class SolverConfig:
    epsilon: float = 1e-3
    epsilon_abs: float = 1e-12
    max_nodes: int = 500_000
    split_mode: str = "relative"  # or "absolute"
    k_lo: float = K_LO_DEFAULT
    k_hi: float = K_HI_DEFAULT
    k_coarse_points: int = COARSE_POINTS_DEFAULT
    k_refine_iters: int = 12

    def __post_init__(self):
        if self.epsilon < 0.0 or self.epsilon_abs < 0.0:
            raise ValueError("tolerances must be nonnegative")
        if self.max_nodes < 1:
            raise ValueError("max_nodes must be >= 1")
        if self.split_mode not in ("relative", "absolute"):
            raise ValueError(f"unknown split_mode {self.split_mode!r}")


@dataclass
class SolveResult:
    p_star: np.ndarray
    x_star: np.ndarray
    UB: float
    lb_count: int
    nodes_split: int
    wall_time: float
    certificate: bool
    lowest_open_bound: float = -np.inf


def solve_fixed_p(config: ProblemConfig, p) -> tuple[np.ndarray, float]:
    """f(p): least-squares ARX fit at fixed Hill parameters.

    Minimizes ||A(p)[1; x]||^2, i.e. regresses the first design column on the
    negated remaining columns.  The value is returned as the (possibly
    slightly negative, from cancellation) residual quadratic.
    """
    A = wiener.build_design(config, p)
    x = least_squares(-A[:, 1:], A[:, 0])
    r = A[:, 0] + A[:, 1:] @ x
    return x, float(r @ r)


def split(box: Box, split_mode: str = "absolute", b0: Box | None = None) -> tuple[Box, Box]:
    """Bisect along the dimension of maximum (possibly normalized) length.

    Relative mode normalizes each edge by the corresponding initial-box edge
    before the argmax, which balances exploration when the initial edges have
    very different scales.  Ties go to the lowest dimension index.
    """
    lengths = box.lengths
    if split_mode == "relative":
        if b0 is None:
            raise ValueError("relative split mode needs the initial box")
        ref = np.where(b0.lengths > 0.0, b0.lengths, 1.0)
        lengths = lengths / ref
    dim = int(np.argmax(lengths))
    mid = 0.5 * (box.lower[dim] + box.upper[dim])
    hi1 = box.upper.copy()
    hi1[dim] = mid
    lo2 = box.lower.copy()
    lo2[dim] = mid
    return Box(box.lower, hi1), Box(lo2, box.upper)


def branch_and_bound(problem, b0: Box, config: SolverConfig) -> SolveResult:
    """Best-first branch-and-bound; deterministic for identical inputs."""
    t0 = time.perf_counter()
    violation = problem.validate(b0)
    if violation is not None:
        raise InvertibilityError(f"initial box invalid: {violation}",
                                 sample=getattr(violation, "sample", None))

    center = b0.center
    x_star, ub = problem.objective_at(center)
    p_star = center
    lb_count = 0
    nodes_split = 0
    seq = 0
    # Root enters unscored; it is split unconditionally on first expansion.
    heap: list[Node] = [Node(L=-np.inf, insertion_seq=seq, box=b0)]
    eps, eps_abs = config.epsilon, config.epsilon_abs
    certificate = True

    while heap:
        node = heapq.heappop(heap)
        if ub <= (1.0 + eps) * node.L + eps_abs:
            continue  # pruned lazily
        if nodes_split >= config.max_nodes:
            certificate = False
            heapq.heappush(heap, node)
            break
        nodes_split += 1
        for child in split(node.box, config.split_mode, b0):
            if problem.validate(child) is not None:
                # Cannot happen for the Wiener problem (the binding face only
                # moves up under splitting) but keep the generic guard.
                log.info("defensively pruning invalid child box %s", child)
                continue
            cx, cval = problem.objective_at(child.center)
            if cval < ub:
                ub, x_star, p_star = cval, cx, child.center
            rep = problem.bound_on(child)
            lb_count += 1
            if ub <= (1.0 + eps) * rep.L + eps_abs:
                continue  # child pruned at birth
            seq += 1
            heapq.heappush(heap, Node(L=rep.L, insertion_seq=seq, box=child))

    open_bounds = [n.L for n in heap if ub > (1.0 + eps) * n.L + eps_abs]
    lowest_open = min(open_bounds) if open_bounds else np.inf
    return SolveResult(
        p_star=np.asarray(p_star, dtype=float),
        x_star=np.asarray(x_star, dtype=float),
        UB=ub,
        lb_count=lb_count,
        nodes_split=nodes_split,
        wall_time=time.perf_counter() - t0,
        certificate=certificate,
        lowest_open_bound=float(lowest_open),
    )


def landscape(
    config: ProblemConfig, box: Box, grid_g: int, grid_e: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """log objective h(p) on a grid over the box; NaN where not invertible.

    Returns (gammas, emaxes, H) with H[i, j] = h((gammas[i], emaxes[j])).
    """
    if grid_g < 2 or grid_e < 2:
        raise ValueError("grid dimensions must be >= 2")
    gammas = np.linspace(box.lower[0], box.upper[0], grid_g)
    emaxes = np.linspace(box.lower[1], box.upper[1], grid_e)
    H = np.full((grid_g, grid_e), np.nan)
    for i, g in enumerate(gammas):
        for j, e in enumerate(emaxes):
            try:
                _, val = solve_fixed_p(config, (g, e))
            except InvertibilityError:
                continue
            H[i, j] = np.log(max(val, LOG_FLOOR))
    return gammas, emaxes, H


@dataclass
class WienerProblem:
    """Problem-interface adapter for the Wiener identification instance."""

    config: ProblemConfig
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        self.model = WienerModel(self.config)

    @property
    def dim(self) -> int:
        return 2

    def objective_at(self, p) -> tuple[np.ndarray, float]:
        return solve_fixed_p(self.config, p)

    def bound_on(self, box: Box) -> bound_mod.BoundReport:
        return bound_mod.lower_bound(
            self.model,
            box,
            k_lo=self.solver.k_lo,
            k_hi=self.solver.k_hi,
            coarse_points=self.solver.k_coarse_points,
            refine_iters=self.solver.k_refine_iters,
        )

    def validate(self, box: Box):
        return self.model.validate(box)


def identify(
    config: ProblemConfig, b0: Box, solver: SolverConfig | None = None
) -> tuple[SolveResult, Box, bool]:
    """Run the full identification: adjust the box, then branch-and-bound.

    Returns (result, adjusted_box, was_adjusted).  The lower emax edge is
    raised when needed so the Hill inversion is defined on the whole box, and
    the gamma edge is clamped above 1.
    """
    if solver is None:
        solver = SolverConfig()
    adj, was_adjusted = wiener.adjust_box(config, b0)
    if was_adjusted:
        log.info("initial box adjusted for invertibility: %s -> %s",
                 (b0.lower.tolist(), b0.upper.tolist()),
                 (adj.lower.tolist(), adj.upper.tolist()))
    problem = WienerProblem(config, solver)
    result = branch_and_bound(problem, adj, solver)
    return result, adj, was_adjusted
