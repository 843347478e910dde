# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Nonlinear solves of the Killing-graph equation.

dirichlet_solve runs damped Newton with continuation in H on a fixed grid with Dirichlet data.
asymptotic_solve truncates M, places the boundary datum on the ideal edge and barrier data on
artificial edges, solves, and reports the sandwich margins, truncation sensitivity and seed drift
that stand in for the existence and uniqueness statements.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import spsolve

from .boundary_data import BoundaryGraph, validate_boundary
from .common import SANDWICH_TOL, SEED_TOL, BCPolicy
from .config import SolverConfig, worker_threads
from .errors import DomainError, GridMismatchError, NewtonStagnationError, SingularJacobianError, SolverError
from .geometry import ChartCase
from .logger import log
from .model_surfaces import subsolution_barrier, supersolution_barrier
from .pde import (
    ChartGrid,
    GraphFunction,
    check_curvature,
    gradient_fields,
    linearize,
    require_same_grid,
    residual,
)

"""
Sufficient decrease factor of the backtracking line search.
"""
ARMIJO = 1e-4


@dataclass(frozen=True, eq=False)
class Solution:
    """
    A solved graph function with its diagnostics.

    Attributes:
        u (GraphFunction): Node values, boundary data included.
        H (float): Mean curvature the graph was solved for.
        diagnostics (dict): residual_max, residual_l2, newton_history, continuation and, for
            asymptotic solves, sandwich margins, sensitivity, seed drift, gradient sup and warnings.
    """

    u: GraphFunction
    H: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def grid(self) -> ChartGrid:
        return self.u.grid

    @property
    def residual_max(self) -> float:
        return self.diagnostics["residual_max"]

    @property
    def warnings(self) -> list:
        return self.diagnostics.get("warnings", [])


@dataclass(frozen=True)
class AsymptoticProblem:
    case: ChartCase
    boundary: BoundaryGraph
    H: float


@dataclass(frozen=True, eq=False)
class OrderingReport:
    """
    Result of comparing two solutions on one grid.

    Attributes:
        min_difference (float): min over active nodes of u2 - u1.
        violations (np.ndarray): Multi-indices of nodes with u2 - u1 < -tol.
        tol (float): Tolerance used for violations.
    """

    min_difference: float
    violations: np.ndarray
    tol: float

    @property
    def ordered(self) -> bool:
        return self.violations.shape[0] == 0


@dataclass(frozen=True, eq=False)
class GradientProfile:
    """
    Interior gradient monitor.

    Attributes:
        sup (float): sup of |grad u|_g over interior nodes at least `margin` from the grid boundary.
        shells (list): (inner, outer, sup) per shell of width `margin` in distance to the boundary.
        margin (float): The interior margin delta.
    """

    sup: float
    shells: list
    margin: float


def _as_graph_function(grid: ChartGrid, values) -> GraphFunction:
    if isinstance(values, GraphFunction):
        if not values.grid.same_as(grid):
            raise GridMismatchError(f"data live on grid {values.grid.shape}, expected {grid.shape}")
        return values
    if callable(values):
        return GraphFunction.from_callable(grid, values)
    return GraphFunction(grid, values)


def _boundary_state(grid: ChartGrid, boundary) -> GraphFunction:
    """Boundary data as a grid function with zero interior."""
    stencil = grid.stencil
    flat = np.zeros(int(np.prod(grid.shape)))
    if isinstance(boundary, GraphFunction) or callable(boundary):
        source = _as_graph_function(grid, boundary).flat
        flat[stencil.boundary_nodes] = source[stencil.boundary_nodes]
    else:
        boundary = np.asarray(boundary, dtype=float).reshape(-1)
        if boundary.size != stencil.boundary_nodes.size:
            raise DomainError(f"expected {stencil.boundary_nodes.size} boundary values, got {boundary.size}")
        flat[stencil.boundary_nodes] = boundary
    if not np.all(np.isfinite(flat[stencil.boundary_nodes])):
        raise DomainError("boundary data must be finite")
    return GraphFunction(grid, flat)


def harmonic_seed(state: GraphFunction) -> GraphFunction:
    """
    Metric-Laplacian extension of the boundary data: the linearization at zero gradient with H = 0.
    """
    grid = state.grid
    zero = GraphFunction(grid, np.where(grid.active, 0.0, np.nan))
    lin = linearize(zero, 0.0)
    rhs = -(lin.boundary_jacobian @ state.boundary_values())
    interior = _linear_solve(lin.jacobian, rhs)
    return state.with_interior(interior)


def _linear_solve(jacobian, rhs) -> np.ndarray:
    try:
        step = spsolve(jacobian.tocsc(), rhs)
    except (RuntimeError, ValueError) as err:
        raise SingularJacobianError(f"sparse solve failed: {err}") from err
    step = np.atleast_1d(np.asarray(step, dtype=float))
    if step.shape != rhs.shape or not np.all(np.isfinite(step)):
        raise SingularJacobianError("Newton system is singular")
    return step


def newton(u: GraphFunction, H: float, cfg: SolverConfig, history: list = None) -> GraphFunction:
    """
    Damped Newton on the interior values of u at fixed H.

    The step is halved (by cfg.backtrack) until the residual max-norm decreases sufficiently.

    Raises:
        NewtonStagnationError: The line search fell below cfg.min_step or max_iter was exhausted.
    """
    history = [] if history is None else history
    for iteration in range(cfg.max_iter + 1):
        lin = linearize(u, H)
        norm = float(np.max(np.abs(lin.residual))) if lin.residual.size else 0.0
        history.append(norm)
        log.debug(f"H = {H:.6g}, iteration {iteration}: residual {norm:.3e}")
        if norm <= cfg.abs_tol:
            return u
        if iteration == cfg.max_iter:
            break
        step = _linear_solve(lin.jacobian, -lin.residual)
        current = u.interior_values()
        length = 1.0
        while True:
            trial = u.with_interior(current + length * step)
            trial_norm = residual(trial, H).max_norm
            if trial_norm <= (1.0 - ARMIJO * length) * norm:
                break
            length *= cfg.backtrack
            log.debug(f"backtracking to step {length:.3e} (residual {trial_norm:.3e})")
            if length < cfg.min_step:
                raise NewtonStagnationError(
                    f"line search stalled at H = {H:.6g} with residual {norm:.3e}", u, history
                )
        u = trial
    raise NewtonStagnationError(
        f"no convergence within {cfg.max_iter} iterations at H = {H:.6g} (residual {history[-1]:.3e})", u, history
    )


def _finish(u: GraphFunction, H: float, diagnostics: dict) -> Solution:
    final = residual(u, H)
    diagnostics["residual_max"] = final.max_norm
    diagnostics["residual_l2"] = final.l2_norm
    return Solution(u, H, diagnostics)


def dirichlet_solve(
    grid: ChartGrid, H: float, boundary, cfg: SolverConfig = None, seed=None, continuation: bool = None
) -> Solution:
    """
    Solve the graph equation on a grid with Dirichlet data.

    Args:
        grid (ChartGrid): Grid of the bounded domain.
        H (float): Mean curvature, |H| < 1.
        boundary: Data per boundary node, as an array in stencil order, a GraphFunction on the
            grid or a callable on chart points.
        cfg (SolverConfig, optional): Solver settings, packaged defaults when None.
        seed (optional): Starting interior values (GraphFunction or callable). When None, Newton
            starts from the harmonic extension of the data and continues in H from 0.
        continuation (bool, optional): Continue in H from 0. Defaults to True without a seed and
            to a single solve at H with one.

    Returns:
        Solution: The solved graph function with residual norms and Newton history.
    """
    H = check_curvature(H)
    cfg = cfg or SolverConfig()
    state = _boundary_state(grid, boundary)
    diagnostics = {"continuation": [], "newton_history": []}

    if seed is not None:
        start = state.with_interior(_as_graph_function(grid, seed).interior_values())
        initial = residual(start, H).max_norm
        if initial <= cfg.abs_tol:
            diagnostics["newton_history"] = [initial]
            return _finish(start, H, diagnostics)
    else:
        start = harmonic_seed(state)
    if continuation is None:
        continuation = seed is None
    schedule = cfg.continuation(H) if continuation else [H]

    u = start
    for level in schedule:
        history = []
        u = newton(u, level, cfg, history)
        diagnostics["continuation"].append({"H": level, "iterations": len(history) - 1})
        diagnostics["newton_history"] = history
        log.debug(f"continuation step H = {level:.6g} converged in {len(history) - 1} iterations")
    return _finish(u, H, diagnostics)


def truncated_grid(case: ChartCase, cfg: SolverConfig, enlarge: bool = False) -> ChartGrid:
    """Truncated grid of M; `enlarge` doubles the box (parabolic) or halves epsilon (hyperbolic)."""
    if case.is_parabolic:
        scale = 2.0 if enlarge else 1.0
        return ChartGrid.parabolic(case, scale * cfg.half_width, scale * cfg.height, cfg.epsilon, cfg.spacing)
    epsilon = 0.5 * cfg.epsilon if enlarge else cfg.epsilon
    return ChartGrid.hyperbolic(case, epsilon, cfg.spacing)


def boundary_data(grid: ChartGrid, phi: BoundaryGraph, H: float, policy: BCPolicy) -> GraphFunction:
    """
    Dirichlet data of the truncated problem: phi on the ideal edge, policy data on artificial edges.
    """
    points = grid.points
    values = np.zeros(grid.shape)
    ideal = grid.ideal
    values[ideal] = phi.on_chart(points[ideal])
    artificial = grid.artificial
    if np.any(artificial):
        if BCPolicy(policy) is BCPolicy.BARRIER_BLEND:
            lower = subsolution_barrier(grid.case, phi, H)(points[artificial])
            upper = supersolution_barrier(grid.case, phi, H)(points[artificial])
            values[artificial] = 0.5 * (lower + upper)
        else:
            values[artificial] = phi.on_chart(points[artificial])
    values[~grid.active] = np.nan
    return GraphFunction(grid, values)


def barrier_bounds(case: ChartCase, phi: BoundaryGraph, H: float) -> tuple:
    """
    Lower and upper barriers every solution lies between: the constant inf phi and the
    supersolution barrier for H >= 0, their mirror images for H < 0.
    """
    H = check_curvature(H)
    if H < 0.0:
        lower, upper = barrier_bounds(case, phi.transformed(-1.0, 0.0), -H)
        return (lambda xi: -upper(xi)), (lambda xi: -lower(xi))
    low = phi.inf
    return (lambda xi: np.full(np.shape(xi)[:-1], low)), supersolution_barrier(case, phi, H)


def sandwich_margins(u: GraphFunction, phi: BoundaryGraph, H: float) -> tuple:
    """(min(u - lower), min(upper - u)) over the active nodes."""
    lower, upper = barrier_bounds(u.case, phi, H)
    points = u.grid.points[u.grid.active]
    values = u.values[u.grid.active]
    return float(np.nanmin(values - lower(points))), float(np.nanmin(upper(points) - values))


def _compare_on(solution: Solution, other: Solution) -> float:
    """Max change of `other` relative to `solution` over the interior nodes of `solution`."""
    grid = solution.grid
    nodes = grid.points[grid.interior]
    sampled = other.u.interpolator()(nodes)
    sampled = np.where(np.isfinite(sampled), sampled, solution.u.values[grid.interior])
    return float(np.max(np.abs(sampled - solution.u.values[grid.interior])))


def asymptotic_solve(problem: AsymptoticProblem, cfg: SolverConfig = None) -> Solution:
    """
    Solve the asymptotic Dirichlet problem on a truncation of M.

    Negative H is solved through the mirrored problem (-phi, -H). The datum is shifted so that
    inf phi = 0, which makes the zero function a subsolution; the shift is undone on output.

    Args:
        problem (AsymptoticProblem): Chart case, boundary datum and H.
        cfg (SolverConfig, optional): Solver settings.

    Returns:
        Solution: The solution with sandwich margins, sensitivity, seed drift and gradient sup.
    """
    cfg = cfg or SolverConfig()
    H = check_curvature(problem.H)
    validate_boundary(problem.boundary)
    if H >= 0.0:
        return _normalized_solve(problem.case, problem.boundary, H, cfg)
    log.info(f"solving the mirrored problem with H = {-H:.6g}")
    solution = _normalized_solve(problem.case, problem.boundary.transformed(-1.0, 0.0), -H, cfg)
    diagnostics = dict(solution.diagnostics, mirrored=True)
    return Solution(solution.u.scaled(-1.0), H, diagnostics)


def _normalized_solve(case: ChartCase, datum: BoundaryGraph, H: float, cfg: SolverConfig) -> Solution:
    """Solve for H >= 0 after shifting the datum to inf phi = 0; the mirrored frame skips validation."""
    shift = datum.inf
    phi = datum.transformed(1.0, -shift)
    grid = truncated_grid(case, cfg)
    data = boundary_data(grid, phi, H, cfg.policy)
    log.info(f"solving {case.kind.value} problem, H = {H:.6g}, grid {grid.shape}, policy {cfg.policy.value}")
    solution = dirichlet_solve(grid, H, data, cfg)
    diagnostics = dict(solution.diagnostics, warnings=[], mirrored=False, normalization_shift=shift)

    u = solution.u.values[grid.active]
    lower_margin, upper_margin = sandwich_margins(solution.u, phi, H)
    diagnostics["sandwich_lower_margin"] = lower_margin
    diagnostics["sandwich_upper_margin"] = upper_margin
    diagnostics["sandwich_min_margin"] = min(lower_margin, upper_margin)
    if diagnostics["sandwich_min_margin"] < -SANDWICH_TOL:
        message = f"sandwich margin {diagnostics['sandwich_min_margin']:.3e} below zero"
        log.warning(message)
        diagnostics["warnings"].append(message)

    def sensitivity():
        enlarged = truncated_grid(case, cfg, enlarge=True)
        wide = dirichlet_solve(enlarged, H, boundary_data(enlarged, phi, H, cfg.policy), cfg)
        return _compare_on(solution, wide)

    def seed_drift():
        barrier = supersolution_barrier(case, phi, H)
        seeded = dirichlet_solve(grid, H, data, cfg, seed=barrier, continuation=True)
        return float(np.max(np.abs(seeded.u.values[grid.active] - u)))

    tasks = {}
    with ThreadPoolExecutor(max_workers=worker_threads()) as pool:
        if cfg.sensitivity:
            tasks["sensitivity"] = pool.submit(sensitivity)
        if cfg.probe_seeds:
            tasks["seed_drift"] = pool.submit(seed_drift)
        for name, future in tasks.items():
            try:
                diagnostics[name] = future.result()
            except SolverError as error:
                message = f"{name} check did not finish: {error}"
                log.warning(message)
                diagnostics[name] = None
                diagnostics["warnings"].append(message)

    if (diagnostics.get("sensitivity") or 0.0) > cfg.sensitivity_threshold:
        message = f"truncation sensitivity {diagnostics['sensitivity']:.3e} exceeds {cfg.sensitivity_threshold:.3e}"
        log.warning(message)
        diagnostics["warnings"].append(message)
    if (diagnostics.get("seed_drift") or 0.0) > SEED_TOL:
        message = f"seed probe drift {diagnostics['seed_drift']:.3e} exceeds {SEED_TOL:.1e}"
        log.warning(message)
        diagnostics["warnings"].append(message)

    shifted = Solution(solution.u.shifted(shift), H, diagnostics)
    diagnostics["gradient_sup"] = gradient_monitor(shifted, 2.0 * float(np.max(grid.spacing))).sup
    log.info(f"solved: residual {diagnostics['residual_max']:.3e}, sandwich margin {diagnostics['sandwich_min_margin']:.3e}")
    return shifted


def compare_solutions(first, second, tol: float = SANDWICH_TOL) -> OrderingReport:
    """
    Ordering of two solutions on the same grid.

    Args:
        first: Solution or GraphFunction u1.
        second: Solution or GraphFunction u2.
        tol (float): Nodes with u2 - u1 < -tol are reported as violations.

    Returns:
        OrderingReport: min(u2 - u1) over active nodes and the violating nodes.
    """
    u1 = first.u if isinstance(first, Solution) else first
    u2 = second.u if isinstance(second, Solution) else second
    require_same_grid(u1, u2)
    difference = np.where(u1.grid.active, u2.values - u1.values, np.inf)
    return OrderingReport(float(np.min(difference)), np.argwhere(difference < -tol), tol)


def boundary_distance(grid: ChartGrid) -> np.ndarray:
    """Chart distance of every node to the edge of the truncated domain."""
    points = grid.points
    if grid.case.is_parabolic or grid.mask is None:
        return np.min(np.minimum(points - grid.lo, grid.hi - points), axis=-1)
    return (1.0 - grid.epsilon) - np.sqrt(np.sum(points * points, axis=-1))


def gradient_monitor(solution, margin: float) -> GradientProfile:
    """
    sup of |grad u|_g over interior nodes at chart distance >= margin from the domain edge,
    with the profile over shells of width margin.
    """
    u = solution.u if isinstance(solution, Solution) else solution
    grid = u.grid
    if not margin > 0.0:
        raise DomainError(f"interior margin must be positive, got {margin}")
    _, norm, _ = gradient_fields(u)
    distance = boundary_distance(grid).reshape(-1)[grid.stencil.nodes]
    inside = distance >= margin - 1e-12
    sup = float(np.max(norm[inside])) if np.any(inside) else 0.0
    shells = []
    if np.any(inside):
        top = float(np.max(distance))
        inner = margin
        while inner <= top + 1e-12:
            chosen = inside & (distance >= inner - 1e-12) & (distance < inner + margin - 1e-12)
            if np.any(chosen):
                shells.append((inner, inner + margin, float(np.max(norm[chosen]))))
            inner += margin
    return GradientProfile(sup, shells, float(margin))


def refinement_drift(sups: list) -> float:
    """Relative change of the gradient sup between the last two refinements."""
    if len(sups) < 2:
        return 0.0
    previous, last = float(sups[-2]), float(sups[-1])
    scale = max(abs(previous), abs(last))
    return 0.0 if scale == 0.0 else abs(last - previous) / scale
