# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Constructive sub- and supersolutions.

Barriers are stored as a base function plus a list of patches. A patch is any object with a
vectorized `__call__` on chart points that returns NaN off its domain: model-surface sheets for the
boundary barrier sequences and Dirichlet solutions on geodesic balls for Perron lifts.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .boundary_data import BoundaryGraph, clear_sphere_radius
from .common import DEFAULT_BALL_MARGIN, DEFAULT_K_MAX, DEFAULT_STAGNATION, SANDWICH_TOL, CapSide, SheetSide, Side
from .config import SolverConfig, worker_threads
from .errors import BallConditionError, DomainError, ZeroRadiusError
from .geometry import ChartCase, geodesic_sphere_points
from .logger import log
from .model_surfaces import ModelSurface, cmc_cap_for_boundary_sphere, supersolution_barrier, surface_as_graph
from .pde import ChartGrid, GraphFunction, check_curvature, residual
from .solver import dirichlet_solve

"""
Rim samples used when checking the cylinder curvature of a geodesic ball.
"""
RIM_SAMPLES = 64

"""
Smallest ball radius tried before giving up.
"""
MIN_BALL_RADIUS = 1e-3


@dataclass(frozen=True, eq=False)
class ConstantLevel:
    value: float

    def __call__(self, xi) -> np.ndarray:
        return np.full(np.shape(xi)[:-1], float(self.value))


@dataclass(frozen=True, eq=False)
class Subsolution:
    """
    A lower barrier: a base function patched on subdomains.

    Sheet patches combine with the base by max on their domain; ball-lift patches replace it.

    Attributes:
        case (ChartCase): Chart of M.
        base: Callable on chart points.
        patches (tuple): Patches in application order.
        converged (bool): The last lift found the probe center on the boundary curve.
    """

    case: ChartCase
    base: object
    patches: tuple = ()
    converged: bool = False

    combine = staticmethod(np.maximum)

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        values = np.array(self.base(xi), dtype=float)
        for patch in self.patches:
            patched = np.asarray(patch(xi), dtype=float)
            merged = patched if getattr(patch, "replaces", False) else self.combine(values, patched)
            values = np.where(np.isfinite(patched), merged, values)
        return values

    def with_patch(self, patch) -> "Subsolution":
        return replace(self, patches=self.patches + (patch,), converged=False)

    def terminal(self) -> "Subsolution":
        return replace(self, converged=True)


class Supersolution(Subsolution):
    """An upper barrier; sheet patches combine with the base by min."""

    combine = staticmethod(np.minimum)


@dataclass(frozen=True, eq=False)
class Reflected:
    """The negative of a barrier, for data mirrored through M."""

    inner: object

    def __call__(self, xi) -> np.ndarray:
        return -np.asarray(self.inner(xi), dtype=float)


@dataclass(frozen=True)
class GeodesicBallSpec:
    case: ChartCase
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.case.require(self.center)))
        if not self.radius > 0.0:
            raise DomainError(f"ball radius must be positive, got {self.radius}")

    def contains(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        center = np.array(self.center)
        inside = self.case.contains(xi)
        safe = np.where(inside[..., None], xi, center)
        return inside & (self.case.distance(safe, center) <= self.radius)


@dataclass(frozen=True, eq=False)
class GridPatch:
    """Dirichlet solution on a geodesic ball, replacing the base inside the ball."""

    u: GraphFunction
    ball: GeodesicBallSpec
    fill: object

    replaces = True

    @cached_property
    def _interpolator(self):
        return self.u.interpolator(self.fill)

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        values = self._interpolator(xi.reshape(-1, xi.shape[-1])).reshape(xi.shape[:-1])
        return np.where(self.ball.contains(xi), values, np.nan)


@dataclass(frozen=True, eq=False)
class SandwichReport:
    lower_margin: float
    upper_margin: float
    violations: int
    tol: float

    @property
    def holds(self) -> bool:
        return self.violations == 0


@dataclass(frozen=True, eq=False)
class BarrierCertificate:
    """
    Barrier sequences evaluated at one ideal probe point.

    Attributes:
        probe (np.ndarray): Boundary coordinate of the probe.
        target (float): phi at the probe.
        sub_values (list): sigma_k at the probe, k = 0, 1, ...
        super_values (list): w_k at the probe.
        converged (bool): Both sequences reached the boundary curve.
        stagnated (bool): The gap stopped improving before k_max.
        subsolution (Subsolution): The last sigma_k.
        supersolution (Supersolution): The last w_k.
        sandwich (SandwichReport): Comparison with a solution, when one was given.
    """

    probe: np.ndarray
    target: float
    sub_values: list
    super_values: list
    converged: bool
    stagnated: bool
    subsolution: object
    supersolution: object
    sandwich: SandwichReport = None

    @property
    def gaps(self) -> list:
        return [w - s for s, w in zip(self.sub_values, self.super_values)]

    @property
    def iterations(self) -> int:
        return len(self.sub_values) - 1


def probe_point(case: ChartCase, q) -> np.ndarray:
    """Chart point of an ideal probe: (q, 0) in the parabolic chart, q / |q| on the unit sphere."""
    q = np.asarray(q, dtype=float).reshape(-1)
    if case.is_parabolic:
        if q.size != case.n - 1:
            raise DomainError(f"parabolic probes need {case.n - 1} coordinates, got {q.size}")
        return np.append(q, 0.0)
    if q.size != case.n or not np.linalg.norm(q) > 0.0:
        raise DomainError(f"hyperbolic probes need a nonzero point of R^{case.n}, got {q}")
    return q / np.linalg.norm(q)


def _boundary_coordinate(case: ChartCase, q) -> np.ndarray:
    point = probe_point(case, q)
    return point[:-1] if case.is_parabolic else point


def sub_lift(sigma: Subsolution, q, phi: BoundaryGraph) -> Subsolution:
    """
    Minimal lift of sigma at the probe q by the totally geodesic hemisphere over the largest ideal
    sphere about Psi(sigma(q), q) that stays on M's side of the boundary curve.

    Returns the input marked converged when the center already lies on the curve.
    """
    case = sigma.case
    level = float(sigma(probe_point(case, q)))
    center = phi.ideal_point(_boundary_coordinate(case, q), level)
    try:
        sphere = clear_sphere_radius(phi, center, Side.CONTAINS_M)
    except ZeroRadiusError:
        log.debug(f"sub lift at {q}: center on the boundary curve")
        return sigma.terminal()
    sheet = surface_as_graph(ModelSurface.hemisphere(sphere.center, sphere.radius), case, SheetSide.FLOW_FACING)
    return sigma.with_patch(sheet)


def super_descent(w: Supersolution, q, phi: BoundaryGraph, H: float) -> Supersolution:
    """
    H descent of w at the probe q: the M-facing sheet of the CMC-H cap over the largest clear ideal
    sphere about Psi(w(q), q) on the far side of the curve, with its mean curvature vector pointing
    toward the curve.
    """
    H = check_curvature(H)
    case = w.case
    level = float(w(probe_point(case, q)))
    center = phi.ideal_point(_boundary_coordinate(case, q), level)
    try:
        sphere = clear_sphere_radius(phi, center, Side.OPPOSITE_M)
    except ZeroRadiusError:
        log.debug(f"super descent at {q}: center on the boundary curve")
        return w.terminal()
    cap = cmc_cap_for_boundary_sphere(sphere, H, CapSide.EXTERIOR)
    return w.with_patch(surface_as_graph(cap, case, SheetSide.M_FACING))


def sandwich_check(lower, upper, u: GraphFunction, tol: float = SANDWICH_TOL) -> SandwichReport:
    """Check lower <= u <= upper at the active nodes of u."""
    grid = u.grid
    points = grid.points[grid.active]
    values = u.values[grid.active]
    below = values - np.asarray(lower(points), dtype=float)
    above = np.asarray(upper(points), dtype=float) - values
    below = np.where(np.isfinite(below), below, np.inf)
    above = np.where(np.isfinite(above), above, np.inf)
    violations = int(np.count_nonzero((below < -tol) | (above < -tol)))
    return SandwichReport(float(np.min(below)), float(np.min(above)), violations, float(tol))


def discretization_tolerance(grid: ChartGrid) -> float:
    """Sandwich tolerance for data that the grid does not reproduce exactly."""
    return max(SANDWICH_TOL, float(np.max(grid.spacing)) ** 2)


def barrier_sequence(
    q,
    phi: BoundaryGraph,
    H: float,
    k_max: int = DEFAULT_K_MAX,
    stagnation: float = DEFAULT_STAGNATION,
    solution=None,
    tol: float = SANDWICH_TOL,
) -> BarrierCertificate:
    """
    Iterate sub lifts from sigma_0 = inf phi and H descents from the supersolution barrier at an
    ideal probe point.

    Args:
        q: Boundary coordinate of the probe (R^{n-1} parabolic, a nonzero point of R^n hyperbolic).
        phi (BoundaryGraph): The boundary datum.
        H (float): Mean curvature, |H| < 1.
        k_max (int): Most iterations.
        stagnation (float): Stop once the gap improves by less than this.
        solution (optional): Solution or GraphFunction checked against the final barriers.
        tol (float): Sandwich tolerance.

    Returns:
        BarrierCertificate: The sequences at the probe and the optional sandwich report.
    """
    H = check_curvature(H)
    case = phi.case
    if H < 0.0:
        mirrored = barrier_sequence(q, phi.transformed(-1.0, 0.0), -H, k_max, stagnation)
        lower, upper = Reflected(mirrored.supersolution), Reflected(mirrored.subsolution)
        sandwich = None
        if solution is not None:
            sandwich = sandwich_check(lower, upper, getattr(solution, "u", solution), tol)
        return BarrierCertificate(
            probe=mirrored.probe,
            target=-mirrored.target,
            sub_values=[-value for value in mirrored.super_values],
            super_values=[-value for value in mirrored.sub_values],
            converged=mirrored.converged,
            stagnated=mirrored.stagnated,
            subsolution=lower,
            supersolution=upper,
            sandwich=sandwich,
        )

    coordinate = _boundary_coordinate(case, q)
    xi0 = probe_point(case, q)
    sigma = Subsolution(case, ConstantLevel(phi.inf))
    w = Supersolution(case, supersolution_barrier(case, phi, H))
    sub_values, super_values = [float(sigma(xi0))], [float(w(xi0))]
    stagnated = False
    for k in range(k_max):
        if not sigma.converged:
            sigma = sub_lift(sigma, coordinate, phi)
        if not w.converged:
            w = super_descent(w, coordinate, phi, H)
        if sigma.converged and w.converged:
            break
        sub_values.append(float(sigma(xi0)))
        super_values.append(float(w(xi0)))
        improvement = (super_values[-2] - sub_values[-2]) - (super_values[-1] - sub_values[-1])
        log.debug(f"probe {coordinate}, k = {k + 1}: sigma {sub_values[-1]:.12g}, w {super_values[-1]:.12g}")
        if improvement < stagnation:
            stagnated = True
            log.warning(f"barrier sequences at {coordinate} stagnated after {k + 1} iterations")
            break

    sandwich = None
    if solution is not None:
        sandwich = sandwich_check(sigma, w, getattr(solution, "u", solution), tol)
    return BarrierCertificate(
        probe=coordinate,
        target=float(phi(coordinate)),
        sub_values=sub_values,
        super_values=super_values,
        converged=sigma.converged and w.converged,
        stagnated=stagnated,
        subsolution=sigma,
        supersolution=w,
        sandwich=sandwich,
    )


def certify_probes(probes, phi: BoundaryGraph, H: float, **kwargs) -> list:
    """Barrier certificates for several probes, computed concurrently."""
    with ThreadPoolExecutor(max_workers=worker_threads()) as pool:
        futures = [pool.submit(barrier_sequence, q, phi, H, **kwargs) for q in probes]
        return [future.result() for future in futures]


def cylinder_curvature(ball: GeodesicBallSpec, count: int = RIM_SAMPLES) -> np.ndarray:
    """
    Mean curvature of the Killing cylinder over the boundary of a geodesic ball, per rim sample.

    The cylinder is the product of the geodesic sphere (mean curvature coth r in H^n) with the
    Killing orbits; the orbit direction contributes half the inward derivative of log gamma.
    """
    case, center, radius = ball.case, np.array(ball.center), ball.radius
    rim = geodesic_sphere_points(case, center, radius, count)
    n = case.n
    step = 1e-6 * max(1.0, float(np.max(np.abs(rim))))
    dd = np.empty_like(rim)
    for k in range(n):
        offset = np.zeros(n)
        offset[k] = step
        dd[:, k] = (case.distance(rim + offset, center) - case.distance(rim - offset, center)) / (2.0 * step)
    _, g_inv, _ = case.metric_fields(rim)
    outward = np.einsum("kij,kj->ki", g_inv, dd)
    length = np.sqrt(np.sum(dd * outward, axis=-1))
    inward = -outward / length[:, None]
    fiber = 0.5 * np.sum(case.gamma_differential(rim) * inward, axis=-1) / case.gamma(rim)
    return ((n - 1) / math.tanh(radius) + fiber) / n


def ball_threshold(n: int, H: float) -> float:
    return max(abs(H), math.sqrt((n - 1) / n))


def check_ball(ball: GeodesicBallSpec, H: float) -> float:
    """
    Raises:
        BallConditionError: The cylinder curvature falls below max(|H|, sqrt((n-1)/n)).
    """
    smallest = float(np.min(cylinder_curvature(ball)))
    required = ball_threshold(ball.case.n, H)
    if smallest < required:
        raise BallConditionError(smallest, required)
    return smallest


def choose_ball_radius(
    case: ChartCase, center, H: float, margin: float = DEFAULT_BALL_MARGIN, start: float = 1.0
) -> GeodesicBallSpec:
    """Halve the radius from `start` until the cylinder curvature clears the threshold by `margin`."""
    H = check_curvature(H)
    required = (1.0 + margin) * ball_threshold(case.n, H)
    radius = float(start)
    while True:
        ball = GeodesicBallSpec(case, center, radius)
        smallest = float(np.min(cylinder_curvature(ball)))
        if smallest >= required:
            log.debug(f"ball radius {radius:.6g} at {ball.center}: cylinder curvature {smallest:.6g}")
            return ball
        radius *= 0.5
        if radius < MIN_BALL_RADIUS:
            raise BallConditionError(smallest, required)


def ball_lift(v: Subsolution, ball: GeodesicBallSpec, H: float, cfg: SolverConfig = None, nodes: int = 17):
    """
    Perron lift of v on a geodesic ball: v is replaced inside the ball by the solution of the
    Dirichlet problem with data v on the ball boundary.

    Raises:
        BallConditionError: The ball fails the cylinder curvature condition.
    """
    H = check_curvature(H)
    if ball.case != v.case:
        raise DomainError("ball and subsolution live in different charts")
    check_ball(ball, H)
    grid = ChartGrid.ball(ball.case, ball.center, ball.radius, nodes)
    data = GraphFunction.from_callable(grid, v)
    cfg = cfg or SolverConfig()
    if residual(data, H).max_norm <= cfg.abs_tol:
        lifted = data
    else:
        lifted = dirichlet_solve(grid, H, data, cfg).u
    return v.with_patch(GridPatch(lifted, ball, v))

