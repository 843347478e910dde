# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Finite-difference discretization of the Killing-graph mean curvature equation

    div_g(grad u / w) - <grad u, grad gamma>_g / (2 gamma w) + n H = 0,   w = sqrt(gamma + |grad u|_g^2)

on truncated chart grids. The divergence is written in conservation form with fluxes at the
midpoints between neighbouring nodes; tangential derivatives at a midpoint average the centered
differences of the two adjacent nodes, so every interior node couples to its full 3^n box.
"""

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse import coo_matrix, csr_matrix

from .errors import CurvatureRangeError, DomainError, GridMismatchError
from .geometry import ChartCase, accel_christoffel, geodesic_sphere_points

"""
Fewest nodes allowed along a grid axis.
"""
MIN_NODES = 5


def check_curvature(H: float) -> float:
    H = float(H)
    if not abs(H) < 1.0:
        raise CurvatureRangeError(f"mean curvature must satisfy |H| < 1, got {H}")
    return H


@dataclass(frozen=True, eq=False)
class ChartGrid:
    """
    A uniform grid over a box of chart coordinates, optionally masked.

    Interior nodes are active nodes whose whole 3^n neighbourhood is active; the remaining active
    nodes are boundary nodes and carry Dirichlet data. Boundary nodes are ideal (they approximate
    the ideal boundary of M) or artificial (truncation edges).

    Attributes:
        case (ChartCase): The chart.
        lo (np.ndarray): Lower box corner.
        hi (np.ndarray): Upper box corner.
        shape (tuple): Nodes per axis.
        mask (np.ndarray): Active nodes, all of the box when None.
        ideal_mask (np.ndarray): Ideal boundary nodes, none when None.
        epsilon (float): Distance of the ideal edge from the ideal boundary, in chart units.
    """

    case: ChartCase
    lo: np.ndarray
    hi: np.ndarray
    shape: tuple
    mask: np.ndarray = None
    ideal_mask: np.ndarray = None
    epsilon: float = 0.0

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        shape = tuple(int(k) for k in self.shape)
        if lo.size != self.case.n or hi.size != self.case.n or len(shape) != self.case.n:
            raise DomainError(f"grid box must have {self.case.n} axes")
        if np.any(hi <= lo):
            raise DomainError(f"empty grid box [{lo}, {hi}]")
        if min(shape) < MIN_NODES:
            raise DomainError(f"grids need at least {MIN_NODES} nodes per axis, got {shape}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "shape", shape)
        if self.mask is not None:
            object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool).reshape(shape))
        if self.ideal_mask is not None:
            object.__setattr__(self, "ideal_mask", np.asarray(self.ideal_mask, dtype=bool).reshape(shape))

    @staticmethod
    def _count(lo, hi, spacing) -> int:
        return int(round((hi - lo) / spacing)) + 1

    @classmethod
    def parabolic(cls, case: ChartCase, half_width: float, height: float, epsilon: float, spacing: float):
        """Box [-W, W]^{n-1} x [epsilon, height]; the bottom layer is the ideal edge."""
        if not epsilon > 0.0:
            raise DomainError(f"epsilon must be positive, got {epsilon}")
        if not height > epsilon:
            raise DomainError(f"box height {height} must exceed epsilon {epsilon}")
        lo = np.append(np.full(case.n - 1, -half_width), epsilon)
        hi = np.append(np.full(case.n - 1, half_width), height)
        shape = tuple(cls._count(a, b, spacing) for a, b in zip(lo, hi))
        ideal = np.zeros(shape, dtype=bool)
        ideal[..., 0] = True
        return cls(case, lo, hi, shape, None, ideal, float(epsilon))

    @classmethod
    def hyperbolic(cls, case: ChartCase, epsilon: float, spacing: float):
        """The disk |xi| <= 1 - epsilon on a staircase grid; every boundary node is ideal."""
        if not 0.0 < epsilon < 1.0:
            raise DomainError(f"epsilon must lie in (0, 1), got {epsilon}")
        cutoff = 1.0 - epsilon
        count = cls._count(-cutoff, cutoff, spacing)
        shape = (count,) * case.n
        lo, hi = np.full(case.n, -cutoff), np.full(case.n, cutoff)
        axes = [np.linspace(-cutoff, cutoff, count)] * case.n
        points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        mask = np.sum(points * points, axis=-1) <= cutoff**2 * (1.0 + 1e-12)
        grid = cls(case, lo, hi, shape, mask, None, float(epsilon))
        object.__setattr__(grid, "ideal_mask", grid.boundary.copy())
        return grid

    @classmethod
    def ball(cls, case: ChartCase, center, radius: float, nodes: int = 17):
        """Grid over the closed geodesic ball of M about `center`; its boundary carries lift data."""
        center = case.require(center)
        rim = geodesic_sphere_points(case, center, radius, count=256 if case.n == 2 else 1024)
        extent = np.max(np.abs(rim - center), axis=0)
        pad = 1.5 * extent / (nodes - 1)
        lo, hi = center - extent - pad, center + extent + pad
        if case.is_parabolic:
            lo[-1] = max(lo[-1], 0.5 * (center[-1] - extent[-1]))
        shape = (int(nodes),) * case.n
        axes = [np.linspace(a, b, nodes) for a, b in zip(lo, hi)]
        points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        inside = case.contains(points)
        distance = np.where(inside, case.distance(np.where(inside[..., None], points, center), center), np.inf)
        return cls(case, lo, hi, shape, distance <= radius, None, 0.0)

    @cached_property
    def axes(self) -> list:
        return [np.linspace(a, b, k) for a, b, k in zip(self.lo, self.hi, self.shape)]

    @cached_property
    def spacing(self) -> np.ndarray:
        return (self.hi - self.lo) / (np.array(self.shape) - 1)

    @cached_property
    def points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @cached_property
    def active(self) -> np.ndarray:
        return np.ones(self.shape, dtype=bool) if self.mask is None else self.mask

    @cached_property
    def interior(self) -> np.ndarray:
        padded = np.pad(self.active, 1, constant_values=False)
        result = self.active.copy()
        for offset in stencil_offsets(self.case.n):
            window = tuple(slice(1 + o, 1 + o + k) for o, k in zip(offset, self.shape))
            result &= padded[window]
        return result

    @cached_property
    def boundary(self) -> np.ndarray:
        return self.active & ~self.interior

    @cached_property
    def ideal(self) -> np.ndarray:
        if self.ideal_mask is None:
            return np.zeros(self.shape, dtype=bool)
        return self.ideal_mask & self.boundary

    @cached_property
    def artificial(self) -> np.ndarray:
        return self.boundary & ~self.ideal

    @property
    def n(self) -> int:
        return self.case.n

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def same_as(self, other: "ChartGrid") -> bool:
        return (
            self is other
            or (
                self.case == other.case
                and self.shape == other.shape
                and np.allclose(self.lo, other.lo, rtol=0.0, atol=1e-14)
                and np.allclose(self.hi, other.hi, rtol=0.0, atol=1e-14)
                and np.array_equal(self.active, other.active)
            )
        )

    def node_point(self, node) -> np.ndarray:
        return self.points[tuple(node)]

    @cached_property
    def stencil(self) -> "Stencil":
        return Stencil(self)


def stencil_offsets(n: int) -> np.ndarray:
    """All 3^n offsets of the box stencil in lexicographic order."""
    return np.array(list(itertools.product((-1, 0, 1), repeat=n)), dtype=int)


def _offset_position(n: int, offset) -> int:
    return int(np.ravel_multi_index(tuple(np.asarray(offset) + 1), (3,) * n))


class Stencil:
    """
    Node lists, difference coefficients and metric samples shared by residual and Jacobian.

    coefficients[(a, sigma)] maps the 3^n box values of a node to the coordinate gradient at the
    midpoint in direction sigma * e_a; `centered` maps them to the centered gradient at the node.
    """

    def __init__(self, grid: ChartGrid):
        case, n, h = grid.case, grid.n, grid.spacing
        self.n = n
        self.spacing = h
        self.offsets = stencil_offsets(n)
        strides = np.array([int(np.prod(grid.shape[k + 1 :])) for k in range(n)], dtype=int)
        self.flat_offsets = self.offsets @ strides
        self.nodes = np.flatnonzero(grid.interior)
        self.boundary_nodes = np.flatnonzero(grid.boundary)
        self.unknown_index = np.full(int(np.prod(grid.shape)), -1, dtype=int)
        self.unknown_index[self.nodes] = np.arange(self.nodes.size)
        self.boundary_index = np.full(int(np.prod(grid.shape)), -1, dtype=int)
        self.boundary_index[self.boundary_nodes] = np.arange(self.boundary_nodes.size)
        self.neighbours = self.nodes[:, None] + self.flat_offsets[None, :]

        flat_points = grid.points.reshape(-1, n)
        self.points = flat_points[self.nodes]
        size = 3**n

        self.centered = np.zeros((n, size))
        for b in range(n):
            unit = np.eye(n, dtype=int)[b]
            self.centered[b, _offset_position(n, unit)] += 0.5 / h[b]
            self.centered[b, _offset_position(n, -unit)] -= 0.5 / h[b]

        self.coefficients = {}
        self.midpoints = {}
        for a in range(n):
            e_a = np.eye(n, dtype=int)[a]
            for sigma in (1, -1):
                coeff = np.zeros((n, size))
                coeff[a, _offset_position(n, sigma * e_a)] += sigma / h[a]
                coeff[a, _offset_position(n, 0 * e_a)] -= sigma / h[a]
                for b in range(n):
                    if b == a:
                        continue
                    e_b = np.eye(n, dtype=int)[b]
                    quarter = 0.25 / h[b]
                    coeff[b, _offset_position(n, e_b)] += quarter
                    coeff[b, _offset_position(n, -e_b)] -= quarter
                    coeff[b, _offset_position(n, sigma * e_a + e_b)] += quarter
                    coeff[b, _offset_position(n, sigma * e_a - e_b)] -= quarter
                self.coefficients[a, sigma] = coeff
                mid = self.points + 0.5 * sigma * h[a] * np.eye(n)[a]
                _, g_inv, sqrt_det = case.metric_fields(mid)
                self.midpoints[a, sigma] = (g_inv, sqrt_det, case.gamma(mid))

        _, self.g_inv, self.sqrt_det = case.metric_fields(self.points)
        self.gamma = case.gamma(self.points)
        self.grad_gamma = case.gamma_gradient(self.points)


@dataclass(frozen=True, eq=False)
class GraphFunction:
    """
    Node values of a function over a chart grid; inactive nodes hold NaN.
    """

    grid: ChartGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(values[self.grid.active])):
            raise DomainError("graph function values must be finite on active nodes")
        values[~self.grid.active] = np.nan
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, grid: ChartGrid, function) -> "GraphFunction":
        values = np.full(grid.shape, np.nan)
        values[grid.active] = np.asarray(function(grid.points[grid.active]), dtype=float)
        return cls(grid, values)

    @classmethod
    def constant(cls, grid: ChartGrid, value: float) -> "GraphFunction":
        return cls(grid, np.full(grid.shape, float(value)))

    @property
    def case(self) -> ChartCase:
        return self.grid.case

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def interior_values(self) -> np.ndarray:
        return self.flat[self.grid.stencil.nodes]

    def boundary_values(self) -> np.ndarray:
        return self.flat[self.grid.stencil.boundary_nodes]

    def with_interior(self, interior: np.ndarray) -> "GraphFunction":
        flat = self.flat.copy()
        flat[self.grid.stencil.nodes] = interior
        return GraphFunction(self.grid, flat)

    def shifted(self, amount: float) -> "GraphFunction":
        return GraphFunction(self.grid, self.values + amount)

    def scaled(self, factor: float) -> "GraphFunction":
        return GraphFunction(self.grid, self.values * factor)

    def filled(self, fill) -> np.ndarray:
        """Values with inactive nodes replaced by `fill` (a constant or a callable on chart points)."""
        result = self.values.copy()
        outside = ~self.grid.active
        if callable(fill):
            result[outside] = fill(self.grid.points[outside])
        else:
            result[outside] = fill
        return result

    def interpolator(self, fill=None) -> RegularGridInterpolator:
        values = self.values if fill is None else self.filled(fill)
        return RegularGridInterpolator(self.grid.axes, values, method="linear", bounds_error=False, fill_value=np.nan)


@dataclass(frozen=True, eq=False)
class ResidualField:
    """
    Discrete residual at the interior nodes of a grid.

    Attributes:
        grid (ChartGrid): Grid the residual was computed on.
        interior (np.ndarray): Residual per interior node, in stencil order.
    """

    grid: ChartGrid
    interior: np.ndarray

    @property
    def max_norm(self) -> float:
        return float(np.max(np.abs(self.interior))) if self.interior.size else 0.0

    @property
    def l2_norm(self) -> float:
        weights = self.grid.stencil.sqrt_det * self.grid.cell_volume
        return float(np.sqrt(np.sum(weights * self.interior**2)))

    def as_array(self) -> np.ndarray:
        result = np.full(int(np.prod(self.grid.shape)), np.nan)
        result[self.grid.stencil.nodes] = self.interior
        return result.reshape(self.grid.shape)


@dataclass(frozen=True, eq=False)
class Linearization:
    """
    Jacobian of the discrete residual.

    Attributes:
        jacobian (csr_matrix): Derivatives with respect to interior values.
        boundary_jacobian (csr_matrix): Derivatives with respect to boundary values.
        residual (np.ndarray): Residual at the linearization point.
    """

    jacobian: csr_matrix
    boundary_jacobian: csr_matrix
    residual: np.ndarray


def _operator(u: GraphFunction, H: float, jacobian: bool):
    stencil = u.grid.stencil
    n, h = stencil.n, stencil.spacing
    box = u.flat[stencil.neighbours]
    divergence = np.zeros(stencil.nodes.size)
    d_divergence = np.zeros(box.shape) if jacobian else None

    for (a, sigma), coeff in stencil.coefficients.items():
        g_inv, sqrt_det, gamma = stencil.midpoints[a, sigma]
        p = box @ coeff.T
        gp = np.einsum("kij,kj->ki", g_inv, p)
        w = np.sqrt(gamma + np.sum(p * gp, axis=1))
        divergence += sigma * sqrt_det * gp[:, a] / w / h[a]
        if jacobian:
            d_flux = sqrt_det[:, None] * (g_inv[:, a, :] / w[:, None] - gp[:, a : a + 1] * gp / (w**3)[:, None])
            d_divergence += sigma * (d_flux @ coeff) / h[a]
    divergence /= stencil.sqrt_det

    p = box @ stencil.centered.T
    gp = np.einsum("kij,kj->ki", stencil.g_inv, p)
    w = np.sqrt(stencil.gamma + np.sum(p * gp, axis=1))
    q = stencil.grad_gamma
    pq = np.sum(p * q, axis=1)
    killing = pq / (2.0 * stencil.gamma * w)
    result = divergence - killing + n * H
    if not jacobian:
        return result, None

    d_divergence /= stencil.sqrt_det[:, None]
    d_killing_dp = q / (2.0 * stencil.gamma * w)[:, None] - pq[:, None] * gp / (2.0 * stencil.gamma * w**3)[:, None]
    return result, d_divergence - d_killing_dp @ stencil.centered


def residual(u: GraphFunction, H: float) -> ResidualField:
    """
    Residual of the graph equation at every interior node.

    Args:
        u (GraphFunction): Node values.
        H (float): Target mean curvature, |H| < 1.

    Returns:
        ResidualField: Values of div_g(grad u / w) - <grad u, grad gamma>_g / (2 gamma w) + n H.
    """
    H = check_curvature(H)
    values, _ = _operator(u, H, jacobian=False)
    return ResidualField(u.grid, values)


def linearize(u: GraphFunction, H: float) -> Linearization:
    """
    Analytic Jacobian of the discrete residual, assembled from the per-node box derivatives.
    """
    H = check_curvature(H)
    values, box_jacobian = _operator(u, H, jacobian=True)
    stencil = u.grid.stencil
    rows = np.repeat(np.arange(stencil.nodes.size), stencil.flat_offsets.size)
    cols = stencil.neighbours.reshape(-1)
    data = box_jacobian.reshape(-1)

    unknown = stencil.unknown_index[cols]
    inner = unknown >= 0
    size = stencil.nodes.size
    jacobian = coo_matrix((data[inner], (rows[inner], unknown[inner])), shape=(size, size)).tocsr()
    known = stencil.boundary_index[cols]
    outer = known >= 0
    boundary_jacobian = coo_matrix(
        (data[outer], (rows[outer], known[outer])), shape=(size, stencil.boundary_nodes.size)
    ).tocsr()
    return Linearization(jacobian, boundary_jacobian, values)


def gradient_fields(u: GraphFunction):
    """
    Centered coordinate gradient, metric gradient norm and w at every interior node.

    Returns:
        tuple: (p, |grad u|_g, w) with shapes (N, n), (N,), (N,).
    """
    stencil = u.grid.stencil
    p = u.flat[stencil.neighbours] @ stencil.centered.T
    norm2 = np.sum(p * np.einsum("kij,kj->ki", stencil.g_inv, p), axis=1)
    return p, np.sqrt(norm2), np.sqrt(stencil.gamma + norm2)


def flux_w(u: GraphFunction, node) -> float:
    """
    w = sqrt(gamma + |grad u|_g^2) at an interior node, from centered differences.
    """
    grid = u.grid
    node = tuple(int(k) for k in node)
    if not grid.interior[node]:
        raise DomainError(f"node {node} is not an interior node")
    position = grid.stencil.unknown_index[np.ravel_multi_index(node, grid.shape)]
    _, _, w = gradient_fields(u)
    return float(w[position])


def killing_term(u: GraphFunction) -> np.ndarray:
    """<grad u, grad gamma>_g / (2 gamma w) at every interior node."""
    stencil = u.grid.stencil
    p, _, w = gradient_fields(u)
    return np.sum(p * stencil.grad_gamma, axis=1) / (2.0 * stencil.gamma * w)


def killing_term_direct(u: GraphFunction) -> np.ndarray:
    """
    (gamma / w) <grad u, nabla_Z Z> at every interior node, with nabla_Z Z taken from the ambient
    connection and pulled back to chart components.
    """
    grid = u.grid
    case = grid.case
    stencil = grid.stencil
    p, _, w = gradient_fields(u)
    field = case.killing
    result = np.empty(stencil.nodes.size)
    for k, point in enumerate(stencil.points):
        acceleration = accel_christoffel(field, case.embed(point))
        components, *_ = np.linalg.lstsq(case.embed_jacobian(point), acceleration, rcond=None)
        result[k] = stencil.gamma[k] / w[k] * float(p[k] @ components)
    return result


def require_same_grid(first: GraphFunction, second: GraphFunction) -> None:
    if not first.grid.same_as(second.grid):
        raise GridMismatchError(f"grid functions live on different grids ({first.grid.shape} vs {second.grid.shape})")
