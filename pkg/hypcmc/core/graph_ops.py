# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Killing graphs as meshes in the half-space model.

The mean curvature oracle here does not share anything with the finite-difference operator: it
fits a quadric to the embedded vertices around each node in a local Euclidean frame and converts
the Euclidean mean curvature to the hyperbolic one with H = x_{n+1} H_euc + nu_{n+1}.
"""

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .boundary_data import BoundaryGraph
from .common import DEFAULT_DIMENSION, SurfaceVariant
from .errors import DomainError, TraceError
from .geometry import KillingFieldSpec, unit_directions
from .model_surfaces import ModelSurface
from .pde import GraphFunction

"""
Nodes per side of the quadric fitting window.
"""
FIT_WINDOW = 5

"""
Default spacing of model-surface meshes.
"""
MESH_SPACING = 1.0 / 64


@dataclass(frozen=True, eq=False)
class EmbeddedMesh:
    """
    Vertices of a parameterized hypersurface on a grid of parameters.

    Attributes:
        vertices (np.ndarray): Points of the half-space, shape grid + (n+1,), NaN where absent.
        normals (np.ndarray): Euclidean unit normals, same shape, NaN where undefined.
        valid (np.ndarray): Grid mask of present vertices.
    """

    vertices: np.ndarray
    normals: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        heights = self.vertices[..., -1][self.valid]
        if np.any(~(heights > 0.0)):
            raise DomainError("mesh vertices must lie in the upper half-space")

    @property
    def shape(self) -> tuple:
        return self.valid.shape

    @cached_property
    def index(self) -> np.ndarray:
        """Compact vertex number per grid node, -1 where absent."""
        index = np.full(self.valid.size, -1, dtype=int)
        index[self.valid.reshape(-1)] = np.arange(int(np.count_nonzero(self.valid)))
        return index.reshape(self.shape)

    def points(self) -> np.ndarray:
        return self.vertices[self.valid]

    @cached_property
    def faces(self) -> np.ndarray:
        """Triangles from grid quads with four present corners; surfaces (two parameters) only."""
        if len(self.shape) != 2:
            raise DomainError(f"faces exist for two-parameter meshes only, got {len(self.shape)} parameters")
        index = self.index
        a, b = index[:-1, :-1], index[1:, :-1]
        c, d = index[1:, 1:], index[:-1, 1:]
        keep = (a >= 0) & (b >= 0) & (c >= 0) & (d >= 0)
        first = np.stack([a[keep], b[keep], c[keep]], axis=-1)
        second = np.stack([a[keep], c[keep], d[keep]], axis=-1)
        quads = np.stack([first, second], axis=1)
        return quads.reshape(-1, 3)


def _normals(vertices: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Unit normals from the null space of the grid tangents, turned to agree with `reference`."""
    dim = vertices.ndim - 1
    if dim == 1:
        tangents = np.gradient(vertices, axis=0)[..., None, :]
    else:
        tangents = np.stack(np.gradient(vertices, axis=tuple(range(dim))), axis=-2)
    normals = np.full(vertices.shape, np.nan)
    finite = np.all(np.isfinite(tangents), axis=(-2, -1)) & np.all(np.isfinite(reference), axis=-1)
    if np.any(finite):
        _, _, vh = np.linalg.svd(tangents[finite])
        chosen = vh[:, -1, :]
        flip = np.sum(chosen * reference[finite], axis=-1) < 0.0
        chosen[flip] *= -1.0
        normals[finite] = chosen
    return normals


def _mesh(vertices: np.ndarray, reference: np.ndarray) -> EmbeddedMesh:
    valid = np.all(np.isfinite(vertices), axis=-1)
    return EmbeddedMesh(vertices, _normals(vertices, reference), valid)


def embed_graph(u: GraphFunction, field: KillingFieldSpec = None) -> EmbeddedMesh:
    """
    Mesh of the Killing graph {Psi(u(xi), xi)}: vertex = flow of the chart point for time u.

    Normals point against the field, the orientation the graph equation refers to.
    """
    case = u.case
    field = field or case.killing
    if field != case.killing:
        raise DomainError(f"field {field.kind.value} does not match the {case.kind.value} chart")
    points = case.embed(u.grid.points)
    vertices = field.flow(np.nan_to_num(u.values), points)
    vertices[~u.grid.active] = np.nan
    return _mesh(vertices, -field.value(vertices))


def _window_offsets(dim: int) -> np.ndarray:
    half = FIT_WINDOW // 2
    return np.array(list(itertools.product(range(-half, half + 1), repeat=dim)), dtype=int)


def numeric_mean_curvature(mesh: EmbeddedMesh) -> np.ndarray:
    """
    Hyperbolic mean curvature per vertex by local quadric fitting.

    Each vertex with a complete 5^n window is fitted with a height function
    h(a) = c + D.a + a^T A a / 2 over its tangent plane. Vertices near the mesh edge and windows of
    deficient rank are flagged with NaN.

    Returns:
        np.ndarray: H with respect to the mesh normals, grid-shaped, NaN at flagged vertices.
    """
    shape = mesh.shape
    dim = len(shape)
    half = FIT_WINDOW // 2
    result = np.full(shape, np.nan)
    if min(shape) < FIT_WINDOW:
        return result

    axes = [np.arange(half, k - half) for k in shape]
    centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    offsets = _window_offsets(dim)
    window = centers[:, None, :] + offsets[None, :, :]
    flat_vertices = mesh.vertices.reshape(-1, dim + 1)
    flat_normals = mesh.normals.reshape(-1, dim + 1)
    window_ids = np.ravel_multi_index(tuple(np.moveaxis(window, -1, 0)), shape)
    center_ids = np.ravel_multi_index(tuple(centers.T), shape)

    patches = flat_vertices[window_ids]
    nu0 = flat_normals[center_ids]
    usable = np.all(np.isfinite(patches), axis=(1, 2)) & np.all(np.isfinite(nu0), axis=1)
    if not np.any(usable):
        return result
    patches, nu0, center_ids = patches[usable], nu0[usable], center_ids[usable]
    origin = flat_vertices[center_ids]

    _, _, vh = np.linalg.svd(nu0[:, None, :])
    frame = vh[:, 1:, :]
    relative = patches - origin[:, None, :]
    a = np.einsum("vwk,vik->vwi", relative, frame)
    height = np.einsum("vwk,vk->vw", relative, nu0)

    pairs = [(i, j) for i in range(dim) for j in range(i, dim)]
    columns = [np.ones(a.shape[:2])] + [a[..., i] for i in range(dim)] + [a[..., i] * a[..., j] for i, j in pairs]
    design = np.stack(columns, axis=-1)
    degenerate = np.linalg.matrix_rank(design) < design.shape[-1]
    coefficients = (np.linalg.pinv(design) @ height[..., None])[..., 0]

    c0 = coefficients[:, 0]
    slope = coefficients[:, 1 : 1 + dim]
    hessian = np.zeros((coefficients.shape[0], dim, dim))
    for k, (i, j) in enumerate(pairs):
        value = coefficients[:, 1 + dim + k]
        if i == j:
            hessian[:, i, i] = 2.0 * value
        else:
            hessian[:, i, j] = value
            hessian[:, j, i] = value
    w = np.sqrt(1.0 + np.sum(slope * slope, axis=-1))
    trace = np.trace(hessian, axis1=1, axis2=2)
    along = np.einsum("vi,vij,vj->v", slope, hessian, slope)
    euclidean = (trace / w - along / w**3) / dim
    normal = (nu0 - np.einsum("vi,vik->vk", slope, frame)) / w[:, None]
    lift = origin[:, -1] + c0 * nu0[:, -1]
    values = lift * euclidean + normal[:, -1]
    values[degenerate] = np.nan
    result.reshape(-1)[center_ids] = values
    return result


def _parameter_grid(lo, hi, spacing: float) -> np.ndarray:
    axes = [np.linspace(a, b, int(round((b - a) / spacing)) + 1) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def mesh_model_surface(surface: ModelSurface, spacing: float = MESH_SPACING, n: int = DEFAULT_DIMENSION):
    """
    Graph-parameterized patch of a model surface away from vertical tangents, with normals following
    the surface orientation.

    Planes are parameterized over (x_2, ..., x_{n+1}) in [-1, 1]^{n-1} x [0.5, 1.5], horospheres over
    [-1, 1]^n and hemispheres or caps over the square of half-width r/2 about their ideal center.
    """
    if surface.is_spherical:
        n = surface.center.size
        half = 0.5 * surface.radius
        params = _parameter_grid(surface.center - half, surface.center + half, spacing * surface.radius)
        center = surface.euclidean_center
        reach = surface.euclidean_radius**2 - np.sum((params - surface.center) ** 2, axis=-1)
        vertices = np.concatenate([params, (center[-1] + np.sqrt(reach))[..., None]], axis=-1)
    elif surface.variant is SurfaceVariant.HOROSPHERE:
        params = _parameter_grid(np.full(n, -1.0), np.full(n, 1.0), spacing)
        vertices = np.concatenate([params, np.full(params.shape[:-1] + (1,), surface.offset)], axis=-1)
    else:
        lo = np.append(np.full(n - 1, -1.0), 0.5)
        hi = np.append(np.full(n - 1, 1.0), 1.5)
        params = _parameter_grid(lo, hi, spacing)
        first = surface.offset + surface.effective_slope * params[..., -1]
        vertices = np.concatenate([first[..., None], params], axis=-1)
    return _mesh(vertices, surface.normal(vertices))


def sphere_mesh(center, radius: float, spacing: float = MESH_SPACING, upper: bool = True, inward: bool = True):
    """
    Upper or lower patch of a Euclidean sphere lying inside the half-space (a geodesic sphere).
    """
    center = np.asarray(center, dtype=float).reshape(-1)
    if not center[-1] > radius > 0.0:
        raise DomainError(f"sphere of radius {radius} about height {center[-1]} leaves the half-space")
    base = center[:-1]
    half = 0.5 * radius
    params = _parameter_grid(base - half, base + half, spacing * radius)
    reach = np.sqrt(radius**2 - np.sum((params - base) ** 2, axis=-1))
    sign = 1.0 if upper else -1.0
    vertices = np.concatenate([params, (center[-1] + sign * reach)[..., None]], axis=-1)
    reference = center - vertices if inward else vertices - center
    return _mesh(vertices, reference)


def sphere_mean_curvature(center_height: float, radius: float) -> float:
    """Mean curvature h / r of a Euclidean sphere in the half-space, for the inward normal."""
    return center_height / radius


@dataclass(frozen=True, eq=False)
class TraceReport:
    """
    Extrapolated ideal-boundary values of a solution.

    Attributes:
        probes (np.ndarray): Boundary coordinates of the probes.
        limits (np.ndarray): Extrapolated limit of u per probe.
        errors (np.ndarray): |limit - phi| per probe.
    """

    probes: np.ndarray
    limits: np.ndarray
    errors: np.ndarray

    @property
    def max_error(self) -> float:
        return float(np.max(self.errors)) if self.errors.size else 0.0


def default_probes(u: GraphFunction) -> np.ndarray:
    """Ideal-edge probes: the inner half of the bottom layer (parabolic) or 64 directions (hyperbolic)."""
    grid = u.grid
    if grid.case.is_parabolic:
        bottom = grid.points[..., 0, :-1].reshape(-1, grid.n - 1)
        keep = np.all(np.abs(bottom) <= 0.5 * grid.hi[:-1] + 1e-12, axis=-1)
        return bottom[keep]
    return unit_directions(grid.n, 64)


def boundary_trace(u, phi: BoundaryGraph, probes=None) -> TraceReport:
    """
    Richardson extrapolation of u toward the ideal boundary along the inward chart line at each
    probe, from the values at distances epsilon, 2 epsilon and 4 epsilon:

        L = (8 u(epsilon) - 6 u(2 epsilon) + u(4 epsilon)) / 3

    Raises:
        TraceError: The grid has no ideal edge or 4 epsilon exceeds the truncated domain.
    """
    u = getattr(u, "u", u)
    grid = u.grid
    epsilon = grid.epsilon
    if not epsilon > 0.0 or not np.any(grid.ideal):
        raise TraceError("the grid has no ideal edge to extrapolate from")
    probes = default_probes(u) if probes is None else np.atleast_2d(np.asarray(probes, dtype=float))
    distances = epsilon * np.array([1.0, 2.0, 4.0])
    if grid.case.is_parabolic:
        if 4.0 * epsilon > grid.hi[-1]:
            raise TraceError(f"4 epsilon = {4.0 * epsilon:.6g} exceeds the box height {grid.hi[-1]:.6g}")
        sites = np.concatenate(
            [np.repeat(probes[:, None, :], 3, axis=1), np.broadcast_to(distances[None, :, None], (len(probes), 3, 1))],
            axis=-1,
        )
        interpolator = u.interpolator()
    else:
        if 4.0 * epsilon >= 1.0:
            raise TraceError(f"4 epsilon = {4.0 * epsilon:.6g} reaches the center of the disk")
        probes = probes / np.linalg.norm(probes, axis=-1, keepdims=True)
        sites = (1.0 - distances)[None, :, None] * probes[:, None, :]
        interpolator = u.interpolator(fill=phi.on_chart)
    values = interpolator(sites.reshape(-1, grid.n)).reshape(len(probes), 3)
    if not np.all(np.isfinite(values)):
        raise TraceError("trace sites fall outside the grid")
    limits = (8.0 * values[:, 0] - 6.0 * values[:, 1] + values[:, 2]) / 3.0
    errors = np.abs(limits - phi(probes))
    return TraceReport(probes, limits, errors)
