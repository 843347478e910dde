# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Ideal boundary data and the clear-sphere computation used by the barrier sequences.

The boundary curve is stored as a Killing graph over the ideal boundary of M. In the parabolic
chart a boundary coordinate is y in R^{n-1} and the curve point is (phi(y), y) in the ideal
hyperplane {x_{n+1} = 0}. In the hyperbolic chart a boundary coordinate is a unit vector q in
R^n and the curve point is exp(phi(q)) q.
"""

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import minimize_scalar

from .common import (
    BoundaryRepresentation,
    CLEAR_SPHERE_SCAN,
    DEFAULT_SAMPLE_WINDOW,
    Side,
)
from .errors import (
    BoundaryValidationError,
    ClearSphereError,
    ConfigError,
    DomainError,
    TableParseError,
    ZeroRadiusError,
)
from .geometry import ChartCase
from .logger import log
from .units import parse_scalar

NOT_BETWEEN = "not between tangent hyperspheres"

"""
Total number of samples used when probing a datum for bounds and moduli.
"""
VALIDATION_SAMPLES = 40000


@dataclass(frozen=True, eq=False)
class IdealSphere:
    """
    A round sphere in the ideal hyperplane {x_{n+1} = 0}.

    Attributes:
        center (np.ndarray): Center in R^n.
        radius (float): Euclidean radius.
    """

    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(-1)
        if not np.all(np.isfinite(center)):
            raise DomainError(f"sphere center must be finite, got {center}")
        if not (self.radius > 0.0 and math.isfinite(self.radius)):
            raise DomainError(f"sphere radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def n(self) -> int:
        return self.center.size


@dataclass(frozen=True)
class BoundaryReport:
    inf: float
    sup: float
    modulus: float


def _hypersphere_direction(angles: np.ndarray) -> np.ndarray:
    """Unit vectors from hyperspherical angles, shape (..., n-1) -> (..., n); the last angle is azimuthal."""
    angles = np.asarray(angles, dtype=float)
    count = angles.shape[-1]
    result = np.empty(angles.shape[:-1] + (count + 1,))
    sines = np.ones(angles.shape[:-1])
    for k in range(count):
        result[..., k] = sines * np.cos(angles[..., k])
        sines = sines * np.sin(angles[..., k])
    result[..., count] = sines
    return result


def _angle_bounds(count: int):
    return [(0.0, math.pi)] * (count - 1) + [(-math.pi, math.pi)]


@dataclass(frozen=True, eq=False)
class BoundaryGraph:
    """
    The boundary datum phi as a Killing graph over the ideal boundary of M.

    Attributes:
        case (ChartCase): Chart the datum belongs to.
        function (Callable): Vectorized map from boundary coordinates (..., d) to values (...).
        representation (BoundaryRepresentation): How the datum is stored.
        bounds (tuple): (inf phi, sup phi).
        name (str): Preset name or table path, used in reports.
        params (dict): Preset parameters.
        table (tuple): (sites, values) for sampled tables, None otherwise.
    """

    case: ChartCase
    function: Callable
    representation: BoundaryRepresentation
    bounds: tuple
    name: str = "function"
    params: dict = field(default_factory=dict)
    table: tuple = None

    @property
    def coordinate_size(self) -> int:
        return self.case.n - 1 if self.case.is_parabolic else self.case.n

    @property
    def inf(self) -> float:
        return float(self.bounds[0])

    @property
    def sup(self) -> float:
        return float(self.bounds[1])

    def __call__(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        values = np.asarray(self.function(q), dtype=float)
        return np.broadcast_to(values, q.shape[:-1]).copy() if values.shape != q.shape[:-1] else values

    def on_chart(self, xi) -> np.ndarray:
        """Datum carried into the chart along the chart normal (parabolic) or radially (hyperbolic)."""
        xi = np.asarray(xi, dtype=float)
        if self.case.is_parabolic:
            return self(xi[..., :-1])
        norm = np.sqrt(np.sum(xi * xi, axis=-1))
        return self(xi / np.where(norm > 0.0, norm, 1.0)[..., None])

    def ideal_point(self, q, level=None) -> np.ndarray:
        """Point Psi(level, q) of the ideal hyperplane; level defaults to phi(q), giving a point of the curve."""
        q = np.asarray(q, dtype=float)
        level = self(q) if level is None else np.asarray(level, dtype=float)
        if self.case.is_parabolic:
            return np.concatenate([np.broadcast_to(level, q.shape[:-1])[..., None], q], axis=-1)
        return np.exp(level)[..., None] * q

    def flow_coordinates(self, p) -> tuple:
        """Split an ideal point into (flow level, boundary coordinate)."""
        p = np.asarray(p, dtype=float)
        if self.case.is_parabolic:
            return float(p[0]), p[1:]
        norm = float(np.linalg.norm(p))
        if norm == 0.0:
            return -math.inf, np.eye(p.size)[0]
        return math.log(norm), p / norm

    def transformed(self, scale: float, shift: float) -> "BoundaryGraph":
        """The datum scale * phi + shift, used for normalization and mirroring."""
        function = self.function
        low, high = scale * self.inf + shift, scale * self.sup + shift
        table = None
        if self.table is not None:
            table = (self.table[0], scale * self.table[1] + shift)
        return BoundaryGraph(
            case=self.case,
            function=lambda q: scale * np.asarray(function(q), dtype=float) + shift,
            representation=self.representation,
            bounds=(min(low, high), max(low, high)),
            name=self.name,
            params=dict(self.params, scale=scale, shift=shift),
            table=table,
        )

    def sample(self, window: float = DEFAULT_SAMPLE_WINDOW, total: int = VALIDATION_SAMPLES):
        """
        Sample the datum on a tensor grid of boundary coordinates.

        Returns:
            tuple: (axes, sites, values) where sites has shape grid + (d,) and values shape grid.
        """
        if self.case.is_parabolic:
            dim = self.coordinate_size
            count = max(11, int(round(total ** (1.0 / dim))))
            axes = [np.linspace(-window, window, count)] * dim
            sites = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        else:
            dim = self.coordinate_size - 1
            count = max(11, int(round(total ** (1.0 / dim))))
            axes = [np.linspace(lo, hi, count, endpoint=(k < dim - 1)) for k, (lo, hi) in enumerate(_angle_bounds(dim))]
            sites = _hypersphere_direction(np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1))
        return axes, sites, self(sites)

    @classmethod
    def from_function(cls, case: ChartCase, function: Callable, name: str = "function", params: dict = None):
        """
        Wrap a vectorized callable; bounds are measured by sampling and the datum is validated.
        """
        provisional = cls(case, function, BoundaryRepresentation.FUNCTION, (0.0, 0.0), name, dict(params or {}))
        _, _, values = provisional.sample()
        if not np.all(np.isfinite(values)):
            raise BoundaryValidationError("finite data", f"{name} produced non-finite samples")
        graph = cls(
            case,
            function,
            BoundaryRepresentation.FUNCTION,
            (float(values.min()), float(values.max())),
            name,
            dict(params or {}),
        )
        validate_boundary(graph)
        return graph


def _preset_function(case: ChartCase, name: str, params: dict):
    """Closed-form presets. Returns (function, bounds)."""
    a = parse_scalar(params.get("a", 0.0), "a")
    b = parse_scalar(params.get("b", 0.0), "b")
    hyperbolic_ok = ("constant", "sine")
    if not case.is_parabolic and name not in hyperbolic_ok:
        raise ConfigError(f"preset {name!r} is not available in the hyperbolic chart (use one of {hyperbolic_ok})")

    if name == "constant":
        return (lambda q: np.full(np.shape(q)[:-1], a)), (a, a)
    if name == "bump":
        return (lambda q: a + b * np.exp(-np.sum(q * q, axis=-1))), (min(a, a + b), max(a, a + b))
    if name == "sinusoidal_decay":
        # sin(y)/(1+y^2) peaks once on (0, pi/2); the transverse terms only lower it
        peak = -minimize_scalar(
            lambda y: -math.sin(y) / (1.0 + y * y), bounds=(0.0, math.pi / 2), method="bounded",
            options={"xatol": 1e-12},
        ).fun
        return (
            (lambda q: a + b * np.sin(q[..., 0]) / (1.0 + np.sum(q * q, axis=-1))),
            (a - abs(b) * peak, a + abs(b) * peak),
        )
    if name == "step_mollified":
        delta = parse_scalar(params.get("delta", 0.25), "delta")
        if delta <= 0.0:
            raise ConfigError(f"step_mollified needs delta > 0, got {delta}")
        return (lambda q: a + b * (1.0 + np.tanh(q[..., 0] / delta)) / 2.0), (min(a, a + b), max(a, a + b))
    if name == "sine":
        k = parse_scalar(params.get("k", 1.0), "k")
        phase = parse_scalar(params.get("phase", 0.0), "phase")
        if case.is_parabolic:
            return (lambda q: a + b * np.sin(k * q[..., 0] + phase)), (a - abs(b), a + abs(b))
        if abs(k - round(k)) > 0.0:
            raise ConfigError(f"sine preset needs an integer frequency on the circle, got k={k}")
        return (
            (lambda q: a + b * np.sin(k * np.arctan2(q[..., 1], q[..., 0]) + phase)),
            (a - abs(b), a + abs(b)),
        )
    raise ConfigError(f"unknown boundary preset {name!r}")


def read_table(path: str) -> np.ndarray:
    """
    Read a sample table: UTF-8 CSV with a header row and columns y_1, ..., y_{n-1}, phi.

    Raises:
        TableParseError: On missing files, ragged rows, non-numeric or non-finite entries.
    """
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
    except OSError as err:
        raise TableParseError(f"cannot read boundary table {path}: {err}") from err
    if len(rows) < 2:
        raise TableParseError(f"boundary table {path} needs a header row and at least one sample")
    return _table_array(rows[1:], source=path)


def _table_array(rows, source: str) -> np.ndarray:
    rows = [row for row in rows if len(row) > 0]
    widths = {len(row) for row in rows}
    if len(widths) != 1:
        raise TableParseError(f"{source}: rows have differing column counts {sorted(widths)}")
    try:
        data = np.array([[float(value) for value in row] for row in rows], dtype=float)
    except (TypeError, ValueError) as err:
        raise TableParseError(f"{source}: non-numeric sample ({err})") from err
    if not np.all(np.isfinite(data)):
        raise TableParseError(f"{source}: non-finite sample")
    return data


def _table_function(case: ChartCase, data: np.ndarray, source: str):
    """Build an interpolant from table rows. Returns (function, axes, grid values)."""
    width = data.shape[1]
    dim = case.n - 1 if case.is_parabolic else 1
    if not case.is_parabolic and case.n != 2:
        raise ConfigError(f"{source}: hyperbolic tables are supported for n = 2 only")
    if width != dim + 1:
        raise TableParseError(f"{source}: expected {dim + 1} columns, got {width}")
    sites, values = data[:, :-1], data[:, -1]

    if dim == 1:
        xs = sites[:, 0]
        if xs.size < 2 or np.any(np.diff(xs) <= 0.0):
            raise TableParseError(f"{source}: sample sites must be strictly increasing")
        if case.is_parabolic:
            return (lambda q: np.interp(q[..., 0], xs, values)), [xs], values
        if xs[0] < -math.pi or xs[-1] >= math.pi:
            raise TableParseError(f"{source}: angles must lie in [-pi, pi)")
        period = 2.0 * math.pi
        return (
            (lambda q: np.interp(np.arctan2(q[..., 1], q[..., 0]), xs, values, period=period)),
            [xs],
            values,
        )

    # tensor-product grid listed in lexicographic order
    for i in range(1, sites.shape[0]):
        if tuple(sites[i]) <= tuple(sites[i - 1]):
            raise TableParseError(f"{source}: rows must be in strictly increasing lexicographic order")
    axes = [np.unique(sites[:, k]) for k in range(dim)]
    shape = tuple(axis.size for axis in axes)
    if int(np.prod(shape)) != sites.shape[0] or min(shape) < 2:
        raise TableParseError(f"{source}: samples do not form a full tensor grid")
    grid_values = values.reshape(shape)
    interpolator = RegularGridInterpolator(axes, grid_values, method="linear")
    lows = np.array([axis[0] for axis in axes])
    highs = np.array([axis[-1] for axis in axes])
    return (lambda q: interpolator(np.clip(q, lows, highs))), axes, grid_values


def interpolation_error(axes, values: np.ndarray, periodic: bool = False) -> float:
    """
    Estimate of the linear interpolation error of a sample table.

    Each sample is held out and predicted from its two neighbours along every axis. The prediction
    error is the interpolation error at twice the sample spacing, so a quarter of it estimates the
    error at the table spacing.
    """
    values = np.asarray(values, dtype=float)
    worst = 0.0
    for axis, sites in enumerate(axes):
        sites = np.asarray(sites, dtype=float)
        along = np.moveaxis(values, axis, 0)
        if periodic:
            period = 2.0 * math.pi
            sites = np.concatenate([[sites[-1] - period], sites, [sites[0] + period]])
            along = np.concatenate([along[-1:], along, along[:1]])
        if sites.size < 3:
            continue
        weight = (sites[1:-1] - sites[:-2]) / (sites[2:] - sites[:-2])
        weight = weight.reshape((-1,) + (1,) * (along.ndim - 1))
        predicted = (1.0 - weight) * along[:-2] + weight * along[2:]
        worst = max(worst, float(np.max(np.abs(along[1:-1] - predicted))))
    return 0.25 * worst


def make_boundary_graph(case: ChartCase, spec: dict, base_dir: str = None) -> BoundaryGraph:
    """
    Build and validate a boundary datum from a config entry.

    Args:
        case (ChartCase): Chart the datum lives over.
        spec (dict): One of {"preset": name, ...parameters}, {"table": csv path} or
            {"samples": [[y..., phi], ...]}.
        base_dir (str, optional): Directory relative table paths resolve against.

    Returns:
        BoundaryGraph: The validated datum.
    """
    if not isinstance(spec, dict):
        raise ConfigError(f"boundary spec must be a mapping, got {type(spec).__name__}")
    if "preset" in spec:
        name = str(spec["preset"])
        params = {key: value for key, value in spec.items() if key != "preset"}
        function, bounds = _preset_function(case, name, params)
        graph = BoundaryGraph(case, function, BoundaryRepresentation.PRESET, bounds, name, params)
    elif "table" in spec or "samples" in spec:
        if "table" in spec:
            path = spec["table"]
            if base_dir is not None and not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            data, source = read_table(path), path
        else:
            data, source = _table_array(spec["samples"], source="samples"), "samples"
        function, axes, grid_values = _table_function(case, data, source)
        estimate = interpolation_error(axes, grid_values, periodic=not case.is_parabolic)
        if "tolerance" in spec:
            tolerance = parse_scalar(spec["tolerance"], "tolerance")
            if estimate > tolerance:
                raise BoundaryValidationError(
                    "continuity", f"{source}: interpolation error estimate {estimate:.3g} exceeds {tolerance:.3g}"
                )
        bounds = (float(np.min(grid_values)), float(np.max(grid_values)))
        params = {"interpolation_error": estimate}
        graph = BoundaryGraph(
            case, function, BoundaryRepresentation.TABLE, bounds, source, params, table=(axes, grid_values)
        )
    else:
        raise ConfigError(f"boundary spec needs 'preset', 'table' or 'samples', got keys {sorted(spec)}")
    validate_boundary(graph)
    log.debug(f"boundary datum {graph.name}: bounds {graph.bounds}")
    return graph


def _difference_quotients(axes, values, sites, periodic: bool) -> float:
    """Largest difference quotient along every grid axis."""
    best = 0.0
    for axis in range(values.ndim):
        dv = np.abs(np.diff(values, axis=axis))
        if sites is None:
            dx = np.diff(axes[axis])
            shape = [1] * values.ndim
            shape[axis] = dx.size
            dx = dx.reshape(shape)
        else:
            chord = np.sqrt(np.sum(np.diff(sites, axis=axis) ** 2, axis=-1))
            dx = 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dx > 0.0, dv / np.where(dx > 0.0, dx, 1.0), 0.0)
        if ratio.size:
            best = max(best, float(np.max(ratio)))
        if periodic and axis == values.ndim - 1:
            wrap_v = np.abs(np.take(values, 0, axis=axis) - np.take(values, -1, axis=axis))
            wrap_x = np.arccos(
                np.clip(np.sum(np.take(sites, 0, axis=axis) * np.take(sites, -1, axis=axis), axis=-1), -1.0, 1.0)
            )
            with np.errstate(divide="ignore", invalid="ignore"):
                wrap = np.where(wrap_x > 0.0, wrap_v / np.where(wrap_x > 0.0, wrap_x, 1.0), 0.0)
            best = max(best, float(np.max(wrap)))
    return best


def validate_boundary(graph: BoundaryGraph) -> BoundaryReport:
    """
    Check that the datum is admissible for the asymptotic problem.

    Parabolic data must be bounded with inf phi >= 0, so that the curve lies between the tangent
    ideal hyperplanes {x_1 = 0} and {x_1 = sup phi}. Hyperbolic data must be bounded. Boundedness is
    probed on expanding windows: ranges that keep growing without slowing down are rejected.

    Returns:
        BoundaryReport: inf, sup and the sampled modulus of continuity.

    Raises:
        BoundaryValidationError: Naming the failed hypothesis.
    """
    axes, sites, values = graph.sample()
    if not np.all(np.isfinite(values)):
        raise BoundaryValidationError("finite data", f"{graph.name} produced non-finite samples")

    if graph.case.is_parabolic:
        ranges = []
        for scale in (1.0, 2.0, 4.0):
            _, _, wide = graph.sample(window=scale * DEFAULT_SAMPLE_WINDOW)
            if not np.all(np.isfinite(wide)):
                raise BoundaryValidationError(NOT_BETWEEN, f"{graph.name} is not finite on wide windows")
            ranges.append(float(wide.max() - wide.min()))
        first, second = ranges[1] - ranges[0], ranges[2] - ranges[1]
        if second > 1e-6 * (1.0 + ranges[2]) and second >= first:
            raise BoundaryValidationError(
                NOT_BETWEEN, f"{graph.name} grows without bound (sampled ranges {ranges})"
            )

    low = min(graph.inf, float(values.min()))
    high = max(graph.sup, float(values.max()))
    if graph.case.is_parabolic and low < 0.0:
        raise BoundaryValidationError(NOT_BETWEEN, f"inf phi = {low:.6g} lies below {{x_1 = 0}}")

    if graph.representation is BoundaryRepresentation.TABLE:
        table_axes, table_values = graph.table
        if graph.case.is_parabolic:
            modulus = _difference_quotients(table_axes, table_values, None, periodic=False)
        else:
            angles = table_axes[0]
            closed = np.append(angles, angles[0] + 2.0 * math.pi)
            modulus = _difference_quotients([closed], np.append(table_values, table_values[0]), None, False)
    elif graph.case.is_parabolic:
        modulus = _difference_quotients(axes, values, None, periodic=False)
    else:
        modulus = _difference_quotients(axes, values, sites, periodic=True)

    return BoundaryReport(inf=low, sup=high, modulus=modulus)


def side_of(graph: BoundaryGraph, point, tol: float = 1e-12):
    """
    Side of the boundary curve an ideal point lies on, or None if it lies on the curve.
    """
    level, q = graph.flow_coordinates(np.asarray(point, dtype=float))
    value = float(graph(q))
    gap = value - level
    if abs(gap) <= tol * (1.0 + abs(value)):
        return None
    return Side.CONTAINS_M if gap > 0.0 else Side.OPPOSITE_M


def _refine_cyclic(objective, start: np.ndarray, step: np.ndarray, bounds, cycles: int = 20):
    """Coordinate-wise bounded scalar minimization around a scanned minimum."""
    best = np.array(start, dtype=float)
    value = objective(best)
    for _ in range(cycles):
        before = value
        for k in range(best.size):
            lo = max(best[k] - step[k], bounds[k][0])
            hi = min(best[k] + step[k], bounds[k][1])
            if hi <= lo:
                continue

            def along(x, k=k):
                trial = best.copy()
                trial[k] = x
                return objective(trial)

            result = minimize_scalar(along, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
            if result.fun < value:
                best[k] = result.x
                value = float(result.fun)
        if before - value <= 1e-15 * (1.0 + value):
            break
    return best, value


def clear_sphere_radius(graph: BoundaryGraph, center, side: Side) -> IdealSphere:
    """
    Largest ideal sphere centered at `center` that does not cross the boundary curve.

    The radius is the Euclidean distance from the center to the curve, found by a coarse scan
    followed by cyclic bounded refinement per coordinate.

    Args:
        graph (BoundaryGraph): The boundary datum.
        center: Ideal point in R^n.
        side (Side): Side of the curve the center is expected on.

    Returns:
        IdealSphere: The clear sphere.

    Raises:
        ZeroRadiusError: If the center lies on the curve.
        ClearSphereError: If the minimization produced no finite distance.
    """
    center = np.asarray(center, dtype=float).reshape(-1)
    if center.size != graph.case.n:
        raise DomainError(f"ideal center needs {graph.case.n} coordinates, got {center.size}")
    actual = side_of(graph, center)
    if actual is None:
        raise ZeroRadiusError(f"center {center} lies on the boundary curve", {"center": center.tolist()})
    if actual is not Side(side):
        raise DomainError(f"center {center} lies on the {actual.value} side, expected {Side(side).value}")

    if graph.case.is_parabolic:
        apex = center[1:]
        reach = abs(float(graph(apex)) - center[0])
        dim = apex.size

        def distance(y):
            y = np.asarray(y, dtype=float)
            return np.sqrt((graph(y) - center[0]) ** 2 + np.sum((y - apex) ** 2, axis=-1))

        count = CLEAR_SPHERE_SCAN if dim == 1 else max(21, int(round(CLEAR_SPHERE_SCAN ** (1.0 / dim))))
        axes = [np.linspace(c - reach, c + reach, count) for c in apex]
        bounds = [(c - reach, c + reach) for c in apex]
        sites = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    else:
        dim = graph.case.n - 1

        def distance(angles):
            q = _hypersphere_direction(np.asarray(angles, dtype=float))
            return np.sqrt(np.sum((graph.ideal_point(q) - center) ** 2, axis=-1))

        count = CLEAR_SPHERE_SCAN if dim == 1 else max(21, int(round(CLEAR_SPHERE_SCAN ** (1.0 / dim))))
        bounds = _angle_bounds(dim)
        axes = [np.linspace(lo, hi, count) for lo, hi in bounds]
        sites = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)

    scan = distance(sites)
    index = int(np.argmin(scan))
    steps = np.array([axis[1] - axis[0] for axis in axes])
    best, refined = _refine_cyclic(lambda x: float(distance(x)), sites[index], steps, bounds)
    radius = min(float(scan[index]), refined)
    diagnostics = {"scan_min": float(scan[index]), "refined": refined, "argmin": best.tolist()}
    if not math.isfinite(radius):
        raise ClearSphereError("clear-sphere minimization produced no finite distance", diagnostics)
    if radius <= 0.0:
        raise ZeroRadiusError(f"center {center} touches the boundary curve", diagnostics)
    log.debug(f"clear sphere at {center} ({Side(side).value}): radius {radius:.12g}")
    return IdealSphere(center, radius)
