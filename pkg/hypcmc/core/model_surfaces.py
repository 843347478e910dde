# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Exact constant mean curvature hypersurfaces of the half-space model.

Mean curvature is the average of the principal curvatures taken with respect to a unit normal,
positive when the surface bends toward that normal. The surface orientation names the normal
field: TOWARD_FLOW is +x_1 on planes, upward on horospheres and outward on spheres and caps.
"""

import math
from dataclasses import dataclass

import numpy as np

from .boundary_data import BoundaryGraph, IdealSphere, NOT_BETWEEN
from .common import CapSide, Orientation, SheetSide, SurfaceVariant, tilt_slope
from .errors import BoundaryValidationError, CurvatureRangeError, DomainError
from .geometry import ChartCase

SPHERICAL = (SurfaceVariant.HEMISPHERE, SurfaceVariant.SPHERICAL_CAP)
PLANAR = (SurfaceVariant.VERTICAL_PLANE, SurfaceVariant.TILTED_PLANE)


@dataclass(frozen=True, eq=False)
class ModelSurface:
    """
    One of the five exact model surfaces.

    Attributes:
        variant (SurfaceVariant): Surface family.
        orientation (Orientation): Normal field the mean curvature refers to.
        offset (float): Plane offset c in x_1 = c + m x_{n+1}, or horosphere height.
        slope (float): Plane slope m.
        center (np.ndarray): Center of the ideal boundary sphere of a hemisphere or cap, in R^n.
        radius (float): Radius of that ideal sphere.
        angle (float): Contact angle of a cap with the ideal boundary, in (0, pi).
    """

    variant: SurfaceVariant
    orientation: Orientation = Orientation.TOWARD_FLOW
    offset: float = 0.0
    slope: float = 0.0
    center: np.ndarray = None
    radius: float = 1.0
    angle: float = math.pi / 2

    def __post_init__(self):
        object.__setattr__(self, "variant", SurfaceVariant(self.variant))
        object.__setattr__(self, "orientation", Orientation(self.orientation))
        for name in ("offset", "slope", "radius", "angle"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.variant is SurfaceVariant.HOROSPHERE and self.offset <= 0.0:
            raise DomainError(f"horosphere height must be positive, got {self.offset}")
        if self.variant in SPHERICAL:
            if self.center is None:
                raise DomainError(f"{self.variant.value} needs an ideal center")
            center = np.asarray(self.center, dtype=float).reshape(-1)
            if center.size < 2 or not np.all(np.isfinite(center)):
                raise DomainError(f"ideal center must be a finite point of R^n, got {center}")
            object.__setattr__(self, "center", center)
            if self.radius <= 0.0:
                raise DomainError(f"radius must be positive, got {self.radius}")
            if not 0.0 < self.angle < math.pi:
                raise DomainError(f"contact angle must lie in (0, pi), got {self.angle}")
            if self.variant is SurfaceVariant.HEMISPHERE:
                object.__setattr__(self, "angle", math.pi / 2)

    @classmethod
    def vertical_plane(cls, offset: float, orientation=Orientation.TOWARD_FLOW):
        return cls(SurfaceVariant.VERTICAL_PLANE, orientation, offset=offset)

    @classmethod
    def tilted_plane(cls, offset: float, slope: float, orientation=Orientation.TOWARD_FLOW):
        return cls(SurfaceVariant.TILTED_PLANE, orientation, offset=offset, slope=slope)

    @classmethod
    def hemisphere(cls, center, radius: float, orientation=Orientation.TOWARD_FLOW):
        return cls(SurfaceVariant.HEMISPHERE, orientation, center=center, radius=radius)

    @classmethod
    def spherical_cap(cls, center, radius: float, angle: float, orientation=Orientation.TOWARD_FLOW):
        return cls(SurfaceVariant.SPHERICAL_CAP, orientation, center=center, radius=radius, angle=angle)

    @classmethod
    def horosphere(cls, height: float, orientation=Orientation.TOWARD_FLOW):
        return cls(SurfaceVariant.HOROSPHERE, orientation, offset=height)

    @property
    def is_spherical(self) -> bool:
        return self.variant in SPHERICAL

    @property
    def sign(self) -> float:
        return 1.0 if self.orientation is Orientation.TOWARD_FLOW else -1.0

    @property
    def effective_slope(self) -> float:
        return self.slope if self.variant is SurfaceVariant.TILTED_PLANE else 0.0

    @property
    def euclidean_center(self) -> np.ndarray:
        """Center of the Euclidean sphere carrying a hemisphere or cap, in R^{n+1}."""
        height = -self.radius * math.cos(self.angle) / math.sin(self.angle)
        return np.append(self.center, height)

    @property
    def euclidean_radius(self) -> float:
        return self.radius / math.sin(self.angle)

    def asymptotic_sphere(self) -> IdealSphere:
        if not self.is_spherical:
            raise DomainError(f"{self.variant.value} has no round ideal boundary")
        return IdealSphere(self.center, self.radius)

    def with_orientation(self, orientation: Orientation) -> "ModelSurface":
        return ModelSurface(
            self.variant, orientation, self.offset, self.slope, self.center, self.radius, self.angle
        )

    def level(self, x) -> np.ndarray:
        """Implicit function vanishing on the surface, for points of shape (..., n+1)."""
        x = np.asarray(x, dtype=float)
        if self.variant in PLANAR:
            return x[..., 0] - self.offset - self.effective_slope * x[..., -1]
        if self.variant is SurfaceVariant.HOROSPHERE:
            return x[..., -1] - self.offset
        return np.sqrt(np.sum((x - self.euclidean_center) ** 2, axis=-1)) - self.euclidean_radius

    def normal(self, x) -> np.ndarray:
        """Euclidean unit normal of the surface orientation at points of the surface."""
        x = np.asarray(x, dtype=float)
        if self.variant in PLANAR:
            direction = np.zeros(x.shape[-1])
            direction[0], direction[-1] = 1.0, -self.effective_slope
            result = np.broadcast_to(direction / np.linalg.norm(direction), x.shape).copy()
        elif self.variant is SurfaceVariant.HOROSPHERE:
            result = np.zeros_like(x)
            result[..., -1] = 1.0
        else:
            result = (x - self.euclidean_center) / self.euclidean_radius
        return self.sign * result


def exact_mean_curvature(surface: ModelSurface) -> float:
    """
    Constant hyperbolic mean curvature of a model surface for its orientation.

    Obtained from H = x_{n+1} H_euc + nu_{n+1} with nu the Euclidean unit normal.

    Args:
        surface (ModelSurface): The surface.

    Returns:
        float: 0 for vertical planes and hemispheres, -m / sqrt(1 + m^2) for tilted planes,
        cos(angle) for caps and 1 for horospheres, all with the TOWARD_FLOW normal; negated for
        AGAINST_FLOW.
    """
    if surface.variant is SurfaceVariant.TILTED_PLANE:
        m = surface.slope
        value = -m / math.sqrt(1.0 + m * m)
    elif surface.variant is SurfaceVariant.SPHERICAL_CAP:
        value = math.cos(surface.angle)
    elif surface.variant is SurfaceVariant.HOROSPHERE:
        value = 1.0
    else:
        value = 0.0
    return surface.sign * value


@dataclass(frozen=True, eq=False)
class SheetGraph:
    """
    One sheet of a model surface read as a Killing graph over a chart of M.

    The flow-facing sheet is the part where the TOWARD_FLOW normal points along the flow. Values are
    NaN off the sheet's domain. The closure of the chart (the ideal boundary) is allowed so that
    barrier values can be read at ideal probe points.
    """

    surface: ModelSurface
    case: ChartCase
    side: SheetSide = SheetSide.FLOW_FACING

    def __post_init__(self):
        object.__setattr__(self, "side", SheetSide(self.side))
        if self.surface.is_spherical and self.surface.center.size != self.case.n:
            raise DomainError(
                f"surface lives in dimension {self.surface.center.size + 1}, chart needs {self.case.n + 1}"
            )

    @property
    def mean_curvature(self) -> float:
        """Mean curvature this sheet carries as a graph, with the normal facing against the flow."""
        toward = exact_mean_curvature(self.surface.with_orientation(Orientation.TOWARD_FLOW))
        return -toward if self.side is SheetSide.FLOW_FACING else toward

    @property
    def is_empty(self) -> bool:
        if self.surface.variant is SurfaceVariant.HOROSPHERE:
            return self.case.is_parabolic or self.side is SheetSide.M_FACING
        if self.surface.variant in PLANAR:
            if self.case.is_parabolic:
                return self.side is SheetSide.M_FACING
            if self.surface.offset == 0.0:
                return True
            return (self.surface.offset > 0.0) != (self.side is SheetSide.FLOW_FACING)
        return False

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.is_empty:
            return np.full(xi.shape[:-1], np.nan)
        with np.errstate(invalid="ignore", divide="ignore"):
            if self.case.is_parabolic:
                values = self._parabolic(xi)
                values = np.where(xi[..., -1] >= 0.0, values, np.nan)
            else:
                values = self._hyperbolic(xi)
                values = np.where(np.sum(xi * xi, axis=-1) <= 1.0, values, np.nan)
        return values

    def domain(self, xi) -> np.ndarray:
        return np.isfinite(self(xi))

    def _root_sign(self) -> float:
        return 1.0 if self.side is SheetSide.FLOW_FACING else -1.0

    def _parabolic(self, xi):
        surface = self.surface
        if surface.variant in PLANAR:
            return surface.offset + surface.effective_slope * xi[..., -1]
        center = surface.euclidean_center
        reach = surface.euclidean_radius**2 - np.sum((xi - center[1:]) ** 2, axis=-1)
        return np.where(reach >= 0.0, center[0] + self._root_sign() * np.sqrt(reach), np.nan)

    def _hyperbolic(self, xi):
        surface = self.surface
        x = self.case.embed(xi)
        if surface.variant in PLANAR:
            scale = surface.offset / (x[..., 0] - surface.effective_slope * x[..., -1])
        elif surface.variant is SurfaceVariant.HOROSPHERE:
            scale = surface.offset / x[..., -1]
        else:
            center = surface.euclidean_center
            along = np.sum(x * center, axis=-1)
            reach = along**2 - np.sum(center * center) + surface.euclidean_radius**2
            scale = np.where(reach >= 0.0, along + self._root_sign() * np.sqrt(reach), np.nan)
        scale = np.where(np.isfinite(scale) & (scale > 0.0), scale, np.nan)
        return np.log(scale)


def surface_as_graph(surface: ModelSurface, case: ChartCase, side: SheetSide = SheetSide.FLOW_FACING) -> SheetGraph:
    """
    The given sheet of a model surface as a Killing graph over the chart.

    A surface with no graphable part (a horosphere in the parabolic chart, say) yields a sheet whose
    `is_empty` is true and whose values are NaN everywhere.
    """
    return SheetGraph(surface, case, side)


def cmc_cap_for_boundary_sphere(sphere: IdealSphere, H: float, side: CapSide) -> ModelSurface:
    """
    The hypersphere with mean curvature H and ideal boundary `sphere`.

    Args:
        sphere (IdealSphere): Ideal boundary of the cap.
        H (float): Mean curvature, |H| < 1.
        side (CapSide): Complementary component the mean curvature vector points into.

    Returns:
        ModelSurface: A cap (or the hemisphere when H = 0) whose exact_mean_curvature is H.
    """
    H = float(H)
    if not abs(H) < 1.0:
        raise CurvatureRangeError(f"no hypersphere with |H| >= 1 (got H = {H})")
    side = CapSide(side)
    orientation = Orientation.TOWARD_FLOW if side is CapSide.EXTERIOR else Orientation.AGAINST_FLOW
    if H == 0.0:
        return ModelSurface.hemisphere(sphere.center, sphere.radius, orientation)
    angle = math.acos(H) if side is CapSide.EXTERIOR else math.acos(-H)
    return ModelSurface.spherical_cap(sphere.center, sphere.radius, angle, orientation)


def _barrier(case: ChartCase, envelope, H: float) -> SheetGraph:
    H = float(H)
    if not abs(H) < 1.0:
        raise CurvatureRangeError(f"barriers need |H| < 1 (got H = {H})")
    if case.is_parabolic:
        level = float(envelope)
        if not math.isfinite(level):
            raise BoundaryValidationError(NOT_BETWEEN, f"slab bound {level} is not finite")
        slope = tilt_slope(H)
        surface = ModelSurface.tilted_plane(level, slope) if slope != 0.0 else ModelSurface.vertical_plane(level)
        return SheetGraph(surface, case)
    if isinstance(envelope, IdealSphere):
        sphere = envelope
    else:
        level = float(envelope)
        if not math.isfinite(level):
            raise BoundaryValidationError(NOT_BETWEEN, f"log-radius bound {level} is not finite")
        sphere = IdealSphere(np.zeros(case.n), math.exp(level))
    if np.linalg.norm(sphere.center) >= sphere.radius:
        raise DomainError("the enclosing ideal sphere must contain the origin")
    return SheetGraph(cmc_cap_for_boundary_sphere(sphere, H, CapSide.INTERIOR), case)


def supersolution_barrier(case: ChartCase, envelope, H: float) -> SheetGraph:
    """
    Global graph of a CMC-H hypersurface lying on the flow side of the boundary curve.

    Args:
        case (ChartCase): Chart of the problem.
        envelope: A BoundaryGraph (its sup is used), a slab bound b (parabolic), a log-radius
            bound or an enclosing IdealSphere (hyperbolic).
        H (float): Mean curvature, |H| < 1.

    Returns:
        SheetGraph: Tilted plane through {x_1 = b} with slope H / sqrt(1 - H^2) (parabolic), or the
        flow-facing sheet of the cap over the enclosing sphere (hyperbolic). Both solve the graph
        equation exactly.
    """
    if isinstance(envelope, BoundaryGraph):
        envelope = envelope.sup
    return _barrier(case, envelope, H)


def subsolution_barrier(case: ChartCase, envelope, H: float) -> SheetGraph:
    """Same construction through the lower bound of the datum; reduces to the constant inf phi at H = 0."""
    if isinstance(envelope, BoundaryGraph):
        envelope = envelope.inf
    return _barrier(case, envelope, H)
