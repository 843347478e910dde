# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Differential geometry of the half-space model of hyperbolic space.

Points carry Euclidean coordinates with the height in the last slot. The metric is the
Euclidean one divided by the squared height. Two Killing fields in canonical position are
supported (dilation and unit horizontal translation) together with the two charts of the
totally geodesic hypersurface M used by the solver.

Chart functions are vectorized: they accept arrays of shape (..., n) and broadcast over the
leading axes. The scalar operations wrap them and validate their inputs.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .common import ChartKind, DEFAULT_DIMENSION, FieldKind
from .errors import DomainError


def _as_coords(values, size=None) -> np.ndarray:
    coords = np.asarray(values, dtype=float)
    if coords.ndim != 1:
        raise DomainError(f"expected a coordinate vector, got shape {coords.shape}")
    if size is not None and coords.size != size:
        raise DomainError(f"expected {size} coordinates, got {coords.size}")
    if not np.all(np.isfinite(coords)):
        raise DomainError(f"coordinates must be finite, got {coords}")
    return coords


@dataclass(frozen=True, eq=False)
class HalfSpacePoint:
    """
    A point of the upper half-space.

    Attributes:
        coords (np.ndarray): Euclidean coordinates, height last.
    """

    coords: np.ndarray

    def __post_init__(self):
        coords = _as_coords(self.coords)
        if coords.size < 3:
            raise DomainError(f"half-space points need at least 3 coordinates, got {coords.size}")
        if coords[-1] <= 0.0:
            raise DomainError(f"height must be positive, got {coords[-1]}")
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return self.coords.size - 1

    @property
    def height(self) -> float:
        return float(self.coords[-1])


@dataclass(frozen=True, eq=False)
class TangentVector:
    """A tangent vector in Euclidean components, attached to a base point."""

    base: HalfSpacePoint
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "components", _as_coords(self.components, self.base.coords.size))


@dataclass(frozen=True, eq=False)
class ChartMetricData:
    """
    Metric data at one point of a chart (or of the ambient space).

    Attributes:
        g (np.ndarray): Metric coefficients, shape (n, n).
        g_inv (np.ndarray): Inverse metric, shape (n, n).
        dg (np.ndarray): Coordinate partials, dg[k] is the derivative of g along coordinate k.
        sqrt_det_g (float): Square root of the metric determinant.
    """

    g: np.ndarray
    g_inv: np.ndarray
    dg: np.ndarray
    sqrt_det_g: float


@dataclass(frozen=True)
class KillingFieldSpec:
    """
    A Killing field of the half-space model in canonical position.

    Hyperbolic fields are the dilation generator x -> x with ideal endpoints 0 and infinity.
    Parabolic fields are the constant field e_1 fixing infinity.
    """

    kind: FieldKind
    n: int = DEFAULT_DIMENSION

    def __post_init__(self):
        object.__setattr__(self, "kind", FieldKind(self.kind))
        if int(self.n) < 2:
            raise DomainError(f"dimension n must be at least 2, got {self.n}")

    def value(self, x: np.ndarray) -> np.ndarray:
        """Field components at an array of points of shape (..., n+1)."""
        x = np.asarray(x, dtype=float)
        if self.kind is FieldKind.HYPERBOLIC:
            return x.copy()
        result = np.zeros_like(x)
        result[..., 0] = 1.0
        return result

    def flow(self, t, x: np.ndarray) -> np.ndarray:
        """Closed-form flow applied to an array of points; t broadcasts against the leading axes."""
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        if self.kind is FieldKind.HYPERBOLIC:
            return np.exp(t)[..., None] * x
        result = x.copy()
        result[..., 0] = result[..., 0] + t
        return result

    def gamma(self, x: np.ndarray) -> np.ndarray:
        """1 / <Z, Z> at an array of points."""
        x = np.asarray(x, dtype=float)
        height = x[..., -1]
        if self.kind is FieldKind.HYPERBOLIC:
            return height**2 / np.sum(x * x, axis=-1)
        return height**2

    def gamma_differential(self, x: np.ndarray) -> np.ndarray:
        """Coordinate differential of gamma at an array of points."""
        x = np.asarray(x, dtype=float)
        height = x[..., -1]
        result = np.zeros_like(x)
        if self.kind is FieldKind.HYPERBOLIC:
            r2 = np.sum(x * x, axis=-1)
            result = -2.0 * (height**2 / r2**2)[..., None] * x
            result[..., -1] += 2.0 * height / r2
            return result
        result[..., -1] = 2.0 * height
        return result


@dataclass(frozen=True)
class ChartCase:
    """
    A coordinate chart of the totally geodesic hypersurface M.

    The parabolic chart is M = {x_1 = 0} with coordinates (x_2, ..., x_{n+1}); the last chart
    coordinate is the height. The hyperbolic chart is the unit upper hemisphere with coordinates
    (x_1, ..., x_n) in the open unit ball; its pullback metric is the Klein model of H^n.
    """

    kind: ChartKind
    n: int = DEFAULT_DIMENSION

    def __post_init__(self):
        object.__setattr__(self, "kind", ChartKind(self.kind))
        if int(self.n) < 2:
            raise DomainError(f"dimension n must be at least 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def killing(self) -> KillingFieldSpec:
        """The Killing field whose orbits are transverse to M in this chart."""
        kind = FieldKind.PARABOLIC if self.kind is ChartKind.PARABOLIC else FieldKind.HYPERBOLIC
        return KillingFieldSpec(kind, self.n)

    @property
    def is_parabolic(self) -> bool:
        return self.kind is ChartKind.PARABOLIC

    def contains(self, xi: np.ndarray) -> np.ndarray:
        """Mask of points lying in the open chart domain."""
        xi = np.asarray(xi, dtype=float)
        if self.is_parabolic:
            return xi[..., -1] > 0.0
        return np.sum(xi * xi, axis=-1) < 1.0

    def embed(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.is_parabolic:
            return np.concatenate([np.zeros(xi.shape[:-1] + (1,)), xi], axis=-1)
        height = np.sqrt(np.clip(1.0 - np.sum(xi * xi, axis=-1), 0.0, None))
        return np.concatenate([xi, height[..., None]], axis=-1)

    def gamma(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.is_parabolic:
            return xi[..., -1] ** 2
        return 1.0 - np.sum(xi * xi, axis=-1)

    def gamma_differential(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.is_parabolic:
            result = np.zeros_like(xi)
            result[..., -1] = 2.0 * xi[..., -1]
            return result
        return -2.0 * xi

    def gamma_gradient(self, xi: np.ndarray) -> np.ndarray:
        """Metric gradient g_inv . d(gamma), in closed form."""
        xi = np.asarray(xi, dtype=float)
        if self.is_parabolic:
            result = np.zeros_like(xi)
            result[..., -1] = 2.0 * xi[..., -1] ** 3
            return result
        s = 1.0 - np.sum(xi * xi, axis=-1)
        return -2.0 * (s**2)[..., None] * xi

    def warp(self, xi: np.ndarray) -> np.ndarray:
        """Warping function rho = 1 / sqrt(gamma) of the product structure M x_rho R."""
        return 1.0 / np.sqrt(self.gamma(xi))

    def metric_fields(self, xi: np.ndarray):
        """
        Metric, inverse metric and volume factor at an array of chart points.

        Args:
            xi (np.ndarray): Chart points, shape (..., n).

        Returns:
            tuple: (g, g_inv, sqrt_det_g) with shapes (..., n, n), (..., n, n) and (...).
        """
        xi = np.asarray(xi, dtype=float)
        n = self.n
        eye = np.eye(n)
        if self.is_parabolic:
            height = xi[..., -1]
            g = eye / (height**2)[..., None, None]
            g_inv = eye * (height**2)[..., None, None]
            sqrt_det = height ** (-n)
            return g, g_inv, sqrt_det
        s = 1.0 - np.sum(xi * xi, axis=-1)
        outer = xi[..., :, None] * xi[..., None, :]
        g = eye / s[..., None, None] + outer / (s**2)[..., None, None]
        g_inv = s[..., None, None] * (eye - outer)
        sqrt_det = s ** (-(n + 1) / 2.0)
        return g, g_inv, sqrt_det

    def metric_partials(self, xi: np.ndarray) -> np.ndarray:
        """Coordinate partials of the metric, shape (..., n, n, n) with the derivative index first."""
        xi = np.asarray(xi, dtype=float)
        n = self.n
        eye = np.eye(n)
        if self.is_parabolic:
            height = xi[..., -1]
            dg = np.zeros(xi.shape[:-1] + (n, n, n))
            dg[..., n - 1, :, :] = -2.0 * eye / (height**3)[..., None, None]
            return dg
        s = 1.0 - np.sum(xi * xi, axis=-1)
        s2 = (s**2)[..., None, None, None]
        s3 = (s**3)[..., None, None, None]
        xk = xi[..., :, None, None]
        xi_i = xi[..., None, :, None]
        xj = xi[..., None, None, :]
        dk_i = eye[:, :, None]
        dk_j = eye[:, None, :]
        dg = 2.0 * xk * eye[None, :, :] / s2
        dg = dg + (dk_i * xj + dk_j * xi_i) / s2
        dg = dg + 4.0 * xi_i * xj * xk / s3
        return dg

    def distance(self, xi: np.ndarray, zeta: np.ndarray) -> np.ndarray:
        """Hyperbolic distance on M between chart points."""
        xi = np.asarray(xi, dtype=float)
        zeta = np.asarray(zeta, dtype=float)
        if self.is_parabolic:
            chord = np.sqrt(np.sum((xi - zeta) ** 2, axis=-1))
            return 2.0 * np.arcsinh(chord / (2.0 * np.sqrt(xi[..., -1] * zeta[..., -1])))
        s_xi = 1.0 - np.sum(xi * xi, axis=-1)
        s_zeta = 1.0 - np.sum(zeta * zeta, axis=-1)
        ratio = (1.0 - np.sum(xi * zeta, axis=-1)) / np.sqrt(s_xi * s_zeta)
        return np.arccosh(np.maximum(ratio, 1.0))

    def require(self, xi) -> np.ndarray:
        """Validate a single chart point and return it as an array."""
        point = _as_coords(xi, self.n)
        if not bool(self.contains(point)):
            raise DomainError(f"point {point} lies outside the {self.kind.value} chart")
        return point

    def embed_jacobian(self, xi: np.ndarray) -> np.ndarray:
        """Differential of the embedding, shape (..., n+1, n)."""
        xi = np.asarray(xi, dtype=float)
        n = self.n
        jac = np.zeros(xi.shape[:-1] + (n + 1, n))
        if self.is_parabolic:
            jac[..., 1:, :] = np.eye(n)
            return jac
        height = np.sqrt(1.0 - np.sum(xi * xi, axis=-1))
        jac[..., :n, :] = np.eye(n)
        jac[..., n, :] = -xi / height[..., None]
        return jac


def ambient_metric(x: HalfSpacePoint) -> ChartMetricData:
    """
    Metric of the half-space model, delta / x_{n+1}^2, with inverse and partials.

    Args:
        x (HalfSpacePoint): Base point.

    Returns:
        ChartMetricData: Ambient metric data of size n+1.
    """
    if not isinstance(x, HalfSpacePoint):
        x = HalfSpacePoint(x)
    size = x.coords.size
    height = x.height
    eye = np.eye(size)
    dg = np.zeros((size, size, size))
    dg[size - 1] = -2.0 * eye / height**3
    return ChartMetricData(
        g=eye / height**2,
        g_inv=eye * height**2,
        dg=dg,
        sqrt_det_g=height ** (-size),
    )


def ambient_distance(x: HalfSpacePoint, y: HalfSpacePoint) -> float:
    """Hyperbolic distance between two points of the half-space."""
    if not isinstance(x, HalfSpacePoint):
        x = HalfSpacePoint(x)
    if not isinstance(y, HalfSpacePoint):
        y = HalfSpacePoint(y)
    chord = np.linalg.norm(x.coords - y.coords)
    return float(2.0 * np.arcsinh(chord / (2.0 * np.sqrt(x.height * y.height))))


def killing_eval(field: KillingFieldSpec, x: HalfSpacePoint) -> TangentVector:
    if not isinstance(x, HalfSpacePoint):
        x = HalfSpacePoint(x)
    return TangentVector(x, field.value(x.coords))


def killing_flow(field: KillingFieldSpec, t: float, x: HalfSpacePoint) -> HalfSpacePoint:
    if not isinstance(x, HalfSpacePoint):
        x = HalfSpacePoint(x)
    return HalfSpacePoint(field.flow(float(t), x.coords))


def ambient_gamma(field: KillingFieldSpec, x: HalfSpacePoint) -> float:
    if not isinstance(x, HalfSpacePoint):
        x = HalfSpacePoint(x)
    return float(field.gamma(x.coords))


def christoffel(x: HalfSpacePoint) -> np.ndarray:
    """
    Christoffel symbols of the ambient metric from its partials.

    Returns:
        np.ndarray: Gamma[k, i, j] of shape (n+1, n+1, n+1).
    """
    data = ambient_metric(x)
    dg = data.dg
    # lower[l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
    lower = np.transpose(dg, (2, 0, 1)) + np.transpose(dg, (2, 1, 0)) - dg
    return 0.5 * np.einsum("kl,lij->kij", data.g_inv, lower)


def accel_christoffel(field: KillingFieldSpec, x: HalfSpacePoint) -> np.ndarray:
    """Covariant derivative of Z along itself from the connection coefficients."""
    if not isinstance(x, HalfSpacePoint):
        x = HalfSpacePoint(x)
    z = field.value(x.coords)
    # dZ/dx is zero for the translation and the identity for the dilation
    dz = np.eye(z.size) if field.kind is FieldKind.HYPERBOLIC else np.zeros((z.size, z.size))
    return dz @ z + np.einsum("kij,i,j->k", christoffel(x), z, z)


def accel_identity(field: KillingFieldSpec, x: HalfSpacePoint) -> np.ndarray:
    """Covariant derivative of Z along itself from the identity (1 / (2 gamma^2)) grad(gamma)."""
    if not isinstance(x, HalfSpacePoint):
        x = HalfSpacePoint(x)
    gamma = field.gamma(x.coords)
    grad = ambient_metric(x).g_inv @ field.gamma_differential(x.coords)
    return grad / (2.0 * gamma**2)


def accel_consistency(field: KillingFieldSpec, x: HalfSpacePoint) -> float:
    """
    Hyperbolic norm of the difference between the two evaluations of the covariant
    derivative of Z along itself.
    """
    if not isinstance(x, HalfSpacePoint):
        x = HalfSpacePoint(x)
    diff = accel_christoffel(field, x) - accel_identity(field, x)
    return float(np.linalg.norm(diff) / x.height)


def killing_residual(field: KillingFieldSpec, x: HalfSpacePoint, step: float = 1e-5) -> float:
    """
    Frobenius norm of the Lie derivative of the metric along the field.

    The field Jacobian is taken by central differences; the metric partials are analytic.
    """
    if not isinstance(x, HalfSpacePoint):
        x = HalfSpacePoint(x)
    data = ambient_metric(x)
    size = x.coords.size
    dz = np.empty((size, size))  # dz[k, i] = d_i Z^k
    for i in range(size):
        offset = np.zeros(size)
        offset[i] = step
        dz[:, i] = (field.value(x.coords + offset) - field.value(x.coords - offset)) / (2.0 * step)
    z = field.value(x.coords)
    lie = np.einsum("k,kij->ij", z, data.dg) + data.g @ dz + (data.g @ dz).T
    return float(np.linalg.norm(lie))


def gamma_field(case: ChartCase, xi) -> tuple:
    """
    gamma and its metric gradient at a chart point.

    Returns:
        tuple: (gamma, gradient) with gradient of shape (n,).
    """
    point = case.require(xi)
    return float(case.gamma(point)), case.gamma_gradient(point)


def chart_embed(case: ChartCase, xi) -> HalfSpacePoint:
    return HalfSpacePoint(case.embed(case.require(xi)))


def chart_metric(case: ChartCase, xi) -> ChartMetricData:
    point = case.require(xi)
    g, g_inv, sqrt_det = case.metric_fields(point)
    return ChartMetricData(g=g, g_inv=g_inv, dg=case.metric_partials(point), sqrt_det_g=float(sqrt_det))


def pullback_metric(case: ChartCase, xi, step: float = 1e-5) -> np.ndarray:
    """Pullback of the ambient metric through the chart embedding, by central differences."""
    point = case.require(xi)
    jac = np.empty((case.n + 1, case.n))
    for i in range(case.n):
        offset = np.zeros(case.n)
        offset[i] = step
        jac[:, i] = (case.embed(point + offset) - case.embed(point - offset)) / (2.0 * step)
    return jac.T @ ambient_metric(chart_embed(case, point)).g @ jac


def unit_directions(n: int, count: int) -> np.ndarray:
    """
    Roughly uniform unit vectors of R^n: equally spaced angles for n = 2, a Fibonacci lattice
    for n = 3 and seeded Gaussian samples beyond.
    """
    if n == 2:
        angles = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
        return np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    if n == 3:
        k = np.arange(count) + 0.5
        polar = np.arccos(1.0 - 2.0 * k / count)
        azimuth = np.pi * (1.0 + 5.0**0.5) * k
        return np.stack(
            [np.sin(polar) * np.cos(azimuth), np.sin(polar) * np.sin(azimuth), np.cos(polar)], axis=-1
        )
    samples = np.random.default_rng(n).standard_normal((count, n))
    return samples / np.linalg.norm(samples, axis=-1, keepdims=True)


def geodesic_sphere_points(case: ChartCase, center, radius: float, count: int = 64) -> np.ndarray:
    """
    Points of the geodesic sphere of M about `center`, one per chart ray from the center.

    Geodesic balls are convex in both charts, so the distance grows monotonically along each ray
    and the crossing is bracketed and found with brentq.
    """
    center = case.require(center)
    if not radius > 0.0:
        raise DomainError(f"sphere radius must be positive, got {radius}")
    points = []
    for direction in unit_directions(case.n, count):
        if case.is_parabolic:
            reach = center[-1] / -direction[-1] if direction[-1] < 0.0 else np.inf
        else:
            along = float(center @ direction)
            reach = -along + np.sqrt(along**2 + 1.0 - float(center @ center))
        upper = 1.0 if np.isinf(reach) else reach * (1.0 - 1e-12)

        def excess(s, direction=direction):
            return float(case.distance(center + s * direction, center)) - radius

        while np.isinf(reach) and excess(upper) < 0.0:
            upper *= 2.0
        points.append(center + brentq(excess, 0.0, upper, xtol=1e-14) * direction)
    return np.array(points)
