# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import math

import numpy as np

from ..core.boundary_data import IdealSphere
from ..core.common import CapSide, SheetSide
from ..core.errors import CurvatureRangeError, DomainError, GridMismatchError
from ..core.model_surfaces import ModelSurface, cmc_cap_for_boundary_sphere, surface_as_graph
from ..core.pde import (
    ChartGrid,
    GraphFunction,
    check_curvature,
    flux_w,
    gradient_fields,
    killing_term,
    killing_term_direct,
    linearize,
    require_same_grid,
    residual,
)

from .base_test_case import BaseTestCase


def tilted_plane_error(H: float, t: float, h: float) -> float:
    """Discrete residual of u = m t at height t for vertical spacing h."""
    return -H * h * h / (4.0 * t * t - h * h)


class PDETests(BaseTestCase):
    """Discrete graph operator, its Jacobian and the grids it lives on"""

    def parabolic_grid(self, spacing=0.125):
        return ChartGrid.parabolic(self.parabolic, 0.5, 1.5, 0.5, spacing)

    def test_grids(self):
        """Node classes of both truncations"""
        grid = ChartGrid.parabolic(self.parabolic, 1.0, 1.0, 0.125, 0.125)
        self.assertEqual(grid.shape, (17, 8))
        self.assertTrue(np.all(grid.ideal[:, 0]))
        self.assertFalse(np.any(grid.ideal[:, 1:]))
        self.assertTrue(np.all(grid.artificial[0, 1:]))
        self.assertEqual(int(np.count_nonzero(grid.interior)), 15 * 6)

        disk = ChartGrid.hyperbolic(self.hyperbolic, 0.25, 0.125)
        self.assertFalse(np.any(disk.artificial))
        self.assertTrue(np.array_equal(disk.ideal, disk.boundary))
        radii = np.sqrt(np.sum(disk.points[disk.active] ** 2, axis=-1))
        self.assertLessEqual(float(radii.max()), 0.75 + 1e-12)

        with self.assertRaises(DomainError):
            ChartGrid.parabolic(self.parabolic, 0.1, 1.0, 0.5, 0.1)
        with self.assertRaises(DomainError):
            ChartGrid.hyperbolic(self.hyperbolic, 1.5, 0.1)

    def test_constant_is_exact(self):
        """Constants solve the equation with H = 0 and leave n H otherwise"""
        for grid in (self.parabolic_grid(), ChartGrid.hyperbolic(self.hyperbolic, 0.25, 0.125)):
            u = GraphFunction.constant(grid, 0.7)
            self.assertLess(residual(u, 0.0).max_norm, 1e-12)
            np.testing.assert_allclose(residual(u, 0.3).interior, 0.6, atol=1e-12)

    def test_tilted_plane_residual(self):
        """The discrete residual of a tilted plane is -H h^2 / (4 t^2 - h^2), second order in h"""
        H = 0.3
        m = H / math.sqrt(1.0 - H * H)
        errors = []
        for spacing in (1.0 / 8, 1.0 / 16, 1.0 / 32):
            grid = self.parabolic_grid(spacing)
            u = GraphFunction.from_callable(grid, lambda xi: 0.25 + m * xi[..., -1])
            values = residual(u, H).as_array()
            node = (int(round(0.5 / spacing)), int(round(0.5 / spacing)))
            t = float(grid.points[node][-1])
            self.assertAlmostEqual(t, 1.0, delta=1e-12)
            self.assertAlmostEqual(float(values[node]), tilted_plane_error(H, t, spacing), delta=1e-12)
            errors.append(abs(float(values[node])))
        for coarse, fine in zip(errors, errors[1:]):
            self.assertAlmostEqual(math.log2(coarse / fine), 2.0, delta=0.01)

    def test_tilted_plane_slopes(self):
        """The tilted-plane error formula holds for shallow and steep slopes"""
        for m in (0.25, 0.75, 2.0):
            H = m / math.sqrt(1.0 + m * m)
            for spacing in (1.0 / 8, 1.0 / 16):
                grid = self.parabolic_grid(spacing)
                u = GraphFunction.from_callable(grid, lambda xi: 0.25 + m * xi[..., -1])
                values = residual(u, H).as_array()
                node = (int(round(0.5 / spacing)), int(round(0.5 / spacing)))
                expected = tilted_plane_error(H, float(grid.points[node][-1]), spacing)
                self.assertAlmostEqual(float(values[node]), expected, delta=1e-12)

    def test_sphere_residual_order(self):
        """Hemisphere and cap graphs have second-order discrete residuals"""
        sphere = IdealSphere([0.0, 0.0], 4.0)
        hemisphere = ModelSurface.hemisphere([0.0, 0.0], 4.0)
        sheets = [surface_as_graph(hemisphere, self.parabolic, SheetSide.FLOW_FACING)]
        for H in (0.4, -0.4):
            cap = cmc_cap_for_boundary_sphere(sphere, H, CapSide.EXTERIOR)
            sheets.append(surface_as_graph(cap, self.parabolic, SheetSide.FLOW_FACING))
        for sheet in sheets:
            errors = []
            for spacing in (1.0 / 8, 1.0 / 16, 1.0 / 32):
                u = GraphFunction.from_callable(self.parabolic_grid(spacing), sheet)
                errors.append(residual(u, sheet.mean_curvature).max_norm)
            for coarse, fine in zip(errors, errors[1:]):
                self.assertGreater(math.log2(coarse / fine), 1.7)

    def test_constant_shift_invariance(self):
        """Adding a constant moves the graph along the flow and leaves the residual unchanged"""
        def wavy(xi):
            return 0.4 + 0.3 * np.sin(2.0 * xi[..., 0]) + 0.2 * xi[..., -1] ** 2

        for grid in (self.parabolic_grid(), ChartGrid.hyperbolic(self.hyperbolic, 0.25, 0.125)):
            u = GraphFunction.from_callable(grid, wavy)
            for H in (0.0, 0.35):
                np.testing.assert_allclose(residual(u.shifted(1.7), H).interior, residual(u, H).interior, atol=1e-10)

    def test_odd_symmetry(self):
        """R(-u, -H) = -R(u, H)"""
        grid = self.parabolic_grid()
        u = GraphFunction.from_callable(grid, lambda xi: 0.4 + 0.3 * np.sin(2.0 * xi[..., 0]) + 0.2 * xi[..., -1])
        np.testing.assert_array_equal(residual(u.scaled(-1.0), -0.2).interior, -residual(u, 0.2).interior)

    def test_jacobian_matches_differences(self):
        """Analytic Jacobian against central differences of the residual"""
        rng = np.random.default_rng(3)
        cases = (
            (self.parabolic_grid(), lambda xi: 0.4 + 0.3 * np.sin(2.0 * xi[..., 0]) + 0.2 * xi[..., -1] ** 2),
            (
                ChartGrid.hyperbolic(self.hyperbolic, 0.25, 0.125),
                lambda xi: 0.2 * xi[..., 0] - 0.5 * xi[..., 1] ** 2,
            ),
        )
        delta = 1e-6
        for grid, function in cases:
            u = GraphFunction.from_callable(grid, function)
            lin = linearize(u, 0.25)
            direction = rng.standard_normal(grid.stencil.nodes.size)
            base = u.interior_values()
            plus = residual(u.with_interior(base + delta * direction), 0.25).interior
            minus = residual(u.with_interior(base - delta * direction), 0.25).interior
            expected = (plus - minus) / (2.0 * delta)
            actual = lin.jacobian @ direction
            scale = float(np.max(np.abs(actual)))
            np.testing.assert_allclose(actual, expected, rtol=1e-5, atol=1e-6 * scale)
            np.testing.assert_allclose(lin.residual, residual(u, 0.25).interior)

    def test_killing_term_two_ways(self):
        """The gamma-gradient form of the Killing term matches the connection form"""
        for grid, function in (
            (self.parabolic_grid(), lambda xi: 0.4 + 0.3 * np.sin(2.0 * xi[..., 0]) + 0.2 * xi[..., -1] ** 2),
            (ChartGrid.hyperbolic(self.hyperbolic, 0.25, 0.125), lambda xi: 0.2 * xi[..., 0] - 0.5 * xi[..., 1] ** 2),
        ):
            u = GraphFunction.from_callable(grid, function)
            np.testing.assert_allclose(killing_term(u), killing_term_direct(u), rtol=1e-9, atol=1e-12)

    def test_gradient_fields(self):
        """|grad u|_g and w of a tilted plane"""
        grid = self.parabolic_grid()
        u = GraphFunction.from_callable(grid, lambda xi: 0.75 * xi[..., -1])
        _, norm, w = gradient_fields(u)
        t = grid.stencil.points[:, -1]
        np.testing.assert_allclose(norm, 0.75 * t, rtol=1e-12)
        np.testing.assert_allclose(w, 1.25 * t, rtol=1e-12)
        self.assertAlmostEqual(flux_w(GraphFunction.constant(grid, 1.0), (4, 4)), 1.0, delta=1e-12)
        with self.assertRaises(DomainError):
            flux_w(u, (0, 0))

    def test_errors(self):
        """Invalid curvature, non-finite values and mismatched grids"""
        with self.assertRaises(CurvatureRangeError):
            check_curvature(1.0)
        grid = self.parabolic_grid()
        with self.assertRaises(DomainError):
            GraphFunction(grid, np.full(grid.shape, np.nan))
        with self.assertRaises(GridMismatchError):
            require_same_grid(GraphFunction.constant(grid, 0.0), GraphFunction.constant(self.parabolic_grid(0.0625), 0.0))
