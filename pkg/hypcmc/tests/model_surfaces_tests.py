# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import math

import numpy as np

from ..core.boundary_data import IdealSphere, make_boundary_graph
from ..core.common import CapSide, Orientation, SheetSide, tilt_slope
from ..core.errors import CurvatureRangeError, DomainError
from ..core.model_surfaces import (
    ModelSurface,
    cmc_cap_for_boundary_sphere,
    exact_mean_curvature,
    subsolution_barrier,
    supersolution_barrier,
    surface_as_graph,
)

from .base_test_case import BaseTestCase


class ModelSurfacesTests(BaseTestCase):
    """Exact model surfaces and the barrier sheets built from them"""

    def test_exact_mean_curvature(self):
        """Closed-form mean curvature of every variant"""
        self.assertEqual(exact_mean_curvature(ModelSurface.vertical_plane(0.5)), 0.0)
        self.assertAlmostEqual(exact_mean_curvature(ModelSurface.tilted_plane(0.0, 0.75)), -0.6)
        self.assertEqual(exact_mean_curvature(ModelSurface.hemisphere([0.0, 0.0], 3.0)), 0.0)
        self.assertAlmostEqual(exact_mean_curvature(ModelSurface.spherical_cap([0.0, 0.0], 1.0, math.pi / 3)), 0.5)
        self.assertEqual(exact_mean_curvature(ModelSurface.horosphere(2.0)), 1.0)
        self.assertEqual(exact_mean_curvature(ModelSurface.horosphere(2.0, Orientation.AGAINST_FLOW)), -1.0)

    def test_surface_errors(self):
        """Invalid model surfaces are rejected"""
        with self.assertRaises(DomainError):
            ModelSurface.horosphere(-1.0)
        with self.assertRaises(DomainError):
            ModelSurface.spherical_cap([0.0, 0.0], 1.0, math.pi)
        with self.assertRaises(DomainError):
            ModelSurface.hemisphere(None, 1.0)
        with self.assertRaises(CurvatureRangeError):
            cmc_cap_for_boundary_sphere(IdealSphere([0.0, 0.0], 1.0), 1.0, CapSide.EXTERIOR)

    def test_caps_for_boundary_sphere(self):
        """Caps over a given ideal sphere carry the requested mean curvature on either side"""
        sphere = IdealSphere([0.3, -0.2], 0.8)
        for H in (0.0, 0.4, -0.4):
            for side in CapSide:
                cap = cmc_cap_for_boundary_sphere(sphere, H, side)
                self.assertAlmostEqual(exact_mean_curvature(cap), H, delta=1e-14)
                np.testing.assert_allclose(cap.center, sphere.center)
                self.assertEqual(cap.radius, sphere.radius)

    def test_parabolic_sheets(self):
        """Sheets meet the ideal boundary on the ideal sphere of the surface"""
        cap = ModelSurface.spherical_cap([1.0, 0.0], 0.5, math.pi / 3)
        sheet = surface_as_graph(cap, self.parabolic, SheetSide.FLOW_FACING)
        self.assertAlmostEqual(float(sheet(np.array([0.0, 0.0]))), 1.5, delta=1e-12)
        lower = surface_as_graph(cap, self.parabolic, SheetSide.M_FACING)
        self.assertAlmostEqual(float(lower(np.array([0.0, 0.0]))), 0.5, delta=1e-12)
        self.assertTrue(np.isnan(float(sheet(np.array([2.0, 0.1])))))

        plane = surface_as_graph(ModelSurface.vertical_plane(0.5), self.parabolic)
        self.assertEqual(float(plane(np.array([3.0, 1.0]))), 0.5)
        self.assertTrue(surface_as_graph(ModelSurface.vertical_plane(0.5), self.parabolic, SheetSide.M_FACING).is_empty)
        self.assertTrue(surface_as_graph(ModelSurface.horosphere(1.0), self.parabolic).is_empty)

    def test_parabolic_barriers(self):
        """Tilted-plane barriers through the slab bounds"""
        phi = make_boundary_graph(self.parabolic, {"preset": "bump", "a": 1.0, "b": 0.5})
        upper = supersolution_barrier(self.parabolic, phi, 0.3)
        lower = subsolution_barrier(self.parabolic, phi, 0.3)
        m = tilt_slope(0.3)
        self.assertAlmostEqual(upper.mean_curvature, 0.3, delta=1e-14)
        self.assertAlmostEqual(float(upper(np.array([0.0, 2.0]))), 1.5 + 2.0 * m, delta=1e-12)
        self.assertAlmostEqual(float(lower(np.array([0.0, 2.0]))), 1.0 + 2.0 * m, delta=1e-12)

        flat = subsolution_barrier(self.parabolic, phi, 0.0)
        self.assertEqual(float(flat(np.array([0.7, 3.0]))), 1.0)

    def test_hyperbolic_barriers(self):
        """Caps over a centered ideal sphere; the hemisphere is a constant graph"""
        flat = supersolution_barrier(self.hyperbolic, 0.25, 0.0)
        for xi in ([0.0, 0.0], [0.3, 0.2], [-0.5, 0.6]):
            self.assertAlmostEqual(float(flat(np.array(xi))), 0.25, delta=1e-12)

        cap = supersolution_barrier(self.hyperbolic, 0.0, 0.4)
        self.assertAlmostEqual(cap.mean_curvature, 0.4, delta=1e-14)
        self.assertTrue(np.isfinite(float(cap(np.array([0.5, 0.5])))))

        with self.assertRaises(DomainError):
            supersolution_barrier(self.hyperbolic, IdealSphere([2.0, 0.0], 1.0), 0.2)
