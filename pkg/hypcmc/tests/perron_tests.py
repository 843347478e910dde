# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import numpy as np

from ..core.boundary_data import make_boundary_graph
from ..core.errors import BallConditionError, DomainError
from ..core.pde import ChartGrid, GraphFunction
from ..core.perron import (
    ConstantLevel,
    GeodesicBallSpec,
    Subsolution,
    Supersolution,
    ball_lift,
    barrier_sequence,
    certify_probes,
    check_ball,
    choose_ball_radius,
    cylinder_curvature,
    discretization_tolerance,
    probe_point,
    sandwich_check,
    sub_lift,
    super_descent,
)
from ..core.solver import AsymptoticProblem, asymptotic_solve

from .base_test_case import BaseTestCase


class PerronTests(BaseTestCase):
    """Barrier sequences, sandwich checks and ball lifts"""

    def setUp(self):
        super().setUp()
        self.flat = make_boundary_graph(self.parabolic, {"preset": "constant", "a": 1.0})
        self.bump = make_boundary_graph(self.parabolic, {"preset": "bump", "a": 1.0, "b": 0.5})

    def test_patches(self):
        """Sheet patches combine by max below and by min above"""
        def patch(xi):
            return np.where(xi[..., 0] < 0.0, 2.0, np.nan)

        points = np.array([[-1.0, 1.0], [1.0, 1.0]])
        lower = Subsolution(self.parabolic, ConstantLevel(1.0)).with_patch(patch)
        np.testing.assert_array_equal(lower(points), [2.0, 1.0])
        upper = Supersolution(self.parabolic, ConstantLevel(3.0)).with_patch(patch)
        np.testing.assert_array_equal(upper(points), [2.0, 3.0])
        self.assertFalse(lower.converged)
        self.assertTrue(lower.terminal().converged)

    def test_probe_points(self):
        """Probes sit on the ideal boundary of the chart"""
        np.testing.assert_array_equal(probe_point(self.parabolic, [0.5]), [0.5, 0.0])
        np.testing.assert_allclose(probe_point(self.hyperbolic, [3.0, 4.0]), [0.6, 0.8])
        with self.assertRaises(DomainError):
            probe_point(self.parabolic, [0.5, 0.5])
        with self.assertRaises(DomainError):
            probe_point(self.hyperbolic, [0.0, 0.0])

    def test_constant_datum_closes(self):
        """For constant data both barriers start on the curve"""
        certificate = barrier_sequence([0.0], self.flat, 0.0)
        self.assertTrue(certificate.converged)
        self.assertEqual(certificate.iterations, 0)
        self.assertEqual(certificate.gaps, [0.0])
        self.assertEqual(certificate.target, 1.0)

        disk = make_boundary_graph(self.hyperbolic, {"preset": "constant", "a": 0.0})
        self.assertTrue(barrier_sequence([1.0, 0.0], disk, 0.0).converged)

    def test_gap_shrinks(self):
        """The barrier gap at a probe never grows and the lifts stay on M's side of the curve"""
        for certificate in certify_probes([[0.0], [0.5]], self.bump, 0.3, k_max=4):
            gaps = certificate.gaps
            self.assertLess(gaps[-1], gaps[0])
            for before, after in zip(gaps, gaps[1:]):
                self.assertLessEqual(after, before + 1e-12)
            self.assertLessEqual(max(certificate.sub_values), certificate.target + 1e-9)
            self.assertGreaterEqual(min(certificate.super_values), certificate.target - 1e-9)

    def test_mirrored_sequence(self):
        """Negative H runs the sequences on the mirrored datum"""
        certificate = barrier_sequence([0.0], self.flat, -0.3)
        self.assertTrue(certificate.converged)
        self.assertEqual(certificate.target, 1.0)
        self.assertEqual(certificate.sub_values, [1.0])

    def test_sandwich(self):
        """The constant solution lies between the barriers of its datum"""
        grid = ChartGrid.parabolic(self.parabolic, 1.0, 1.0, 0.125, 0.125)
        u = GraphFunction.constant(grid, 1.0)
        certificate = barrier_sequence([0.0], self.flat, 0.0, solution=u)
        self.assertTrue(certificate.sandwich.holds)

        report = sandwich_check(ConstantLevel(1.0), ConstantLevel(2.0), GraphFunction.constant(grid, 0.5))
        self.assertFalse(report.holds)
        self.assertAlmostEqual(report.lower_margin, -0.5)
        self.assertEqual(discretization_tolerance(grid), 0.125**2)

    def test_ball_condition(self):
        """Small balls clear the cylinder threshold and large ones do not"""
        small = GeodesicBallSpec(self.parabolic, (0.0, 1.0), 0.25)
        self.assertGreaterEqual(check_ball(small, 0.3), np.sqrt(0.5))
        self.assertEqual(cylinder_curvature(small).shape, (64,))
        with self.assertRaises(BallConditionError):
            check_ball(GeodesicBallSpec(self.parabolic, (0.0, 1.0), 3.0), 0.0)
        self.assertEqual(choose_ball_radius(self.parabolic, (0.0, 1.0), 0.3).radius, 0.25)

    def test_ball_lift(self):
        """Lifting zero on a ball with H > 0 raises it inside and keeps it outside"""
        zero = Subsolution(self.parabolic, ConstantLevel(0.0))
        ball = GeodesicBallSpec(self.parabolic, (0.0, 1.0), 0.25)
        lifted = ball_lift(zero, ball, 0.3, self.small_config())
        self.assertGreater(float(lifted(np.array([0.0, 1.0]))), 0.0)
        self.assertEqual(float(lifted(np.array([0.0, 3.0]))), 0.0)

    def test_single_steps(self):
        """One lift or descent reaches a flat curve from either side and stops on it"""
        probe = probe_point(self.parabolic, [0.0])
        lifted = sub_lift(Subsolution(self.parabolic, ConstantLevel(0.0)), [0.0], self.flat)
        self.assertFalse(lifted.converged)
        self.assertAlmostEqual(float(lifted(probe)), 1.0, delta=1e-6)
        self.assertTrue(sub_lift(Subsolution(self.parabolic, ConstantLevel(1.0)), [0.0], self.flat).converged)

        lowered = super_descent(Supersolution(self.parabolic, ConstantLevel(2.0)), [0.0], self.flat, 0.3)
        self.assertFalse(lowered.converged)
        self.assertLess(float(lowered(probe)), 2.0)
        self.assertGreaterEqual(float(lowered(probe)), 1.0 - 1e-6)
        on_curve = Supersolution(self.parabolic, ConstantLevel(1.0))
        self.assertTrue(super_descent(on_curve, [0.0], self.flat, 0.3).converged)

    def test_bump_certificates(self):
        """Gaps fall strictly at five probes and the solved bump stays between the final barriers"""
        solution = asymptotic_solve(AsymptoticProblem(self.parabolic, self.bump, 0.3), self.small_config())
        probes = [[value] for value in np.linspace(-0.8, 0.8, 5)]
        tol = discretization_tolerance(solution.grid)
        certificates = certify_probes(probes, self.bump, 0.3, k_max=10, solution=solution, tol=tol)
        self.assertEqual(len(certificates), 5)
        for certificate in certificates:
            gaps = certificate.gaps
            compared = gaps[:-1] if certificate.stagnated else gaps
            for before, after in zip(compared, compared[1:]):
                self.assertLess(after, before)
            self.assertLessEqual(certificate.iterations, 10)
            self.assertTrue(certificate.sandwich.holds, certificate.sandwich)
