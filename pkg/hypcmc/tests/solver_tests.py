# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import math
from unittest.mock import patch

import numpy as np

from ..core import solver as solver_module
from ..core.boundary_data import make_boundary_graph
from ..core.common import BCPolicy
from ..core.errors import GridMismatchError, NewtonStagnationError
from ..core.graph_ops import boundary_trace
from ..core.pde import ChartGrid, GraphFunction, residual
from ..core.solver import (
    AsymptoticProblem,
    asymptotic_solve,
    boundary_data,
    compare_solutions,
    dirichlet_solve,
    gradient_monitor,
    refinement_drift,
    truncated_grid,
)

from .base_test_case import BaseTestCase


class SolverTests(BaseTestCase):
    """Damped Newton, continuation and the truncated asymptotic solve"""

    def setUp(self):
        super().setUp()
        self.cfg = self.small_config()
        self.box = ChartGrid.parabolic(self.parabolic, 0.5, 1.5, 0.5, 0.125)

    def problem(self, spec, H, case=None):
        case = case or self.parabolic
        return AsymptoticProblem(case, make_boundary_graph(case, spec), H)

    def test_constant_data(self):
        """Constant data give the constant solution without Newton steps"""
        solution = dirichlet_solve(self.box, 0.0, lambda xi: np.full(xi.shape[:-1], 0.8), self.cfg)
        np.testing.assert_allclose(solution.u.values, 0.8, atol=1e-10)
        self.assertLess(solution.residual_max, 1e-10)
        self.assertLessEqual(len(solution.diagnostics["newton_history"]), 2)

    def test_tilted_plane_data(self):
        """With tilted-plane data the solution stays within discretization error of the plane"""
        H = 0.4
        m = H / math.sqrt(1.0 - H * H)
        exact = GraphFunction.from_callable(self.box, lambda xi: 0.5 + m * xi[..., -1])
        solution = dirichlet_solve(self.box, H, exact, self.cfg)
        self.assertLessEqual(solution.residual_max, self.cfg.abs_tol)
        self.assertLess(float(np.max(np.abs(solution.u.values - exact.values))), 0.02)
        steps = [entry["H"] for entry in solution.diagnostics["continuation"]]
        self.assertEqual(steps[0], 0.0)
        self.assertEqual(steps[-1], H)

    def test_seeded_solve(self):
        """A seed that already solves the equation is returned as is"""
        data = GraphFunction.constant(self.box, 1.0)
        solution = dirichlet_solve(self.box, 0.0, data, self.cfg, seed=lambda xi: np.ones(xi.shape[:-1]))
        self.assertEqual(solution.diagnostics["newton_history"], [0.0])

    def test_stagnation(self):
        """Exhausted iterations raise with the last iterate attached"""
        data = GraphFunction.from_callable(self.box, lambda xi: 0.5 + 0.3 * xi[..., -1] + 0.2 * xi[..., 0] ** 2)
        cfg = self.small_config(max_iter=1, abs_tol=1e-15)
        with self.assertRaises(NewtonStagnationError) as context:
            dirichlet_solve(self.box, 0.2, data, cfg)
        self.assertIsInstance(context.exception.last_iterate, GraphFunction)
        self.assertGreater(len(context.exception.history), 0)

    def test_boundary_policies(self):
        """phi on the ideal edge, barrier or extension data on artificial edges"""
        grid = truncated_grid(self.parabolic, self.cfg)
        phi = make_boundary_graph(self.parabolic, {"preset": "constant", "a": 1.0})
        blend = boundary_data(grid, phi, 0.0, BCPolicy.BARRIER_BLEND)
        extension = boundary_data(grid, phi, 0.0, BCPolicy.CONSTANT_EXTENSION)
        np.testing.assert_allclose(blend.values[grid.boundary], 1.0)
        np.testing.assert_allclose(extension.values[grid.boundary], 1.0)

        tilted = boundary_data(grid, phi, 0.3, BCPolicy.BARRIER_BLEND)
        np.testing.assert_allclose(tilted.values[grid.ideal], 1.0)
        self.assertGreater(float(np.max(tilted.values[grid.artificial])), 1.0)

        self.assertEqual(truncated_grid(self.parabolic, self.cfg, enlarge=True).hi[-1], 2.0)

    def test_asymptotic_constant(self):
        """Constant data at H = 0 give the constant solution inside its barriers"""
        solution = asymptotic_solve(self.problem({"preset": "constant", "a": 1.0}, 0.0), self.cfg)
        np.testing.assert_allclose(solution.u.values[solution.grid.active], 1.0, atol=1e-10)
        self.assertFalse(solution.diagnostics["mirrored"])
        self.assertEqual(solution.diagnostics["normalization_shift"], 1.0)
        self.assertGreaterEqual(solution.diagnostics["sandwich_min_margin"], -1e-8)
        self.assertLess(solution.diagnostics["gradient_sup"], 1e-8)

    def test_negative_curvature(self):
        """Negative H is solved through the mirrored problem"""
        problem = self.problem({"preset": "constant", "a": 1.0}, -0.3)
        solution = asymptotic_solve(problem, self.cfg)
        self.assertTrue(solution.diagnostics["mirrored"])
        self.assertEqual(solution.H, -0.3)
        self.assertLessEqual(residual(solution.u, -0.3).max_norm, 1e-7)
        np.testing.assert_allclose(solution.u.values[solution.grid.ideal], 1.0)

    def test_hyperbolic_solve(self):
        """Hyperbolic constant data give the constant solution"""
        cfg = self.small_config(epsilon=0.25, spacing=0.125)
        problem = self.problem({"preset": "constant", "a": 0.3}, 0.0, case=self.hyperbolic)
        solution = asymptotic_solve(problem, cfg)
        np.testing.assert_allclose(solution.u.values[solution.grid.active], 0.3, atol=1e-10)

    def test_comparison(self):
        """Shifting the data shifts the solution; larger H lifts it"""
        bump = asymptotic_solve(self.problem({"preset": "bump", "a": 1.0, "b": 0.5}, 0.3), self.cfg)
        raised = asymptotic_solve(self.problem({"preset": "bump", "a": 1.5, "b": 0.5}, 0.3), self.cfg)
        report = compare_solutions(bump, raised)
        self.assertTrue(report.ordered)
        self.assertAlmostEqual(report.min_difference, 0.5, delta=1e-6)

        flat = asymptotic_solve(self.problem({"preset": "constant", "a": 1.0}, 0.0), self.cfg)
        curved = asymptotic_solve(self.problem({"preset": "constant", "a": 1.0}, 0.3), self.cfg)
        self.assertTrue(compare_solutions(flat, curved).ordered)
        self.assertFalse(compare_solutions(curved, flat).ordered)

        with self.assertRaises(GridMismatchError):
            compare_solutions(flat, GraphFunction.constant(self.box, 1.0))

    def test_seed_drift(self):
        """Newton from the supersolution barrier reaches the same discrete solution"""
        cfg = self.small_config(probe_seeds=True)
        solution = asymptotic_solve(self.problem({"preset": "constant", "a": 1.0}, 0.3), cfg)
        self.assertLess(solution.diagnostics["seed_drift"], 1e-6)
        self.assertEqual(solution.warnings, [])

    def test_gradient_monitor(self):
        """Gradient sup of a tilted plane and the refinement drift"""
        u = GraphFunction.from_callable(self.box, lambda xi: 0.75 * xi[..., -1])
        profile = gradient_monitor(u, 0.25)
        # nodes at least 0.25 from the box edge have t <= 1.25
        self.assertAlmostEqual(profile.sup, 0.75 * 1.25, delta=1e-12)
        self.assertGreater(len(profile.shells), 0)
        self.assertEqual(gradient_monitor(GraphFunction.constant(self.box, 2.0), 0.25).sup, 0.0)
        self.assertAlmostEqual(refinement_drift([1.0, 1.1, 1.0]), 0.1 / 1.1)
        self.assertEqual(refinement_drift([1.0]), 0.0)

    def test_seed_independence(self):
        """Newton from the supersolution barrier lands on the same bump solution"""
        cfg = self.small_config(probe_seeds=True)
        for H in (0.3, 0.6):
            solution = asymptotic_solve(self.problem({"preset": "bump", "a": 1.0, "b": 0.5}, H), cfg)
            self.assertLess(solution.diagnostics["seed_drift"], 1e-6)
            self.assertEqual(solution.warnings, [])

    def test_failed_diagnostic_is_a_warning(self):
        """A seeded solve that stalls is reported without discarding the solution"""
        solve = solver_module.dirichlet_solve

        def stall_seeded(*args, **kwargs):
            if kwargs.get("seed") is not None:
                raise NewtonStagnationError("line search stalled at H = 0.3")
            return solve(*args, **kwargs)

        cfg = self.small_config(probe_seeds=True)
        with patch.object(solver_module, "dirichlet_solve", side_effect=stall_seeded):
            solution = asymptotic_solve(self.problem({"preset": "constant", "a": 1.0}, 0.3), cfg)
        self.assertIsNone(solution.diagnostics["seed_drift"])
        self.assertEqual(len(solution.warnings), 1)
        self.assertIn("seed_drift", solution.warnings[0])
        self.assertLessEqual(solution.residual_max, cfg.abs_tol)

    def test_sandwich_warning(self):
        """Sandwich violations are carried in the warnings"""
        with patch.object(solver_module, "sandwich_margins", return_value=(-0.1, 0.0)):
            solution = asymptotic_solve(self.problem({"preset": "constant", "a": 1.0}, 0.0), self.cfg)
        self.assertEqual(solution.diagnostics["sandwich_min_margin"], -0.1)
        self.assertEqual(len(solution.warnings), 1)
        self.assertIn("sandwich", solution.warnings[0])

    def test_trace_shrinks_with_epsilon(self):
        """Moving the ideal edge closer to the boundary improves the extrapolated trace"""
        problem = self.problem({"preset": "constant", "a": 1.0}, 0.3)
        errors = []
        for epsilon in (0.25, 0.0625):
            solution = asymptotic_solve(problem, self.small_config(epsilon=epsilon, spacing=0.0625))
            errors.append(boundary_trace(solution, problem.boundary).max_error)
        self.assertLess(errors[1], 0.5 * errors[0])

    def test_gradient_stabilizes(self):
        """The interior gradient sup settles under refinement"""
        problem = self.problem({"preset": "bump", "a": 1.0, "b": 0.5}, 0.3)
        sups = []
        for spacing in (0.125, 0.0625):
            solution = asymptotic_solve(problem, self.small_config(spacing=spacing))
            sups.append(gradient_monitor(solution, 0.25).sup)
        self.assertGreater(min(sups), 0.0)
        self.assertLess(refinement_drift(sups), 0.2)

    def test_deterministic(self):
        """Repeated solves give bit-identical results"""
        problem = self.problem({"preset": "bump", "a": 1.0, "b": 0.5}, 0.3)
        first = asymptotic_solve(problem, self.cfg)
        second = asymptotic_solve(problem, self.cfg)
        np.testing.assert_array_equal(first.u.values, second.u.values)
        self.assertEqual(first.diagnostics["newton_history"], second.diagnostics["newton_history"])
