# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import json
import math
import os

import numpy as np
import yaml

from ..core.boundary_data import make_boundary_graph
from ..core.config import SolverConfig
from ..core.export import export_report, read_ply, read_report
from ..core.pde import ChartGrid
from ..core.solver import AsymptoticProblem, asymptotic_solve
from ..hypcmc_model import curvature_deviation, observed_order, scored_nodes

from .base_test_case import BaseTestCase


class HypCMCModelTests(BaseTestCase):
    """End-to-end runs of the command line tool"""

    def setUp(self):
        super().setUp()
        self.flat = {"case": "parabolic", "n": 2, "boundary": {"preset": "constant", "a": 1.0}, "H": 0.0}

    def run_config(self, name, data, out_dir):
        path = self.write_config(name, data)
        return self.run_hypcmc("--config", path, "-o", out_dir, "-l", "warning")

    def load_summary(self, out_dir):
        with open(os.path.join(out_dir, "summary.json")) as handle:
            return json.load(handle)

    def load_manifest(self, out_dir):
        with open(os.path.join(out_dir, "manifest.yaml")) as handle:
            return yaml.safe_load(handle)

    def solve_flat(self, out_dir):
        data = dict(
            problem=self.flat,
            solver=self.small_solver,
            output={"formats": ["ply", "obj"]},
        )
        return self.run_config("solve.json", data, out_dir)

    def test_solve(self):
        """A constant datum at H = 0 solves to the vertical plane x_1 = 1"""
        out_dir = os.path.join(self.out_dir, "solve")
        model = self.solve_flat(out_dir)
        self.assertLess(model.last_summary["residual_max"], 1e-10)

        summary = self.load_summary(out_dir)
        self.assertLess(summary["residual_max"], 1e-10)
        self.assertLess(summary["oracle_H_max_dev"], 1e-8)
        for name in ("solution.csv", "mesh.ply", "mesh.obj", "report.csv", "manifest.yaml"):
            self.assertTrue(os.path.exists(os.path.join(out_dir, name)), name)

        vertices, faces = read_ply(os.path.join(out_dir, "mesh.ply"))
        np.testing.assert_allclose(vertices[:, 0], 1.0, atol=1e-10)
        self.assertEqual(len(faces), 2 * 16 * 7)

        manifest = self.load_manifest(out_dir)
        self.assertEqual(manifest["config"]["problem"]["case"], "parabolic")
        self.assertEqual(manifest["config"]["mode"], "solve")

    def test_verify(self):
        """Verification passes on a stored solution and fails once it is perturbed"""
        solve_dir = os.path.join(self.out_dir, "solve")
        self.solve_flat(solve_dir)
        solution = os.path.join(solve_dir, "solution.csv")
        data = dict(mode="verify", problem=self.flat, solver=self.small_solver, verify={"solution": solution})

        verify_dir = os.path.join(self.out_dir, "verify")
        model = self.run_config("verify.json", data, verify_dir)
        self.assertEqual(model.last_summary["failed"], 0)
        _, rows = read_report(os.path.join(verify_dir, "verify.csv"))
        self.assertEqual({row[3] for row in rows}, {"passed"})

        columns, rows = read_report(solution)
        rng = np.random.default_rng(7)
        for row in rows:
            if row[-1] == 0:
                row[-2] += 0.1 * rng.standard_normal()
        tampered = export_report(os.path.join(self.out_dir, "tampered.csv"), columns, rows)

        data["verify"] = {"solution": tampered}
        tampered_dir = os.path.join(self.out_dir, "tampered")
        with self.assertRaises(SystemExit) as context:
            self.run_config("tampered.json", data, tampered_dir)
        self.assertEqual(context.exception.code, 3)
        self.assertIn("residual_max", self.load_manifest(tampered_dir)["failed"])

    def test_verify_needs_solution(self):
        data = dict(mode="verify", problem=self.flat, solver=self.small_solver)
        with self.assertRaises(SystemExit) as context:
            self.run_config("verify.json", data, self.out_dir)
        self.assertEqual(context.exception.code, 1)

    def test_curved_solve(self):
        """A bump datum at H = 0.3 solves and reports every check"""
        data = dict(
            problem={"case": "parabolic", "boundary": {"preset": "bump", "a": 1.0, "b": 0.5}, "H": 0.3},
            solver=self.small_solver,
            output={"mesh": False},
            verify={"tolerances": {"oracle_H_max_dev": 1.0, "trace_max_err": 1.0, "sandwich_min_margin": 1.0}},
        )
        model = self.run_config("bump.json", data, self.out_dir)
        summary = model.last_summary
        self.assertTrue(math.isfinite(summary["sandwich_min_margin"]))
        self.assertTrue(math.isfinite(summary["oracle_H_max_dev"]))
        self.assertLessEqual(summary["residual_max"], 1e-8)
        self.assertFalse(os.path.exists(os.path.join(self.out_dir, "mesh.ply")))
        self.assertEqual(summary["failed"], 0)

    def test_solve_check_failure(self):
        """A solve whose checks miss their tolerance keeps its artifacts and exits with code 3"""
        data = dict(
            problem={"case": "parabolic", "boundary": {"preset": "bump", "a": 1.0, "b": 0.5}, "H": 0.3},
            solver=self.small_solver,
            output={"mesh": False},
            verify={"tolerances": {"oracle_H_max_dev": 1e-12}},
        )
        with self.assertRaises(SystemExit) as context:
            self.run_config("bump.json", data, self.out_dir)
        self.assertEqual(context.exception.code, 3)
        self.assertIn("oracle_H_max_dev", self.load_manifest(self.out_dir)["failed"])
        self.assertTrue(os.path.exists(os.path.join(self.out_dir, "solution.csv")))
        self.assertGreater(self.load_summary(self.out_dir)["failed"], 0)

    def test_scored_nodes(self):
        """The curvature oracle skips nodes whose fitting window reaches the domain edge"""
        grid = ChartGrid.parabolic(self.parabolic, 1.0, 1.0, 0.125, 0.125)
        chosen = scored_nodes(grid, 0.1)
        self.assertEqual(int(np.count_nonzero(chosen)), 11 * 2)
        np.testing.assert_allclose(np.unique(grid.points[chosen][:, -1]), [0.5, 0.625])
        self.assertFalse(np.any(scored_nodes(grid, 0.5)))

    def test_bump_curvature(self):
        """Bump solutions carry their prescribed curvature away from the domain edge"""
        cfg = SolverConfig(spacing="1/64", sensitivity=False, probe_seeds=False)
        phi = make_boundary_graph(self.parabolic, {"preset": "bump", "a": 1.0, "b": 0.5})
        for H in (0.0, 0.3, 0.6):
            solution = asymptotic_solve(AsymptoticProblem(self.parabolic, phi, H), cfg)
            self.assertLessEqual(solution.residual_max, cfg.abs_tol)
            self.assertLessEqual(curvature_deviation(solution.u, H, cfg.oracle_margin), 0.05)

    def test_hyperbolic_sine_curvature(self):
        """Disk solves with a sine datum carry their prescribed curvature"""
        cfg = SolverConfig(spacing="1/64", sensitivity=False, probe_seeds=False)
        phi = make_boundary_graph(self.hyperbolic, {"preset": "sine", "a": 0.0, "b": 0.1, "k": 1})
        for H in (0.0, 0.3):
            solution = asymptotic_solve(AsymptoticProblem(self.hyperbolic, phi, H), cfg)
            self.assertLessEqual(solution.residual_max, cfg.abs_tol)
            self.assertLessEqual(curvature_deviation(solution.u, H, cfg.oracle_margin), 0.05)

    def test_config_errors(self):
        """Configuration errors exit with code 1"""
        with self.assertRaises(SystemExit) as context:
            self.run_hypcmc("--config", os.path.join(self.out_dir, "missing.json"), "-o", self.out_dir)
        self.assertEqual(context.exception.code, 1)

        with self.assertRaises(SystemExit) as context:
            self.run_config("flat.json", dict(problem=dict(self.flat, H=1.0)), self.out_dir)
        self.assertEqual(context.exception.code, 1)

        with self.assertRaises(SystemExit) as context:
            self.run_config("preset.json", dict(problem=dict(self.flat, boundary={"preset": "wave"})), self.out_dir)
        self.assertEqual(context.exception.code, 1)

    def test_oracle(self):
        """Planes and horospheres are reproduced at every spacing"""
        data = dict(mode="oracle", oracle={"cases": ["horosphere", "tilted_plane"], "spacings": ["1/16", "1/32"]})
        model = self.run_config("oracle.json", data, self.out_dir)
        columns, rows = read_report(os.path.join(self.out_dir, "oracle.csv"))
        self.assertEqual(columns, ["case", "spacing", "expected", "max_dev", "order"])
        self.assertEqual(len(rows), 4)
        self.assertEqual([row[1] for row in rows[:2]], [0.0625, 0.03125])
        self.assertLess(model.last_summary["oracle_H_max_dev"], 0.01)

        data["oracle"]["cases"] = ["cylinder"]
        with self.assertRaises(SystemExit) as context:
            self.run_config("unknown.json", data, self.out_dir)
        self.assertEqual(context.exception.code, 1)

    def test_mode_override(self):
        """--mode replaces the mode of the config"""
        path = self.write_config("oracle.json", dict(mode="solve", oracle={"cases": ["vertical_plane"]}))
        model = self.run_hypcmc("--config", path, "--mode", "oracle", "-o", self.out_dir)
        self.assertEqual(model.last_config.mode.value, "oracle")
        self.assertTrue(os.path.exists(os.path.join(self.out_dir, "oracle.csv")))

    def test_barriers(self):
        """Constant data close every barrier gap at once"""
        data = dict(mode="barriers", problem=self.flat, solver=self.small_solver, barriers={"probes": [[0.0], [0.5]]})
        model = self.run_config("barriers.json", data, self.out_dir)
        self.assertEqual(model.last_summary["barrier_max_gap"], 0.0)
        self.assertEqual(model.last_summary["barrier_converged"], 2)
        _, rows = read_report(os.path.join(self.out_dir, "barriers.csv"))
        self.assertEqual(len(rows), 2)

    def test_observed_order(self):
        self.assertAlmostEqual(observed_order(4e-2, 1e-2, 0.1, 0.05), 2.0)
        self.assertTrue(math.isnan(observed_order(1e-14, 1e-15, 0.1, 0.05)))

    def test_packaged_configs(self):
        """The example configs shipped with the package load"""
        from ..core.config import load_run_config

        names = sorted(name for name in os.listdir(self.configs_dir) if name.endswith(".json"))
        self.assertGreater(len(names), 0)
        for name in names:
            config = load_run_config(os.path.join(self.configs_dir, name))
            self.assertLess(abs(config.problem.H), 1.0)
