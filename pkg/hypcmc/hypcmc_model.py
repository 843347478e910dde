# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import logging
import math
import os
import sys
import tempfile
from dataclasses import asdict

import numpy as np

from .core.arg_parser import get_clean_args, get_parser
from .core.boundary_data import make_boundary_graph
from .core.common import ORACLE_TOL, SEED_TOL, RunMode
from .core.config import DEFAULT_ORACLE_SUITE, RunConfig, load_run_config, load_yaml_mapping
from .core.errors import ConfigError, DomainError, HypCMCError, TraceError, VerificationError
from .core.export import (
    export_manifest,
    export_mesh,
    export_report,
    export_solution,
    export_summary,
    read_solution,
)
from .core.geometry import ChartCase
from .core.graph_ops import (
    FIT_WINDOW,
    boundary_trace,
    embed_graph,
    mesh_model_surface,
    numeric_mean_curvature,
    sphere_mean_curvature,
    sphere_mesh,
)
from .core.logger import clear_handlers, log, setup_logger
from .core.model_surfaces import ModelSurface, exact_mean_curvature
from .core.pde import residual
from .core.perron import certify_probes, discretization_tolerance
from .core.solver import (
    AsymptoticProblem,
    asymptotic_solve,
    boundary_distance,
    refinement_drift,
    sandwich_margins,
    truncated_grid,
)
from .core.units import parse_scalar

"""
Checks of a solution and whether a value passes by staying below (True) or above (False) its limit.
"""
CHECKS = dict(residual_max=True, oracle_H_max_dev=True, trace_max_err=True, sandwich_min_margin=False)

"""
Rounding allowed when a residual is recomputed from a stored solution.
"""
RESIDUAL_SLACK = 1e-12

"""
Deviations below this are treated as exact when estimating convergence orders.
"""
ORDER_FLOOR = 1e-12

DEFAULT_BARRIER_PROBES = 5


def scored_nodes(grid, margin: float) -> np.ndarray:
    """
    Interior nodes whose fitting window holds only interior nodes and which lie at chart distance
    >= margin from the edge of the truncated domain.
    """
    reach = (FIT_WINDOW // 2 + 1) * float(np.max(grid.spacing))
    if not grid.case.is_parabolic:
        reach *= math.sqrt(grid.case.n)
    return grid.interior & (boundary_distance(grid) >= max(margin, reach) - 1e-12)


def curvature_deviation(u, H: float, margin: float = 0.0) -> float:
    """max |H_est - H| over the scored vertices of the embedded graph, NaN if none has an estimate."""
    curvature = numeric_mean_curvature(embed_graph(u))
    inside = scored_nodes(u.grid, margin) & np.isfinite(curvature)
    if not np.any(inside):
        return math.nan
    return float(np.max(np.abs(curvature[inside] - H)))


def observed_order(coarse_dev: float, fine_dev: float, coarse_h: float, fine_h: float) -> float:
    if not (coarse_dev > ORDER_FLOOR and fine_dev > ORDER_FLOOR):
        return math.nan
    return math.log(coarse_dev / fine_dev) / math.log(coarse_h / fine_h)


class HypCMCModel:
    def __init__(self, out_dir: str = None, oracle_suite: str = DEFAULT_ORACLE_SUITE):
        """hypcmc model object

        Args:
            out_dir: Output directory for artifacts
            oracle_suite: Model-surface suite regressed by oracle mode

        """
        if out_dir is None:
            self.out_dir = tempfile.TemporaryDirectory(prefix="hypcmc_out_").name
        else:
            self.out_dir = out_dir

        if not os.path.exists(self.out_dir):
            os.makedirs(self.out_dir, exist_ok=True)

        self.oracle_suite = oracle_suite

        # results of the last run
        self.last_config = None
        self.last_summary = None
        self.last_solution = None
        self.last_certificates = None

    def artifact(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def run(self, config: RunConfig) -> dict:
        """
        Run the pipeline selected by config.mode and export its artifacts.

        Returns:
            dict: The summary written to summary.json.
        """
        self.last_config = config
        pipelines = {
            RunMode.SOLVE: self.solve,
            RunMode.VERIFY: self.verify,
            RunMode.BARRIERS: self.barriers,
            RunMode.ORACLE: self.oracle,
        }
        log.info(f"running {config.mode.value} mode, artifacts go to: {self.out_dir}")
        return pipelines[config.mode](config)

    @staticmethod
    def problem(config: RunConfig) -> AsymptoticProblem:
        case = ChartCase(config.problem.case, config.problem.n)
        phi = make_boundary_graph(case, config.problem.boundary, config.base_dir)
        return AsymptoticProblem(case, phi, config.problem.H)

    @staticmethod
    def check_solution(u, problem: AsymptoticProblem, margin: float = 0.0) -> tuple:
        """
        Recompute the acceptance checks of a solution; the curvature oracle skips vertices within
        margin of the domain edge.

        Returns:
            tuple: (checks dict keyed like CHECKS plus the sandwich margins, trace report or None)
        """
        checks = dict(residual_max=residual(u, problem.H).max_norm)
        checks["oracle_H_max_dev"] = curvature_deviation(u, problem.H, margin)
        try:
            trace = boundary_trace(u, problem.boundary)
            checks["trace_max_err"] = trace.max_error
        except TraceError as err:
            log.warning(f"trace check skipped: {err}")
            trace = None
            checks["trace_max_err"] = math.nan
        lower, upper = sandwich_margins(u, problem.boundary, problem.H)
        checks.update(sandwich_lower_margin=lower, sandwich_upper_margin=upper, sandwich_min_margin=min(lower, upper))
        return checks, trace

    def solve(self, config: RunConfig) -> dict:
        problem = self.problem(config)
        solution = asymptotic_solve(problem, config.solver)
        self.last_solution = solution
        checks, trace = self.check_solution(solution.u, problem, config.solver.oracle_margin)

        diagnostics = solution.diagnostics
        summary = dict(checks)
        summary.update(
            residual_l2=diagnostics["residual_l2"],
            gradient_sup=diagnostics["gradient_sup"],
            sensitivity=diagnostics.get("sensitivity", math.nan),
            seed_drift=diagnostics.get("seed_drift", math.nan),
            newton_iterations=sum(step["iterations"] for step in diagnostics["continuation"]),
            warnings=len(solution.warnings),
        )

        export_solution(self.artifact("solution.csv"), solution.u)
        if config.output.mesh:
            mesh = embed_graph(solution.u)
            for fmt in config.output.formats:
                export_mesh(mesh, self.artifact(f"mesh.{fmt.value}"), fmt)
        if config.output.report:
            self.export_checks(self.artifact("report.csv"), summary)
            if trace is not None:
                names = [f"q{k + 1}" for k in range(trace.probes.shape[-1])]
                targets = problem.boundary(trace.probes)
                rows = [
                    [*map(float, probe), float(limit), float(target), float(error)]
                    for probe, limit, target, error in zip(trace.probes, trace.limits, targets, trace.errors)
                ]
                export_report(self.artifact("trace.csv"), names + ["limit", "phi", "error"], rows)

        if config.solver.refinement:
            summary.update(self.refinement_study(config, problem))

        failed, _ = self.grade_checks(checks, self.tolerances(config, solution.grid))
        if (summary["seed_drift"] or 0.0) > SEED_TOL:
            failed.append("seed_drift")
            log.error(f"check seed_drift failed: {summary['seed_drift']:.6g} against tolerance {SEED_TOL:.1e}")
        summary["failed"] = len(failed)
        self.export_results(config, summary, warnings=solution.warnings, failed=failed)
        if failed:
            raise VerificationError(failed, f"{problem.case.kind.value} solve at H = {problem.H:.6g}")
        return summary

    def refinement_study(self, config: RunConfig, problem: AsymptoticProblem) -> dict:
        """Re-solve at each refinement spacing and tabulate residual, oracle, trace and gradient sup."""
        rows, sups = [], []
        for spacing in config.solver.refinement:
            cfg = config.solver.replace(spacing=spacing, sensitivity=False, probe_seeds=False)
            solution = asymptotic_solve(problem, cfg)
            checks, _ = self.check_solution(solution.u, problem, cfg.oracle_margin)
            sups.append(solution.diagnostics["gradient_sup"])
            rows.append(
                [float(spacing), checks["residual_max"], checks["oracle_H_max_dev"], checks["trace_max_err"], sups[-1]]
            )
            log.info(f"refinement h = {spacing:.6g}: oracle deviation {checks['oracle_H_max_dev']:.3e}")
        if config.output.report:
            export_report(
                self.artifact("refinement.csv"),
                ["spacing", "residual_max", "oracle_H_max_dev", "trace_max_err", "gradient_sup"],
                rows,
            )
        return dict(gradient_drift=refinement_drift(sups))

    @staticmethod
    def tolerances(config: RunConfig, grid) -> dict:
        limits = dict(
            residual_max=config.solver.abs_tol,
            oracle_H_max_dev=ORACLE_TOL,
            trace_max_err=ORACLE_TOL,
            sandwich_min_margin=discretization_tolerance(grid),
        )
        configured = config.verify.get("tolerances", {})
        unknown = sorted(set(configured) - set(CHECKS))
        if unknown:
            raise ConfigError(f"unknown verification checks {unknown}, expected some of {sorted(CHECKS)}")
        limits.update({name: parse_scalar(value, name) for name, value in configured.items()})
        return limits

    @staticmethod
    def grade_checks(checks: dict, limits: dict) -> tuple:
        """
        Compare checks with their limits; NaN checks are skipped.

        Returns:
            tuple: (names of the failed checks, rows of check, value, tolerance, status)
        """
        failed, rows = [], []
        for name, below in CHECKS.items():
            value = checks[name]
            if math.isnan(value):
                log.warning(f"check {name} did not run")
                rows.append([name, value, limits[name], "skipped"])
                continue
            if below:
                passed = value <= limits[name] + (RESIDUAL_SLACK if name == "residual_max" else 0.0)
            else:
                passed = value >= -limits[name]
            if not passed:
                failed.append(name)
                log.error(f"check {name} failed: {value:.6g} against tolerance {limits[name]:.6g}")
            rows.append([name, value, limits[name], "passed" if passed else "failed"])
        return failed, rows

    def verify(self, config: RunConfig) -> dict:
        """
        Reload a solution CSV, recompute its checks and compare them with the tolerances.

        Raises:
            VerificationError: Some check exceeded its tolerance; the message names every one.
        """
        problem = self.problem(config)
        path = config.resolve(config.verify.get("solution"))
        if path is None:
            raise ConfigError("verify mode needs verify.solution, the path of a solution CSV")
        grid = truncated_grid(problem.case, config.solver)
        u = read_solution(path, grid)
        checks, _ = self.check_solution(u, problem, config.solver.oracle_margin)
        limits = self.tolerances(config, grid)

        failed, rows = self.grade_checks(checks, limits)
        if config.output.report:
            export_report(self.artifact("verify.csv"), ["check", "value", "tolerance", "status"], rows)
        summary = dict(checks, failed=len(failed))
        self.export_results(config, summary, failed=failed)
        if failed:
            raise VerificationError(failed, f"solution {path}")
        log.info(f"all checks passed for {path}")
        return summary

    @staticmethod
    def barrier_probes(config: RunConfig, case: ChartCase) -> np.ndarray:
        probes = config.barriers.get("probes")
        if probes is not None:
            return np.array([[parse_scalar(value, "probes") for value in np.atleast_1d(probe)] for probe in probes])
        if case.is_parabolic:
            probes = np.zeros((DEFAULT_BARRIER_PROBES, case.n - 1))
            probes[:, 0] = np.linspace(-1.0, 1.0, DEFAULT_BARRIER_PROBES)
            return probes
        if case.n == 2:
            angles = np.linspace(0.0, 2.0 * np.pi, DEFAULT_BARRIER_PROBES, endpoint=False)
            return np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        samples = np.random.default_rng(config.seed).standard_normal((DEFAULT_BARRIER_PROBES, case.n))
        return samples / np.linalg.norm(samples, axis=-1, keepdims=True)

    def barriers(self, config: RunConfig) -> dict:
        """
        Barrier certificates at the configured probes, optionally checked against a fresh solve.

        Raises:
            VerificationError: The solution leaves the final barriers at some probe.
        """
        problem = self.problem(config)
        probes = self.barrier_probes(config, problem.case)
        k_max = int(config.barriers.get("k_max", config.solver.k_max))
        kwargs = dict(k_max=k_max, stagnation=config.solver.stagnation)
        if config.barriers.get("solve", False):
            solution = asymptotic_solve(problem, config.solver)
            self.last_solution = solution
            kwargs.update(solution=solution, tol=discretization_tolerance(solution.grid))
        certificates = certify_probes(probes, problem.boundary, problem.H, **kwargs)
        self.last_certificates = certificates

        columns = ["probe"] + [f"q{k + 1}" for k in range(probes.shape[-1])] + ["k", "sigma", "w", "gap", "target"]
        rows = []
        for index, cert in enumerate(certificates):
            for k, (sigma, w) in enumerate(zip(cert.sub_values, cert.super_values)):
                rows.append([index, *map(float, probes[index]), k, sigma, w, w - sigma, cert.target])
        if config.output.report:
            export_report(self.artifact("barriers.csv"), columns, rows)

        summary = dict(
            barrier_max_gap=max(cert.gaps[-1] for cert in certificates),
            barrier_converged=sum(cert.converged for cert in certificates),
            barrier_stagnated=sum(cert.stagnated for cert in certificates),
            barrier_max_iterations=max(cert.iterations for cert in certificates),
        )
        failed = []
        sandwiches = [cert.sandwich for cert in certificates if cert.sandwich is not None]
        if sandwiches:
            summary["sandwich_min_margin"] = min(min(s.lower_margin, s.upper_margin) for s in sandwiches)
            summary["sandwich_violations"] = sum(s.violations for s in sandwiches)
            summary["sandwich_tolerance"] = sandwiches[0].tol
            if summary["sandwich_violations"]:
                failed.append("sandwich_min_margin")
        self.export_results(config, summary, failed=failed)
        if failed:
            raise VerificationError(failed, f"{summary['sandwich_violations']} nodes leave the barriers")
        return summary

    def oracle_cases(self, config: RunConfig) -> tuple:
        suite = load_yaml_mapping(self.oracle_suite)
        cases = suite.get("cases", {})
        chosen = config.oracle.get("cases", sorted(cases))
        missing = sorted(set(chosen) - set(cases))
        if missing:
            raise ConfigError(f"unknown oracle cases {missing}, the suite has {sorted(cases)}")
        spacings = [parse_scalar(value, "spacings") for value in config.oracle.get("spacings", suite["spacings"])]
        if not spacings or min(spacings) <= 0.0:
            raise ConfigError(f"oracle spacings must be positive, got {spacings}")
        tolerance = parse_scalar(config.oracle.get("tolerance", suite["tolerance"]), "tolerance")
        return {name: cases[name] for name in chosen}, sorted(spacings, reverse=True), tolerance

    @staticmethod
    def oracle_mesh(entry: dict, spacing: float, n: int) -> tuple:
        """Mesh and exact mean curvature of one oracle case."""
        if "sphere" in entry:
            center = [parse_scalar(value, "center") for value in entry["sphere"]["center"]]
            radius = parse_scalar(entry["sphere"]["radius"], "radius")
            return sphere_mesh(center, radius, spacing), sphere_mean_curvature(center[-1], radius)
        params = dict(entry)
        for name in ("offset", "slope", "radius", "angle"):
            if name in params:
                params[name] = parse_scalar(params[name], name)
        try:
            surface = ModelSurface(**params)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad oracle surface {entry}: {err}") from err
        return mesh_model_surface(surface, spacing, n), exact_mean_curvature(surface)

    def oracle(self, config: RunConfig) -> dict:
        """
        Regress numeric against exact mean curvature of the model surfaces at each spacing.

        Raises:
            VerificationError: A case deviates by more than the tolerance at the finest spacing.
        """
        cases, spacings, tolerance = self.oracle_cases(config)
        rows, finest, failed = [], {}, []
        for name, entry in cases.items():
            previous = None
            for spacing in spacings:
                mesh, expected = self.oracle_mesh(entry, spacing, config.problem.n)
                curvature = numeric_mean_curvature(mesh)
                deviation = float(np.nanmax(np.abs(curvature - expected)))
                order = math.nan if previous is None else observed_order(previous[1], deviation, previous[0], spacing)
                rows.append([name, spacing, expected, deviation, order])
                previous = (spacing, deviation)
            finest[name] = previous[1]
            log.info(f"oracle {name}: deviation {previous[1]:.3e} at h = {previous[0]:.6g}")
            if previous[1] > tolerance:
                failed.append(name)

        if config.output.report:
            export_report(self.artifact("oracle.csv"), ["case", "spacing", "expected", "max_dev", "order"], rows)
        summary = dict(oracle_H_max_dev=max(finest.values()), oracle_tolerance=tolerance)
        summary.update({f"oracle_{name}": value for name, value in finest.items()})
        self.export_results(config, summary, failed=failed)
        if failed:
            raise VerificationError(failed, f"curvature oracle tolerance {tolerance:.3g}")
        return summary

    @staticmethod
    def export_checks(path: str, summary: dict) -> str:
        rows = [[name, summary[name]] for name in sorted(summary) if isinstance(summary[name], (int, float))]
        return export_report(path, ["check", "value"], rows)

    def export_results(self, config: RunConfig, summary: dict, **extra):
        """Write summary.json and the manifest with the config echo."""
        self.last_summary = summary
        export_summary(self.artifact("summary.json"), summary)
        export_data = dict(cl_args=" ".join(sys.argv), config=asdict(config), summary=summary)
        export_data.update(extra)
        export_manifest(self.artifact("manifest.yaml"), export_data)
        log.info(f"hypcmc results exported to: {self.out_dir}")


def main():
    # parse arguments and sanitize them
    parser = get_parser()
    args = parser.parse_args()

    # setup logging
    loglevel = getattr(logging, args.loglevel.upper())
    setup_logger(loglevel=loglevel)

    log.info("hypcmc called with: " + " ".join(sys.argv))

    model_args, run_args = get_clean_args(args)

    try:
        config = load_run_config(run_args["config"], run_args["mode"])
        if model_args["out_dir"] is None:
            model_args.update(out_dir=config.resolve(config.output.directory))
        model = HypCMCModel(**model_args)
        if config.output.log_file is not None:
            setup_logger(file_name=model.artifact(config.output.log_file))
        model.run(config)
    except HypCMCError as err:
        log.error(str(err))
        clear_handlers()
        sys.exit(err.exit_code)
    except DomainError as err:
        log.error(f"invalid input: {err}")
        clear_handlers()
        sys.exit(ConfigError.exit_code)

    clear_handlers()
    log.info("hypcmc done executing...")

    return model


if __name__ == "__main__":
    main()
