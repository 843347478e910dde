# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Exception hierarchy shared by every module.

Each top-level family carries the exit status the command line reports for it:
1 for configuration problems, 2 for solver failures and 3 for failed verification.
"""


class HypCMCError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(HypCMCError):
    """Run configuration could not be parsed or validated."""

    exit_code = 1


class TableParseError(ConfigError):
    """A boundary sample table is malformed or holds non-finite values."""


class BoundaryValidationError(ConfigError):
    """
    Boundary datum violates a hypothesis of the asymptotic problem.

    Attributes:
        hypothesis (str): Short name of the failed hypothesis.
    """

    def __init__(self, hypothesis: str, detail: str = "") -> None:
        self.hypothesis = hypothesis
        message = f"boundary datum rejected: {hypothesis}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class ExportError(HypCMCError):
    """Writing an artifact failed. The message names the path."""

    exit_code = 1


class DomainError(ValueError):
    """A point lies outside the half-space or outside a chart domain."""


class CurvatureRangeError(DomainError):
    """Requested mean curvature has |H| >= 1."""


class SolverError(HypCMCError):
    """Base class for numerical failures."""

    exit_code = 2


class NewtonStagnationError(SolverError):
    """
    Damped Newton could not reduce the residual any further.

    Attributes:
        last_iterate: The last accepted GraphFunction.
        history (list[float]): Residual max-norms of the accepted iterates.
    """

    def __init__(self, message: str, last_iterate=None, history=None) -> None:
        super().__init__(message)
        self.last_iterate = last_iterate
        self.history = list(history or [])


class SingularJacobianError(SolverError):
    """The sparse Newton system could not be solved."""


class GridMismatchError(SolverError):
    """Two grid functions live on different grids."""


class ClearSphereError(SolverError):
    """
    Clear-sphere minimization failed.

    Attributes:
        diagnostics (dict): Scan and refinement details.
    """

    def __init__(self, message: str, diagnostics: dict = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ZeroRadiusError(ClearSphereError):
    """The requested sphere center lies on the boundary curve."""


class BallConditionError(SolverError):
    """
    A geodesic ball fails the Killing-cylinder curvature condition.

    Attributes:
        cylinder_curvature (float): Smallest computed cylinder mean curvature on the sphere.
        required (float): The threshold it had to reach.
    """

    def __init__(self, cylinder_curvature: float, required: float) -> None:
        super().__init__(
            f"ball rejected: cylinder mean curvature {cylinder_curvature:.6g} "
            f"is below the required {required:.6g}"
        )
        self.cylinder_curvature = cylinder_curvature
        self.required = required


class TraceError(SolverError):
    """Not enough grid layers next to the ideal edge to extrapolate a trace."""


class VerificationError(HypCMCError):
    """
    One or more acceptance checks failed.

    Attributes:
        failed (list[str]): Names of the failed checks.
    """

    exit_code = 3

    def __init__(self, failed: list, detail: str = "") -> None:
        self.failed = list(failed)
        message = "verification failed: " + ", ".join(self.failed)
        if detail:
            message += f" ({detail})"
        super().__init__(message)
