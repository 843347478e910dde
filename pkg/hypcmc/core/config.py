# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import json
import os
from dataclasses import dataclass, field, fields

import yaml

from .common import (
    BCPolicy,
    ChartKind,
    DEFAULT_DIMENSION,
    HYPCMC_ROOT,
    MeshFormat,
    RunMode,
)
from .errors import ConfigError
from .units import parse_scalar

DEFAULT_SOLVER_CONFIG = f"{HYPCMC_ROOT}/models/solver_defaults.yaml"
DEFAULT_ORACLE_SUITE = f"{HYPCMC_ROOT}/models/oracle_suite.yaml"

THREADS_ENV = "HYPCMC_THREADS"

PROBLEM = "problem"
SOLVER = "solver"
OUTPUT = "output"


def load_yaml_mapping(path: str) -> dict:
    """Load a YAML document that must be a mapping."""
    try:
        with open(path) as handle:
            data = yaml.load(handle, Loader=yaml.FullLoader)
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"cannot load {path}: {err}") from err
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping, got {type(data).__name__}")
    return data


def worker_threads() -> int:
    """Worker cap from HYPCMC_THREADS, 1 when unset."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return 1
    try:
        value = int(raw)
    except ValueError as err:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from err
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


@dataclass
class SolverConfig:
    """
    Newton, continuation and truncation settings.

    Values omitted from a run config come from the packaged solver_defaults.yaml.
    """

    max_iter: int = None
    abs_tol: float = None
    backtrack: float = None
    min_step: float = None
    h_step: float = None
    h_steps: list = None  # explicit continuation schedule, starts at 0
    epsilon: float = None
    spacing: float = None
    half_width: float = None
    height: float = None
    refinement: list = None  # spacings for refinement studies
    policy: BCPolicy = None
    sensitivity: bool = None
    sensitivity_threshold: float = None
    probe_seeds: bool = None
    k_max: int = None
    stagnation: float = None
    ball_margin: float = None
    oracle_margin: float = None

    def __post_init__(self):
        defaults = None
        for item in fields(self):
            if getattr(self, item.name) is None:
                if defaults is None:
                    defaults = load_yaml_mapping(DEFAULT_SOLVER_CONFIG)
                setattr(self, item.name, defaults.get(item.name))

        for name in ("abs_tol", "backtrack", "min_step", "h_step", "epsilon", "spacing", "half_width",
                     "height", "sensitivity_threshold", "stagnation", "ball_margin", "oracle_margin"):
            setattr(self, name, parse_scalar(getattr(self, name), name))
        self.max_iter = int(self.max_iter)
        self.k_max = int(self.k_max)
        self.sensitivity = bool(self.sensitivity)
        self.probe_seeds = bool(self.probe_seeds)
        try:
            self.policy = BCPolicy(self.policy)
        except ValueError as err:
            raise ConfigError(f"unknown boundary policy {self.policy!r}") from err
        if self.h_steps is not None:
            self.h_steps = [parse_scalar(value, "h_steps") for value in self.h_steps]
            if not self.h_steps or self.h_steps[0] != 0.0:
                raise ConfigError(f"continuation steps must start at 0, got {self.h_steps}")
        self.refinement = [parse_scalar(value, "refinement") for value in (self.refinement or [])]

        if self.abs_tol <= 0.0:
            raise ConfigError(f"abs_tol must be positive, got {self.abs_tol}")
        if self.epsilon <= 0.0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.spacing <= 0.0 or self.half_width <= 0.0 or self.height <= self.epsilon:
            raise ConfigError("grid spacing, half width and height must be positive with height > epsilon")
        if not 0.0 < self.backtrack < 1.0:
            raise ConfigError(f"backtracking factor must lie in (0, 1), got {self.backtrack}")
        if self.h_step <= 0.0 or self.max_iter < 1 or self.k_max < 1:
            raise ConfigError("h_step, max_iter and k_max must be positive")
        if self.oracle_margin < 0.0:
            raise ConfigError(f"oracle_margin must be non-negative, got {self.oracle_margin}")

    def replace(self, **changes) -> "SolverConfig":
        values = {item.name: getattr(self, item.name) for item in fields(self)}
        values.update(changes)
        return SolverConfig(**values)

    def continuation(self, H: float) -> list:
        """H values visited by continuation, from 0 to H in steps of at most h_step."""
        if self.h_steps is not None:
            steps = [value for value in self.h_steps if abs(value) < abs(H) and value * H >= 0.0]
            return steps + [H] if not steps or steps[-1] != H else steps
        count = max(1, int(-(-abs(H) // self.h_step)))
        return [H * k / count for k in range(count + 1)]


@dataclass
class ProblemSpec:
    case: ChartKind = ChartKind.PARABOLIC
    n: int = DEFAULT_DIMENSION
    boundary: dict = None
    H: float = 0.0

    def __post_init__(self):
        try:
            self.case = ChartKind(self.case)
        except ValueError as err:
            raise ConfigError(f"unknown chart case {self.case!r}") from err
        self.n = int(self.n)
        if self.n < 2:
            raise ConfigError(f"dimension n must be at least 2, got {self.n}")
        self.H = parse_scalar(self.H, "H")
        if not abs(self.H) < 1.0:
            raise ConfigError(f"mean curvature must satisfy |H| < 1, got {self.H}")
        if self.boundary is None:
            self.boundary = {"preset": "constant", "a": 1.0}


@dataclass
class OutputSpec:
    directory: str = None
    mesh: bool = True
    formats: list = None
    report: bool = True
    log_file: str = None

    def __post_init__(self):
        try:
            self.formats = [MeshFormat(value) for value in (self.formats or [MeshFormat.PLY.value])]
        except ValueError as err:
            raise ConfigError(f"unknown mesh format in {self.formats}") from err


@dataclass
class RunConfig:
    """
    One run of the command line tool, parsed from a single JSON document.

    Attributes:
        mode (RunMode): Pipeline to run.
        problem (ProblemSpec): Chart case, dimension, boundary datum and H.
        solver (SolverConfig): Solver settings over the packaged defaults.
        output (OutputSpec): Artifact settings.
        verify (dict): Solution file and tolerances for verify mode.
        barriers (dict): Probe points and k_max for barriers mode.
        oracle (dict): Spacings and cases for oracle mode.
        seed (int): Seed for any randomized sampling.
        file (str): The config file path.
    """

    mode: RunMode = RunMode.SOLVE
    problem: ProblemSpec = None
    solver: SolverConfig = None
    output: OutputSpec = None
    verify: dict = field(default_factory=dict)
    barriers: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    seed: int = 0
    file: str = None

    def __post_init__(self):
        try:
            self.mode = RunMode(self.mode)
        except ValueError as err:
            raise ConfigError(f"unknown mode {self.mode!r}") from err
        self.problem = self._section(ProblemSpec, self.problem, PROBLEM)
        self.solver = self._section(SolverConfig, self.solver, SOLVER)
        self.output = self._section(OutputSpec, self.output, OUTPUT)
        self.seed = int(self.seed)

    @staticmethod
    def _section(kind, data, name):
        if isinstance(data, kind):
            return data
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        try:
            return kind(**data)
        except TypeError as err:
            raise ConfigError(f"section {name!r}: {err}") from err

    @property
    def base_dir(self) -> str:
        return os.path.dirname(os.path.abspath(self.file)) if self.file else os.getcwd()

    def resolve(self, path: str) -> str:
        """Resolve a config path against the config file's directory."""
        if path is None or os.path.isabs(path):
            return path
        return os.path.join(self.base_dir, path)


def load_run_config(path: str, mode: str = None) -> RunConfig:
    """
    Parse a run config file.

    Args:
        path (str): JSON config path.
        mode (str, optional): Mode override from the command line.

    Returns:
        RunConfig: The parsed config.
    """
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from err
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    if mode is not None:
        data["mode"] = mode
    try:
        return RunConfig(**data, file=path)
    except TypeError as err:
        raise ConfigError(f"config {path}: {err}") from err
