# Copyright (c) Meta Platforms, Inc. and affiliates.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import math
import os
from enum import Enum

"""
Root directory of the project.
"""
HYPCMC_ROOT = os.path.dirname(__file__) + "/.."


class FieldKind(Enum):
    """
    Enum representing the two Killing fields of the half-space model in canonical position.
    """

    HYPERBOLIC = "hyperbolic"  # dilation, axis 0 <-> infinity
    PARABOLIC = "parabolic"  # unit horizontal translation fixing infinity


class ChartKind(Enum):
    """
    Enum representing the coordinate charts of the totally geodesic hypersurface M.
    """

    PARABOLIC = "parabolic"  # M = {x_1 = 0}
    HYPERBOLIC = "hyperbolic"  # M = unit upper hemisphere


class SurfaceVariant(Enum):
    """
    Enum representing the exact CMC model surfaces.
    """

    VERTICAL_PLANE = "vertical_plane"
    TILTED_PLANE = "tilted_plane"
    HEMISPHERE = "hemisphere"
    SPHERICAL_CAP = "spherical_cap"
    HOROSPHERE = "horosphere"


class Orientation(Enum):
    """
    Enum representing the normal field of a model surface, named after its flow-facing sheet.
    """

    TOWARD_FLOW = "toward_flow"
    AGAINST_FLOW = "against_flow"


class SheetSide(Enum):
    """
    Enum representing which sheet of a model surface is read as a Killing graph.
    """

    FLOW_FACING = "flow_facing"
    M_FACING = "m_facing"


class CapSide(Enum):
    """
    Enum representing the complementary component a cap's mean curvature vector points into.
    """

    EXTERIOR = "exterior"
    INTERIOR = "interior"


class Side(Enum):
    """
    Enum representing the two sides of the boundary curve in the ideal boundary.
    """

    CONTAINS_M = "contains_m"
    OPPOSITE_M = "opposite_m"


class BoundaryRepresentation(Enum):
    """
    Enum representing how a boundary datum is stored.
    """

    PRESET = "preset"
    TABLE = "table"
    FUNCTION = "function"


class BCPolicy(Enum):
    """
    Enum representing the data placed on artificial truncation edges.
    """

    BARRIER_BLEND = "barrier_blend"
    CONSTANT_EXTENSION = "constant_extension"


class RunMode(Enum):
    """
    Enum representing the command line pipelines.
    """

    SOLVE = "solve"
    VERIFY = "verify"
    BARRIERS = "barriers"
    ORACLE = "oracle"


class MeshFormat(Enum):
    """
    Enum representing the supported mesh export formats.
    """

    PLY = "ply"
    OBJ = "obj"


"""
Default dimension of M (surfaces in hyperbolic 3-space).
"""
DEFAULT_DIMENSION = 2

"""
Newton iteration defaults.
"""
DEFAULT_MAX_ITER = 40
DEFAULT_ABS_TOL = 1e-8
DEFAULT_BACKTRACK = 0.5
DEFAULT_MIN_STEP = 1e-6

"""
Largest increment of H between continuation steps.
"""
DEFAULT_H_STEP = 0.1

"""
Truncation defaults: distance of the ideal edge, grid spacing, box half-width and height.
"""
DEFAULT_EPSILON = 1.0 / 16
DEFAULT_SPACING = 1.0 / 16
DEFAULT_HALF_WIDTH = 2.0
DEFAULT_HEIGHT = 2.0

"""
Largest truncation sensitivity accepted without a warning.
"""
DEFAULT_SENSITIVITY_THRESHOLD = 1e-2

"""
Barrier sequence defaults.
"""
DEFAULT_K_MAX = 12
DEFAULT_STAGNATION = 1e-10

"""
Ball radius margin above the Killing-cylinder curvature threshold.
"""
DEFAULT_BALL_MARGIN = 0.1

"""
Acceptance tolerances.
"""
SANDWICH_TOL = 1e-8
SEED_TOL = 1e-6
ORACLE_TOL = 0.05

"""
Samples per dimension of the coarse clear-sphere scan.
"""
CLEAR_SPHERE_SCAN = 2001

"""
Half-width of the window over which boundary data are sampled for bounds and moduli.
"""
DEFAULT_SAMPLE_WINDOW = 10.0


def tilt_slope(H: float) -> float:
    """
    Slope of the tilted plane with mean curvature H.

    Args:
        H (float): Mean curvature with |H| < 1.

    Returns:
        float: m with m / sqrt(1 + m^2) = H.
    """
    return H / math.sqrt(1.0 - H * H)
