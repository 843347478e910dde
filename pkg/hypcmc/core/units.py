# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Defines the pint registry used for configuration scalars
- Geometry in the half-space model is dimensionless, so the only dimension that matters is angle
- Config values may be plain numbers or expressions such as "1/64", "60 degree" or "pi / 3"
- Angles are always returned in radians
"""

import math
import numbers

import pint

from .errors import ConfigError

units = pint.UnitRegistry()
pint.set_application_registry(units)  # required for multiprocessing

# Angle units
rad = units("radian")
deg = units("degree")
dimensionless = units("dimensionless")


def parse_scalar(value, name: str = "value") -> float:
    """
    Convert a config scalar to a float.

    Args:
        value: A number or a string expression understood by pint.
        name (str): Field name used in error messages.

    Returns:
        float: The value, converted to radians if it carried an angle unit.

    Raises:
        ConfigError: If the value cannot be parsed, has a non-angle dimension or is not finite.
    """
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if isinstance(value, numbers.Real):
        result = float(value)
    elif isinstance(value, str):
        try:
            parsed = units(value)
        except (pint.errors.PintError, SyntaxError, TypeError, AttributeError) as err:
            raise ConfigError(f"{name}: cannot parse {value!r} ({err})") from err
        if isinstance(parsed, pint.Quantity):
            if parsed.check(rad):
                result = float(parsed.to(rad).magnitude)
            elif parsed.dimensionless:
                result = float(parsed.to(dimensionless).magnitude)
            else:
                raise ConfigError(f"{name} must be dimensionless or an angle, got {parsed.units}")
        else:
            result = float(parsed)
    else:
        raise ConfigError(f"{name} must be a number or expression, got {type(value).__name__}")
    if not math.isfinite(result):
        raise ConfigError(f"{name} must be finite, got {value!r}")
    return result
