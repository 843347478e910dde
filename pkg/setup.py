# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from setuptools import find_namespace_packages, setup

with open("requirements.txt") as handle:
    requirements = [line.strip() for line in handle if line.strip() and not line.startswith("#")]

setup(
    name="hypcmc",
    version="1.0",
    description="Asymptotic Plateau solver and verification harness for CMC Killing graphs in hyperbolic space",
    packages=find_namespace_packages(include=["hypcmc", "hypcmc.*"]),
    package_data={"hypcmc": ["models/*.yaml", "configs/*.json", "configs/*.csv"]},
    install_requires=requirements,
    python_requires=">=3.10",
    entry_points={"console_scripts": ["hypcmc=hypcmc.hypcmc_model:main"]},
)
