"""Setup script for stablelab."""

from setuptools import find_packages, setup

setup(
    name="stablelab",
    version="0.1.0",
    packages=find_packages(include=["core*", "skills*", "agents*", "stablelab*"]),
    package_data={"stablelab": ["presets/*.yaml"]},
    python_requires=">=3.10",
)
