"""
Runtime and dependency versions recorded in run metadata.
"""

import importlib.metadata
import platform
import sys
from dataclasses import asdict, dataclass, field
from typing import Dict, List

from loguru import logger

from mallows_avoid import __version__

TRACKED_PACKAGES = ("numpy", "scipy", "numba", "pydantic", "loguru", "psutil")


@dataclass
class VersionReport:
    """Versions of Python, this package and its numerical stack."""

    python_version: str
    package_version: str
    platform: str
    dependencies: Dict[str, str] = field(default_factory=dict)
    missing: List[str] = field(default_factory=list)

    def as_dict(self) -> Dict[str, object]:
        return asdict(self)


def dependency_version(package_name: str) -> str:
    """
    Installed version of a distribution.

    Raises:
        importlib.metadata.PackageNotFoundError: If it is not installed
    """
    return importlib.metadata.version(package_name)


def collect_versions() -> VersionReport:
    dependencies: Dict[str, str] = {}
    missing: List[str] = []
    for package in TRACKED_PACKAGES:
        try:
            dependencies[package] = dependency_version(package)
        except importlib.metadata.PackageNotFoundError:
            missing.append(package)
    if missing:
        logger.warning(f"Packages without version metadata: {', '.join(missing)}")
    info = sys.version_info
    return VersionReport(
        python_version=f"{info.major}.{info.minor}.{info.micro}",
        package_version=__version__,
        platform=platform.platform(),
        dependencies=dependencies,
        missing=missing,
    )
