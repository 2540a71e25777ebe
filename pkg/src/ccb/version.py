"""Version information for the ccb package."""

import pathlib
from importlib.metadata import PackageNotFoundError
from importlib.metadata import version as _metadata_version

try:
    import tomllib
except ImportError:  # Python < 3.11
    try:
        import tomli as tomllib
    except ImportError:
        tomllib = None

PYPROJECT = pathlib.Path(__file__).resolve().parent.parent.parent / "pyproject.toml"


def _pyproject_version():
    # Source checkout: read the version next to the src/ directory
    if tomllib is None or not PYPROJECT.exists():
        return "unknown"
    with open(PYPROJECT, "rb") as f:
        return tomllib.load(f).get("project", {}).get("version", "unknown")


try:
    VERSION = _metadata_version("ccb")
except PackageNotFoundError:
    VERSION = _pyproject_version()


def get_version():
    """Return the version of ccb."""
    return VERSION
