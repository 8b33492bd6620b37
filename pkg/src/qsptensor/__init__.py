"""Multi-time quantum correlation kernels, sequential measurements and process tensors."""

from pathlib import Path

__version__ = "0.1.0"

FIXTURES = Path(__file__).with_name("fixtures")


def fixture_path(name: str) -> Path:
    """Path of a bundled scenario file, e.g. ``fixture_path("example1.json")``."""
    return FIXTURES / name
