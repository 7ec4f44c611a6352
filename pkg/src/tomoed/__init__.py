"""Estimators, Fisher bounds and A-optimal experiment design for quantum tomography."""

__version__ = "0.1.0"

from .errors import TomoEDError  # noqa: E402

__all__ = ["TomoEDError", "__version__"]
