"""Learned per-instance data filtering around mini-batch SGD."""

from .kernels import available_backends, set_backend

__version__ = "0.1.0"

__all__ = ["available_backends", "set_backend", "__version__"]
