"""Hierarchical goal/action planning for glimpse-based image classification, on a small numpy autograd."""

__version__ = "0.1.0"
