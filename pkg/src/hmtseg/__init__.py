"""Hierarchical merge-tree image segmentation."""

__version__ = "0.1.0"
