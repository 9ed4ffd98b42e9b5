"""Subsampled random forests with infinitesimal-jackknife variance estimates."""

__version__ = "0.1.0"
