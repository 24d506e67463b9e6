"""Test package for sparse-gfa."""
