"""Sparse Group Factor Analysis

A Gibbs-sampling engine for multi-view Bayesian group factor analysis with
group and element-wise sparsity, plus ontology-based validation of the
resulting components.
"""

__version__ = "0.1.0"
__author__ = "sparse-gfa developers"
