"""Numerical laboratory for infinity-Wasserstein bounds on log-concave densities
and the long-run behaviour of the infinitesimal trait model."""

__version__ = "0.1.0"
