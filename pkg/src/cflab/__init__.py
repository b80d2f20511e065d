"""Numerical laboratory for Cauchy-Fantappie kernels on model domains in C^n."""

__version__ = "0.1.0"
