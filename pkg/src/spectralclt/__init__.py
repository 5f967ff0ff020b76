"""Gaussian-limit diagnostics for nonlinear functionals of isotropic Gaussian fields."""

__version__ = "0.1.0"
