"""Numerical laboratory for the viscously damped generalized Rao-Nakra sandwich beam."""

__version__ = "0.1.0"
