"""Certified device-independent entropy and key-rate bounds.

The pipeline: Gauss-Radau quadrature turns the conditional von Neumann
entropy into a sum of noncommutative polynomial minimizations, each of
which is relaxed to a semidefinite program over a moment matrix and
solved with the embedded interior-point solver.  Dual solutions yield
affine min-tradeoff functions.
"""

from dientropy.quadrature import QuadratureRule, f_kernel, gauss_radau, rational_log_lower

__all__ = [
    "QuadratureRule",
    "gauss_radau",
    "f_kernel",
    "rational_log_lower",
]

__version__ = "0.1.0"
