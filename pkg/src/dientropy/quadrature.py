"""Gauss-Radau quadrature on [0, 1] with a fixed node at 1.

The m-point rule integrates polynomials of degree up to 2m - 2 exactly
against the uniform weight on [0, 1] while pinning the last node to the
right endpoint.  Its weights satisfy ``weights[-1] == 1/m**2``.  Applied
to the integral representation

    ln(x) = int_0^1 (x - 1) / (t (x - 1) + 1) dt,

the rule produces a family of rational functions ``r_m`` that bound the
logarithm from below, touch it to order ``(x - 1)**(2m)`` at ``x = 1``,
and increase monotonically with m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import eigh_tridiagonal

__all__ = ["QuadratureRule", "gauss_radau", "f_kernel", "rational_log_lower"]

_MAX_M = 64
_SNAP_TOL = 1e-9


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of an m-point Gauss-Radau rule on [0, 1].

    Attributes
    ----------
    m : int
        Number of nodes.
    nodes : ndarray
        Strictly increasing points in (0, 1]; the last entry is exactly 1.
    weights : ndarray
        Positive weights; the last entry is exactly 1/m**2.
    """

    m: int
    nodes: NDArray[np.float64]
    weights: NDArray[np.float64]

    @property
    def interior(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Nodes and weights excluding the fixed endpoint at 1."""
        return self.nodes[:-1], self.weights[:-1]


def _monic_offdiag(k: int) -> float:
    # Recurrence coefficient b_k of the monic shifted-Legendre family:
    # pi_{k+1}(x) = (x - 1/2) pi_k(x) - b_k pi_{k-1}(x) on [0, 1].
    return k * k / (4.0 * (4.0 * k * k - 1.0))


def gauss_radau(m: int) -> QuadratureRule:
    """Compute the m-point Gauss-Radau rule on [0, 1] with endpoint 1.

    Builds the Jacobi matrix of the shifted Legendre polynomials, replaces
    the last diagonal entry so that 1 becomes an eigenvalue (the standard
    Radau endpoint modification), and reads nodes and weights off the
    eigendecomposition.

    Parameters
    ----------
    m : int
        Number of nodes, 1 <= m <= 64.

    Returns
    -------
    QuadratureRule

    Raises
    ------
    ValueError
        If m is not a positive integer within the supported range, or if
        the computed endpoint drifts from its known closed form.
    """
    if not isinstance(m, (int, np.integer)) or isinstance(m, bool):
        raise ValueError(f"m must be a positive integer, got {m!r}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if m > _MAX_M:
        raise ValueError(f"m capped at {_MAX_M} (ill-conditioned beyond), got {m}")

    if m == 1:
        return QuadratureRule(1, np.array([1.0]), np.array([1.0]))

    diag = np.full(m, 0.5)
    off = np.sqrt([_monic_offdiag(k) for k in range(1, m)])

    # Radau modification: the last diagonal entry becomes
    #   1 - b_{m-1} * pi_{m-2}(1) / pi_{m-1}(1),
    # with the polynomial ratio evaluated by its own recurrence.
    ratio = 0.5  # pi_1(1) / pi_0(1)
    for k in range(2, m):
        ratio = 0.5 - _monic_offdiag(k - 1) / ratio
    diag[m - 1] = 1.0 - _monic_offdiag(m - 1) / ratio

    vals, vecs = eigh_tridiagonal(diag, off)
    nodes = vals
    weights = vecs[0, :] ** 2  # total mass of the uniform weight is 1

    if abs(nodes[-1] - 1.0) > _SNAP_TOL:
        raise ValueError(f"endpoint node drifted to {nodes[-1]!r}; expected 1")
    if abs(weights[-1] - 1.0 / (m * m)) > _SNAP_TOL:
        raise ValueError(f"endpoint weight drifted to {weights[-1]!r}; expected 1/m^2")
    nodes = nodes.copy()
    weights = weights.copy()
    nodes[-1] = 1.0
    weights[-1] = 1.0 / (m * m)

    if not np.all(np.diff(nodes) > 0) or nodes[0] <= 0:
        raise ValueError("nodes are not strictly increasing inside (0, 1]")
    if not np.all(weights > 0):
        raise ValueError("nonpositive quadrature weight")
    return QuadratureRule(m, nodes, weights)


def f_kernel(t: float, x: float) -> float:
    """Integrand (x - 1) / (t (x - 1) + 1) of the logarithm's integral form.

    For t in [0, 1] and x > 0 the denominator never vanishes.  Notable
    values: f(0, x) = x - 1 and f(1, x) = (x - 1) / x.
    """
    return (x - 1.0) / (t * (x - 1.0) + 1.0)


def rational_log_lower(rule: QuadratureRule, x: float) -> float:
    """Evaluate the rational lower bound r_m(x) <= ln(x).

    r_m(x) = sum_i w_i f(t_i, x); the endpoint contributes
    w_m (x - 1) / x.  r_1(x) = 1 - 1/x, and the family increases with m
    toward ln(x).

    Raises
    ------
    ValueError
        If x <= 0.
    """
    if x <= 0:
        raise ValueError(f"x must be positive, got {x}")
    t = rule.nodes
    return float(np.sum(rule.weights * (x - 1.0) / (t * (x - 1.0) + 1.0)))
