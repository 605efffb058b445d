"""Quadrature on the reference triangle (0,0), (1,0), (0,1) and on edges."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_DEGREE = 30


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray       # (n, 2) reference coordinates
    weights: np.ndarray      # (n,), summing to 1/2
    degree: int

    @property
    def barycentric(self) -> np.ndarray:
        x, y = self.points.T
        return np.column_stack([1.0 - x - y, x, y])

    def __len__(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=None)
def quadrature_rule(degree: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi rule exact for polynomials of total degree
    ``degree``; degree 0 and 1 give the centroid rule."""
    degree = int(degree)
    if degree < 0:
        raise QuadratureError("degree must be non-negative")
    if degree > MAX_DEGREE:
        raise QuadratureError(f"degree {degree} exceeds the supported maximum {MAX_DEGREE}")
    n = max(1, math.ceil((degree + 1) / 2))
    t, wt = roots_legendre(n)
    u, wu = roots_jacobi(n, 1.0, 0.0)
    xi = 0.5 * (t + 1.0)
    eta = 0.5 * (u + 1.0)
    X = xi[:, None] * (1.0 - eta[None, :])
    Y = np.broadcast_to(eta[None, :], X.shape)
    W = 0.5 * wt[:, None] * 0.25 * wu[None, :]
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts.setflags(write=False)
    w = W.ravel()
    w.setflags(write=False)
    return QuadratureRule(pts, w, degree)


@lru_cache(maxsize=None)
def edge_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0, 1]."""
    if degree < 0 or degree > 2 * MAX_DEGREE:
        raise QuadratureError(f"edge rule degree {degree} out of range")
    n = max(1, math.ceil((degree + 1) / 2))
    t, w = roots_legendre(n)
    s = 0.5 * (t + 1.0)
    w = 0.5 * w
    s.setflags(write=False)
    w.setflags(write=False)
    return s, w


@dataclass(frozen=True, eq=False)
class EvalLattice:
    points: np.ndarray       # (m, 2) reference coordinates
    n_eval: int

    @property
    def barycentric(self) -> np.ndarray:
        x, y = self.points.T
        return np.column_stack([1.0 - x - y, x, y])


@lru_cache(maxsize=None)
def newton_cotes_lattice(n_eval: int) -> EvalLattice:
    """Regular lattice {(i/n, j/n)} with i + j <= n on the reference triangle."""
    if n_eval < 1:
        raise QuadratureError("n_eval must be at least 1")
    pts = [(i / n_eval, j / n_eval) for j in range(n_eval + 1) for i in range(n_eval + 1 - j)]
    arr = np.array(pts)
    arr.setflags(write=False)
    return EvalLattice(arr, n_eval)
