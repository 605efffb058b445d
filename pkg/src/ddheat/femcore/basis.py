"""Reference-element shape functions.

Every basis is stored as coefficients over an orthonormal polynomial
family on the reference triangle (0,0), (1,0), (0,1). The family itself is
obtained from centered monomials by exact Gram-Schmidt, so it is
hierarchical in the total degree and its mass matrix is the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np
from numpy.polynomial import legendre
from scipy.linalg import null_space

from .quadrature import edge_rule, quadrature_rule

K_MAX = 5
CENTER = 1.0 / 3.0
EXPONENTS = [(d - b, b) for d in range(K_MAX + 1) for b in range(d + 1)]
N_MODES = len(EXPONENTS)

# local edge i is opposite vertex i and runs between these local vertices
EDGE_VERTICES = ((1, 2), (2, 0), (0, 1))
REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


class SpaceKind(Enum):
    H1_CONTINUOUS = "H1"
    L2_DISCONTINUOUS = "L2"
    HDIV_CONFORMING = "HDIV"


MIN_ORDER = {SpaceKind.H1_CONTINUOUS: 1, SpaceKind.L2_DISCONTINUOUS: 0, SpaceKind.HDIV_CONFORMING: 1}


class BasisError(ValueError):
    pass


def n_poly(k: int) -> int:
    """Dimension of polynomials of total degree <= k in two variables."""
    return (k + 1) * (k + 2) // 2


def check_order(kind: SpaceKind, order: int) -> None:
    if order < MIN_ORDER[kind] or order > K_MAX:
        raise BasisError(f"{kind.value} order {order} outside supported range "
                         f"[{MIN_ORDER[kind]}, {K_MAX}]")


def _centered_moment(A: int, B: int) -> Fraction:
    # integral of (x-c)^A (y-c)^B over the reference triangle, c = 1/3
    c = Fraction(1, 3)
    total = Fraction(0)
    for r in range(A + 1):
        for s in range(B + 1):
            coef = math.comb(A, r) * math.comb(B, s) * (-c) ** (A - r + B - s)
            total += coef * Fraction(math.factorial(r) * math.factorial(s), math.factorial(r + s + 2))
    return total


@lru_cache(maxsize=None)
def _modal_coefficients() -> np.ndarray:
    """Lower-triangular C with modal_i = sum_j C[i, j] * monomial_j."""
    gram = [[_centered_moment(a1 + a2, b1 + b2) for (a2, b2) in EXPONENTS] for (a1, b1) in EXPONENTS]
    with mpmath.workdps(60):
        G = mpmath.matrix([[mpmath.mpf(g.numerator) / g.denominator for g in row] for row in gram])
        L = mpmath.cholesky(G)
        Linv = mpmath.inverse(L)
        C = np.array([[float(Linv[i, j]) for j in range(N_MODES)] for i in range(N_MODES)])
    C.setflags(write=False)
    return C


def monomials(points: np.ndarray):
    """Centered monomials and their derivatives, each (N_MODES, n)."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    x = points[:, 0] - CENTER
    y = points[:, 1] - CENTER
    xp = np.ones((K_MAX + 1, len(x)))
    yp = np.ones((K_MAX + 1, len(y)))
    for i in range(1, K_MAX + 1):
        xp[i] = xp[i - 1] * x
        yp[i] = yp[i - 1] * y
    M = np.empty((N_MODES, len(x)))
    Mx = np.zeros_like(M)
    My = np.zeros_like(M)
    for i, (a, b) in enumerate(EXPONENTS):
        M[i] = xp[a] * yp[b]
        if a:
            Mx[i] = a * xp[a - 1] * yp[b]
        if b:
            My[i] = b * xp[a] * yp[b - 1]
    return M, Mx, My


def modal_table(points: np.ndarray):
    """Orthonormal modes and their reference derivatives at points."""
    C = _modal_coefficients()
    M, Mx, My = monomials(points)
    return C @ M, C @ Mx, C @ My


def _project(fn, vector: bool = False) -> np.ndarray:
    """Modal coefficients of polynomial functions of degree <= K_MAX.

    ``fn(points)`` returns (nfun, n) or, if ``vector``, (nfun, 2, n).
    """
    rule = quadrature_rule(2 * K_MAX)
    phi, _, _ = modal_table(rule.points)
    vals = fn(rule.points)
    return (vals * rule.weights) @ phi.T


def _barycentric(points):
    x, y = points[:, 0], points[:, 1]
    return np.stack([1.0 - x - y, x, y])


@dataclass(frozen=True, eq=False)
class ReferenceBasis:
    """Shape functions of one element signature.

    ``coef`` is (nloc, N_MODES) for scalar kinds and (nloc, 2, N_MODES)
    for H(div). ``edge`` and ``sign_power`` give, per local function, the
    local edge whose orientation flips its sign (-1 for none) and the
    exponent applied to that orientation.
    """

    kind: SpaceKind
    order: int
    edge_orders: tuple[int, int, int]
    coef: np.ndarray
    edge: np.ndarray
    sign_power: np.ndarray

    @property
    def size(self) -> int:
        return len(self.coef)

    def evaluate(self, points: np.ndarray) -> dict[str, np.ndarray]:
        phi, phx, phy = modal_table(points)
        if self.kind is SpaceKind.HDIV_CONFORMING:
            val = np.einsum("icm,mn->icn", self.coef, phi)
            div = self.coef[:, 0] @ phx + self.coef[:, 1] @ phy
            return {"value": val, "div": div}
        val = self.coef @ phi
        grad = np.stack([self.coef @ phx, self.coef @ phy], axis=1)
        return {"value": val, "grad": grad}

    def local_signs(self, orientation: np.ndarray) -> np.ndarray:
        """(ncell, nloc) sign factors given (ncell, 3) edge orientations."""
        out = np.ones((len(orientation), self.size))
        has = self.edge >= 0
        o = orientation[:, self.edge[has]].astype(float)
        out[:, has] = o ** self.sign_power[has]
        return out


# ----------------------------------------------------------------------
# L2
# ----------------------------------------------------------------------
@lru_cache(maxsize=None)
def l2_basis(order: int) -> ReferenceBasis:
    check_order(SpaceKind.L2_DISCONTINUOUS, order)
    n = n_poly(order)
    coef = np.eye(N_MODES)[:n]
    return ReferenceBasis(SpaceKind.L2_DISCONTINUOUS, order, (order,) * 3, coef,
                          -np.ones(n, dtype=int), np.zeros(n, dtype=int))


# ----------------------------------------------------------------------
# H1
# ----------------------------------------------------------------------
def h1_local_count(order: int, edge_orders) -> int:
    return 3 + sum(max(e - 1, 0) for e in edge_orders) + (order - 1) * (order - 2) // 2


@lru_cache(maxsize=None)
def h1_basis(order: int, edge_orders: tuple[int, int, int] | None = None) -> ReferenceBasis:
    """Vertex, edge and interior functions. Edge functions have degree
    d = 2..e on each edge and change sign as (-1)^d when the edge is
    traversed backwards."""
    check_order(SpaceKind.H1_CONTINUOUS, order)
    edge_orders = tuple(edge_orders) if edge_orders is not None else (order,) * 3
    if any(e < 1 or e > order for e in edge_orders):
        raise BasisError(f"edge orders {edge_orders} incompatible with cell order {order}")
    funcs, edge, power = [], [], []
    for v in range(3):
        funcs.append(lambda p, v=v: _barycentric(p)[v])
        edge.append(-1)
        power.append(0)
    for i, (a, b) in enumerate(EDGE_VERTICES):
        for d in range(2, edge_orders[i] + 1):
            def f(p, a=a, b=b, d=d):
                lam = _barycentric(p)
                return lam[a] * lam[b] * legendre.legval(lam[b] - lam[a], np.eye(d - 1)[d - 2])
            funcs.append(f)
            edge.append(i)
            power.append(d)
    for j in range(n_poly(order - 3) if order >= 3 else 0):
        a, b = EXPONENTS[j]

        def f(p, a=a, b=b):
            lam = _barycentric(p)
            return lam[0] * lam[1] * lam[2] * (p[:, 0] - CENTER) ** a * (p[:, 1] - CENTER) ** b
        funcs.append(f)
        edge.append(-1)
        power.append(0)
    coef = _project(lambda p: np.stack([f(p) for f in funcs]))
    return ReferenceBasis(SpaceKind.H1_CONTINUOUS, order, edge_orders, coef,
                          np.array(edge), np.array(power))


# ----------------------------------------------------------------------
# H(div), Brezzi-Douglas-Marini
# ----------------------------------------------------------------------
def _ref_edge_geometry():
    out = []
    for a, b in EDGE_VERTICES:
        t = REF_VERTICES[b] - REF_VERTICES[a]
        length = float(np.hypot(*t))
        n = np.array([t[1], -t[0]]) / length
        out.append((REF_VERTICES[a], t, length, n))
    return out


@lru_cache(maxsize=None)
def _moment_rows(k: int) -> np.ndarray:
    """Rows mapping (2, N_MODES) coefficients to normal moments
    m_{i,j}(v) = int_edge_i v.n P_j(2s-1) ds (arc length), j <= k."""
    s, w = edge_rule(2 * K_MAX + 2)
    rows = []
    for start, t, length, n in _ref_edge_geometry():
        pts = start + s[:, None] * t
        phi, _, _ = modal_table(pts)
        for j in range(k + 1):
            pj = legendre.legval(2 * s - 1, np.eye(j + 1)[j])
            m = phi @ (w * pj * length)
            rows.append(np.concatenate([n[0] * m, n[1] * m]))
    return np.array(rows)


def _restrict(k: int) -> np.ndarray:
    """Indices of P_k^2 inside the flattened (2, N_MODES) coordinates."""
    n = n_poly(k)
    return np.concatenate([np.arange(n), N_MODES + np.arange(n)])


def _row_index(i: int, j: int, k: int) -> int:
    return i * (k + 1) + j


@lru_cache(maxsize=None)
def _bdm_edge_function(i: int, j: int) -> np.ndarray:
    """Function of degree max(j, 1) whose normal moments up to that degree
    are the Kronecker delta of (edge i, moment j); minimal L2 norm."""
    k = max(j, 1)
    idx = _restrict(k)
    E = _moment_rows(k)[:, idx]
    x = np.linalg.pinv(E)[:, _row_index(i, j, k)]
    out = np.zeros(2 * N_MODES)
    out[idx] = x
    return out.reshape(2, N_MODES)


@lru_cache(maxsize=None)
def _bdm_bubbles(k: int) -> np.ndarray:
    """Orthonormal new interior functions at level k, (2k-1, 2, N_MODES)."""
    if k < 2:
        return np.zeros((0, 2, N_MODES))
    idx = _restrict(k)
    E = _moment_rows(k)[:, idx]
    prev = np.concatenate([_bdm_bubbles(m) for m in range(2, k)] or [np.zeros((0, 2, N_MODES))])
    prev = prev.reshape(len(prev), 2 * N_MODES)[:, idx]
    ns = null_space(np.vstack([E, prev]))
    out = np.zeros((ns.shape[1], 2 * N_MODES))
    out[:, idx] = ns.T
    return out.reshape(-1, 2, N_MODES)


def hdiv_local_count(order: int, edge_orders) -> int:
    return sum(e + 1 for e in edge_orders) + order * order - 1


@lru_cache(maxsize=None)
def hdiv_basis(order: int, edge_orders: tuple[int, int, int] | None = None) -> ReferenceBasis:
    """Hierarchical BDM basis of degree ``order``; the normal trace on edge
    i has degree edge_orders[i] <= order."""
    check_order(SpaceKind.HDIV_CONFORMING, order)
    edge_orders = tuple(edge_orders) if edge_orders is not None else (order,) * 3
    if any(e < 1 or e > order for e in edge_orders):
        raise BasisError(f"edge orders {edge_orders} incompatible with cell order {order}")
    coef, edge, power = [], [], []
    for i in range(3):
        for j in range(edge_orders[i] + 1):
            coef.append(_bdm_edge_function(i, j))
            edge.append(i)
            power.append(j + 1)
    for k in range(2, order + 1):
        b = _bdm_bubbles(k)
        coef.extend(b)
        edge.extend([-1] * len(b))
        power.extend([0] * len(b))
    return ReferenceBasis(SpaceKind.HDIV_CONFORMING, order, edge_orders, np.array(coef),
                          np.array(edge), np.array(power))


def reference_basis(kind: SpaceKind, order: int, edge_orders=None) -> ReferenceBasis:
    if kind is SpaceKind.L2_DISCONTINUOUS:
        return l2_basis(order)
    if kind is SpaceKind.H1_CONTINUOUS:
        return h1_basis(order, None if edge_orders is None else tuple(edge_orders))
    return hdiv_basis(order, None if edge_orders is None else tuple(edge_orders))


def eval_basis(kind: SpaceKind, order: int, points) -> dict[str, np.ndarray]:
    """Reference tables: ``value`` and ``grad`` for scalar kinds, ``value``
    (nloc, 2, n) and ``div`` for H(div)."""
    return reference_basis(kind, order).evaluate(np.asarray(points, dtype=float).reshape(-1, 2))
