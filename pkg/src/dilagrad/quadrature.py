"""Exact quadrature on simplices of dimension 0 to 3.

Rules are conical (collapsed) products of Gauss-Jacobi rules, so every
weight is positive and a rule built for degree ``q`` integrates all
polynomials of total degree ``<= q`` exactly.
"""

from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi

from .errors import InvalidArgumentError

MAX_DEGREE = 30


@lru_cache(maxsize=None)
def _jacobi_01(n, alpha):
    """Gauss-Jacobi rule on [0, 1] for the weight (1 - u)**alpha."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def reference_rule(k, degree):
    """Rule on the reference k-simplex {u >= 0, sum(u) <= 1}.

    Returns ``(points, weights)`` with points of shape (n, k).  Weights sum
    to the reference volume ``1/k!``.
    """
    if degree < 0 or degree > MAX_DEGREE:
        raise InvalidArgumentError(
            f"quadrature degree {degree} outside supported range [0, {MAX_DEGREE}]"
        )
    if k == 0:
        return np.zeros((1, 0)), np.ones(1)
    n = degree // 2 + 1
    # u_0 uses weight (1-u)^(k-1), u_1 uses (1-u)^(k-2), ...
    rules = [_jacobi_01(n, float(k - 1 - i)) for i in range(k)]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrid = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    u = [g.ravel() for g in grids]
    w = np.prod([g.ravel() for g in wgrid], axis=0)
    pts = np.empty((u[0].size, k))
    scale = np.ones(u[0].size)
    for i in range(k):
        pts[:, i] = u[i] * scale
        scale = scale * (1.0 - u[i])
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


def simplex_measure(vertices):
    """k-dimensional measure of a k-simplex embedded in R^d."""
    vertices = np.asarray(vertices, dtype=float)
    k = vertices.shape[0] - 1
    if k == 0:
        return 1.0
    return float(_edge_measures((vertices[1:] - vertices[0])[None])[0] / factorial(k))


def _edge_measures(E):
    """``sqrt(det(E E^T))`` for a stack of edge matrices, shape (m, k, d).

    Full-dimensional and codimension-one cases avoid the Gram determinant,
    whose square root would turn round-off into a spurious measure of
    order ``sqrt(eps)`` on degenerate simplices.
    """
    m, k, d = E.shape
    if k == d:
        return np.abs(np.linalg.det(E))
    if k == 1:
        return np.linalg.norm(E[:, 0], axis=1)
    if k == 2 and d == 3:
        return np.linalg.norm(np.cross(E[:, 0], E[:, 1]), axis=1)
    return np.sqrt(np.clip(np.linalg.det(np.einsum("mid,mjd->mij", E, E)), 0.0, None))


def quadrature_simplex(vertices, degree):
    """Quadrature points and weights on a simplex.

    Parameters
    ----------
    vertices : array_like, shape (k+1, d)
        Vertices of a k-simplex in R^d (a cell, a face, a segment or a point).
    degree : int
        Polynomial degree to integrate exactly.

    Returns
    -------
    points : ndarray, shape (n, d)
    weights : ndarray, shape (n,)
        Weights sum to the k-dimensional measure of the simplex.
    """
    vertices = np.asarray(vertices, dtype=float)
    k = vertices.shape[0] - 1
    ref_pts, ref_w = reference_rule(k, int(degree))
    if k == 0:
        return vertices.copy(), np.ones(1)
    E = vertices[1:] - vertices[0]
    pts = vertices[0] + ref_pts @ E
    return pts, ref_w * (simplex_measure(vertices) * factorial(k))


def batch_quadrature(simplices, degree):
    """Vectorised rule over many simplices of the same dimension.

    ``simplices`` has shape (m, k+1, d).  Returns points (m, n, d) and
    weights (m, n).
    """
    simplices = np.asarray(simplices, dtype=float)
    m, kp1, d = simplices.shape
    k = kp1 - 1
    ref_pts, ref_w = reference_rule(k, int(degree))
    if m == 0:
        return np.zeros((0, ref_w.size, d)), np.zeros((0, ref_w.size))
    if k == 0:
        return simplices.copy(), np.ones((m, 1))
    E = simplices[:, 1:, :] - simplices[:, :1, :]
    pts = simplices[:, :1, :] + np.einsum("nk,mkd->mnd", ref_pts, E)
    return pts, _edge_measures(E)[:, None] * ref_w[None, :]
