"""Element-wise polynomial fields that may jump across mesh faces."""

import itertools
from functools import lru_cache

import numpy as np

from .errors import InvalidArgumentError

MAX_FIELD_DEGREE = 4


@lru_cache(maxsize=None)
def monomial_exponents(dim, degree):
    """Exponent tuples of all monomials of total degree <= ``degree``."""
    exps = [e for e in itertools.product(range(degree + 1), repeat=dim) if sum(e) <= degree]
    exps.sort(key=lambda e: (sum(e), tuple(-x for x in e)))
    return np.array(exps, dtype=np.int64).reshape(-1, dim)


@lru_cache(maxsize=None)
def _lattice(dim, degree):
    """Barycentric principal lattice of order ``degree`` (unisolvent for P_degree)."""
    if degree == 0:
        return np.full((1, dim + 1), 1.0 / (dim + 1))
    pts = [c for c in itertools.product(range(degree + 1), repeat=dim + 1) if sum(c) == degree]
    return np.array(pts, dtype=float) / degree


def _vander(y, exps):
    # y: (..., d) -> (..., n_monomials)
    return np.prod(y[..., None, :] ** exps, axis=-1)


def _vander_grad(y, exps):
    # d/dy_k of each monomial, shape (..., n_monomials, d)
    d = exps.shape[1]
    out = np.empty(y.shape[:-1] + (len(exps), d))
    for k in range(d):
        e = exps.copy()
        coef = e[:, k].astype(float)
        e[:, k] = np.maximum(e[:, k] - 1, 0)
        out[..., k] = coef * np.prod(y[..., None, :] ** e, axis=-1)
    return out


class PiecewiseField:
    """Scalar field that is a polynomial on each cell.

    Each cell carries coefficients of the monomials in the scaled local
    coordinate ``(x - centroid) / diameter``.  Evaluation is always relative
    to a cell, so on a shared face the two neighbouring cells may return
    different values; this is how one-sided limits are realised.

    Parameters
    ----------
    mesh : Mesh
    degree : int
        Total polynomial degree on each cell, at most ``MAX_FIELD_DEGREE``.
    coefficients : array_like, shape (n_cells, n_monomials)
    continuity_class : int
        0 or 1; documents the element-wise smoothness the field is used with.
    """

    def __init__(self, mesh, degree, coefficients, continuity_class=1):
        if not 0 <= degree <= MAX_FIELD_DEGREE:
            raise InvalidArgumentError(f"field degree must be in [0, {MAX_FIELD_DEGREE}]")
        if continuity_class not in (0, 1):
            raise InvalidArgumentError("continuity_class must be 0 or 1")
        self.mesh = mesh
        self.degree = int(degree)
        self.exponents = monomial_exponents(mesh.dim, self.degree)
        coefficients = np.array(coefficients, dtype=float)
        if coefficients.shape != (mesh.n_cells, len(self.exponents)):
            raise InvalidArgumentError(
                f"coefficients must have shape {(mesh.n_cells, len(self.exponents))}"
            )
        coefficients.setflags(write=False)
        self.coefficients = coefficients
        self.continuity_class = continuity_class

    # ---- constructors --------------------------------------------------------

    @classmethod
    def constant(cls, mesh, value):
        return cls(mesh, 0, np.full((mesh.n_cells, 1), float(value)))

    @classmethod
    def from_cell_values(cls, mesh, values):
        """Piecewise-constant field, one value per cell."""
        values = np.asarray(values, dtype=float).reshape(mesh.n_cells, 1)
        return cls(mesh, 0, values, continuity_class=1)

    @classmethod
    def from_cellwise(cls, mesh, degree, func, continuity_class=1):
        """Interpolate ``func(cell_ids, points)`` cell by cell.

        ``func`` receives flat arrays of cell indices and points and returns
        values.  The interpolation is exact whenever ``func`` restricted to
        each cell is a polynomial of degree ``<= degree``.
        """
        lat = _lattice(mesh.dim, degree)                          # (L, d+1)
        X = mesh.vertices[mesh.cells]                             # (m, d+1, d)
        pts = np.einsum("lk,mkd->mld", lat, X)                    # (m, L, d)
        m, L, d = pts.shape
        cell_ids = np.repeat(np.arange(m), L)
        vals = np.asarray(func(cell_ids, pts.reshape(-1, d)), dtype=float).reshape(m, L)
        if not np.all(np.isfinite(vals)):
            raise InvalidArgumentError("field values must be finite")
        exps = monomial_exponents(mesh.dim, degree)
        y = (pts - mesh.centroids[:, None, :]) / mesh.diameters[:, None, None]
        A = _vander(y, exps)                                      # (m, L, L)
        coef = np.linalg.solve(A, vals[..., None])[..., 0]
        return cls(mesh, degree, coef, continuity_class)

    @classmethod
    def from_function(cls, mesh, degree, func, continuity_class=1):
        """Interpolate a globally defined ``func(points)``."""
        return cls.from_cellwise(mesh, degree, lambda c, x: func(x), continuity_class)

    @classmethod
    def from_nodal(cls, mesh, nodal_values):
        """Continuous piecewise-linear field from vertex values."""
        nodal = np.asarray(nodal_values, dtype=float)

        def f(cells, x):
            lam = _barycentric_many(mesh, cells, x)
            return np.einsum("nk,nk->n", lam, nodal[mesh.cells[cells]])
        return cls.from_cellwise(mesh, 1, f)

    @classmethod
    def random(cls, mesh, degree, rng, scale=1.0, continuous=False):
        """Random element-wise polynomial; jumps between cells unless ``continuous``."""
        exps = monomial_exponents(mesh.dim, degree)
        if continuous:
            g = rng.normal(size=len(exps)) * scale
            g_exps = exps

            def f(x):
                return _vander(x, g_exps) @ g
            return cls.from_function(mesh, degree, f)
        coef = rng.normal(size=(mesh.n_cells, len(exps))) * scale
        return cls(mesh, degree, coef)

    # ---- algebra -------------------------------------------------------------

    def _lift(self, degree):
        if degree == self.degree:
            return self.coefficients
        exps = monomial_exponents(self.mesh.dim, degree)
        index = {tuple(e): i for i, e in enumerate(exps)}
        out = np.zeros((self.mesh.n_cells, len(exps)))
        for j, e in enumerate(self.exponents):
            out[:, index[tuple(e)]] = self.coefficients[:, j]
        return out

    def __add__(self, other):
        if np.isscalar(other):
            other = PiecewiseField.constant(self.mesh, other)
        deg = max(self.degree, other.degree)
        return PiecewiseField(self.mesh, deg, self._lift(deg) + other._lift(deg),
                              min(self.continuity_class, other.continuity_class))

    __radd__ = __add__

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return PiecewiseField(self.mesh, self.degree, self.coefficients * scalar,
                              self.continuity_class)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if not np.isscalar(other) else -other)

    def on_mesh(self, mesh):
        """Same coefficients interpreted on a mesh with identical topology."""
        return PiecewiseField(mesh, self.degree, self.coefficients, self.continuity_class)

    # ---- evaluation ----------------------------------------------------------

    def _local(self, cells, points):
        cells = np.asarray(cells, dtype=np.int64)
        points = np.asarray(points, dtype=float)
        return (points - self.mesh.centroids[cells]) / self.mesh.diameters[cells, None]

    def values(self, cells, points):
        """Vectorised evaluation; ``cells`` and ``points`` are aligned."""
        cells = np.asarray(cells, dtype=np.int64)
        y = self._local(cells, points)
        return np.einsum("nm,nm->n", _vander(y, self.exponents), self.coefficients[cells])

    def gradients(self, cells, points):
        cells = np.asarray(cells, dtype=np.int64)
        y = self._local(cells, points)
        G = _vander_grad(y, self.exponents)                       # (n, nm, d)
        g = np.einsum("nmd,nm->nd", G, self.coefficients[cells])
        return g / self.mesh.diameters[cells, None]

    def __repr__(self):
        return f"PiecewiseField(degree={self.degree}, n_cells={self.mesh.n_cells})"


def _barycentric_many(mesh, cells, points):
    x0 = mesh.vertices[mesh.cells[cells, 0]]
    G = mesh.bary_grads[cells]                                    # (n, d+1, d)
    return np.einsum("nd,nkd->nk", points - x0, G) + np.eye(mesh.dim + 1)[0]


def _check_in_cell(mesh, cell_id, point):
    if not 0 <= cell_id < mesh.n_cells:
        raise InvalidArgumentError(f"cell {cell_id} out of range")
    if not mesh.contains(cell_id, point):
        raise InvalidArgumentError(f"point {np.asarray(point).tolist()} is outside cell {cell_id}")


def field_eval(field, cell_id, point):
    """Value of the cell-``cell_id`` polynomial at a point of the closed cell."""
    point = np.asarray(point, dtype=float)
    _check_in_cell(field.mesh, cell_id, point)
    return float(field.values([cell_id], point[None, :])[0])


def field_grad(field, cell_id, point):
    point = np.asarray(point, dtype=float)
    _check_in_cell(field.mesh, cell_id, point)
    return field.gradients([cell_id], point[None, :])[0]
