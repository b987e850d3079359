"""Shape calculus by mesh deformation ``x -> x + t V(x)`` on body-fitted meshes."""

from dataclasses import dataclass

import numpy as np

from .errors import ConstraintError, InvalidArgumentError, TangledMeshError
from .fields import PiecewiseField
from .quadrature import batch_quadrature


class VelocityField:
    """Continuous piecewise-linear vector field given at the vertices.

    Parameters
    ----------
    mesh : Mesh
    nodal_vectors : array_like, shape (n_vertices, dim)
    dirichlet_zero_markers : iterable of str
        Boundary labels on which the field must vanish; checked on
        construction.
    """

    def __init__(self, mesh, nodal_vectors, dirichlet_zero_markers=()):
        V = np.array(nodal_vectors, dtype=float)
        if V.shape != (mesh.n_vertices, mesh.dim):
            raise InvalidArgumentError(f"nodal_vectors must have shape {(mesh.n_vertices, mesh.dim)}")
        self.mesh = mesh
        self.dirichlet_zero_markers = tuple(dirichlet_zero_markers)
        for label in self.dirichlet_zero_markers:
            nodes = mesh.boundary_nodes(label)
            if nodes.size and np.any(V[nodes] != 0):
                raise ConstraintError(f"velocity does not vanish on boundary '{label}'")
        V.setflags(write=False)
        self.nodal_vectors = V

    @classmethod
    def from_function(cls, mesh, func, dirichlet_zero_markers=()):
        """Interpolate ``func(x) -> vector``; marked boundary nodes are set to zero."""
        V = np.array([func(x) for x in mesh.vertices], dtype=float)
        for label in dirichlet_zero_markers:
            V[mesh.boundary_nodes(label)] = 0.0
        return cls(mesh, V, dirichlet_zero_markers)

    def on_mesh(self, mesh):
        return VelocityField(mesh, self.nodal_vectors, self.dirichlet_zero_markers)

    def jacobians(self):
        """Cell-wise ``dV_i/dx_j``, shape (n_cells, d, d)."""
        m = self.mesh
        return np.einsum("mki,mkj->mij", self.nodal_vectors[m.cells], m.bary_grads)

    def divergence(self):
        return np.trace(self.jacobians(), axis1=1, axis2=2)

    def values(self, cells, points):
        m = self.mesh
        cells = np.asarray(cells, dtype=np.int64)
        x0 = m.vertices[m.cells[cells, 0]]
        lam = np.einsum("nd,nkd->nk", np.asarray(points) - x0, m.bary_grads[cells])
        lam[:, 0] += 1.0
        return np.einsum("nk,nki->ni", lam, self.nodal_vectors[m.cells[cells]])

    def components(self):
        """The field as ``dim`` piecewise-linear scalar fields."""
        return [PiecewiseField.from_nodal(self.mesh, self.nodal_vectors[:, i])
                for i in range(self.mesh.dim)]


@dataclass(frozen=True)
class FittedJump:
    """Jump ``q1 n1 + q2 n2`` of a scalar across an interior face."""

    face_id: int
    value: np.ndarray


def deform_mesh(mesh, velocity, t):
    """Mesh with vertices moved to ``x + t V(x)``.

    Raises
    ------
    TangledMeshError
        Some cell would get non-positive volume.
    """
    X = mesh.vertices + t * velocity.nodal_vectors
    P = X[mesh.cells]
    vol = np.linalg.det(P[:, 1:, :] - P[:, :1, :])
    bad = np.flatnonzero(vol <= 0)
    if bad.size:
        k = int(bad[0])
        raise TangledMeshError(k, float(vol[k]))
    return mesh.with_vertices(X)


def _local_face(mesh, cell_id, face_id):
    local = np.flatnonzero(mesh.cell_faces[cell_id] == face_id)
    if local.size == 0:
        raise InvalidArgumentError(f"face {face_id} is not a face of cell {cell_id}")
    return int(local[0])


def jacobian_identities(velocity, cell_id, face_id=None):
    """Divergence and, on a face of the cell, tangential divergence.

    The tangential divergence is ``div V - n . (grad V) n`` with ``n`` the
    unit normal of the face.  Returns ``(div, tangential_div)``; the second
    entry is ``None`` without a face.
    """
    J = velocity.jacobians()[cell_id]
    div = float(np.trace(J))
    if face_id is None:
        return div, None
    mesh = velocity.mesh
    _local_face(mesh, cell_id, face_id)
    n = mesh.face_normal(face_id, cell_id)
    return div, float(div - n @ J @ n)


def volume_factor(velocity, cell_id, t):
    """``det(I + t grad V)`` on a cell."""
    J = velocity.jacobians()[cell_id]
    return float(np.linalg.det(np.eye(len(J)) + t * J))


def surface_factor(velocity, cell_id, face_id, t):
    """``det(DT) |DT^-T n|``, the area stretch of a face under ``x + t V``."""
    mesh = velocity.mesh
    J = velocity.jacobians()[cell_id]
    n = mesh.face_normal(face_id, cell_id)
    DT = np.eye(len(J)) + t * J
    return float(np.linalg.det(DT) * np.linalg.norm(np.linalg.solve(DT.T, n)))


# ---- directional derivatives -------------------------------------------------

def _cell_rule(mesh, degree):
    pts, w = batch_quadrature(mesh.vertices[mesh.cells], degree)
    cells = np.repeat(np.arange(mesh.n_cells), w.shape[1])
    return pts.reshape(-1, mesh.dim), w.ravel(), cells


def _boundary_rule(mesh, degree, faces=None):
    faces = mesh.boundary_faces() if faces is None else np.asarray(faces)
    if faces.size == 0:
        d = mesh.dim
        return np.zeros((0, d)), np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros((0, d))
    pts, w = batch_quadrature(mesh.vertices[mesh.faces[faces]], degree)
    nq = w.shape[1]
    cells = mesh.face_cells[faces, 0]
    normals = np.array([mesh.face_normal(f, c) for f, c in zip(faces, cells)])
    return (pts.reshape(-1, mesh.dim), w.ravel(), np.repeat(cells, nq),
            np.repeat(normals, nq, axis=0))


def dj1_weak(mesh, velocity, f, fdot):
    """Integral over the mesh of ``fdot + f div V``."""
    deg = max(f.degree, fdot.degree)
    p, w, c = _cell_rule(mesh, deg)
    div = velocity.divergence()[c]
    return float(np.dot(w, fdot.values(c, p) + f.values(c, p) * div))


def dj2_weak(mesh, velocity, f, fdot):
    """Integral over the mesh boundary of ``fdot + f div_T V``."""
    deg = max(f.degree, fdot.degree)
    p, w, c, n = _boundary_rule(mesh, deg)
    J = velocity.jacobians()[c]
    tdiv = np.trace(J, axis1=1, axis2=2) - np.einsum("ni,nij,nj->n", n, J, n)
    return float(np.dot(w, fdot.values(c, p) + f.values(c, p) * tdiv))


def dj1_strong(mesh, velocity, f, fprime):
    """Integral of ``fprime`` over the mesh plus boundary flux of ``f V . n``."""
    p, w, c = _cell_rule(mesh, fprime.degree)
    vol = float(np.dot(w, fprime.values(c, p)))
    p, w, c, n = _boundary_rule(mesh, f.degree + 1)
    vn = np.einsum("ni,ni->n", velocity.values(c, p), n)
    return vol + float(np.dot(w, f.values(c, p) * vn))


def dj2_strong(mesh, velocity, f, fprime):
    """Boundary integral of ``fprime + (df/dn) V . n`` for flat facets.

    Facets are flat, so the curvature term vanishes; contributions
    concentrated at corners and edges of the polyhedral boundary are not
    included.
    """
    p, w, c, n = _boundary_rule(mesh, max(fprime.degree, f.degree + 1))
    vn = np.einsum("ni,ni->n", velocity.values(c, p), n)
    dfdn = np.einsum("ni,ni->n", f.gradients(c, p), n)
    return float(np.dot(w, fprime.values(c, p) + dfdn * vn))


def fitted_jumps(mesh, cell_values):
    """Jumps of a cell-wise constant quantity over all interior faces."""
    out = []
    for f in mesh.interior_faces():
        k1, k2 = mesh.face_cells[f]
        n1 = mesh.face_normal(f, k1)
        out.append(FittedJump(int(f), (cell_values[k1] - cell_values[k2]) * n1))
    return out


def face_jump_integral(mesh, psi, q, degree=None):
    """Sum over interior faces of the integral of ``psi . (q1 n1 + q2 n2)``."""
    faces = mesh.interior_faces()
    deg = q.degree + 1 if degree is None else degree
    pts, w = batch_quadrature(mesh.vertices[mesh.faces[faces]], deg)
    nq = w.shape[1]
    k1 = np.repeat(mesh.face_cells[faces, 0], nq)
    k2 = np.repeat(mesh.face_cells[faces, 1], nq)
    n1 = np.repeat(np.array([mesh.face_normal(f, c) for f, c in
                             zip(faces, mesh.face_cells[faces, 0])]), nq, axis=0)
    p = pts.reshape(-1, mesh.dim)
    jump = (q.values(k1, p) - q.values(k2, p))[:, None] * n1
    return float(np.dot(w.ravel(), np.einsum("ni,ni->n", psi.values(k1, p), jump)))


def ibp_sides_fitted(mesh, psi, q):
    """Both sides of broken integration by parts on a fitted mesh.

    Left: ``int div(psi) q + sum_K int_K psi . grad q``.  Right: boundary
    flux of ``q psi`` plus the face jump term ``int psi . [[q]]``.
    """
    p, w, c = _cell_rule(mesh, q.degree + 1)
    div = psi.divergence()[c]
    lhs = float(np.dot(w, div * q.values(c, p)
                       + np.einsum("ni,ni->n", psi.values(c, p), q.gradients(c, p))))
    p, w, c, n = _boundary_rule(mesh, q.degree + 1)
    rhs = float(np.dot(w, np.einsum("ni,ni->n", psi.values(c, p), n) * q.values(c, p)))
    rhs += face_jump_integral(mesh, psi, q)
    return lhs, rhs


def ibp_fitted(mesh, psi, q):
    """Absolute residual of broken integration by parts."""
    lhs, rhs = ibp_sides_fitted(mesh, psi, q)
    return abs(lhs - rhs)
