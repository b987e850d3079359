"""P1 finite elements for ``-lap u = r`` with mixed Dirichlet/Neumann data.

Two regimes: a mesh fitted to the domain, and a fixed background mesh on
which the domain is the negative set of a level set (unfitted, no
stabilisation).  Both provide the compliance objective and its exact
discrete shape derivatives.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .cutgeom import quadrature_domain
from .dilation import dj1
from .errors import ConstraintError, InvalidArgumentError, SolverError
from .fields import PiecewiseField
from .levelset import FROM_ABOVE, classify
from .quadrature import batch_quadrature

FITTED, CUT, EMPTY = "fitted", "cut", "empty"
RESIDUAL_TOL = 1e-12


def as_source(r):
    """Normalise a source term to a vectorised callable ``points -> values``.

    Accepts a number, a callable, or a list ``[c, a_1, ..., a_d]`` for the
    affine function ``c + a . x``.  The source must be a fixed function of
    space so that it can be re-evaluated on deformed meshes.
    """
    if callable(r):
        return r
    if np.isscalar(r):
        c = float(r)
        return lambda x: np.full(len(np.atleast_2d(x)), c)
    coef = np.asarray(r, dtype=float)
    if coef.ndim != 1 or coef.size < 2:
        raise InvalidArgumentError("affine source needs [c, a_1, ..., a_d]")
    return lambda x: coef[0] + np.atleast_2d(x) @ coef[1:]


@dataclass
class FemSolution:
    """Discrete state and diagnostics.

    Attributes
    ----------
    u : ndarray
        Nodal coefficients over all mesh vertices; zero on Dirichlet and
        inactive nodes.
    active_dofs : ndarray
        Free unknowns of the linear system.
    cell_measure : ndarray
        Measure of the domain inside each cell.
    min_cut_fraction : float
        Smallest ``|domain in K| / |K|`` over cut cells (1 when none).
    """

    mesh: object
    regime: str
    u: np.ndarray
    active_dofs: np.ndarray
    source: object
    dirichlet_label: str
    levelset: object = None
    cell_measure: np.ndarray = None
    min_cut_fraction: float = 1.0
    residual: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def empty(self):
        return self.regime == EMPTY

    def cell_gradients(self):
        m = self.mesh
        return np.einsum("mk,mkd->md", self.u[m.cells], m.bary_grads)

    def values(self, cells, points):
        m = self.mesh
        cells = np.asarray(cells, dtype=np.int64)
        x0 = m.vertices[m.cells[cells, 0]]
        lam = np.einsum("nd,nkd->nk", np.asarray(points) - x0, m.bary_grads[cells])
        lam[:, 0] += 1.0
        return np.einsum("nk,nk->n", lam, self.u[m.cells[cells]])

    def source_field(self):
        return PiecewiseField.from_function(self.mesh, 1, self.source)

    def energy(self):
        """Dirichlet energy ``int |grad u_h|^2`` over the domain."""
        g = self.cell_gradients()
        return float(np.dot(self.cell_measure, np.einsum("md,md->m", g, g)))

    def to_dict(self):
        return {
            "regime": self.regime,
            "nodal_values": self.u.tolist(),
            "active_dofs": self.active_dofs.tolist(),
            "dirichlet_label": self.dirichlet_label,
            "min_cut_fraction": self.min_cut_fraction,
            "residual": self.residual,
        }


def save_solution(sol, path):
    Path(path).write_text(json.dumps(sol.to_dict()))


def _element_matrices(mesh, measure):
    G = mesh.bary_grads
    return measure[:, None, None] * np.einsum("mid,mjd->mij", G, G)


def _assemble(mesh, Ke, Fpts, Fw, Fcells, source):
    nv = mesh.n_vertices
    nloc = mesh.dim + 1
    rows = np.repeat(mesh.cells, nloc, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, nloc)).ravel()
    A = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
    b = np.zeros(nv)
    if Fw.size:
        x0 = mesh.vertices[mesh.cells[Fcells, 0]]
        lam = np.einsum("nd,nkd->nk", Fpts - x0, mesh.bary_grads[Fcells])
        lam[:, 0] += 1.0
        rw = Fw * np.asarray(source(Fpts), dtype=float)
        np.add.at(b, mesh.cells[Fcells].ravel(), (lam * rw[:, None]).ravel())
    return A, b


def _solve(A, b, free, min_cut=None):
    Aff = A[free][:, free].tocsc()
    bf = b[free]
    if free.size == 0:
        return np.zeros(0), 0.0
    try:
        x = spsolve(Aff, bf)
    except RuntimeError as exc:
        raise SolverError(f"linear solve failed: {exc}", min_cut) from exc
    if not np.all(np.isfinite(x)):
        raise SolverError("linear solve produced non-finite values", min_cut)
    res = np.abs(Aff @ x - bf).max()
    scale = abs(Aff).max() * np.abs(x).max() + np.abs(bf).max()
    rel = float(res / scale) if scale > 0 else 0.0
    if rel > RESIDUAL_TOL:
        raise SolverError(f"relative residual {rel:.2e} exceeds {RESIDUAL_TOL}", min_cut)
    return x, rel


def _dirichlet_nodes(mesh, label):
    nodes = mesh.boundary_nodes(label)
    if nodes.size == 0:
        raise ConstraintError(f"no boundary faces labelled '{label}'; the problem is singular")
    return nodes


def solve_fitted(mesh, r, dirichlet_label="xmin"):
    """Solve on a mesh of the domain itself; Dirichlet data on faces with the label."""
    source = as_source(r)
    dn = _dirichlet_nodes(mesh, dirichlet_label)
    Ke = _element_matrices(mesh, mesh.volumes)
    pts, w = batch_quadrature(mesh.vertices[mesh.cells], 2)
    cells = np.repeat(np.arange(mesh.n_cells), w.shape[1])
    A, b = _assemble(mesh, Ke, pts.reshape(-1, mesh.dim), w.ravel(), cells, source)
    free = np.setdiff1d(np.arange(mesh.n_vertices), dn)
    x, rel = _solve(A, b, free)
    u = np.zeros(mesh.n_vertices)
    u[free] = x
    return FemSolution(mesh, FITTED, u, free, source, dirichlet_label,
                       cell_measure=mesh.volumes.copy(), residual=rel)


def solve_cut(mesh, levelset, r, dirichlet_label="xmin"):
    """Solve on the negative set of a level set over a fixed background mesh.

    Basis functions whose support meets the domain with positive measure
    are active; Dirichlet nodes are removed.  Returns an ``empty`` solution
    when the domain has no interior.
    """
    source = as_source(r)
    dec = classify(levelset)
    if dec.empty:
        return FemSolution(mesh, EMPTY, np.zeros(mesh.n_vertices), np.zeros(0, dtype=np.int64),
                           source, dirichlet_label, levelset, np.zeros(mesh.n_cells))
    dn = _dirichlet_nodes(mesh, dirichlet_label)
    rule = quadrature_domain(levelset, 2)
    meas = np.bincount(rule.cells, weights=rule.weights, minlength=mesh.n_cells)
    meas = np.minimum(meas, mesh.volumes)
    meas[dec.cell_status == "inside"] = mesh.volumes[dec.cell_status == "inside"]
    positive = meas > 1e-14 * mesh.volumes
    meas[~positive] = 0.0
    cut = dec.cell_status == "cut"
    min_cut = float(np.min(meas[cut] / mesh.volumes[cut])) if cut.any() else 1.0
    Ke = _element_matrices(mesh, meas)
    A, b = _assemble(mesh, Ke, rule.points, rule.weights, rule.cells, source)
    active = np.unique(mesh.cells[positive])
    free = np.setdiff1d(active, dn)
    x, rel = _solve(A, b, free, min_cut)
    u = np.zeros(mesh.n_vertices)
    u[free] = x
    return FemSolution(mesh, CUT, u, free, source, dirichlet_label, levelset, meas, min_cut, rel)


def compliance(sol):
    """``int r u_h`` over the domain."""
    if sol.empty:
        return 0.0
    mesh = sol.mesh
    if sol.regime == FITTED:
        pts, w = batch_quadrature(mesh.vertices[mesh.cells], 2)
        cells = np.repeat(np.arange(mesh.n_cells), w.shape[1])
        pts, w = pts.reshape(-1, mesh.dim), w.ravel()
    else:
        rule = quadrature_domain(sol.levelset, 2)
        pts, w, cells = rule.points, rule.weights, rule.cells
    return float(np.dot(w, np.asarray(sol.source(pts)) * sol.values(cells, pts)))


# ---- derivatives -----------------------------------------------------------------

def _check_fitted(sol, velocity):
    if sol.regime != FITTED:
        raise InvalidArgumentError("this derivative needs a fitted solution")
    nodes = sol.mesh.boundary_nodes(sol.dirichlet_label)
    if np.any(velocity.nodal_vectors[nodes] != 0):
        raise ConstraintError(f"velocity must vanish on '{sol.dirichlet_label}'")


def _neumann_rule(sol, degree):
    mesh = sol.mesh
    dn = set(mesh.boundary_faces(sol.dirichlet_label).tolist())
    faces = np.array([f for f in mesh.boundary_faces() if int(f) not in dn], dtype=np.int64)
    pts, w = batch_quadrature(mesh.vertices[mesh.faces[faces]], degree)
    nq = w.shape[1]
    cells = mesh.face_cells[faces, 0]
    normals = np.array([mesh.face_normal(f, c) for f, c in zip(faces, cells)]).reshape(-1, mesh.dim)
    return pts.reshape(-1, mesh.dim), w.ravel(), np.repeat(cells, nq), np.repeat(normals, nq, 0)


def _neumann_terms(sol, velocity):
    """Integrals over the Neumann boundary of ``n.V r u`` and ``n.V |grad u|^2``."""
    p, w, c, n = _neumann_rule(sol, 3)
    vn = np.einsum("ni,ni->n", velocity.values(c, p), n)
    g = sol.cell_gradients()[c]
    ru = np.asarray(sol.source(p)) * sol.values(c, p)
    return float(np.dot(w, vn * ru)), float(np.dot(w, vn * np.einsum("ni,ni->n", g, g)))


def model_dj_continuous(sol, velocity):
    """Boundary expression ``int_N n.V (2 r u - |grad u|^2)`` with ``u = u_h``."""
    _check_fitted(sol, velocity)
    ru, gg = _neumann_terms(sol, velocity)
    return 2 * ru - gg


def _cell_terms(sol, velocity):
    """Integrals per cell of ``r V.grad u``, ``grad u.(grad V) grad u`` and ``div V |grad u|^2``."""
    mesh = sol.mesh
    pts, w = batch_quadrature(mesh.vertices[mesh.cells], 2)
    cells = np.repeat(np.arange(mesh.n_cells), w.shape[1])
    p, w = pts.reshape(-1, mesh.dim), w.ravel()
    g = sol.cell_gradients()
    rv = np.asarray(sol.source(p)) * np.einsum("ni,ni->n", velocity.values(cells, p), g[cells])
    rVgu = float(np.dot(w, rv))
    J = velocity.jacobians()
    quad = np.einsum("mi,mij,mj->m", g, J, g)
    gg = np.einsum("mi,mi->m", g, g)
    return rVgu, float(np.dot(mesh.volumes, quad)), float(np.dot(mesh.volumes, np.trace(J, axis1=1, axis2=2) * gg))


def model_dj_fitted_volume(sol, velocity):
    """Exact derivative of the discrete compliance in volume form."""
    _check_fitted(sol, velocity)
    ru, _ = _neumann_terms(sol, velocity)
    rVgu, quad, divgg = _cell_terms(sol, velocity)
    return 2 * ru - (2 * rVgu - 2 * quad + divgg)


def gradient_energy_jump_term(sol, velocity):
    """Sum over interior faces of ``int V . [[|grad u_h|^2]]``."""
    mesh = sol.mesh
    g = sol.cell_gradients()
    gg = np.einsum("mi,mi->m", g, g)
    faces = mesh.interior_faces()
    pts, w = batch_quadrature(mesh.vertices[mesh.faces[faces]], 1)
    nq = w.shape[1]
    k1, k2 = mesh.face_cells[faces, 0], mesh.face_cells[faces, 1]
    n1 = np.array([mesh.face_normal(f, c) for f, c in zip(faces, k1)])
    kk = np.repeat(k1, nq)
    vn = np.einsum("ni,ni->n", velocity.values(kk, pts.reshape(-1, mesh.dim)),
                   np.repeat(n1, nq, axis=0))
    return float(np.dot(w.ravel(), vn * np.repeat(gg[k1] - gg[k2], nq)))


def model_dj_fitted_strong(sol, velocity):
    """Exact derivative of the discrete compliance in boundary-plus-correction form.

    Neumann boundary term, minus the face jumps of ``|grad u_h|^2`` against
    ``V``, plus twice the element residual with test function ``V . grad u_h``.
    """
    _check_fitted(sol, velocity)
    ru, gg = _neumann_terms(sol, velocity)
    rVgu, quad, _ = _cell_terms(sol, velocity)
    return 2 * ru - gg - gradient_energy_jump_term(sol, velocity) + 2 * (quad - rVgu)


def shape_integrand(sol):
    """Cell-wise polynomial ``2 r u_h - |grad u_h|^2``."""
    mesh = sol.mesh
    g = sol.cell_gradients()
    gg = np.einsum("mi,mi->m", g, g)

    def f(cells, x):
        return 2 * np.asarray(sol.source(x)) * sol.values(cells, x) - gg[cells]
    return PiecewiseField.from_cellwise(mesh, 2, f)


def model_dj_cut(sol, hat, side=FROM_ABOVE):
    """Semiderivative of the unfitted compliance under ``phi + t w``.

    Minus the boundary integral of ``(2 r u_h - |grad u_h|^2) w / |grad phi|``
    over the zero set.

    Raises
    ------
    ConstraintError
        The hat function does not vanish on the Dirichlet boundary.
    """
    if sol.regime not in (CUT, EMPTY):
        raise InvalidArgumentError("model_dj_cut needs an unfitted solution")
    if hat.center_node in set(sol.mesh.boundary_nodes(sol.dirichlet_label).tolist()):
        raise ConstraintError(
            f"perturbation node {hat.center_node} lies on the Dirichlet boundary"
        )
    if sol.empty:
        from .dilation import SemiDerivative
        return SemiDerivative(0.0, side, [], True)
    return dj1(sol.levelset, hat, shape_integrand(sol), side=side)


def fitted_objective(mesh, velocity, r, dirichlet_label="xmin"):
    """``t -> J_h`` on the mesh deformed by ``x + t V``."""
    from .transform import deform_mesh

    def J(t):
        return compliance(solve_fitted(deform_mesh(mesh, velocity, t), r, dirichlet_label))
    return J


def cut_objective(mesh, levelset, hat, r, dirichlet_label="xmin"):
    """``t -> J_h`` for the level set ``phi + t w`` with a full re-solve."""
    from .levelset import perturb

    def J(t):
        return compliance(solve_cut(mesh, perturb(levelset, hat, t), r, dirichlet_label))
    return J
