"""Intersection of the zero level set with cells and faces.

All clipping is driven by a vertex sign vector.  Normally the signs are
those of the nodal values; passing the signs from
:func:`dilagrad.levelset.limit_signs` instead yields the one-sided limit
geometry of a perturbed level set (a zero at the perturbation node is then
treated as slightly positive or slightly negative).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, DegenerateCellError
from .levelset import INSIDE, OUTSIDE, CUT
from .quadrature import batch_quadrature, quadrature_simplex, simplex_measure

INTERIOR, EXTERIOR = "interior", "exterior"


def _edge_point(X, phi, i, j):
    """Zero of the linear interpolant on edge (i, j); endpoints if a value is 0."""
    if phi[i] == 0:
        return X[i]
    if phi[j] == 0:
        return X[j]
    lam = phi[i] / (phi[i] - phi[j])
    return X[i] + lam * (X[j] - X[i])


def _prism(a, b):
    # triangular prism with lateral edges a[i]-b[i]
    return [(a[0], a[1], a[2], b[0]), (a[1], a[2], b[0], b[1]), (a[2], b[0], b[1], b[2])]


def clip_simplex(X, phi, signs):
    """Sub-simplices covering ``{phi <= 0}`` inside one simplex.

    Vertices with sign 0 count as inside.  Returns an array of shape
    (n, d+1, d); some pieces may have zero volume.
    """
    d = X.shape[1]
    inn = [i for i in range(d + 1) if signs[i] <= 0]
    out = [i for i in range(d + 1) if signs[i] > 0]
    if not inn:
        return np.zeros((0, d + 1, d))
    if not out:
        return X[None].copy()
    P = lambda i, j: _edge_point(X, phi, i, j)  # noqa: E731
    if d == 2:
        if len(inn) == 1:
            (a,), (b, c) = inn, out
            pieces = [(X[a], P(a, b), P(a, c))]
        else:
            (a, b), (c,) = inn, out
            bc, ac = P(b, c), P(a, c)
            pieces = [(X[a], X[b], bc), (X[a], bc, ac)]
    else:
        if len(inn) == 1:
            (a,), (b, c, e) = inn, out
            pieces = [(X[a], P(a, b), P(a, c), P(a, e))]
        elif len(inn) == 3:
            (a, b, c), (e,) = inn, out
            pieces = _prism((X[a], X[b], X[c]), (P(a, e), P(b, e), P(c, e)))
        else:
            (a, b), (c, e) = inn, out
            pieces = _prism((X[a], P(a, c), P(a, e)), (X[b], P(b, c), P(b, e)))
    return np.array(pieces, dtype=float)


def _dedupe(points, tol):
    out = []
    for p in points:
        if all(np.linalg.norm(p - q) > tol for q in out):
            out.append(p)
    return out


def zero_set_points(X, phi, signs, tol):
    """Zero-sign vertices and crossings on strictly sign-changing edges.

    Returns ``(points, n_vertex_points)``; the first ``n_vertex_points``
    entries are vertices of the simplex.
    """
    k = len(X)
    zeros = [X[i] for i in range(k) if signs[i] == 0]
    cross = []
    for i in range(k):
        for j in range(i + 1, k):
            if signs[i] * signs[j] < 0:
                cross.append(_edge_point(X, phi, i, j))
    pts = _dedupe(zeros, tol)
    nz = len(pts)
    for p in cross:
        if all(np.linalg.norm(p - q) > tol for q in pts):
            pts.append(p)
    return pts, nz


def _order_polygon(points, normal):
    c = np.mean(points, axis=0)
    a = np.cross(normal, [1.0, 0.0, 0.0])
    if np.linalg.norm(a) < 0.5:
        a = np.cross(normal, [0.0, 1.0, 0.0])
    a /= np.linalg.norm(a)
    b = np.cross(normal, a)
    ang = np.arctan2((points - c) @ b, (points - c) @ a)
    return points[np.argsort(ang)]


def patch_simplices(points, normal):
    """Split a planar patch into (d-1)-simplices for quadrature.

    Segments stay as they are; a quadrilateral is split along its shorter
    diagonal.  Returned vertex orders are counter-clockwise about ``normal``
    in 3D and along the tangent ``(-n_y, n_x)`` in 2D.
    """
    points = np.asarray(points, dtype=float)
    d = points.shape[1]
    if d == 2:
        tang = np.array([-normal[1], normal[0]])
        if (points[1] - points[0]) @ tang < 0:
            points = points[::-1]
        return points[None].copy()
    P = _order_polygon(points, normal)
    if len(P) == 3:
        return P[None].copy()
    if np.linalg.norm(P[0] - P[2]) <= np.linalg.norm(P[1] - P[3]):
        return np.array([(P[0], P[1], P[2]), (P[0], P[2], P[3])])
    return np.array([(P[0], P[1], P[3]), (P[1], P[2], P[3])])


@dataclass
class CellGeometry:
    """Intersection of a cell with the domain and its boundary.

    ``patch`` is empty when the zero set meets the cell in a set of zero
    (d-1)-measure.  ``aligned_opposite_sign`` is set when the patch is a
    whole face of the cell, and gives the sign of the vertex opposite it.
    """

    cell_id: int
    status: str
    interior_simplices: np.ndarray
    patch: np.ndarray
    patch_simplices: np.ndarray
    normal: np.ndarray
    grad_norm: float
    aligned_face: int = -1
    aligned_opposite_sign: int = 0


@dataclass
class CutCell:
    """A cell crossed by the zero level set.

    Attributes
    ----------
    cell_id : int
    boundary_patch : ndarray, shape (k, d)
        Segment end points (2D) or triangle/quadrilateral vertices ordered
        counter-clockwise about ``normal`` (3D).
    interior_simplices : ndarray, shape (n, d+1, d)
        Decomposition of the part of the cell inside the domain.
    normal : ndarray
        Unit outward normal of the patch, the normalised cell gradient.
    """

    cell_id: int
    boundary_patch: np.ndarray
    interior_simplices: np.ndarray
    normal: np.ndarray
    grad_norm: float
    patch_simplices: np.ndarray = field(repr=False, default=None)

    @property
    def interior_measure(self):
        return float(sum(simplex_measure(s) for s in self.interior_simplices))

    @property
    def patch_measure(self):
        return float(sum(simplex_measure(s) for s in self.patch_simplices))


def cell_geometry(levelset, cell_id, signs=None):
    """Full clipping result for one cell under the given vertex signs."""
    mesh = levelset.mesh
    d = mesh.dim
    idx = mesh.cells[cell_id]
    X = mesh.vertices[idx]
    phi = levelset.nodal_values[idx]
    s = np.sign(phi).astype(np.int64) if signs is None else np.asarray(signs)[idx]
    if np.all(s == 0):
        raise DegenerateCellError(int(cell_id))
    if s.min() < 0 < s.max():
        status = CUT
    elif s.max() <= 0:
        status = INSIDE
    else:
        status = OUTSIDE
    interior = clip_simplex(X, phi, s)
    grad = phi @ mesh.bary_grads[cell_id]
    gnorm = float(np.linalg.norm(grad))
    normal = grad / gnorm if gnorm > 0 else np.zeros(d)

    pts, nz = zero_set_points(X, phi, s, mesh.tol)
    empty = np.zeros((0, d, d))
    aligned_face, opp = -1, 0
    if len(pts) < d:
        psimp, patch = empty, np.zeros((0, d))
    else:
        patch = np.array(pts)
        psimp = patch_simplices(patch, normal)
        if sum(simplex_measure(p) for p in psimp) <= mesh.tol ** (d - 1):
            psimp, patch = empty, np.zeros((0, d))
        elif nz == len(pts) == d:
            local = int(np.flatnonzero(s != 0)[0])
            aligned_face = int(mesh.cell_faces[cell_id, local])
            opp = int(s[local])
    return CellGeometry(int(cell_id), status, interior, patch, psimp, normal, gnorm,
                        aligned_face, opp)


def cut_cell(levelset, cell_id, signs=None):
    """Cut geometry of a cell, or the string ``inside`` / ``outside``.

    Raises
    ------
    DegenerateCellError
        The level set vanishes on the whole cell.
    """
    g = cell_geometry(levelset, cell_id, signs)
    if g.status != CUT:
        return g.status
    return CutCell(g.cell_id, g.patch, g.interior_simplices, g.normal, g.grad_norm,
                   g.patch_simplices)


# ---- face loci -----------------------------------------------------------------

@dataclass
class FacePatch:
    """Intersection of the zero level set with an interior face.

    Attributes
    ----------
    face_id : int
    cells : (int, int)
        The two adjacent cells; ``normals[0]`` points out of ``cells[0]``.
    cut_locus : ndarray, shape (1, 2) or (2, 3)
        A point in 2D, a segment in 3D.
    n_s : ndarray
        Unit vector in the face, orthogonal to the locus, pointing out of
        the domain.
    grad_s_norm : float
        Norm of the in-face gradient of the level set.
    tangents : ndarray, shape (2, 3)
        ``t_k = n_s x n_k``; in 2D these are ``-e3`` and ``+e3``.
    normals, conormals, patch_normals : ndarray, shape (2, d)
        Face normals out of each cell, co-normals ``t_k x n_patch_k`` and
        the cell-wise boundary normals.
    """

    face_id: int
    cells: tuple
    cut_locus: np.ndarray
    n_s: np.ndarray
    grad_s_norm: float
    tangents: np.ndarray
    normals: np.ndarray
    conormals: np.ndarray
    patch_normals: np.ndarray


def _ext3(v):
    v = np.asarray(v, dtype=float)
    return np.concatenate([v, np.zeros(3 - v.size)]) if v.size < 3 else v


def face_locus_kind(levelset, face_id, signs=None):
    """Classify how the zero set meets a face.

    Returns one of ``none``, ``regular``, ``vertex`` (only at mesh vertices,
    zero measure), ``subface`` (3D: along a whole edge of the face) or
    ``aligned`` (the whole face).
    """
    mesh = levelset.mesh
    idx = mesh.faces[face_id]
    s = np.sign(levelset.nodal_values[idx]).astype(np.int64) if signs is None \
        else np.asarray(signs)[idx]
    if np.all(s == 0):
        return "aligned"
    nz = int(np.sum(s == 0))
    strict = s.min() < 0 < s.max()
    if strict:
        return "regular"
    if nz == 0:
        return "none"
    if mesh.dim == 3 and nz == 2:
        return "subface"
    return "vertex"


def face_patch(levelset, face_id, signs=None):
    """Geometry of the zero set on an interior face, or ``None``.

    ``None`` is returned for boundary faces and for faces the zero set does
    not cross (it may still touch them at vertices or along an edge; see
    :func:`face_locus_kind`).

    Raises
    ------
    AlignmentError
        The level set vanishes on the whole face.
    """
    mesh = levelset.mesh
    kind = face_locus_kind(levelset, face_id, signs)
    if kind == "aligned":
        raise AlignmentError(int(face_id))
    k1, k2 = (int(c) for c in mesh.face_cells[face_id])
    if kind != "regular" or k2 < 0:
        return None
    idx = mesh.faces[face_id]
    X = mesh.vertices[idx]
    phi = levelset.nodal_values[idx]
    s = np.sign(phi).astype(np.int64) if signs is None else np.asarray(signs)[idx]
    pts, _ = zero_set_points(X, phi, s, mesh.tol)
    locus = np.array(pts)
    if mesh.dim == 3 and len(locus) < 2:
        return None

    n1 = mesh.face_normal(face_id, k1)
    g1 = levelset.cell_gradient(k1)
    gs = g1 - (g1 @ n1) * n1
    gs_norm = float(np.linalg.norm(gs))
    n_s = gs / gs_norm
    normals = np.array([n1, -n1])
    pn = []
    for k in (k1, k2):
        g = levelset.cell_gradient(k)
        pn.append(g / np.linalg.norm(g))
    pn = np.array(pn)
    ns3 = _ext3(n_s)
    tangents = np.array([np.cross(ns3, _ext3(n)) for n in normals])
    conormals = np.array([np.cross(t, _ext3(p))[: mesh.dim] for t, p in zip(tangents, pn)])
    return FacePatch(int(face_id), (k1, k2), locus, n_s, gs_norm, tangents, normals,
                     conormals, pn)


def quadrature_facecut(patch, degree):
    """Rule on the locus of a face patch; in 2D a single point of weight 1."""
    if len(patch.cut_locus) == 1:
        return patch.cut_locus.copy(), np.ones(1)
    return quadrature_simplex(patch.cut_locus, degree)


# ---- global quadrature ---------------------------------------------------------

@dataclass
class DomainRule:
    points: np.ndarray
    weights: np.ndarray
    cells: np.ndarray


@dataclass
class BoundaryRule:
    """Quadrature on the zero set, with per-point cell normal and |grad phi|."""

    points: np.ndarray
    weights: np.ndarray
    cells: np.ndarray
    normals: np.ndarray
    grad_norms: np.ndarray


def _concat(parts, shape_tail):
    if not parts:
        return np.zeros((0,) + shape_tail)
    return np.concatenate(parts)


def _sign_vector(levelset, signs):
    if signs is None:
        return np.sign(levelset.nodal_values).astype(np.int64)
    return np.asarray(signs)


def quadrature_domain(levelset, degree, signs=None, cells=None):
    """Quadrature over the domain, optionally restricted to some cells."""
    mesh = levelset.mesh
    d = mesh.dim
    s = _sign_vector(levelset, signs)
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells, dtype=np.int64)
    cs = s[mesh.cells[cells]]
    if np.any(np.all(cs == 0, axis=1)):
        raise DegenerateCellError(int(cells[np.flatnonzero(np.all(cs == 0, axis=1))[0]]))
    full = cells[cs.max(axis=1) <= 0]
    partial = cells[(cs.min(axis=1) <= 0) & (cs.max(axis=1) > 0)]
    pts, wts = batch_quadrature(mesh.vertices[mesh.cells[full]], degree)
    P, W, C = [pts.reshape(-1, d)], [wts.ravel()], [np.repeat(full, wts.shape[1])]
    for k in partial:
        idx = mesh.cells[k]
        sub = clip_simplex(mesh.vertices[idx], levelset.nodal_values[idx], s[idx])
        p, w = batch_quadrature(sub, degree)
        P.append(p.reshape(-1, d))
        W.append(w.ravel())
        C.append(np.full(w.size, k))
    return DomainRule(np.concatenate(P), np.concatenate(W), np.concatenate(C))


def boundary_geometries(levelset, signs=None, cells=None, aligned_side=INTERIOR):
    """Cell geometries carrying a piece of the boundary, one per piece.

    A boundary piece lying on a mesh face is shared by two cells; it is
    attributed to the cell on the ``aligned_side`` of the domain
    (``interior``: the neighbouring cell inside the domain; ``exterior``:
    the one outside).
    """
    mesh = levelset.mesh
    s = _sign_vector(levelset, signs)
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells, dtype=np.int64)
    cs = s[mesh.cells[cells]]
    cand = cells[((cs.min(axis=1) < 0) & (cs.max(axis=1) > 0))
                 | (np.sum(cs == 0, axis=1) >= mesh.dim)]
    out = []
    for k in cand:
        g = cell_geometry(levelset, k, s)
        if len(g.patch_simplices) == 0:
            continue
        if g.aligned_face >= 0 and not _keep_aligned(mesh, s, g, aligned_side):
            continue
        out.append(g)
    return out


def _keep_aligned(mesh, s, g, side):
    f = g.aligned_face
    other = [c for c in mesh.face_cells[f] if c >= 0 and c != g.cell_id]
    if other:
        K = other[0]
        opp = s[np.setdiff1d(mesh.cells[K], mesh.faces[f])[0]]
    else:
        opp = None
    if side == INTERIOR:
        return g.aligned_opposite_sign < 0
    if opp is None:
        return g.aligned_opposite_sign < 0
    return g.aligned_opposite_sign > 0 and opp < 0


def quadrature_boundary(levelset, degree, signs=None, cells=None, aligned_side=INTERIOR):
    """Quadrature over the zero set, one planar patch per cell."""
    d = levelset.mesh.dim
    P, W, C, N, G = [], [], [], [], []
    for g in boundary_geometries(levelset, signs, cells, aligned_side):
        p, w = batch_quadrature(g.patch_simplices, degree)
        P.append(p.reshape(-1, d))
        W.append(w.ravel())
        C.append(np.full(w.size, g.cell_id))
        N.append(np.tile(g.normal, (w.size, 1)))
        G.append(np.full(w.size, g.grad_norm))
    return BoundaryRule(_concat(P, (d,)), _concat(W, ()), _concat(C, ()).astype(np.int64),
                        _concat(N, (d,)), _concat(G, ()))


def domain_measure(levelset, signs=None):
    return float(quadrature_domain(levelset, 0, signs).weights.sum())


def boundary_measure(levelset, signs=None, aligned_side=INTERIOR):
    return float(quadrature_boundary(levelset, 0, signs, aligned_side=aligned_side).weights.sum())


def cut_geometry_to_dict(levelset, signs=None):
    """Patches, normals and face co-normals as plain lists for JSON dumps."""
    mesh = levelset.mesh
    s = _sign_vector(levelset, signs)
    cells = []
    for g in boundary_geometries(levelset, s):
        cells.append({
            "cell": g.cell_id,
            "patch": g.patch.tolist(),
            "normal": g.normal.tolist(),
            "measure": float(sum(simplex_measure(p) for p in g.patch_simplices)),
        })
    faces = []
    for f in mesh.interior_faces():
        if face_locus_kind(levelset, f, s) != "regular":
            continue
        fp = face_patch(levelset, f, s)
        if fp is None:
            continue
        faces.append({
            "face": fp.face_id,
            "cells": list(fp.cells),
            "locus": fp.cut_locus.tolist(),
            "n_s": fp.n_s.tolist(),
            "conormals": fp.conormals.tolist(),
        })
    return {"dim": mesh.dim, "cells": cells, "faces": faces}
