"""Simplicial meshes of the hold-all with face and subface adjacency."""

import itertools
import json
from math import factorial
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, TopologyError

BOUNDARY = -1


class Mesh:
    """Conforming simplicial triangulation of a polygon or polyhedron.

    Parameters
    ----------
    vertices : array_like, shape (n_vertices, dim)
    cells : array_like, shape (n_cells, dim + 1)
        Vertex indices; every cell must have positive signed volume.
    boundary_markers : dict, optional
        Maps boundary face index to a label.  Face indices refer to the
        deterministic face numbering produced by :func:`compute_adjacency`.

    Attributes
    ----------
    faces : ndarray, shape (n_faces, dim)
        Sorted vertex tuples of the codimension-1 faces.
    face_cells : ndarray, shape (n_faces, 2)
        Adjacent cells; the second entry is ``BOUNDARY`` for faces on the
        boundary of the hold-all.
    cell_faces : ndarray, shape (n_cells, dim + 1)
        ``cell_faces[k, i]`` is the face of cell ``k`` opposite local vertex i.
    subfaces, subface_faces : (3D only) mesh edges and their incident faces.
    """

    def __init__(self, vertices, cells, boundary_markers=None, _topology=None):
        vertices = np.array(vertices, dtype=float)
        cells = np.array(cells, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] not in (2, 3):
            raise InvalidArgumentError("vertices must have shape (n, 2) or (n, 3)")
        self.dim = vertices.shape[1]
        if cells.ndim != 2 or cells.shape[1] != self.dim + 1:
            raise InvalidArgumentError(
                f"cells must have shape (m, {self.dim + 1}) for dim={self.dim}"
            )
        if cells.size and (cells.min() < 0 or cells.max() >= len(vertices)):
            raise InvalidArgumentError("cell refers to a vertex index out of range")
        vertices.setflags(write=False)
        cells.setflags(write=False)
        self.vertices = vertices
        self.cells = cells
        self._geometry()
        if _topology is None:
            _topology = compute_adjacency(self)
        (self.faces, self.face_cells, self.cell_faces,
         self.subfaces, self.subface_faces) = _topology
        self._topology = _topology
        self.boundary_markers = dict(boundary_markers or {})
        for f in self.boundary_markers:
            if not 0 <= f < len(self.faces) or self.face_cells[f, 1] != BOUNDARY:
                raise TopologyError(f"marker on face {f}, which is not a boundary face", f)

    def _geometry(self):
        X = self.vertices[self.cells]                     # (m, d+1, d)
        J = X[:, 1:, :] - X[:, :1, :]                     # rows are edge vectors
        det = np.linalg.det(J)
        self.volumes = det / factorial(self.dim)
        bad = np.flatnonzero(self.volumes <= 0.0)
        if bad.size:
            k = int(bad[0])
            raise TopologyError(
                f"cell {k} has non-positive signed volume {self.volumes[k]:.3e}"
            )
        # barycentric gradients: lambda_i for i >= 1 are rows of inv(J)^T
        Jinv = np.linalg.inv(J)                           # (m, d, d)
        G = np.empty((len(self.cells), self.dim + 1, self.dim))
        G[:, 1:, :] = np.transpose(Jinv, (0, 2, 1))
        G[:, 0, :] = -G[:, 1:, :].sum(axis=1)
        self.bary_grads = G
        self.centroids = X.mean(axis=1)
        self.diameters = np.max(
            np.linalg.norm(X[:, :, None, :] - X[:, None, :, :], axis=-1), axis=(1, 2)
        )
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        self.diameter = float(np.linalg.norm(hi - lo))
        self.tol = 1e-12 * self.diameter

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_faces(self):
        return len(self.faces)

    def with_vertices(self, vertices):
        """Same topology and markers, new vertex coordinates."""
        return Mesh(vertices, self.cells, self.boundary_markers, _topology=self._topology)

    # ---- geometric queries -------------------------------------------------

    def barycentric(self, cell_id, points):
        points = np.atleast_2d(points)
        x0 = self.vertices[self.cells[cell_id, 0]]
        G = self.bary_grads[cell_id]
        lam = (points - x0) @ G.T
        lam[:, 0] += 1.0
        return lam

    def contains(self, cell_id, point, tol=None):
        tol = self.tol if tol is None else tol
        lam = self.barycentric(cell_id, point)[0]
        h = self.diameters[cell_id]
        # barycentric coords scale like distance / h
        return bool(np.all(lam >= -tol / h))

    def locate(self, point):
        """All cells whose closure contains ``point``."""
        point = np.asarray(point, dtype=float)
        x0 = self.vertices[self.cells[:, 0]]
        lam = np.einsum("md,mkd->mk", point - x0, self.bary_grads[:, 1:, :])
        lam0 = 1.0 - lam.sum(axis=1)
        allk = np.column_stack([lam0, lam])
        return np.flatnonzero(np.all(allk >= -self.tol / self.diameters[:, None], axis=1))

    def face_vertices(self, face_id):
        return self.vertices[self.faces[face_id]]

    def face_measure(self, face_id):
        from .quadrature import simplex_measure
        return simplex_measure(self.face_vertices(face_id))

    def face_normal(self, face_id, cell_id=None):
        """Unit normal of a face pointing out of ``cell_id`` (default: left cell)."""
        if cell_id is None:
            cell_id = self.face_cells[face_id, 0]
        local = int(np.flatnonzero(self.cell_faces[cell_id] == face_id)[0])
        g = self.bary_grads[cell_id, local]
        return -g / np.linalg.norm(g)

    def outward_normals(self):
        """Outward unit normals of every (cell, local face) pair, shape (m, d+1, d)."""
        G = self.bary_grads
        return -G / np.linalg.norm(G, axis=-1, keepdims=True)

    def boundary_faces(self, label=None):
        faces = np.flatnonzero(self.face_cells[:, 1] == BOUNDARY)
        if label is None:
            return faces
        return np.array([f for f in faces if self.boundary_markers.get(int(f)) == label],
                        dtype=np.int64)

    def interior_faces(self):
        return np.flatnonzero(self.face_cells[:, 1] != BOUNDARY)

    def boundary_nodes(self, label=None):
        faces = self.boundary_faces(label)
        if len(faces) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.unique(self.faces[faces])

    def vertex_star(self, vertex):
        """Cells containing ``vertex``."""
        return np.flatnonzero(np.any(self.cells == vertex, axis=1))

    def total_volume(self):
        return float(self.volumes.sum())

    # ---- serialisation -------------------------------------------------------

    def to_dict(self):
        return {
            "dim": self.dim,
            "vertices": self.vertices.tolist(),
            "cells": self.cells.tolist(),
            "boundary_markers": {str(k): v for k, v in sorted(self.boundary_markers.items())},
        }

    def __repr__(self):
        return (f"Mesh(dim={self.dim}, n_vertices={self.n_vertices}, "
                f"n_cells={self.n_cells}, n_faces={self.n_faces})")


def compute_adjacency(mesh):
    """Faces, face-to-cell adjacency and (3D) subfaces of a mesh.

    Returns ``(faces, face_cells, cell_faces, subfaces, subface_faces)``.
    Raises :class:`TopologyError` when a face is shared by more than two
    cells.
    """
    cells = np.asarray(mesh.cells)
    m, nv = cells.shape
    d = nv - 1
    # face opposite local vertex i
    local = [tuple(j for j in range(nv) if j != i) for i in range(nv)]
    keys = np.sort(np.stack([cells[:, idx] for idx in local], axis=1), axis=2)
    flat = keys.reshape(-1, d)
    faces, inverse = np.unique(flat, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    counts = np.bincount(inverse, minlength=len(faces))
    if counts.max(initial=0) > 2:
        f = int(np.argmax(counts))
        raise TopologyError(
            f"face {f} with vertices {faces[f].tolist()} is shared by {counts[f]} cells", f
        )
    owner = np.repeat(np.arange(m), nv)
    order = np.argsort(inverse, kind="stable")
    face_cells = np.full((len(faces), 2), BOUNDARY, dtype=np.int64)
    seen = np.zeros(len(faces), dtype=np.int64)
    for pos in order:
        f = inverse[pos]
        face_cells[f, seen[f]] = owner[pos]
        seen[f] += 1
    cell_faces = inverse.reshape(m, nv)

    subfaces = subface_faces = None
    if d == 3:
        edges = set()
        for c in cells:
            for a, b in itertools.combinations(sorted(c), 2):
                edges.add((a, b))
        subfaces = np.array(sorted(edges), dtype=np.int64)
        index = {tuple(e): i for i, e in enumerate(subfaces)}
        incident = [[] for _ in range(len(subfaces))]
        for f, verts in enumerate(faces):
            for a, b in itertools.combinations(verts, 2):
                incident[index[(a, b)]].append(f)
        subface_faces = [np.array(sorted(x), dtype=np.int64) for x in incident]
    for arr in (faces, face_cells, cell_faces):
        arr.setflags(write=False)
    return faces, face_cells, cell_faces, subfaces, subface_faces


def build_structured_mesh(dim, cells_per_axis, extent=1.0, origin=None):
    """Criss-cross (2D) or Kuhn (3D) triangulation of an axis-aligned box.

    In 2D every square is split into four triangles around its centre; in
    3D every cube is split into six tetrahedra sharing the main diagonal.
    Boundary faces are labelled ``xmin``, ``xmax``, ``ymin``, ``ymax`` (and
    ``zmin``, ``zmax``).
    """
    if dim not in (2, 3):
        raise InvalidArgumentError("dim must be 2 or 3")
    n = np.broadcast_to(np.asarray(cells_per_axis, dtype=np.int64), (dim,)).copy()
    ext = np.broadcast_to(np.asarray(extent, dtype=float), (dim,)).copy()
    if np.any(n < 1):
        raise InvalidArgumentError("cells_per_axis must be >= 1 along every axis")
    if np.any(ext <= 0):
        raise InvalidArgumentError("extent must be positive along every axis")
    org = np.zeros(dim) if origin is None else np.asarray(origin, dtype=float)
    h = ext / n

    grid = np.stack(np.meshgrid(*[np.arange(k + 1) for k in n], indexing="ij"), axis=-1)
    grid_ids = np.arange(grid[..., 0].size).reshape(grid.shape[:-1])
    verts = [org + grid.reshape(-1, dim) * h]

    cells = []
    if dim == 2:
        centres = []
        nxt = grid_ids.size
        for i in range(n[0]):
            for j in range(n[1]):
                a, b = grid_ids[i, j], grid_ids[i + 1, j]
                c, dd = grid_ids[i + 1, j + 1], grid_ids[i, j + 1]
                centres.append(org + (np.array([i, j]) + 0.5) * h)
                m = nxt
                nxt += 1
                cells += [(a, b, m), (b, c, m), (c, dd, m), (dd, a, m)]
        verts.append(np.array(centres))
    else:
        perms = list(itertools.permutations(range(3)))
        for i in range(n[0]):
            for j in range(n[1]):
                for k in range(n[2]):
                    base = np.array([i, j, k])
                    for p in perms:
                        path = [base.copy()]
                        cur = base.copy()
                        for ax in p:
                            cur = cur.copy()
                            cur[ax] += 1
                            path.append(cur)
                        cells.append(tuple(grid_ids[tuple(q)] for q in path))
    vertices = np.vstack(verts)
    cells = np.array(cells, dtype=np.int64)
    cells = _orient_positive(vertices, cells)

    mesh = Mesh(vertices, cells)
    markers = {}
    lo, hi = org, org + ext
    names = "xyz"
    for f in mesh.boundary_faces():
        fv = mesh.vertices[mesh.faces[f]]
        for ax in range(dim):
            if np.allclose(fv[:, ax], lo[ax]):
                markers[int(f)] = names[ax] + "min"
            elif np.allclose(fv[:, ax], hi[ax]):
                markers[int(f)] = names[ax] + "max"
    return Mesh(vertices, cells, markers, _topology=mesh._topology)


def _orient_positive(vertices, cells):
    X = vertices[cells]
    det = np.linalg.det(X[:, 1:, :] - X[:, :1, :])
    cells = cells.copy()
    neg = det < 0
    cells[neg, 0], cells[neg, 1] = cells[neg, 1].copy(), cells[neg, 0].copy()
    return cells


def single_simplex_mesh(dim):
    """The reference simplex as a one-cell mesh."""
    verts = np.vstack([np.zeros(dim), np.eye(dim)])
    return Mesh(verts, [list(range(dim + 1))])


# ---- JSON --------------------------------------------------------------------

def mesh_from_dict(data):
    """Build a mesh from the JSON document layout, validating every field."""
    if not isinstance(data, dict):
        raise InvalidArgumentError("mesh document must be a JSON object")
    for key in ("dim", "vertices", "cells"):
        if key not in data:
            raise InvalidArgumentError(f"mesh document is missing '{key}'")
    dim = data["dim"]
    if dim not in (2, 3):
        raise InvalidArgumentError(f"'dim' must be 2 or 3, got {dim!r}")
    for i, v in enumerate(data["vertices"]):
        if len(v) != dim or not all(np.isfinite(v)):
            raise InvalidArgumentError(f"vertices[{i}] = {v!r} is not a finite {dim}-vector")
    for i, c in enumerate(data["cells"]):
        if len(c) != dim + 1:
            raise InvalidArgumentError(f"cells[{i}] = {c!r} must list {dim + 1} vertices")
        if len(set(c)) != len(c):
            raise InvalidArgumentError(f"cells[{i}] = {c!r} repeats a vertex")
    markers = {}
    for k, v in (data.get("boundary_markers") or {}).items():
        try:
            markers[int(k)] = str(v)
        except ValueError:
            raise InvalidArgumentError(f"boundary_markers key {k!r} is not a face index")
    return Mesh(data["vertices"], data["cells"], markers)


def load_mesh(path):
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return mesh_from_dict(data)


def save_mesh(mesh, path):
    Path(path).write_text(json.dumps(mesh.to_dict()))
