"""Piecewise-linear level-set functions, hat perturbations and classification."""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError

INSIDE, OUTSIDE, CUT, ALIGNED, DEGENERATE = "inside", "outside", "cut", "aligned", "degenerate"
FROM_ABOVE, FROM_BELOW = "from_above", "from_below"


def _check_side(side):
    if side not in (FROM_ABOVE, FROM_BELOW):
        raise InvalidArgumentError(f"side must be '{FROM_ABOVE}' or '{FROM_BELOW}', got {side!r}")
    return side


class LevelSetFunction:
    """Continuous piecewise-linear function given by its vertex values.

    The domain is the strict negative set ``{phi < 0}`` and its boundary is
    the zero set.  Exact zeros are kept as they are.
    """

    def __init__(self, mesh, nodal_values):
        vals = np.array(nodal_values, dtype=float).reshape(-1)
        if vals.shape != (mesh.n_vertices,):
            raise InvalidArgumentError(
                f"expected {mesh.n_vertices} nodal values, got {vals.size}"
            )
        if not np.all(np.isfinite(vals)):
            raise InvalidArgumentError("nodal values must be finite")
        vals.setflags(write=False)
        self.mesh = mesh
        self.nodal_values = vals

    def cell_values(self, cell_id):
        return self.nodal_values[self.mesh.cells[cell_id]]

    def cell_gradients(self):
        """Constant gradient on every cell, shape (n_cells, dim)."""
        return np.einsum("mk,mkd->md", self.nodal_values[self.mesh.cells], self.mesh.bary_grads)

    def cell_gradient(self, cell_id):
        return self.nodal_values[self.mesh.cells[cell_id]] @ self.mesh.bary_grads[cell_id]

    def evaluate(self, cell_id, points):
        lam = self.mesh.barycentric(cell_id, points)
        return lam @ self.cell_values(cell_id)

    def to_dict(self):
        return {"nodal_values": self.nodal_values.tolist()}

    def __repr__(self):
        return f"LevelSetFunction(n_vertices={self.mesh.n_vertices})"


@dataclass(frozen=True)
class HatPerturbation:
    """Nodal P1 basis function centred at ``center_node``."""

    mesh: object
    center_node: int

    def __post_init__(self):
        if not 0 <= self.center_node < self.mesh.n_vertices:
            raise InvalidArgumentError(f"center node {self.center_node} out of range")

    @property
    def center(self):
        return self.mesh.vertices[self.center_node]

    def nodal(self):
        w = np.zeros(self.mesh.n_vertices)
        w[self.center_node] = 1.0
        return w

    def support_cells(self):
        return self.mesh.vertex_star(self.center_node)

    def values(self, cells, points):
        """Values of w at points, each paired with a cell containing it."""
        cells = np.asarray(cells, dtype=np.int64)
        mesh = self.mesh
        x0 = mesh.vertices[mesh.cells[cells, 0]]
        lam = np.einsum("nd,nkd->nk", np.asarray(points) - x0, mesh.bary_grads[cells])
        lam[:, 0] += 1.0
        mask = mesh.cells[cells] == self.center_node
        return np.where(mask.any(axis=1), (lam * mask).sum(axis=1), 0.0)

    def gradient(self, cell_id):
        local = np.flatnonzero(self.mesh.cells[cell_id] == self.center_node)
        if local.size == 0:
            return np.zeros(self.mesh.dim)
        return self.mesh.bary_grads[cell_id, local[0]].copy()


@dataclass
class DomainDecomposition:
    """Sign-based classification of cells and faces.

    Attributes
    ----------
    cell_status : ndarray of str
        ``inside``, ``outside``, ``cut`` or ``degenerate`` (level set
        identically zero on the cell).
    face_status : ndarray of str
        ``inside``, ``outside``, ``cut`` or ``aligned``.
    aligned_faces : ndarray of int
        Faces on which the level set vanishes identically.
    non_aligned : bool
        True iff no face is aligned with the zero set; the one-sided
        derivatives then coincide.
    empty : bool
        The domain has no interior.
    boundary_nodes_inside : ndarray of int
        Vertices on the hold-all boundary with a non-positive value; the
        domain is then not compactly contained in the hold-all.
    """

    cell_status: np.ndarray
    face_status: np.ndarray
    aligned_faces: np.ndarray
    non_aligned: bool
    empty: bool
    boundary_nodes_inside: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def cells(self, status):
        return np.flatnonzero(self.cell_status == status)

    @property
    def compactly_embedded(self):
        return self.boundary_nodes_inside.size == 0


def _status(vals):
    lo, hi = vals.min(axis=1), vals.max(axis=1)
    out = np.full(len(vals), OUTSIDE, dtype=object)
    out[hi <= 0] = INSIDE
    out[(lo < 0) & (hi > 0)] = CUT
    return out, lo, hi


def classify(levelset):
    """Classify every cell and face by the signs of the nodal values."""
    mesh = levelset.mesh
    phi = levelset.nodal_values
    cvals = phi[mesh.cells]
    cell_status, lo, hi = _status(cvals)
    cell_status[(lo == 0) & (hi == 0)] = DEGENERATE

    fvals = phi[mesh.faces]
    face_status, flo, fhi = _status(fvals)
    aligned = (flo == 0) & (fhi == 0)
    face_status[aligned] = ALIGNED
    aligned_faces = np.flatnonzero(aligned)

    bnodes = mesh.boundary_nodes()
    return DomainDecomposition(
        cell_status=cell_status.astype(str),
        face_status=face_status.astype(str),
        aligned_faces=aligned_faces,
        non_aligned=aligned_faces.size == 0,
        empty=not np.any(phi < 0),
        boundary_nodes_inside=bnodes[phi[bnodes] <= 0],
    )


def cut_pattern(levelset):
    """Boolean per cell: does the zero set cross the cell interior."""
    vals = levelset.nodal_values[levelset.mesh.cells]
    return (vals.min(axis=1) < 0) & (vals.max(axis=1) > 0)


def perturb(levelset, hat, t):
    """Level set ``phi + t * w``."""
    vals = np.array(levelset.nodal_values)
    vals[hat.center_node] += t
    return LevelSetFunction(levelset.mesh, vals)


def perturb_nodal(levelset, delta):
    return LevelSetFunction(levelset.mesh, levelset.nodal_values + np.asarray(delta, dtype=float))


def t_max_estimate(levelset, hat):
    """Step bound under which no vertex of the support of ``w`` changes sign.

    Returns ``inf`` when the bound is vacuous: the perturbation node is a
    zero of the level set, or the support of ``w`` meets neither a cut nor
    an inside cell.
    """
    mesh = levelset.mesh
    star = hat.support_cells()
    vals = levelset.nodal_values[mesh.cells[star]]
    if not np.any(vals.min(axis=1) < 0):
        return np.inf
    w = hat.nodal()
    phi = levelset.nodal_values
    mask = (w > 0) & (phi != 0)
    if not mask.any():
        return np.inf
    return float(0.5 * np.min(np.abs(phi[mask]) / w[mask]))


def limit_signs(levelset, hat=None, side=FROM_ABOVE):
    """Vertex signs of ``phi + t w`` for infinitesimal ``t`` on the given side.

    Every vertex keeps the sign of its value; a zero at the perturbation
    node takes the sign of ``t``.  The geometry built from these signs and
    the unperturbed values is the one-sided limit of the perturbed geometry.
    """
    s = np.sign(levelset.nodal_values).astype(np.int64)
    if hat is not None and s[hat.center_node] == 0:
        s[hat.center_node] = 1 if _check_side(side) == FROM_ABOVE else -1
    return s


# ---- construction ------------------------------------------------------------

def sample_analytic(mesh, closure):
    """Level set with ``nodal_values[i] = closure(vertex_i)``."""
    vals = np.array([float(closure(v)) for v in mesh.vertices])
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise InvalidArgumentError(f"closure returned a non-finite value at vertex {bad}")
    return LevelSetFunction(mesh, vals)


def plane(normal, offset):
    """Signed distance to the hyperplane ``normal . x = offset``."""
    n = np.asarray(normal, dtype=float)
    nn = np.linalg.norm(n)
    if nn == 0:
        raise InvalidArgumentError("plane normal must be nonzero")
    n = n / nn
    off = float(offset) / nn
    return lambda x: float(np.dot(n, x) - off)


def sphere(center, radius):
    """Signed distance to a disk (2D) or ball (3D), negative inside."""
    c = np.asarray(center, dtype=float)
    if radius <= 0:
        raise InvalidArgumentError("radius must be positive")
    return lambda x: float(np.linalg.norm(np.asarray(x) - c) - radius)


def box(lower, upper):
    """Signed distance to an axis-aligned box, negative inside."""
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if np.any(hi <= lo):
        raise InvalidArgumentError("box upper corner must exceed lower corner")
    c, half = (lo + hi) / 2, (hi - lo) / 2

    def dist(x):
        q = np.abs(np.asarray(x) - c) - half
        return float(np.linalg.norm(np.maximum(q, 0.0)) + min(q.max(), 0.0))
    return dist


PRIMITIVES = {"plane": plane, "sphere": sphere, "disk": sphere, "box": box}


def levelset_from_spec(mesh, spec):
    """Build a level set from ``{"primitive": name, ...params}`` or ``{"nodal_values": [...]}``."""
    if "nodal_values" in spec:
        return LevelSetFunction(mesh, spec["nodal_values"])
    name = spec.get("primitive")
    if name not in PRIMITIVES:
        raise InvalidArgumentError(f"unknown level-set primitive {name!r}")
    params = {k: v for k, v in spec.items() if k != "primitive"}
    try:
        closure = PRIMITIVES[name](**params)
    except TypeError as exc:
        raise InvalidArgumentError(f"bad parameters for primitive {name!r}: {exc}") from exc
    return sample_analytic(mesh, closure)


def load_levelset(mesh, path):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict) or "nodal_values" not in data:
        raise InvalidArgumentError(f"{path}: expected an object with 'nodal_values'")
    return LevelSetFunction(mesh, data["nodal_values"])
