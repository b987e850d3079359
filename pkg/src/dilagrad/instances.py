"""Reproducible problem instances shared by the test-suite and the CLI."""

from dataclasses import dataclass

import numpy as np

from .fields import PiecewiseField
from .levelset import HatPerturbation, LevelSetFunction, cut_pattern
from .mesh import build_structured_mesh


@dataclass
class Instance:
    mesh: object
    levelset: LevelSetFunction
    hat: HatPerturbation
    f: PiecewiseField
    fprime: PiecewiseField


def random_levelset(mesh, rng, noise=0.03, margin=0.05):
    """Perturbed sphere level set, positive on the hold-all boundary."""
    d = mesh.dim
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    c = lo + (hi - lo) * rng.uniform(0.4, 0.6, size=d)
    radius = rng.uniform(0.22, 0.32) * float(np.min(hi - lo))
    vals = np.linalg.norm(mesh.vertices - c, axis=1) - radius
    vals = vals + noise * rng.normal(size=vals.size)
    b = mesh.boundary_nodes()
    vals[b] = np.maximum(vals[b], margin)
    return LevelSetFunction(mesh, vals)


def candidate_nodes(levelset, min_abs=0.02):
    """Interior vertices of cut cells whose value is not too close to zero."""
    mesh = levelset.mesh
    cut = np.flatnonzero(cut_pattern(levelset))
    nodes = np.unique(mesh.cells[cut])
    nodes = np.setdiff1d(nodes, mesh.boundary_nodes())
    return nodes[np.abs(levelset.nodal_values[nodes]) >= min_abs]


def random_instance(dim, rng, cells_per_axis=None, degree=2, with_fprime=True):
    """Random level set, hat node and discontinuous element-wise polynomial."""
    n = cells_per_axis or (4 if dim == 2 else 3)
    mesh = build_structured_mesh(dim, n)
    while True:
        ls = random_levelset(mesh, rng)
        nodes = candidate_nodes(ls)
        if nodes.size:
            break
    hat = HatPerturbation(mesh, int(rng.choice(nodes)))
    f = PiecewiseField.random(mesh, degree, rng)
    fprime = PiecewiseField.random(mesh, 1, rng) if with_fprime else None
    return Instance(mesh, ls, hat, f, fprime)


def aligned_instance(c_inside=1.0, c_outside=3.0, slope_inside=1.0, slope_outside=2.0):
    """Zero set along the mesh line ``x = 1/2`` with a kink and a jumping integrand.

    The level set has slope ``slope_inside`` left of the line and
    ``slope_outside`` right of it; ``f`` is ``c_inside`` on cells left of
    the line and ``c_outside`` on the others.  The hat sits at ``(1/2, 1/2)``.
    """
    mesh = build_structured_mesh(2, 4)
    x = mesh.vertices[:, 0] - 0.5
    vals = np.where(x <= 0, slope_inside * x, slope_outside * x)
    ls = LevelSetFunction(mesh, vals)
    node = int(np.flatnonzero(np.all(np.isclose(mesh.vertices, [0.5, 0.5]), axis=1))[0])
    hat = HatPerturbation(mesh, node)
    left = mesh.centroids[:, 0] < 0.5
    f = PiecewiseField.from_cell_values(mesh, np.where(left, c_inside, c_outside))
    return Instance(mesh, ls, hat, f, None)
