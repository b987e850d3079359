"""Steepest descent on nodal level-set values for the penalised compliance."""

from dataclasses import dataclass, field

import numpy as np

from .cutgeom import domain_measure
from .dilation import dj1
from .errors import SolverError
from .fem import compliance, model_dj_cut, solve_cut
from .fields import PiecewiseField
from .levelset import HatPerturbation, cut_pattern, perturb_nodal, t_max_estimate


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    compliance: float
    volume: float
    step: float
    gradient_norm: float
    min_cut_fraction: float
    pattern_kept: bool


@dataclass
class OptimizationResult:
    levelset: object
    history: list
    converged: bool
    error: Exception = None
    frames: list = field(default_factory=list)


def penalized_objective(sol, volume, penalty, target_volume):
    return compliance(sol) + 0.5 * penalty * (volume - target_volume) ** 2


def design_nodes(mesh, dirichlet_label):
    """Vertices whose hat function vanishes on the Dirichlet boundary."""
    return np.setdiff1d(np.arange(mesh.n_vertices), mesh.boundary_nodes(dirichlet_label))


def gradient(sol, penalty, target_volume, nodes):
    """Gradient entries for every design node and the current volume."""
    mesh = sol.mesh
    ls = sol.levelset
    volume = domain_measure(ls)
    one = PiecewiseField.constant(mesh, 1.0)
    g = np.zeros(mesh.n_vertices)
    status = cut_pattern(ls)
    touched = set(np.unique(mesh.cells[status]).tolist())
    for i in nodes:
        if int(i) not in touched:
            continue
        hat = HatPerturbation(mesh, int(i))
        g[i] = model_dj_cut(sol, hat).value
        if penalty:
            g[i] += penalty * (volume - target_volume) * dj1(ls, hat, one).value
    return g, volume


def step_cap(levelset, nodes):
    """Half the smallest vertex-sign-preserving bound over nodes that move."""
    mesh = levelset.mesh
    caps = [t_max_estimate(levelset, HatPerturbation(mesh, int(i))) for i in nodes]
    caps = [c for c in caps if np.isfinite(c)]
    return 0.5 * min(caps) if caps else np.inf


def optimize(mesh, levelset, r, dirichlet_label="xmin", penalty=10.0, target_volume=0.25,
             max_iterations=20, max_step=0.02, gradient_tol=1e-10, callback=None,
             direction=-1.0):
    """Run plain steepest descent with a step cap; no line search.

    Each step moves the design nodes by ``-alpha g`` with ``alpha`` chosen
    so that the largest nodal change is ``min(max_step, cap)``, where the
    cap keeps every moving vertex on its side of the zero level.  Solver
    failures stop the run and are returned in ``error`` with the partial
    history.  ``direction=+1`` walks uphill instead, which negative-control
    runs use to check that the monotonicity test can fail.

    Returns
    -------
    OptimizationResult
    """
    nodes = design_nodes(mesh, dirichlet_label)
    ls = levelset
    history = []
    converged = False
    for it in range(max_iterations + 1):
        try:
            sol = solve_cut(mesh, ls, r, dirichlet_label)
        except SolverError as exc:
            return OptimizationResult(ls, history, False, exc)
        g, volume = gradient(sol, penalty, target_volume, nodes)
        obj = penalized_objective(sol, volume, penalty, target_volume)
        gnorm = float(np.max(np.abs(g)))
        rec = IterationRecord(it, obj, compliance(sol), volume, 0.0, gnorm,
                              sol.min_cut_fraction, True)
        history.append(rec)
        if callback is not None:
            callback(rec, ls)
        if gnorm <= gradient_tol:
            converged = True
            break
        if it == max_iterations:
            break
        moving = np.flatnonzero(g)
        step = min(max_step, step_cap(ls, moving))
        before = cut_pattern(ls)
        new = perturb_nodal(ls, direction * step * g / gnorm)
        rec.step = step
        rec.pattern_kept = bool(np.array_equal(before, cut_pattern(new)))
        ls = new
    return OptimizationResult(ls, history, converged)
