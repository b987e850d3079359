"""Batch verification suites: Taylor tests, identities, fitted/unfitted comparison.

Each suite returns plain records so the command-line driver only formats
and writes them; all numbers come from library calls.
"""

from dataclasses import dataclass, field

import numpy as np

from .cutgeom import quadrature_boundary
from .dilation import (
    delfour_sum, dj1, dj2, ibp_check, layer_integral, perturbed_objective, strip_volume,
)
from .fem import (
    compliance, cut_objective, fitted_objective, model_dj_continuous, model_dj_cut,
    model_dj_fitted_strong, model_dj_fitted_volume, solve_cut, solve_fitted,
)
from .fields import PiecewiseField
from .instances import candidate_nodes, random_instance
from .levelset import (
    FROM_ABOVE, FROM_BELOW, HatPerturbation, LevelSetFunction, classify,
    sample_analytic, sphere,
)
from .mesh import build_structured_mesh
from .oracle import default_ladder, fd_semiderivative, step_scale, two_sided_check
from .transform import (
    VelocityField, ibp_fitted, jacobian_identities, surface_factor, volume_factor,
)

TOLERANCES = {"layer": 1e-8, "ibp_jump": 1e-8, "ibp_smooth": 1e-10, "ibp_fitted": 1e-11,
              "energy": 1e-10, "delfour": 1e-12, "forms": 1e-10}
TWO_SIDED_RTOL = 1e-8


def corrupt(value, scale):
    """Reference shifted by a visible amount, for negative-control runs."""
    return value + 0.1 * max(abs(value), abs(scale), 1e-6)


# ---- Taylor tests ----------------------------------------------------------------

@dataclass
class TaylorRecord:
    """Both one-sided Taylor tests of one instance."""

    label: str
    dim: int
    node: int
    above: object
    below: object
    two_sided: bool
    agreement: object  # bool, or None on aligned instances
    problem: tuple = field(default=None, repr=False)  # (levelset, hat, f)

    @property
    def passed(self):
        ok = self.above.passed() and self.below.passed()
        return ok and self.agreement is not False


def taylor_record(kind, label, levelset, hat, f, fprime=None, kmin=3, kmax=8,
                  negative_control=False):
    """Compute both semiderivatives and test them against difference quotients."""
    deriv = dj1 if kind == "dj1" else dj2
    objkind = "volume" if kind == "dj1" else "surface"
    up = deriv(levelset, hat, f, fprime, FROM_ABOVE)
    down = deriv(levelset, hat, f, fprime, FROM_BELOW)
    refs = [up.value, down.value]
    if negative_control:
        refs = [corrupt(r, f.coefficients.std()) for r in refs]
    ladder = default_ladder(step_scale(levelset, hat), kmin, kmax)
    objs = (perturbed_objective(levelset, hat, f, fprime, objkind, FROM_ABOVE),
            perturbed_objective(levelset, hat, f, fprime, objkind, FROM_BELOW))
    res = two_sided_check(objs, refs, ladder, TWO_SIDED_RTOL)
    agreement = res.agreement if up.two_sided else None
    return TaylorRecord(label, levelset.mesh.dim, hat.center_node, res.above, res.below,
                        up.two_sided, agreement, (levelset, hat, f))


def taylor_suite(kind, n2=20, n3=10, seed=0, kmin=3, kmax=8, negative_control=False):
    """Taylor tests on random instances: ``n2`` in 2D then ``n3`` in 3D."""
    rng = np.random.default_rng(seed)
    out = []
    for dim, count in ((2, n2), (3, n3)):
        for i in range(count):
            inst = random_instance(dim, rng)
            out.append(taylor_record(kind, f"{dim}d-{i}", inst.levelset, inst.hat, inst.f,
                                     inst.fprime, kmin, kmax, negative_control))
    return out


def support_meets_domain(levelset, hat):
    """Whether the support of ``w`` contains cut or inside cells."""
    status = classify(levelset).cell_status[hat.support_cells()]
    return bool(np.any((status == "cut") | (status == "inside")))


# ---- identities ------------------------------------------------------------------

@dataclass
class IdentityRecord:
    check: str
    instance: str
    value: float
    tolerance: float
    kind: str = "absolute"

    @property
    def passed(self):
        if self.kind == "order":
            return bool(self.value >= self.tolerance)
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)


def _rel(a, b):
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def layer_records(levelset, hat, f, label, negative_control=False):
    """Relative gap between the layer integral and the strip integral per cut cell."""
    t = 0.5 * step_scale(levelset, hat)
    status = classify(levelset).cell_status
    out = []
    for k in hat.support_cells():
        if status[k] != "cut":
            continue
        strip = strip_volume(levelset, hat, t, f, int(k))
        if negative_control:
            strip = corrupt(strip, 0.0)
        layer = layer_integral(levelset, hat, t, int(k), f)
        out.append(IdentityRecord("layer_vs_strip", f"{label}/cell{k}", _rel(layer, strip),
                                  TOLERANCES["layer"]))
    return out


def random_theta(mesh, rng, continuous):
    return [PiecewiseField.random(mesh, 1, rng, continuous=continuous) for _ in range(mesh.dim)]


def identity_suite(seed=0, n2=6, n3=4, negative_control=False):
    """Every identity check on reproducible random data."""
    rng = np.random.default_rng(seed)
    recs = []
    for dim, count in ((2, n2), (3, n3)):
        for i in range(count):
            inst = random_instance(dim, rng)
            label = f"{dim}d-{i}"
            recs += layer_records(inst.levelset, inst.hat, inst.f, label, negative_control)
            t = 0.5 * step_scale(inst.levelset, inst.hat)
            for name, cont in (("ibp_jump", False), ("ibp_smooth", True)):
                f = PiecewiseField.random(inst.mesh, 1, rng, continuous=cont)
                theta = random_theta(inst.mesh, rng, cont)
                recs.append(IdentityRecord(name, label,
                                           ibp_check(inst.levelset, inst.hat, t, f, theta),
                                           TOLERANCES[name]))
    for dim in (2, 3):
        mesh = jittered_mesh(dim, 3 if dim == 2 else 2, rng)
        psi = VelocityField(mesh, rng.normal(size=(mesh.n_vertices, dim)))
        q = PiecewiseField.random(mesh, 2, rng)
        recs.append(IdentityRecord("ibp_fitted", f"{dim}d", ibp_fitted(mesh, psi, q),
                                   TOLERANCES["ibp_fitted"]))
        recs += jacobian_records(psi, f"{dim}d")
    recs += energy_records(negative_control)
    recs += delfour_records(rng)
    return recs


def jittered_mesh(dim, n, rng, amount=0.15):
    """Structured mesh with interior vertices moved randomly by a fraction of ``h``."""
    mesh = build_structured_mesh(dim, n)
    X = mesh.vertices.copy()
    inner = np.setdiff1d(np.arange(mesh.n_vertices), mesh.boundary_nodes())
    X[inner] += amount / n * rng.uniform(-1, 1, size=(inner.size, dim))
    return mesh.with_vertices(X)


def jacobian_records(velocity, label, cell_id=0):
    """Taylor orders of the volume and face stretch factors against the divergences."""
    mesh = velocity.mesh
    face = int(mesh.cell_faces[cell_id, 0])
    div, tdiv = jacobian_identities(velocity, cell_id, face)
    ladder = default_ladder(0.05)
    vol = fd_semiderivative(lambda t: volume_factor(velocity, cell_id, t), div, ladder)
    surf = fd_semiderivative(lambda t: surface_factor(velocity, cell_id, face, t), tdiv, ladder)
    out = []
    for name, rep in (("jacobian_volume", vol), ("jacobian_surface", surf)):
        order = np.inf if rep.exact else rep.fitted_order
        out.append(IdentityRecord(name, label, order, 0.9, "order"))
    return out


def demo_velocity(mesh, label="xmin"):
    return VelocityField.from_function(
        mesh, lambda x: [x[0] * (1 + np.sin(np.pi * x[1])), 0.3 * x[0] * np.cos(np.pi * x[1])],
        (label,))


DEMO_SOURCE = [1.0, 0.5, 0.25]
DEMO_DISK = {"center": [0.0, 0.5], "radius": 0.42}


def demo_levelset(mesh):
    return sample_analytic(mesh, sphere(**DEMO_DISK))


def energy_records(negative_control=False):
    """Compliance against Dirichlet energy in both regimes."""
    out = []
    for n in (4, 8):
        mesh = build_structured_mesh(2, n)
        for regime, sol in (("fitted", solve_fitted(mesh, DEMO_SOURCE)),
                            ("cut", solve_cut(mesh, demo_levelset(mesh), DEMO_SOURCE))):
            e = sol.energy()
            if negative_control:
                e = corrupt(e, 0.0)
            out.append(IdentityRecord("energy", f"{regime}-{n}", _rel(compliance(sol), e),
                                      TOLERANCES["energy"]))
    return out


def line_levelset(mesh, angle=0.3, offset=0.47):
    """Signed distance to a straight line crossing the unit square."""
    n = np.array([np.cos(angle), np.sin(angle)])
    return LevelSetFunction(mesh, mesh.vertices @ n - offset)


def delfour_records(rng):
    mesh = build_structured_mesh(2, 5)
    ls = line_levelset(mesh)
    f = PiecewiseField.random(mesh, 2, rng)
    total = delfour_sum(ls, f)
    rule = quadrature_boundary(ls, f.degree)
    direct = -float(np.dot(rule.weights, f.values(rule.cells, rule.points)))
    return [IdentityRecord("delfour", "line", _rel(total, direct), TOLERANCES["delfour"])]


def degenerate_levelset(levelset):
    """True when the domain is empty."""
    return classify(levelset).empty


# ---- fitted versus unfitted ------------------------------------------------------

@dataclass
class ComparisonRow:
    cells_per_axis: int
    continuous: float
    fitted_volume: float
    fitted_strong: float
    gap: float
    fitted_fd: float
    fitted_order: object
    cut_node: int
    cut: float
    cut_fd: float
    cut_order: object
    min_cut_fraction: float
    energy_gap: float = 0.0
    extras: dict = field(default_factory=dict)


def demo_cut_node(levelset, target=(0.364, 0.71)):
    """Candidate node nearest to a fixed point of the demo boundary."""
    mesh = levelset.mesh
    nodes = candidate_nodes(levelset, 1e-3)
    nodes = np.setdiff1d(nodes, mesh.boundary_nodes("xmin"))
    if nodes.size == 0:
        return None
    d = np.linalg.norm(mesh.vertices[nodes] - np.asarray(target), axis=1)
    return int(nodes[np.argmin(d)])


def compare_fitted_unfitted(levels=(4, 8, 16), r=DEMO_SOURCE, label="xmin", kmin=3, kmax=8):
    """Fitted and unfitted derivatives of the compliance over refinements."""
    rows = []
    for n in levels:
        mesh = build_structured_mesh(2, n)
        V = demo_velocity(mesh, label)
        sol = solve_fitted(mesh, r, label)
        cont, vol, strong = (model_dj_continuous(sol, V), model_dj_fitted_volume(sol, V),
                             model_dj_fitted_strong(sol, V))
        fit = fd_semiderivative(fitted_objective(mesh, V, r, label), vol,
                                default_ladder(0.1, kmin, kmax), j0=compliance(sol))
        ls = demo_levelset(mesh)
        csol = solve_cut(mesh, ls, r, label)
        node = demo_cut_node(ls)
        cut_val, cut_fd, cut_order = 0.0, 0.0, "exact"
        if node is not None:
            hat = HatPerturbation(mesh, node)
            cut_val = model_dj_cut(csol, hat).value
            rep = fd_semiderivative(cut_objective(mesh, ls, hat, r, label), cut_val,
                                    default_ladder(step_scale(ls, hat), kmin, kmax),
                                    j0=compliance(csol))
            cut_fd, cut_order = rep.extrapolated, rep.fitted_order
        rows.append(ComparisonRow(n, cont, vol, strong, abs(cont - strong), fit.extrapolated,
                                  fit.fitted_order, -1 if node is None else node, cut_val,
                                  cut_fd, cut_order, csol.min_cut_fraction))
    return rows


def gaps_decrease(rows, tiny=1e-14):
    """Strictly decreasing gaps, or all gaps negligible."""
    gaps = np.array([r.gap for r in rows])
    if gaps.size < 2:
        return True
    if np.all(gaps <= tiny):
        return True
    return bool(np.all(np.diff(gaps) < 0))


__all__ = [
    "TaylorRecord", "IdentityRecord", "ComparisonRow", "taylor_record", "taylor_suite",
    "identity_suite", "layer_records", "jacobian_records", "energy_records", "delfour_records",
    "compare_fitted_unfitted", "gaps_decrease", "demo_velocity", "demo_levelset",
    "line_levelset", "jittered_mesh", "support_meets_domain", "corrupt", "DEMO_SOURCE",
    "DEMO_DISK",
]
