"""Semiderivatives of domain and boundary integrals under ``phi + t w``.

Here ``w`` is the P1 hat function of one mesh vertex, so the perturbation
moves the zero level set only inside the star of that vertex.  Besides the
closed-form derivatives the module provides the layer and broken
integration-by-parts identities that underpin them, evaluated with an
explicit integral over the perturbation parameter.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .cutgeom import (EXTERIOR, INTERIOR, DomainRule, boundary_geometries, clip_simplex,
                      face_locus_kind, face_patch, quadrature_boundary, quadrature_domain,
                      quadrature_facecut)
from .errors import AccuracyError, AmbiguousLimitError, InvalidArgumentError, SingularLevelSetError
from .levelset import FROM_ABOVE, FROM_BELOW, _check_side, classify, limit_signs, perturb, \
    t_max_estimate
from .quadrature import batch_quadrature


@dataclass
class SemiDerivative:
    """One-sided directional derivative with diagnostics.

    Attributes
    ----------
    value : float
    side : str
        ``from_above`` (t -> 0+) or ``from_below`` (t -> 0-).
    aligned_faces_used : list of int
        Faces lying in the zero set; on them the integrands are one-sided
        limits chosen by ``side``.
    two_sided : bool
        No face is aligned, so both sides give the same value.
    cell_contributions, face_contributions : dict
        Per-cell boundary-patch terms and per-face jump terms.
    volume_term : float
        Contribution of the explicit shape derivative ``fprime``.
    excluded_faces : list of int
        Faces met by the zero set only along a whole edge; their locus is
        degenerate and they are left out of the jump sum.
    """

    value: float
    side: str
    aligned_faces_used: list
    two_sided: bool
    cell_contributions: dict = field(default_factory=dict)
    face_contributions: dict = field(default_factory=dict)
    volume_term: float = 0.0
    excluded_faces: list = field(default_factory=list)

    def to_dict(self):
        return {
            "value": self.value,
            "side": self.side,
            "two_sided": self.two_sided,
            "aligned_faces_used": [int(f) for f in self.aligned_faces_used],
            "volume_term": self.volume_term,
            "cell_contributions": {str(k): v for k, v in sorted(self.cell_contributions.items())},
            "face_contributions": {str(k): v for k, v in sorted(self.face_contributions.items())},
            "excluded_faces": [int(f) for f in self.excluded_faces],
        }


def _aligned_side(side):
    return INTERIOR if _check_side(side) == FROM_ABOVE else EXTERIOR


def _alignment(levelset):
    dec = classify(levelset)
    return [int(f) for f in dec.aligned_faces], bool(dec.non_aligned)


def _check_grad(geoms):
    for g in geoms:
        if g.grad_norm == 0.0:
            raise SingularLevelSetError(f"level set has zero gradient on cut cell {g.cell_id}")


# ---- objectives ----------------------------------------------------------------

def volume_integral(levelset, f, signs=None):
    """Integral of ``f`` over the domain."""
    rule = quadrature_domain(levelset, f.degree, signs)
    return float(np.dot(rule.weights, f.values(rule.cells, rule.points)))


def surface_integral(levelset, f, side=FROM_ABOVE, signs=None):
    """Integral of ``f`` over the zero set.

    Pieces on aligned faces are counted once, with ``f`` taken from the
    side selected by ``side`` (the inside cell for ``from_above``).
    """
    rule = quadrature_boundary(levelset, f.degree, signs, aligned_side=_aligned_side(side))
    if rule.weights.size == 0:
        return 0.0
    return float(np.dot(rule.weights, f.values(rule.cells, rule.points)))


def perturbed_objective(levelset, hat, f, fprime=None, kind="volume", side=FROM_ABOVE):
    """``t -> J(phi + t w)`` with integrand ``f + t fprime``."""
    def J(t):
        ls = perturb(levelset, hat, t)
        integral = volume_integral if kind == "volume" else \
            (lambda l, g: surface_integral(l, g, side))
        val = integral(ls, f)
        if fprime is not None and t != 0:
            val += t * integral(ls, fprime)
        return val
    return J


# ---- semiderivatives -----------------------------------------------------------

def dj1(levelset, hat, f, fprime=None, side=FROM_ABOVE):
    """Semiderivative of the domain integral of ``f``.

    Equals the domain integral of ``fprime`` minus the boundary integral of
    ``f w / |grad phi|``.  On faces lying in the zero set the integrand is
    the limit from the inside (``from_above``) or outside (``from_below``).
    """
    signs = limit_signs(levelset, hat, side)
    aligned, two_sided = _alignment(levelset)
    star = hat.support_cells()
    geoms = boundary_geometries(levelset, signs, star, _aligned_side(side))
    _check_grad(geoms)
    contrib = {}
    for g in geoms:
        p, w = batch_quadrature(g.patch_simplices, f.degree + 1)
        p = p.reshape(-1, levelset.mesh.dim)
        cells = np.full(len(p), g.cell_id)
        vals = f.values(cells, p) * hat.values(cells, p) / g.grad_norm
        contrib[g.cell_id] = contrib.get(g.cell_id, 0.0) - float(np.dot(w.ravel(), vals))
    vol = 0.0 if fprime is None else volume_integral(levelset, fprime)
    value = vol + sum(contrib[k] for k in sorted(contrib))
    return SemiDerivative(float(value), side, aligned, two_sided, contrib, {}, vol)


def dj2(levelset, hat, f, fprime=None, side=FROM_ABOVE):
    """Semiderivative of the boundary integral of ``f``.

    Sum of the boundary integral of ``fprime``, the normal-derivative term
    ``-(df/dn) w / |grad phi|`` on each planar patch, and the face term
    ``-n_s . (f1 m1 + f2 m2) w / |grad_s phi|`` over faces where the zero
    set crosses (a point evaluation in 2D).
    """
    mesh = levelset.mesh
    signs = limit_signs(levelset, hat, side)
    aligned, two_sided = _alignment(levelset)
    star = hat.support_cells()
    geoms = boundary_geometries(levelset, signs, star, _aligned_side(side))
    _check_grad(geoms)
    contrib = {}
    for g in geoms:
        p, w = batch_quadrature(g.patch_simplices, f.degree + 1)
        p = p.reshape(-1, mesh.dim)
        cells = np.full(len(p), g.cell_id)
        dfdn = f.gradients(cells, p) @ g.normal
        vals = dfdn * hat.values(cells, p) / g.grad_norm
        contrib[g.cell_id] = contrib.get(g.cell_id, 0.0) - float(np.dot(w.ravel(), vals))

    faces, excluded = {}, []
    for S in _star_faces(mesh, hat.center_node):
        kind = face_locus_kind(levelset, S, signs)
        if kind == "subface":
            excluded.append(int(S))
        if kind != "regular":
            continue
        fp = face_patch(levelset, S, signs)
        if fp is None:
            continue
        faces[int(S)] = -_face_jump(fp, hat, f, lambda k, p, m: m)

    vol = 0.0
    if fprime is not None:
        vol = surface_integral(levelset, fprime, side, signs)
    value = vol + sum(contrib[k] for k in sorted(contrib)) + sum(faces[k] for k in sorted(faces))
    return SemiDerivative(float(value), side, aligned, two_sided, contrib, faces, vol, excluded)


def _star_faces(mesh, node):
    """Interior faces having ``node`` as a vertex."""
    mask = np.any(mesh.faces == node, axis=1) & (mesh.face_cells[:, 1] >= 0)
    return np.flatnonzero(mask)


def _face_jump(fp, hat, f, vector, degree_extra=1):
    """Integral over the face locus of ``n_s . sum_k f_k vector_k * w / |grad_s phi|``.

    ``vector(k, points, conormal)`` returns the per-side vector field at the
    locus points, shape (n, d).
    """
    p, w = quadrature_facecut(fp, f.degree + degree_extra + 1)
    total = np.zeros(len(p))
    for k, K in enumerate(fp.cells):
        cells = np.full(len(p), K)
        vec = np.broadcast_to(vector(k, p, fp.conormals[k]), p.shape)
        total += f.values(cells, p) * (vec @ fp.n_s)
    cells = np.full(len(p), fp.cells[0])
    return float(np.dot(w, total * hat.values(cells, p))) / fp.grad_s_norm


# ---- layer identities ----------------------------------------------------------

_GL5 = leggauss(5)


def _gl5(g, a, b):
    x, w = _GL5
    tau = 0.5 * (b - a) * x + 0.5 * (a + b)
    return 0.5 * (b - a) * sum(wi * g(ti) for wi, ti in zip(w, tau))


def adaptive_gauss(g, a, b, rtol=1e-10, max_level=20, atol=0.0):
    """Composite 5-point Gauss-Legendre with bisection.

    An interval is accepted when its estimate agrees with the sum over its
    two halves to within its share of ``max(rtol * |integral|, atol)``.
    ``atol`` matters for integrands that vanish up to round-off.

    Raises
    ------
    AccuracyError
        Some interval still fails after ``max_level`` bisections.
    """
    if a == b:
        return 0.0
    coarse = [_gl5(g, a + (b - a) * i / 8, a + (b - a) * (i + 1) / 8) for i in range(8)]
    target = max(rtol * abs(sum(coarse)), atol, np.finfo(float).tiny)
    total, worst = 0.0, 0.0
    stack = [(a + (b - a) * i / 8, a + (b - a) * (i + 1) / 8, c, 0) for i, c in enumerate(coarse)]
    while stack:
        lo, hi, whole, level = stack.pop()
        mid = 0.5 * (lo + hi)
        left, right = _gl5(g, lo, mid), _gl5(g, mid, hi)
        err = abs(left + right - whole)
        if err <= target * (hi - lo) / (b - a) or err <= 1e-15 * abs(left + right):
            total += left + right
        elif level >= max_level:
            total += left + right
            worst = max(worst, err)
        else:
            stack.append((mid, hi, right, level + 1))
            stack.append((lo, mid, left, level + 1))
    if worst > 0:
        raise AccuracyError(
            f"adaptive quadrature did not converge within {max_level} levels", total, worst
        )
    return total


def _check_t(levelset, hat, t):
    tmax = t_max_estimate(levelset, hat)
    if not 0 <= t <= tmax:
        raise InvalidArgumentError(f"t = {t} outside the admissible range (0, {tmax}]")


def strip_volume(levelset, hat, t, f, cell_id=None):
    """Integral of ``f`` over the layer between the boundaries of ``phi`` and ``phi_t``.

    The layer ``{phi < 0 <= phi + t w}`` is integrated directly: each cell
    of the support of ``w`` (or the single cell given) is clipped by both
    level sets, which avoids the cancellation of subtracting two nearly
    equal cut-cell integrals.
    """
    _check_t(levelset, hat, t)
    if t == 0:
        return 0.0
    cells = hat.support_cells() if cell_id is None else np.array([cell_id])
    cells = np.intersect1d(cells, hat.support_cells())
    if cells.size == 0:
        return 0.0
    rule = layer_rule(levelset, hat, t, cells, f.degree)
    return float(np.dot(rule.weights, f.values(rule.cells, rule.points)))


def layer_rule(levelset, hat, t, cells, degree):
    """Quadrature on the layer ``{phi < 0 <= phi + t w}`` inside the given cells."""
    mesh = levelset.mesh
    d = mesh.dim
    lt = perturb(levelset, hat, t)
    P, W, C = [np.zeros((0, d))], [np.zeros(0)], [np.zeros(0, dtype=np.int64)]
    for k in cells:
        idx = mesh.cells[k]
        X, phi = mesh.vertices[idx], levelset.nodal_values[idx]
        inner = clip_simplex(X, phi, np.sign(phi))
        pieces = []
        for sub in inner:
            vals = -lt.evaluate(k, sub)
            vals[np.abs(vals) <= 1e-15 * np.max(np.abs(lt.cell_values(k)))] = 0.0
            pieces.append(clip_simplex(sub, vals, np.sign(vals)))
        if not pieces:
            continue
        pieces = np.concatenate(pieces)
        if len(pieces) == 0:
            continue
        p, w = batch_quadrature(pieces, degree)
        P.append(p.reshape(-1, d))
        W.append(w.ravel())
        C.append(np.full(w.size, k))
    return DomainRule(np.concatenate(P), np.concatenate(W), np.concatenate(C))


def _patch_flux(levelset, hat, f, cell_id):
    """tau -> integral over the zero set of phi_tau in a cell of f w / |grad phi_tau|."""
    cells = np.array([cell_id])

    def g(tau):
        lt = perturb(levelset, hat, tau)
        total = 0.0
        for geo in boundary_geometries(lt, None, cells, INTERIOR):
            p, w = batch_quadrature(geo.patch_simplices, f.degree + 1)
            p = p.reshape(-1, levelset.mesh.dim)
            c = np.full(len(p), cell_id)
            total += np.dot(w.ravel(), f.values(c, p) * hat.values(c, p)) / geo.grad_norm
        return total
    return g


def layer_integral(levelset, hat, t, cell_id, f, rtol=1e-10, max_level=20):
    """Layer integral over one cell, integrating boundary fluxes in the perturbation parameter.

    Returns the integral over ``tau`` in ``(0, t)`` of the boundary integral
    of ``f w / |grad phi_tau|`` over the zero set of ``phi_tau`` in the
    cell.  It reproduces :func:`strip_volume` on that cell.
    """
    _check_t(levelset, hat, t)
    if t == 0 or cell_id not in set(hat.support_cells().tolist()):
        return 0.0
    return adaptive_gauss(_patch_flux(levelset, hat, f, cell_id), 0.0, t, rtol, max_level)


def _theta_values(theta, cells, points):
    return np.column_stack([th.values(cells, points) for th in theta])


def _theta_div(theta, cells, points):
    return sum(th.gradients(cells, points)[:, i] for i, th in enumerate(theta))


def ibp_sides(levelset, hat, t, f, theta, rtol=1e-10, max_level=20):
    """Both sides of the broken divergence identity on the layer.

    Left: sum over cells of the integral over the layer of
    ``div(theta) f + theta . grad f``.  Right: boundary flux of
    ``f theta`` through the old and new boundary pieces plus the face jump
    term ``n_s . (f1 theta1 x t1 + f2 theta2 x t2)``, integrated over the
    perturbation parameter.
    """
    _check_t(levelset, hat, t)
    mesh = levelset.mesh
    d = mesh.dim
    if len(theta) != d:
        raise InvalidArgumentError(f"theta needs {d} components")
    if t == 0:
        return 0.0, 0.0
    star = hat.support_cells()
    lt = perturb(levelset, hat, t)
    deg = f.degree + max(th.degree for th in theta)

    def h(rule):
        c, p = rule.cells, rule.points
        val = _theta_div(theta, c, p) * f.values(c, p) \
            + np.einsum("nd,nd->n", _theta_values(theta, c, p), f.gradients(c, p))
        return float(np.dot(rule.weights, val))

    lhs = h(quadrature_domain(levelset, deg, cells=star)) - h(quadrature_domain(lt, deg, cells=star))

    def flux(ls, signs):
        r = quadrature_boundary(ls, deg, signs, star, INTERIOR)
        if r.weights.size == 0:
            return 0.0
        th = _theta_values(theta, r.cells, r.points)
        return float(np.dot(r.weights, np.einsum("nd,nd->n", r.normals, th)
                            * f.values(r.cells, r.points)))

    f_old, f_new = flux(levelset, limit_signs(levelset, hat, FROM_ABOVE)), flux(lt, None)
    rhs = f_old - f_new
    atol = 1e-3 * rtol * max(abs(lhs), abs(f_old), abs(f_new))

    faces = _star_faces(mesh, hat.center_node)

    def jump(tau):
        ls = perturb(levelset, hat, tau)
        total = 0.0
        for S in faces:
            if face_locus_kind(ls, S) != "regular":
                continue
            fp = face_patch(ls, S)
            if fp is None:
                continue

            def vec(k, p, m, fp=fp):
                th = _theta_values(theta, np.full(len(p), fp.cells[k]), p)
                th3 = np.column_stack([th, np.zeros((len(p), 3 - d))]) if d == 2 else th
                return np.cross(th3, fp.tangents[k])[:, :d]
            total += _face_jump(fp, hat, f, vec, max(th.degree for th in theta))
        return total

    rhs += adaptive_gauss(jump, 0.0, t, rtol, max_level, atol)
    return lhs, rhs


def ibp_check(levelset, hat, t, f, theta, rtol=1e-10, max_level=20):
    """Absolute residual of the broken divergence identity on the layer."""
    lhs, rhs = ibp_sides(levelset, hat, t, f, theta, rtol, max_level)
    return abs(lhs - rhs)


class RayParameterization:
    """Points of the perturbed boundary reached along rays from the hat centre.

    For a cell containing the perturbation node ``x_w`` and a point ``x_s``
    on the opposite face, the ray from ``x_s`` towards ``x_w`` meets the
    zero set of ``phi + tau w`` at ``X(x_s, tau)``; the map is rational in
    ``tau``.
    """

    def __init__(self, levelset, hat, cell_id):
        mesh = levelset.mesh
        local = np.flatnonzero(mesh.cells[cell_id] == hat.center_node)
        if local.size == 0:
            raise InvalidArgumentError(f"cell {cell_id} does not contain the perturbation node")
        self.levelset, self.hat, self.cell_id = levelset, hat, int(cell_id)
        self.opposite_face = int(mesh.cell_faces[cell_id, local[0]])
        self.opposite_vertices = mesh.face_vertices(self.opposite_face)
        self._grad = levelset.cell_gradient(cell_id)
        self._grad_w = hat.gradient(cell_id)

    def __call__(self, x_s, tau):
        x_s = np.asarray(x_s, dtype=float)
        phi_s = float(self.levelset.evaluate(self.cell_id, x_s)[0])
        direction = self.hat.center - x_s
        g = self._grad + tau * self._grad_w
        return x_s - phi_s / (g @ direction) * direction

    def hits_cell(self, x_s, tau):
        """Whether the intersection lies on the segment from ``x_s`` to ``x_w``."""
        x_s = np.asarray(x_s, dtype=float)
        direction = self.hat.center - x_s
        g = self._grad + tau * self._grad_w
        denom = g @ direction
        if denom == 0:
            return False
        s = -float(self.levelset.evaluate(self.cell_id, x_s)[0]) / denom
        return 0.0 <= s <= 1.0


# ---- topological derivative ----------------------------------------------------

def topological_derivative_point(f, x0):
    """Pointwise topological derivative of the domain integral of ``f``: ``-f(x0)``.

    Raises
    ------
    AmbiguousLimitError
        ``x0`` lies on a face across which ``f`` jumps.
    """
    mesh = f.mesh
    x0 = np.asarray(x0, dtype=float)
    cells = mesh.locate(x0)
    if cells.size == 0:
        raise InvalidArgumentError(f"point {x0.tolist()} is outside the mesh")
    vals = f.values(cells, np.tile(x0, (len(cells), 1)))
    if np.ptp(vals) > 1e-12 * max(1.0, np.max(np.abs(vals))):
        raise AmbiguousLimitError(
            f"field takes different limits {vals.tolist()} at {x0.tolist()}"
        )
    return -float(vals[0])


def ball_average(f, x0, radius, n=8):
    """Mean of ``f`` over the exact ball of the given radius around ``x0``.

    Uses a tensor Gauss rule in polar (2D) or spherical (3D) coordinates
    on the cell containing ``x0``; the ball must lie in that cell.
    """
    mesh = f.mesh
    x0 = np.asarray(x0, dtype=float)
    cells = mesh.locate(x0)
    if cells.size != 1:
        raise AmbiguousLimitError(f"point {x0.tolist()} is not interior to a single cell")
    K = int(cells[0])
    lam = mesh.barycentric(K, x0)[0]
    dist = np.min(lam / np.linalg.norm(mesh.bary_grads[K], axis=1))
    if radius >= dist:
        raise InvalidArgumentError("ball is not contained in the cell of its centre")
    xr, wr = leggauss(n)
    rho = 0.5 * radius * (xr + 1)
    wrho = 0.5 * radius * wr
    m = 4 * n
    ang = 2 * np.pi * np.arange(m) / m
    if mesh.dim == 2:
        dirs = np.column_stack([np.cos(ang), np.sin(ang)])
        wd = np.full(m, 2 * np.pi / m)
        wts = np.outer(wrho * rho, wd)
        vol = np.pi * radius ** 2
    else:
        xc, wc = leggauss(n)
        st = np.sqrt(1 - xc ** 2)
        dirs = np.array([[s * np.cos(a), s * np.sin(a), c] for c, s in zip(xc, st) for a in ang])
        wd = np.array([wcc * 2 * np.pi / m for wcc in wc for _ in ang])
        wts = np.outer(wrho * rho ** 2, wd)
        vol = 4.0 / 3.0 * np.pi * radius ** 3
    pts = x0 + rho[:, None, None] * dirs[None, :, :]
    vals = f.values(np.full(pts.shape[0] * pts.shape[1], K), pts.reshape(-1, mesh.dim))
    return float(np.sum(wts.ravel() * vals) / vol)


def delfour_sum(levelset, f, side=FROM_ABOVE):
    """Sum of ``dj1`` over every hat function whose support meets the boundary."""
    from .levelset import HatPerturbation
    mesh = levelset.mesh
    rule = quadrature_boundary(levelset, 0, limit_signs(levelset, None, side),
                               aligned_side=_aligned_side(side))
    nodes = np.unique(mesh.cells[np.unique(rule.cells)]) if rule.cells.size else []
    total = 0.0
    for v in nodes:
        total += dj1(levelset, HatPerturbation(mesh, int(v)), f, side=side).value
    return total


__all__ = [
    "SemiDerivative", "RayParameterization", "dj1", "dj2", "strip_volume", "layer_integral",
    "ibp_check", "ibp_sides", "topological_derivative_point", "ball_average", "delfour_sum",
    "volume_integral", "surface_integral", "perturbed_objective", "adaptive_gauss",
    "FROM_ABOVE", "FROM_BELOW",
]
