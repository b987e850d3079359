import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import ConvexHull

from dilagrad.cutgeom import (
    CutCell, boundary_measure, cut_cell, domain_measure, face_locus_kind, face_patch,
    quadrature_boundary, quadrature_domain, quadrature_facecut,
)
from dilagrad.errors import AlignmentError, DegenerateCellError
from dilagrad.levelset import LevelSetFunction, sample_analytic, sphere
from dilagrad.mesh import build_structured_mesh, single_simplex_mesh


def hull_measure(points, dim):
    """Measure of the convex hull of points in R^dim, zero when degenerate."""
    P = np.asarray(points, dtype=float)
    if len(P) < dim + 1:
        return 0.0
    try:
        return float(ConvexHull(P).volume)
    except Exception:  # qhull rejects flat hulls
        return 0.0


def clipped_points(X, phi):
    """Vertices of {phi <= 0} inside a convex polytope, found edge by edge."""
    pts = [X[i] for i in range(len(X)) if phi[i] <= 0]
    for i in range(len(X)):
        for j in range(i + 1, len(X)):
            if phi[i] * phi[j] < 0:
                lam = phi[i] / (phi[i] - phi[j])
                pts.append(X[i] + lam * (X[j] - X[i]))
    return np.array(pts)


def face_part_measure(Y, psi):
    """Measure of {psi <= 0} on a (d-1)-face with vertices Y, by hand."""
    P = clipped_points(Y, psi)
    if len(P) < 2:
        return 0.0
    if Y.shape[0] == 2:  # segment in 2D
        return float(max(np.linalg.norm(a - b) for a in P for b in P))
    # planar polygon in 3D: project onto the face plane
    e1 = Y[1] - Y[0]
    e1 /= np.linalg.norm(e1)
    nrm = np.cross(Y[1] - Y[0], Y[2] - Y[0])
    e2 = np.cross(nrm / np.linalg.norm(nrm), e1)
    return hull_measure(np.c_[(P - Y[0]) @ e1, (P - Y[0]) @ e2], 2)


def random_levelset(mesh, seed):
    rng = np.random.default_rng(seed)
    return LevelSetFunction(mesh, rng.uniform(-1, 1, mesh.n_vertices))


# ---- single cells ------------------------------------------------------------------

def test_triangle_corner_cut_quarter_area():
    m = single_simplex_mesh(2)
    cc = cut_cell(LevelSetFunction(m, [-1.0, 1.0, 1.0]), 0)
    assert isinstance(cc, CutCell)
    assert cc.interior_measure == pytest.approx(0.5 / 4, abs=1e-15)
    ends = sorted(map(tuple, np.round(cc.boundary_patch, 15)))
    assert np.allclose(ends, [(0.0, 0.5), (0.5, 0.0)])


@pytest.mark.parametrize("phi,nverts", [([-1, 1, 1, 1], 3), ([-1, -1, 1, 1], 4),
                                        ([-1, -2, -3, 1], 3)])
def test_tetrahedron_patch_shapes(phi, nverts):
    m = single_simplex_mesh(3)
    cc = cut_cell(LevelSetFunction(m, np.array(phi, dtype=float)), 0)
    assert len(cc.boundary_patch) == nverts
    # planar hull area in coordinates spanned by the patch
    P = cc.boundary_patch
    e1 = (P[1] - P[0]) / np.linalg.norm(P[1] - P[0])
    e2 = np.cross(cc.normal, e1)
    area = hull_measure(np.c_[(P - P[0]) @ e1, (P - P[0]) @ e2], 2)
    assert cc.patch_measure == pytest.approx(area, rel=1e-13)


def test_inside_outside_strings():
    m = single_simplex_mesh(2)
    assert cut_cell(LevelSetFunction(m, [-1.0, -2.0, 0.0]), 0) == "inside"
    assert cut_cell(LevelSetFunction(m, [1.0, 2.0, 0.0]), 0) == "outside"


def test_vertex_zero_patch_passes_through_vertex():
    m = single_simplex_mesh(2)
    cc = cut_cell(LevelSetFunction(m, [0.0, -1.0, 1.0]), 0)
    assert any(np.allclose(p, [0.0, 0.0]) for p in cc.boundary_patch)
    assert cc.interior_measure == pytest.approx(0.25, abs=1e-15)


def test_degenerate_cell_raises():
    m = single_simplex_mesh(3)
    with pytest.raises(DegenerateCellError):
        cut_cell(LevelSetFunction(m, np.zeros(4)), 0)


# ---- properties over random instances ---------------------------------------------

@pytest.mark.parametrize("dim,n", [(2, 4), (3, 2)])
@pytest.mark.parametrize("seed", range(4))
def test_interior_measure_matches_convex_clipping(dim, n, seed):
    m = build_structured_mesh(dim, n)
    ls = random_levelset(m, seed)
    for k in range(m.n_cells):
        res = cut_cell(ls, k)
        if not isinstance(res, CutCell):
            continue
        phi = ls.cell_values(k)
        ref = hull_measure(clipped_points(m.vertices[m.cells[k]], phi), dim)
        assert res.interior_measure == pytest.approx(ref, rel=1e-13, abs=1e-15)
        # the exterior complement adds up to the cell
        out = hull_measure(clipped_points(m.vertices[m.cells[k]], -phi), dim)
        assert res.interior_measure + out == pytest.approx(m.volumes[k], rel=1e-13)


@pytest.mark.parametrize("dim,n", [(2, 4), (3, 2)])
@pytest.mark.parametrize("seed", range(4))
def test_patch_closure_normal_and_zero_values(dim, n, seed):
    m = build_structured_mesh(dim, n)
    ls = random_levelset(m, seed)
    for k in range(m.n_cells):
        res = cut_cell(ls, k)
        if not isinstance(res, CutCell):
            continue
        g = ls.cell_gradient(k)
        assert np.allclose(res.normal, g / np.linalg.norm(g), rtol=0, atol=1e-14)
        assert np.linalg.norm(res.normal) == pytest.approx(1.0, abs=1e-15)
        assert np.allclose(ls.evaluate(k, res.boundary_patch), 0.0, atol=1e-12)
        # divergence theorem for the constant field: sum of n dS over the piece
        flux = res.normal * res.patch_measure
        idx = m.cells[k]
        for local in range(dim + 1):
            f = m.cell_faces[k, local]
            fv = m.faces[f]
            psi = ls.nodal_values[fv]
            flux = flux + m.face_normal(f, k) * face_part_measure(m.vertices[fv], psi)
        assert np.allclose(flux, 0.0, atol=1e-12), (k, idx)


def test_patch_normal_points_out_of_domain():
    m = build_structured_mesh(2, 4)
    ls = sample_analytic(m, sphere([0.5, 0.5], 0.3))
    for k in range(m.n_cells):
        res = cut_cell(ls, k)
        if isinstance(res, CutCell):
            mid = res.boundary_patch.mean(axis=0)
            assert res.normal @ (mid - 0.5) > 0


# ---- face patches -----------------------------------------------------------------

def regular_face_patches(ls):
    m = ls.mesh
    out = []
    for f in m.interior_faces():
        if face_locus_kind(ls, f) == "regular":
            fp = face_patch(ls, f)
            if fp is not None:
                out.append(fp)
    return out


@pytest.mark.parametrize("dim,n", [(2, 4), (3, 2)])
@pytest.mark.parametrize("seed", range(3))
def test_face_patch_frame_identities(dim, n, seed):
    m = build_structured_mesh(dim, n)
    ls = random_levelset(m, 100 + seed)
    patches = regular_face_patches(ls)
    assert patches
    for fp in patches:
        n1, n2 = fp.normals
        assert np.array_equal(n2, -n1)
        assert np.linalg.norm(fp.n_s) == pytest.approx(1.0, abs=1e-14)
        assert abs(fp.n_s @ n1) < 1e-14
        # n_s points up the in-face gradient, from both sides
        for k in fp.cells:
            assert fp.n_s @ ls.cell_gradient(k) > 0
        if dim == 3:
            seg = fp.cut_locus[1] - fp.cut_locus[0]
            assert abs(fp.n_s @ seg) < 1e-13 * np.linalg.norm(seg) + 1e-15
        else:
            assert np.allclose(np.abs(fp.tangents), [[0, 0, 1], [0, 0, 1]])
            assert np.array_equal(fp.tangents[0], -fp.tangents[1])
        ns3 = np.r_[fp.n_s, np.zeros(3 - dim)]
        for k in range(2):
            t = fp.tangents[k]
            nk = np.r_[fp.normals[k], np.zeros(3 - dim)]
            assert np.allclose(np.cross(t, ns3), nk, atol=1e-14)
            mk = np.r_[fp.conormals[k], np.zeros(3 - dim)]
            pk = np.r_[fp.patch_normals[k], np.zeros(3 - dim)]
            assert abs(mk @ t) < 1e-14
            assert abs(mk @ pk) < 1e-14
            assert np.linalg.norm(mk) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("dim,n", [(2, 4), (3, 2)])
def test_conormal_points_away_from_patch(dim, n):
    m = build_structured_mesh(dim, n)
    ls = random_levelset(m, 7)
    for fp in regular_face_patches(ls):
        locus = fp.cut_locus.mean(axis=0)
        for k, cell in enumerate(fp.cells):
            centre = cut_cell(ls, cell).boundary_patch.mean(axis=0)
            assert fp.conormals[k] @ (locus - centre) > 0


def test_2d_face_normal_points_to_exterior_part():
    m = build_structured_mesh(2, 4)
    ls = random_levelset(m, 11)
    for fp in regular_face_patches(ls):
        fv = m.faces[fp.face_id]
        plus = m.vertices[fv[ls.nodal_values[fv] > 0][0]]
        assert fp.n_s @ (plus - fp.cut_locus[0]) > 0


@pytest.mark.parametrize("dim", [2, 3])
def test_flat_boundary_conormals_cancel(dim):
    m = build_structured_mesh(dim, 3)
    a = np.array([1.0, 0.3, 0.2][:dim])
    ls = sample_analytic(m, lambda x: a @ x - 0.61 * a.sum())
    patches = regular_face_patches(ls)
    assert patches
    for fp in patches:
        assert np.allclose(fp.conormals[0], -fp.conormals[1], atol=1e-14)


def test_aligned_face_raises_and_facecut_rule():
    m = build_structured_mesh(2, 4)
    ls = sample_analytic(m, lambda x: x[0] - 0.5)
    aligned = [f for f in range(m.n_faces) if face_locus_kind(ls, f) == "aligned"]
    assert len(aligned) == 4
    with pytest.raises(AlignmentError):
        face_patch(ls, aligned[0])
    ls = sample_analytic(m, lambda x: x[0] - 0.4)
    fp = regular_face_patches(ls)[0]
    pts, wts = quadrature_facecut(fp, 3)
    assert pts.shape == (1, 2) and np.array_equal(wts, [1.0])


def test_3d_facecut_rule_sums_to_segment_length():
    m = build_structured_mesh(3, 2)
    ls = random_levelset(m, 2)
    for fp in regular_face_patches(ls)[:5]:
        _, wts = quadrature_facecut(fp, 2)
        assert wts.sum() == pytest.approx(np.linalg.norm(np.diff(fp.cut_locus, axis=0)),
                                          rel=1e-14)


def test_subface_locus_kind():
    m = single_simplex_mesh(3)
    ls = LevelSetFunction(m, [0.0, 0.0, -1.0, 1.0])
    kinds = {face_locus_kind(ls, f) for f in range(m.n_faces)}
    assert "subface" in kinds


# ---- global rules -----------------------------------------------------------------

def test_full_domain_weight_is_holdall_volume():
    m = build_structured_mesh(3, 2)
    ls = LevelSetFunction(m, -np.ones(m.n_vertices))
    assert domain_measure(ls) == pytest.approx(1.0, abs=1e-14)


def test_half_plane_area_and_chord():
    m = build_structured_mesh(2, 4)
    ls = sample_analytic(m, lambda x: x[0] - 0.4)
    assert domain_measure(ls) == pytest.approx(0.4, abs=1e-13)
    assert boundary_measure(ls) == pytest.approx(1.0, abs=1e-13)
    tilted = sample_analytic(m, lambda x: x[1] - 0.3 - 0.2 * x[0])
    assert boundary_measure(tilted) == pytest.approx(np.hypot(1.0, 0.2), abs=1e-13)
    assert domain_measure(tilted) == pytest.approx(0.4, abs=1e-13)


def test_disk_area_matches_polygon_oracle():
    m = build_structured_mesh(2, 8)
    ls = sample_analytic(m, sphere([0.5, 0.5], 0.3))
    ref = sum(hull_measure(clipped_points(m.vertices[c], ls.nodal_values[c]), 2)
              for c in m.cells)
    assert domain_measure(ls) == pytest.approx(ref, rel=1e-13)
    assert abs(ref - np.pi * 0.09) < 0.02


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), degree=st.integers(0, 4))
def test_domain_rule_integrates_linear_exactly(seed, degree):
    m = build_structured_mesh(2, 3)
    ls = random_levelset(m, seed)
    rule = quadrature_domain(ls, degree)
    a = np.array([0.7, -1.3])
    # int of a.x over each piece = measure * a.centroid, from the hull oracle
    ref = 0.0
    for c in m.cells:
        P = clipped_points(m.vertices[c], ls.nodal_values[c])
        if hull_measure(P, 2) == 0:
            continue
        h = ConvexHull(P)
        V = P[h.vertices]
        tri = [(V[0], V[i], V[i + 1]) for i in range(1, len(V) - 1)]
        for T in tri:
            A = 0.5 * abs(np.linalg.det(np.array([T[1] - T[0], T[2] - T[0]])))
            ref += A * (a @ np.mean(T, axis=0))
    assert rule.weights @ (rule.points @ a) == pytest.approx(ref, abs=1e-13)


def test_boundary_rule_normals_and_sizes():
    m = build_structured_mesh(3, 2)
    ls = sample_analytic(m, sphere([0.5, 0.5, 0.5], 0.35))
    rule = quadrature_boundary(ls, 2)
    assert rule.points.shape[0] == rule.weights.size == rule.normals.shape[0]
    assert np.allclose(np.linalg.norm(rule.normals, axis=1), 1.0)
    assert np.all(rule.grad_norms > 0)
    assert rule.weights.sum() == pytest.approx(boundary_measure(ls), rel=1e-14)
