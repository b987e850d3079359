import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dilagrad.errors import InvalidArgumentError
from dilagrad.levelset import (
    FROM_ABOVE, FROM_BELOW, HatPerturbation, LevelSetFunction, box, classify, cut_pattern,
    levelset_from_spec, limit_signs, perturb, plane, sample_analytic, sphere, t_max_estimate,
)
from dilagrad.mesh import build_structured_mesh


def node_at(mesh, x):
    return int(np.argmin(np.linalg.norm(mesh.vertices - np.asarray(x), axis=1)))


@pytest.fixture(scope="module")
def m4():
    return build_structured_mesh(2, 4)


def test_all_positive_is_all_outside(m4):
    dec = classify(LevelSetFunction(m4, np.ones(m4.n_vertices)))
    assert np.all(dec.cell_status == "outside")
    assert dec.empty
    assert dec.non_aligned


def test_line_off_grid_is_cut_without_alignment(m4):
    ls = sample_analytic(m4, lambda x: x[0] - 0.4)
    dec = classify(ls)
    # brute force: a cell is cut iff some vertex has x < 0.4 and some has x > 0.4
    xs = m4.vertices[m4.cells, 0]
    expected = (xs.min(axis=1) < 0.4) & (xs.max(axis=1) > 0.4)
    assert np.array_equal(dec.cell_status == "cut", expected)
    assert expected.sum() > 0
    assert dec.aligned_faces.size == 0 and dec.non_aligned
    assert dec.compactly_embedded is False  # the line reaches the hold-all boundary


def test_line_on_grid_flags_aligned_faces(m4):
    ls = sample_analytic(m4, lambda x: x[0] - 0.5)
    dec = classify(ls)
    assert not dec.non_aligned
    fx = m4.vertices[m4.faces[dec.aligned_faces], 0]
    assert np.allclose(fx, 0.5)
    # four grid segments lie on x = 0.5
    assert dec.aligned_faces.size == 4
    assert np.all(dec.face_status[dec.aligned_faces] == "aligned")


def test_degenerate_cell_status():
    m = build_structured_mesh(2, 1)
    dec = classify(LevelSetFunction(m, np.zeros(m.n_vertices)))
    assert np.all(dec.cell_status == "degenerate")


def test_perturb_zero_is_identity(m4):
    ls = sample_analytic(m4, sphere([0.5, 0.5], 0.3))
    out = perturb(ls, HatPerturbation(m4, 12), 0.0)
    assert np.array_equal(out.nodal_values, ls.nodal_values)


@settings(max_examples=40, deadline=None)
@given(t1=st.floats(-1, 1), t2=st.floats(-1, 1), node=st.integers(0, 40))
def test_perturb_composes_by_nodal_addition(t1, t2, node):
    m = build_structured_mesh(2, 4)
    ls = sample_analytic(m, sphere([0.5, 0.5], 0.3))
    hat = HatPerturbation(m, node)
    a = perturb(perturb(ls, hat, t1), hat, t2).nodal_values
    b = perturb(ls, hat, t1 + t2).nodal_values
    assert np.allclose(a, b, rtol=0, atol=4 * np.finfo(float).eps)
    # exact for dyadic steps
    a = perturb(perturb(ls, hat, 0.25), hat, 0.125).nodal_values
    assert np.array_equal(a, perturb(ls, hat, 0.375).nodal_values)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), t=st.floats(1e-6, 0.5))
def test_positive_t_shrinks_and_negative_t_expands(seed, t):
    m = build_structured_mesh(2, 3)
    rng = np.random.default_rng(seed)
    ls = LevelSetFunction(m, rng.uniform(-1, 1, m.n_vertices))
    hat = HatPerturbation(m, int(rng.integers(m.n_vertices)))
    # sample points in every cell and compare memberships
    lam = rng.dirichlet(np.ones(3), size=(m.n_cells, 5))
    pts = np.einsum("cpk,ckd->cpd", lam, m.vertices[m.cells])
    for sgn, subset in ((1, True), (-1, False)):
        lt = perturb(ls, hat, sgn * t)
        for k in range(m.n_cells):
            before = ls.evaluate(k, pts[k]) < 0
            after = lt.evaluate(k, pts[k]) < 0
            if subset:
                assert np.all(~after | before)
            else:
                assert np.all(~before | after)


def test_center_value_moves_by_t(m4):
    ls = sample_analytic(m4, lambda x: x[0] - 0.5)
    c = node_at(m4, [0.5, 0.5])
    assert ls.nodal_values[c] == 0
    assert perturb(ls, HatPerturbation(m4, c), 1e-3).nodal_values[c] == 1e-3


def test_t_max_worked_example(m4):
    c = node_at(m4, [0.5, 0.5])
    vals = np.ones(m4.n_vertices)
    vals[c] = -0.2
    hat = HatPerturbation(m4, c)
    assert t_max_estimate(LevelSetFunction(m4, vals), hat) == pytest.approx(0.1, abs=1e-15)


def test_t_max_far_from_domain_is_vacuous(m4):
    ls = sample_analytic(m4, sphere([0.1, 0.1], 0.05))
    c = node_at(m4, [0.75, 0.75])
    hat = HatPerturbation(m4, c)
    assert t_max_estimate(ls, hat) == np.inf
    assert np.array_equal(cut_pattern(perturb(ls, hat, 0.3)), cut_pattern(ls))


def test_t_max_ignores_zero_center(m4):
    # w is positive only at its centre, so a zero centre leaves no bound
    ls = sample_analytic(m4, lambda x: x[0] - 0.5)
    hat = HatPerturbation(m4, node_at(m4, [0.5, 0.5]))
    assert t_max_estimate(ls, hat) == np.inf
    ref = cut_pattern(perturb(ls, hat, 1.0))
    for t in (1e-8, 1e-3, 0.3):
        assert np.array_equal(cut_pattern(perturb(ls, hat, t)), ref)


@pytest.mark.parametrize("seed", range(8))
def test_cut_pattern_stable_below_t_max(seed):
    rng = np.random.default_rng(seed)
    m = build_structured_mesh(2, 4)
    vals = rng.uniform(-1, 1, m.n_vertices)
    vals[rng.random(m.n_vertices) < 0.15] = 0.0  # some exact zeros
    ls = LevelSetFunction(m, vals)
    hat = HatPerturbation(m, int(rng.integers(m.n_vertices)))
    tm = t_max_estimate(ls, hat)
    if not np.isfinite(tm):
        tm = 1.0
    ref = cut_pattern(perturb(ls, hat, tm))
    for t in rng.uniform(0, tm, 10):
        if t == 0:
            continue
        assert np.array_equal(cut_pattern(perturb(ls, hat, t)), ref)


def test_limit_signs_break_center_zero(m4):
    ls = sample_analytic(m4, lambda x: x[0] - 0.5)
    c = node_at(m4, [0.5, 0.5])
    hat = HatPerturbation(m4, c)
    assert limit_signs(ls, hat, FROM_ABOVE)[c] == 1
    assert limit_signs(ls, hat, FROM_BELOW)[c] == -1
    other = node_at(m4, [0.5, 0.25])
    assert limit_signs(ls, hat, FROM_ABOVE)[other] == 0
    with pytest.raises(InvalidArgumentError):
        limit_signs(ls, hat, "sideways")


def test_sample_disk_distance(m4):
    ls = sample_analytic(m4, sphere([0.5, 0.5], 0.3))
    r = np.linalg.norm(m4.vertices - 0.5, axis=1)
    assert np.allclose(np.abs(ls.nodal_values), np.abs(r - 0.3), atol=1e-15)
    assert np.allclose(ls.nodal_values, r - 0.3, atol=1e-15)


def test_sample_line(m4):
    ls = sample_analytic(m4, plane([1.0, 0.0], 0.4))
    assert np.allclose(ls.nodal_values, m4.vertices[:, 0] - 0.4)


def test_constant_negative_flags_boundary_nodes(m4):
    ls = sample_analytic(m4, lambda x: -1.0)
    dec = classify(ls)
    assert not dec.compactly_embedded
    assert set(dec.boundary_nodes_inside) == set(m4.boundary_nodes())
    assert np.all(dec.cell_status == "inside")


def test_non_finite_closure_rejected(m4):
    with pytest.raises(InvalidArgumentError):
        sample_analytic(m4, lambda x: np.nan if x[0] > 0.9 else 1.0)
    with pytest.raises(InvalidArgumentError):
        LevelSetFunction(m4, np.full(m4.n_vertices, np.inf))


def test_wrong_length_rejected(m4):
    with pytest.raises(InvalidArgumentError):
        LevelSetFunction(m4, np.ones(3))


def test_nodal_values_are_read_only(m4):
    ls = sample_analytic(m4, lambda x: 1.0)
    with pytest.raises(ValueError):
        ls.nodal_values[0] = 3.0


def test_box_primitive_signed_distance():
    d = box([0.2, 0.2], [0.6, 0.8])
    assert d([0.4, 0.5]) == pytest.approx(-0.2)
    assert d([0.0, 0.5]) == pytest.approx(0.2)
    assert d([0.7, 0.9]) == pytest.approx(np.hypot(0.1, 0.1))


def test_levelset_from_spec_variants(m4):
    a = levelset_from_spec(m4, {"primitive": "disk", "center": [0.5, 0.5], "radius": 0.3})
    b = sample_analytic(m4, sphere([0.5, 0.5], 0.3))
    assert np.array_equal(a.nodal_values, b.nodal_values)
    c = levelset_from_spec(m4, {"nodal_values": b.nodal_values.tolist()})
    assert np.array_equal(c.nodal_values, b.nodal_values)
    with pytest.raises(InvalidArgumentError):
        levelset_from_spec(m4, {"primitive": "torus"})


def test_hat_values_partition_of_unity(m4):
    rng = np.random.default_rng(3)
    k = 7
    lam = rng.dirichlet(np.ones(3), size=4)
    pts = lam @ m4.vertices[m4.cells[k]]
    total = sum(HatPerturbation(m4, int(v)).values(np.full(4, k), pts) for v in m4.cells[k])
    assert np.allclose(total, 1.0, atol=1e-14)
    with pytest.raises(InvalidArgumentError):
        HatPerturbation(m4, m4.n_vertices)
