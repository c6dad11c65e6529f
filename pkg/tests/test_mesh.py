import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gelwrinkle.mesh import (
    FILM,
    SUBSTRATE,
    MeshError,
    build_annulus_bilayer,
    build_ellipse_annulus,
    build_rectangle_bilayer,
    cached_mesh,
    ellipse_axes,
    extract_edges,
    surface_normals,
)

# mpmath (40 digits): a = 0.78 sqrt(1.2), b = 0.78 / sqrt(1.2)
ELLIPSE_A_12 = 0.85444718970805913699
ELLIPSE_B_12 = 0.71203932475671594749


def brute_force_edges(elements):
    """Reference edge enumeration by plain dictionaries."""
    inc = {}
    for e, el in enumerate(elements):
        for j, (p, q) in enumerate(((2, 3), (1, 2), (0, 1), (3, 0))):
            a, b = el[p], el[q]
            key = (min(a, b), max(a, b))
            inc.setdefault(key, []).append((e, j + 1, 1 if b > a else -1))
    return inc


def topological_boundary(mesh):
    return set(mesh.edges.boundary_edges().tolist())


class TestRectangle:
    def test_small_counts(self):
        m = build_rectangle_bilayer(2, 0.5, 0.01, 4, 2, 2)
        assert m.n_elements == 16
        assert m.n_nodes == 25
        assert m.edges.n_edges == 40
        assert np.sum(m.regions == FILM) == 8

    def test_acceptance_mesh_counts(self):
        m = build_rectangle_bilayer(2, 0.5, 0.05, 80, 20, 4)
        assert m.n_elements == 1920
        assert len(m.tagged("chem_loaded")) == 80

    @pytest.mark.parametrize("nx,ns,nf", [(4, 2, 2), (6, 3, 2), (10, 5, 4)])
    def test_euler_characteristic(self, nx, ns, nf):
        m = build_rectangle_bilayer(1, 0.5, 0.1, nx, ns, nf)
        assert m.n_nodes - m.edges.n_edges + m.n_elements == 1

    def test_film_by_centroid(self):
        m = build_rectangle_bilayer(2, 0.5, 0.05, 8, 4, 3)
        yc = m.nodes[m.elements][:, :, 1].mean(axis=1)
        np.testing.assert_array_equal(m.regions == FILM, yc > 0.5)

    def test_tags(self):
        m = build_rectangle_bilayer(2, 0.5, 0.05, 8, 4, 3)
        x = m.nodes[m.edges.edges]
        bottom = np.all(x[:, :, 1] == 0, axis=1)
        top = np.all(np.isclose(x[:, :, 1], 0.55), axis=1)
        sides = np.all(x[:, :, 0] == 0, axis=1) | np.all(x[:, :, 0] == 2, axis=1)
        assert set(m.tagged("dirichlet_u_y")) == set(np.flatnonzero(bottom))
        assert set(m.tagged("dirichlet_u_x")) == set(np.flatnonzero(sides))
        assert set(m.tagged("impermeable")) == set(np.flatnonzero(bottom | sides))
        assert set(m.tagged("chem_loaded")) == set(np.flatnonzero(top))

    def test_clamped_bottom_option(self):
        m = build_rectangle_bilayer(2, 0.5, 0.05, 8, 4, 3, bottom_fix_ux=True)
        assert set(m.tagged("dirichlet_u_y")) <= set(m.tagged("dirichlet_u_x"))

    @pytest.mark.parametrize(
        "kw",
        [
            dict(L=0),
            dict(H=-1),
            dict(w=0.6),
            dict(nx=3),
            dict(ny_film=1),
            dict(ny_sub=0),
        ],
    )
    def test_rejects(self, kw):
        args = dict(L=2, H=0.5, w=0.05, nx=8, ny_sub=4, ny_film=2)
        args.update(kw)
        with pytest.raises(MeshError):
            build_rectangle_bilayer(**args)

    def test_deterministic(self):
        a = build_rectangle_bilayer(2, 0.5, 0.01, 8, 4, 2, grading=2.0)
        b = build_rectangle_bilayer(2, 0.5, 0.01, 8, 4, 2, grading=2.0)
        assert a.nodes.tobytes() == b.nodes.tobytes()
        assert a.elements.tobytes() == b.elements.tobytes()


class TestAnnulus:
    def test_small_counts(self):
        m = build_annulus_bilayer(1, 0.2, 0.02, 16, 2, 2)
        assert m.n_elements == 64
        r = np.linalg.norm(m.nodes[m.surface_nodes], axis=1)
        np.testing.assert_allclose(r, 0.78, atol=1e-12)
        assert m.periodic

    def test_radii_bounds(self):
        m = build_annulus_bilayer(1, 0.2, 0.02, 32, 3, 2, grading=1.5)
        r = np.linalg.norm(m.nodes, axis=1)
        assert r.min() >= 0.78 - 1e-12 and r.max() <= 1 + 1e-12

    def test_interior_edge_count_brute_force(self):
        m = build_annulus_bilayer(1, 0.2, 0.02, 16, 2, 2)
        inc = brute_force_edges(m.elements)
        n_int = sum(1 for v in inc.values() if len(v) == 2)
        assert n_int == 16 * 4 * 2 - 16
        assert len(m.edges.interior_edges()) == n_int

    def test_tags(self):
        m = build_annulus_bilayer(1, 0.2, 0.02, 16, 2, 2)
        r = np.linalg.norm(m.nodes[m.edges.edges], axis=2)
        outer = np.flatnonzero(np.all(np.isclose(r, 1.0), axis=1))
        inner = np.flatnonzero(np.all(np.isclose(r, 0.78), axis=1))
        for t in ("dirichlet_u_x", "dirichlet_u_y", "impermeable"):
            assert set(m.tagged(t)) == set(outer)
        assert set(m.tagged("chem_loaded")) == set(inner)

    def test_film_rings(self):
        m = build_annulus_bilayer(1, 0.2, 0.02, 16, 2, 2)
        rc = np.linalg.norm(m.nodes[m.elements].mean(axis=1), axis=1)
        assert np.all(rc[m.regions == FILM] < 0.8)
        assert np.all(rc[m.regions == SUBSTRATE] > 0.8)

    def test_rejects_thick(self):
        with pytest.raises(MeshError):
            build_annulus_bilayer(1, 0.9, 0.1, 16, 2, 2)
        with pytest.raises(MeshError):
            build_annulus_bilayer(1, 0.2, 0.02, 8, 2, 2)


class TestEllipse:
    def test_axes_oracle(self):
        a, b = ellipse_axes(0.78, 1.2)
        assert a == pytest.approx(ELLIPSE_A_12, abs=1e-14)
        assert b == pytest.approx(ELLIPSE_B_12, abs=1e-14)

    @given(st.floats(1.0, 2.0))
    def test_area_invariant(self, aspect):
        a, b = ellipse_axes(0.78, aspect)
        assert a * b == pytest.approx(0.78**2, rel=1e-13)
        assert a / b == pytest.approx(aspect, rel=1e-13)

    def test_circle_coincides_with_annulus(self):
        e = build_ellipse_annulus(0.78, 0.78, 0.02, 1.0, 32, 3, 2)
        c = build_annulus_bilayer(1.0, 0.2, 0.02, 32, 3, 2)
        np.testing.assert_allclose(e.nodes, c.nodes, atol=1e-12)
        np.testing.assert_array_equal(e.elements, c.elements)

    def test_uniform_film_thickness(self):
        a, b = ellipse_axes(0.78, 1.2)
        m = build_ellipse_annulus(a, b, 0.02, 1.0, 64, 3, 2, r_ref=0.78)
        n = 64
        inner = m.nodes[:n]
        film_top = m.nodes[2 * n:3 * n]
        np.testing.assert_allclose(np.linalg.norm(film_top - inner, axis=1), 0.02, rtol=1e-12)
        # minor axis along x through nodes 0 and n/2
        assert inner[0, 0] == pytest.approx(b)
        assert inner[n // 2, 0] == pytest.approx(-b)

    def test_rejects_area_mismatch(self):
        with pytest.raises(MeshError):
            build_ellipse_annulus(0.9, 0.7, 0.02, 1.0, 32, 3, 2, r_ref=0.78)

    def test_rejects_offset_hitting_wall(self):
        with pytest.raises(MeshError):
            build_ellipse_annulus(0.95, 0.6, 0.06, 1.0, 32, 3, 2)


class TestEdges:
    def test_single_element(self):
        et = extract_edges([[0, 1, 2, 3]])
        assert et.edges.tolist() == [[0, 1], [0, 3], [1, 2], [2, 3]]
        sign = {tuple(e): s for e, s in zip(et.edges[et.elem_edges[0]].tolist(), et.elem_signs[0])}
        # CCW traversal 0->1, 1->2 and 2->3 increase the node number; 3->0 does not
        assert sign[(0, 1)] == 1
        assert sign[(1, 2)] == 1
        assert sign[(2, 3)] == 1
        assert sign[(0, 3)] == -1

    def test_two_elements_opposite(self):
        et = extract_edges([[0, 1, 4, 3], [1, 2, 5, 4]])
        shared = et.interior_edges()
        assert len(shared) == 1
        signs = sorted(s for _, _, s in et.incidence(shared[0]))
        assert signs == [-1, 1]

    def test_grid_against_brute_force(self):
        m = build_rectangle_bilayer(1, 0.5, 0.1, 4, 2, 2)
        inc = brute_force_edges(m.elements)
        assert m.edges.n_edges == len(inc) == 40
        assert len(m.edges.interior_edges()) == sum(len(v) == 2 for v in inc.values())
        assert m.edges.edges.tolist() == sorted(map(list, inc))
        for k, key in enumerate(map(tuple, m.edges.edges.tolist())):
            assert sorted(m.edges.incidence(k)) == sorted(inc[key])

    def test_nonmanifold_rejected(self):
        with pytest.raises(MeshError):
            extract_edges([[0, 1, 2, 3], [1, 0, 4, 5], [0, 1, 6, 7]])

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 3), st.integers(2, 3), st.booleans())
    def test_sign_antisymmetry_and_closure(self, half_nx, ns, nf, tube):
        if tube:
            m = build_annulus_bilayer(1, 0.2, 0.02, 16 + 2 * half_nx, ns, nf)
        else:
            m = build_rectangle_bilayer(1, 0.5, 0.1, 2 * half_nx, ns, nf)
        et = m.edges
        for k in et.interior_edges():
            s = [x[2] for x in et.incidence(k)]
            assert s[0] * s[1] == -1
        tagged = set()
        for t in ("dirichlet_u_x", "dirichlet_u_y", "impermeable", "chem_loaded"):
            tagged |= set(m.tagged(t).tolist())
        assert tagged == topological_boundary(m)
        assert not set(m.tagged("chem_loaded")) & set(m.tagged("impermeable"))
        assert np.all(m.signed_areas() > 0)

    def test_regions_edge_connected(self):
        m = build_annulus_bilayer(1, 0.2, 0.02, 16, 2, 2)
        for r in (FILM, SUBSTRATE):
            els = set(np.flatnonzero(m.regions == r).tolist())
            seen, todo = set(), [min(els)]
            while todo:
                e = todo.pop()
                if e in seen:
                    continue
                seen.add(e)
                for k in m.edges.elem_edges[e]:
                    todo.extend(x[0] for x in m.edges.incidence(k) if x[0] in els)
            assert seen == els


def test_surface_normals():
    m = build_annulus_bilayer(1, 0.2, 0.02, 16, 2, 2)
    n = surface_normals(m)
    x = m.nodes[m.surface_nodes]
    np.testing.assert_allclose(n, -x / np.linalg.norm(x, axis=1)[:, None], atol=1e-14)
    f = build_rectangle_bilayer(1, 0.5, 0.1, 4, 2, 2)
    np.testing.assert_array_equal(surface_normals(f), np.tile([0.0, 1.0], (5, 1)))


def test_mesh_cache_roundtrip(tmp_path):
    kw = dict(L=2.0, H=0.5, w=0.01, nx=8, ny_sub=4, ny_film=2)
    a = cached_mesh("flat", cache_dir=tmp_path, **kw)
    files = list(tmp_path.glob("mesh-flat-*.npz"))
    assert len(files) == 1
    b = cached_mesh("flat", cache_dir=tmp_path, **kw)
    for name in ("nodes", "elements", "regions", "surface_nodes"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    np.testing.assert_array_equal(a.edges.elem_signs, b.edges.elem_signs)
    for t in a.boundary_tags:
        np.testing.assert_array_equal(a.tagged(t), b.tagged(t))
    assert b.kind == "flat" and not b.periodic
    cached_mesh("flat", cache_dir=tmp_path, **{**kw, "w": 0.02})
    assert len(list(tmp_path.glob("mesh-flat-*.npz"))) == 2

