import numpy as np
import pytest

from dmpfem.generators import three_line_mesh
from dmpfem.mesh import (
    Mesh,
    MeshError,
    boundary_adjacent_to_interior,
    classify_boundary,
    covers_interior,
    extract_subdomain,
    interior_edges,
    interior_graph_connected,
    remove_triangles,
    ring,
    star,
)


def unit_square_two_triangles():
    v = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    return Mesh(v, np.array([[0, 1, 2], [0, 2, 3]]))


class TestMeshValidation:
    def test_orientation_normalized(self):
        v = np.array([[0, 0], [1, 0], [0, 1]], float)
        m = Mesh(v, np.array([[0, 2, 1]]))
        assert m.areas[0] == pytest.approx(0.5)

    def test_degenerate_triangle_rejected(self):
        v = np.array([[0, 0], [1, 0], [2, 0]], float)
        with pytest.raises(MeshError):
            Mesh(v, np.array([[0, 1, 2]]))

    def test_duplicate_vertices_rejected(self):
        v = np.array([[0, 0], [1, 0], [0, 1], [0, 0]], float)
        with pytest.raises(MeshError):
            Mesh(v, np.array([[0, 1, 2], [3, 1, 2]]))

    def test_bad_index_rejected(self):
        v = np.array([[0, 0], [1, 0], [0, 1]], float)
        with pytest.raises((MeshError, IndexError)):
            Mesh(v, np.array([[0, 1, 5]]))

    def test_unknown_label(self):
        with pytest.raises(KeyError):
            unit_square_two_triangles().find_label("Z")

    def test_angles_sum_to_pi(self, rng):
        from oracles import perturbed_grid_mesh

        m = perturbed_grid_mesh(rng)
        np.testing.assert_allclose(m.angles.sum(axis=1), np.pi, atol=1e-12)


class TestPartition:
    def test_no_interior(self):
        p = classify_boundary(unit_square_two_triangles())
        assert p.alpha == () and len(p.beta) == 4

    @pytest.mark.parametrize("n", [2, 5])
    def test_three_line_counts(self, n):
        m = three_line_mesh(n)
        p = m.partition
        assert len(p.alpha) == (n - 1) ** 2
        assert len(p.beta) == 4 * n
        assert set(p.alpha) | set(p.beta) == set(range(m.n_vertices))

    def test_n2_single_interior(self):
        m = three_line_mesh(2)
        (c,) = m.partition.alpha
        np.testing.assert_allclose(m.vertices[c], [0.5, 0.5])

    def test_detached_corners_three_line(self):
        # corners (1,0) and (0,1) touch only one triangle, whose other
        # vertices are boundary vertices
        m = three_line_mesh(5)
        det = boundary_adjacent_to_interior(m)
        coords = {tuple(np.round(m.vertices[v], 12)) for v in det}
        assert coords == {(1.0, 0.0), (0.0, 1.0)}

    def test_disconnected_interior(self):
        # two 2x2 squares joined by a single vertex
        a = three_line_mesh(2)
        v2 = a.vertices + [1.0, 1.0]
        verts = np.vstack([a.vertices, v2])
        tris = np.vstack([a.triangles, a.triangles + a.n_vertices])
        # merge the shared corner (1,1)
        keep = {}
        out = []
        for i, p in enumerate(verts):
            key = tuple(np.round(p, 12))
            if key not in keep:
                keep[key] = len(out)
                out.append(p)
        remap = np.array([keep[tuple(np.round(p, 12))] for p in verts])
        m = Mesh(np.array(out), remap[tris])
        assert len(m.partition.alpha) == 2
        assert not interior_graph_connected(m)

    def test_connected(self):
        assert interior_graph_connected(three_line_mesh(4))


class TestSubdomains:
    def test_star_of_three_line_interior_vertex(self):
        m = three_line_mesh(4)
        v = m.partition.alpha[4]
        s = star(m, v)
        assert len(s.triangle_ids) == 6
        assert s.interior_parent == (v,)
        assert s.vertex_map[0] == v

    def test_extract_identity(self):
        m = three_line_mesh(3)
        s = extract_subdomain(m, range(m.n_triangles))
        assert sorted(s.vertex_map) == list(range(m.n_vertices))
        assert set(s.interior_parent) == set(m.partition.alpha)

    def test_empty_subdomain_rejected(self):
        with pytest.raises(MeshError):
            extract_subdomain(three_line_mesh(3), [])

    def test_ring_grows(self):
        m = three_line_mesh(6)
        v = m.partition.alpha[len(m.partition.alpha) // 2]
        sizes = [len(ring(m, v, k).triangle_ids) for k in (1, 2, 3)]
        assert sizes[0] == 6 and sizes[0] < sizes[1] < sizes[2]

    def test_star_cover(self):
        m = three_line_mesh(4)
        assert covers_interior(m, [star(m, v) for v in m.partition.alpha]) == []
        part = [star(m, v) for v in m.partition.alpha[:3]]
        assert len(covers_interior(m, part)) == len(m.partition.alpha) - 3

    def test_remove_triangles_reindexes(self):
        m = three_line_mesh(2)
        m2, old = remove_triangles(m, [0])
        assert m2.n_triangles == m.n_triangles - 1
        np.testing.assert_array_equal(m2.vertices, m.vertices[old])

    def test_interior_edges_shared(self):
        m = three_line_mesh(3)
        for eid in interior_edges(m):
            assert len(m.edge_triangles[eid]) == 2
