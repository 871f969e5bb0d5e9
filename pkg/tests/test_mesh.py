import numpy as np
import pytest

from oseen_phs.mesh import (
    BoundaryTag,
    Mesh,
    MeshFormatError,
    build_channel_mesh,
    dump_mesh,
    load_mesh,
    read_mesh,
    save_mesh,
    validate_mesh,
)


def rules(mesh):
    return {v.rule for v in validate_mesh(mesh)}


def square(tags=("wall", "out", "wall", "in")):
    """Unit square split into two triangles, edges tagged bottom, right, top, left."""
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    edges = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])
    return Mesh(nodes, tris, edges, tuple(BoundaryTag(t) for t in tags))


def test_channel_counts(channel):
    assert channel.n_vertices == 15
    assert len(channel.triangles) == 16
    counts = channel.tag_counts()
    assert counts[BoundaryTag.IN] == 2 and counts[BoundaryTag.OUT] == 2
    assert counts[BoundaryTag.WALL] == 8
    assert validate_mesh(channel) == []


def test_channel_orientation_and_area(channel):
    areas = channel.signed_areas()
    assert np.all(areas > 0)
    assert areas.sum() == pytest.approx(2.0)


def test_p2_nodes_are_vertices_then_midpoints(channel):
    p2 = channel.p2_nodes
    assert len(p2) == channel.n_vertices + len(channel.edges)
    a, b = channel.edges[5]
    assert np.allclose(p2[channel.midpoint_of(a, b)], 0.5 * (channel.nodes[a] + channel.nodes[b]))
    assert channel.midpoint_of(a, b) == channel.midpoint_of(b, a)


def test_p2_cells_local_order(channel):
    for tri, cell in zip(channel.triangles, channel.p2_cells):
        assert list(cell[:3]) == list(tri)
        assert cell[3] == channel.midpoint_of(tri[0], tri[1])
        assert cell[4] == channel.midpoint_of(tri[1], tri[2])
        assert cell[5] == channel.midpoint_of(tri[2], tri[0])


def test_arrays_are_read_only(channel):
    with pytest.raises(ValueError):
        channel.nodes[0, 0] = 5.0


def test_valid_square():
    assert validate_mesh(square()) == []


def test_clockwise_triangle_flagged():
    m = square()
    m = Mesh(m.nodes, np.array([[0, 2, 1], [0, 2, 3]]), m.boundary_edges, m.boundary_tags)
    assert "nonpositive area" in rules(m)


def test_missing_tag_flagged():
    m = square()
    m = Mesh(m.nodes, m.triangles, m.boundary_edges[:3], m.boundary_tags[:3])
    assert "uncovered boundary" in rules(m)


def test_interior_edge_tagged():
    m = square()
    edges = np.vstack([m.boundary_edges, [[0, 2]]])
    m = Mesh(m.nodes, m.triangles, edges, m.boundary_tags + (BoundaryTag.WALL,))
    assert "tag on non-boundary edge" in rules(m)


def test_conflicting_tags():
    m = square()
    edges = np.vstack([m.boundary_edges, [[1, 0]]])
    m = Mesh(m.nodes, m.triangles, edges, m.boundary_tags + (BoundaryTag.IN,))
    assert "conflicting tags" in rules(m)


def test_in_touching_out():
    assert "in/out touch" in rules(square(("in", "out", "wall", "wall")))


def test_empty_in_and_out():
    found = rules(square(("wall", "wall", "wall", "wall")))
    assert {"empty in", "empty out"} <= found


def test_index_out_of_range():
    m = square()
    m = Mesh(m.nodes, np.array([[0, 1, 7], [0, 2, 3]]), m.boundary_edges, m.boundary_tags)
    assert rules(m) == {"index out of range"}


def test_unused_vertex():
    m = square()
    m = Mesh(np.vstack([m.nodes, [[5.0, 5.0]]]), m.triangles, m.boundary_edges, m.boundary_tags)
    assert "unused vertex" in rules(m)


def test_hole_is_not_simply_connected():
    # 3 x 3 grid of squares with the centre square removed
    m = build_channel_mesh(3.0, 3.0, 3, 3)
    centroids = m.nodes[m.triangles].mean(axis=1)
    keep = ~((centroids[:, 0] > 1) & (centroids[:, 0] < 2) & (centroids[:, 1] > 1) & (centroids[:, 1] < 2))
    tris = m.triangles[keep]
    hole = [[5, 6], [6, 10], [10, 9], [9, 5]]
    edges = np.vstack([m.boundary_edges, hole])
    tags = m.boundary_tags + (BoundaryTag.WALL,) * 4
    assert "not simply connected" in rules(Mesh(m.nodes, tris, edges, tags))


def test_non_manifold_edge():
    nodes = np.array([[0, 0], [1, 0], [0.5, 1], [0.5, -1], [1.5, 0.5]], dtype=float)
    tris = np.array([[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    m = Mesh(nodes, tris, np.zeros((0, 2), dtype=int), ())
    assert "non-manifold edge" in rules(m)


def test_round_trip(tmp_path, channel):
    path = tmp_path / "c.msh"
    save_mesh(channel, path)
    back = read_mesh(path)
    assert np.array_equal(back.nodes, channel.nodes)
    assert np.array_equal(back.triangles, channel.triangles)
    assert back.boundary_tags == channel.boundary_tags
    assert dump_mesh(back) == dump_mesh(channel)


@pytest.mark.parametrize("text, line, fragment", [
    ("nodes 1\n0 0\ntriangles 1\n0 0 x\nboundary_edges 0\n", 4, "bad index"),
    ("nodes 1\n0 0\ntriangles 1\n0 0 3\nboundary_edges 0\n", 4, "out of range"),
    ("nodes 2\n0 0\n1 1\ntriangles 0\nboundary_edges 1\n0 1 inlet\n", 6, "unknown tag"),
    ("nodes 2\n0 0\n", 1, "truncated"),
    ("points 1\n0 0\n", 1, "expected 'nodes"),
])
def test_format_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(MeshFormatError) as exc:
        load_mesh(text)
    assert exc.value.line == line
    assert fragment in str(exc.value)


def test_comments_ignored(channel):
    text = "# header\n" + dump_mesh(channel).replace("triangles", "# note\ntriangles", 1)
    assert np.array_equal(load_mesh(text).triangles, channel.triangles)
