import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from damrom.mesh import (DamGeometry, Mesh, MeshError, boundary_measure, generate_dam_mesh,
                         read_msh, rectangle_mesh, write_msh)

GEOM = DamGeometry()

# unit square split along the diagonal, MSH 4.1 with entities
MSH41 = """$MeshFormat
4.1 0 8
$EndMeshFormat
$PhysicalNames
4
1 1 "B"
1 2 "D"
1 3 "T"
1 4 "UD"
$EndPhysicalNames
$Entities
0 4 1 0
1 0 0 0 1 0 0 1 1 2 1 -2
2 1 0 0 1 1 0 1 2 2 2 -3
3 0 1 0 1 1 0 1 3 2 3 -4
4 0 0 0 0 1 0 1 4 2 4 -1
1 0 0 0 1 1 0 0 4 1 2 3 4
$EndEntities
$Nodes
1 4 1 4
2 1 0 4
1
2
3
4
0 0 0
1 0 0
1 1 0
0 1 0
$EndNodes
$Elements
5 6 1 6
1 1 1 1
1 1 2
1 2 1 1
2 2 3
1 3 1 1
3 3 4
1 4 1 1
4 4 1
2 1 2 2
5 1 2 3
6 1 3 4
$EndElements
"""


def test_default_mesh_counts_and_area():
    m = generate_dam_mesh(GEOM, 19)
    assert (m.n_nodes, m.n_triangles) == (780, 1444)
    assert m.signed_areas().sum() == pytest.approx(GEOM.area(), rel=1e-12)
    assert set(m.tags) == {"UD", "UW", "B", "D", "T"}
    assert np.all(m.signed_areas() > 0)


def test_boundary_measures():
    m = generate_dam_mesh(GEOM, 10)
    assert boundary_measure(m, "UW") == pytest.approx(7 * math.sqrt(5), rel=1e-12)
    assert boundary_measure(m, "UD") == pytest.approx(3 * math.sqrt(5), rel=1e-12)
    assert boundary_measure(m, "B") == pytest.approx(44.0)
    assert boundary_measure(m, "T") == pytest.approx(4.0)
    assert boundary_measure(m, "D") == pytest.approx(10 * math.sqrt(5), rel=1e-12)
    with pytest.raises(MeshError):
        boundary_measure(m, "X")


def test_water_level_on_grid_line():
    m = generate_dam_mesh(GEOM, 7)
    uw = m.nodes_with_tag("UW")
    assert m.nodes[uw, 1].max() == pytest.approx(GEOM.WL)


def test_tagged_edges_cover_boundary():
    m = generate_dam_mesh(GEOM, 5)
    tagged = np.sort(m.edges, axis=1)
    assert {tuple(e) for e in tagged.tolist()} == {tuple(e) for e in m.topological_boundary().tolist()}


@pytest.mark.parametrize("bad", [dict(H=0.0), dict(WL=10.0), dict(WL=0.0),
                                 dict(crest_width=0.0), dict(upstream_slope=-1.0)])
def test_geometry_validation(bad):
    with pytest.raises(MeshError):
        DamGeometry(**bad)


def test_n_levels_validation():
    with pytest.raises((MeshError, ValueError)):
        generate_dam_mesh(GEOM, 1)


def test_validate_rejects_inverted_triangle():
    nodes = [[0, 0], [1, 0], [0, 1]]
    with pytest.raises(MeshError, match="non-positive area"):
        Mesh(nodes, [[0, 2, 1]], [[0, 1], [1, 2], [2, 0]], ["B", "D", "UD"])


def test_validate_rejects_untagged_boundary():
    nodes = [[0, 0], [1, 0], [0, 1]]
    with pytest.raises(MeshError):
        Mesh(nodes, [[0, 1, 2]], [[0, 1], [1, 2]], ["B", "D"])


def test_mesh_is_read_only():
    m = rectangle_mesh(1, 1, 2, 2)
    with pytest.raises(ValueError):
        m.nodes[0, 0] = 5.0


def test_msh22_round_trip(tmp_path):
    m = generate_dam_mesh(GEOM, 6)
    path = tmp_path / "dam.msh"
    write_msh(m, path)
    m2 = read_msh(path)
    np.testing.assert_allclose(m2.nodes, m.nodes)
    np.testing.assert_array_equal(m2.triangles, m.triangles)
    for tag in m.tags:
        assert boundary_measure(m2, tag) == pytest.approx(boundary_measure(m, tag))
    assert m2.fingerprint() == m.fingerprint()


def test_msh41_with_entities(tmp_path):
    path = tmp_path / "sq.msh"
    path.write_text(MSH41)
    m = read_msh(path)
    assert (m.n_nodes, m.n_triangles) == (4, 2)
    assert m.signed_areas().sum() == pytest.approx(1.0)
    for tag in ("B", "D", "T", "UD"):
        assert boundary_measure(m, tag) == pytest.approx(1.0)


def test_msh_errors(tmp_path):
    p = tmp_path / "bin.msh"
    p.write_text("$MeshFormat\n4.1 1 8\n$EndMeshFormat\n")
    with pytest.raises(MeshError, match="unsupported format"):
        read_msh(p)
    p.write_text(MSH41.replace("$PhysicalNames\n4\n", "$PhysicalNames\n4\n", 1)
                 .replace('1 4 "UD"', '1 4 "XX"'))
    with pytest.raises(MeshError, match="line"):
        read_msh(p)
    p.write_text(MSH41.replace("1 0 0 0 1 0 0 1 1 2 1 -2", "1 0 0 0 1 0 0 0 2 1 -2"))
    with pytest.raises(MeshError):
        read_msh(p)  # bottom edge loses its group: untagged boundary
    p.write_text(MSH41.replace("5 1 2 3", "5 1 2 9"))
    with pytest.raises(MeshError, match="unknown node 9"):
        read_msh(p)
    p.write_text(MSH41.replace("5 1 2 3", "5 1 2"))
    with pytest.raises(MeshError, match="truncated"):
        read_msh(p)


def test_fingerprint_changes_with_geometry():
    a = generate_dam_mesh(GEOM, 4).fingerprint()
    b = generate_dam_mesh(DamGeometry(WL=6.0), 4).fingerprint()
    assert a != b and a == generate_dam_mesh(GEOM, 4).fingerprint()


@settings(max_examples=25, deadline=None)
@given(st.floats(2.0, 30.0), st.floats(0.1, 0.9), st.floats(0.5, 10.0),
       st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.integers(2, 8))
def test_generated_mesh_properties(H, wl_frac, crest, us, ds, n):
    g = DamGeometry(H, wl_frac * H, crest, us, ds)
    m = generate_dam_mesh(g, n)
    assert m.signed_areas().sum() == pytest.approx(g.area(), rel=1e-10)
    total = sum(boundary_measure(m, t) for t in m.tags)
    perim = crest + g.base_width + H * (math.hypot(1, us) + math.hypot(1, ds))
    assert total == pytest.approx(perim, rel=1e-10)
    assert boundary_measure(m, "UW") == pytest.approx(g.WL * math.hypot(1, us), rel=1e-10)
