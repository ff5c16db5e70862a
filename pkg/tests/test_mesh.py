import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracneumann.mesh import (
    BOUNDARY,
    EXTERIOR,
    INTERIOR,
    Mesh1D,
    MeshError,
    H_to_radius,
    build_disk_mesh_2d,
    build_mesh_1d,
    mesh_stats,
    radius_to_H,
    read_mesh,
    write_mesh,
)
from fracneumann.params import ParameterError


def test_1d_endpoints_and_boundary_nodes():
    m = build_mesh_1d((-1.0, 1.0), 1.2, 0.5)
    for x in (-2.2, -1.0, 1.0, 2.2):
        assert np.any(m.nodes == x)
    assert m.nodes[0] == -2.2 and m.nodes[-1] == 2.2


def test_1d_interior_element_count():
    m = build_mesh_1d((-1.0, 1.0), 1.2, 1 / 1000)
    assert int(np.count_nonzero(m.cell_in_omega)) == 2000


def test_1d_refinement_error():
    with pytest.raises(MeshError):
        build_mesh_1d((-1.0, 1.0), 1.2, 3.0)


def test_1d_extent_error():
    with pytest.raises(ParameterError):
        build_mesh_1d((-1.0, 1.0), 0.0, 0.1)


def test_1d_stats():
    st_ = mesh_stats(build_mesh_1d((-1.0, 1.0), 1.2, 0.5))
    assert st_.h_max == pytest.approx(0.5)
    assert st_.omega_measure == pytest.approx(2.0)


def test_1d_regions():
    m = build_mesh_1d((-1.0, 1.0), 0.5, 0.25)
    reg = m.node_region
    assert np.all(reg[(m.nodes > -1) & (m.nodes < 1)] == INTERIOR)
    assert np.all(reg[np.abs(m.nodes) == 1] == BOUNDARY)
    assert np.all(reg[np.abs(m.nodes) > 1] == EXTERIOR)


@settings(max_examples=30, deadline=None)
@given(
    a=st.floats(-3, 0),
    width=st.floats(0.5, 3),
    H=st.floats(0.05, 3),
    frac=st.floats(0.01, 0.4),
)
def test_1d_invariants(a, width, H, frac):
    b = a + width
    h = frac * width
    m = build_mesh_1d((a, b), H, h)
    lengths = m.cell_measures
    assert lengths.sum() == pytest.approx(width + 2 * H, abs=1e-12)
    assert np.all(lengths <= h * (1 + 1e-12))
    lo, hi = m.nodes[m.cells[:, 0]], m.nodes[m.cells[:, 1]]
    inside = (lo >= a) & (hi <= b)
    outside = (hi <= a) | (lo >= b)
    assert np.all(inside | outside)
    assert np.array_equal(inside, m.cell_in_omega)


def test_1d_mesh_validation():
    with pytest.raises(MeshError):
        Mesh1D(np.array([-2.0, -1.0, 0.5, 2.0]), (-1.0, 1.0))
    with pytest.raises(MeshError):
        Mesh1D(np.array([-2.0, -1.0, -1.0, 1.0, 2.0]), (-1.0, 1.0))


def test_disk_area():
    m = build_disk_mesh_2d(1.0, 3.0, 0.05, 0.0)
    assert abs(m.omega_area - math.pi) < 5e-3
    assert m.omega_area == pytest.approx(m.cell_measures[m.cell_in_omega].sum(), rel=1e-14)


def test_disk_shape_ratio():
    assert mesh_stats(build_disk_mesh_2d(1.0, 3.0, 0.05, 0.0)).shape_ratio <= 10.0


def test_disk_grading_cubic():
    m = build_disk_mesh_2d(1.0, 65.0, 0.05, 3.0)
    tri = m.points[m.triangles]
    dist = np.linalg.norm(tri, axis=2).min(axis=1) - 1.0
    ext = ~m.cell_in_omega
    # regression constant measured on the generated ring pattern
    bound = 1.5 * np.maximum(0.05, dist[ext] ** 3)
    assert np.all(m.cell_diameters[ext] <= bound)
    assert m.ext_radius == 65.0


def test_disk_preconditions():
    with pytest.raises(ParameterError):
        build_disk_mesh_2d(3.0, 1.0, 0.05, 0.0)
    with pytest.raises(ParameterError):
        build_disk_mesh_2d(1.0, 3.0, 1.5, 0.0)


@pytest.mark.parametrize("grading", [0.0, 3.0])
def test_disk_conformity_and_labels(grading):
    m = build_disk_mesh_2d(1.0, 4.0, 0.2, grading)
    m.validate()
    tri = m.points[m.triangles]
    r = np.linalg.norm(tri, axis=2)
    tol = 1e-12
    assert np.all(np.where(m.cell_in_omega[:, None], r <= 1 + tol, r >= 1 - tol))
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    assert np.all(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] > 0)
    # every interior edge shared by exactly two triangles
    edges = np.sort(np.concatenate([m.triangles[:, [0, 1]], m.triangles[:, [1, 2]], m.triangles[:, [2, 0]]]), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    assert set(counts.tolist()) <= {1, 2}
    assert np.count_nonzero(counts == 1) == m.outer_boundary.size
    outer = m.points[m.outer_boundary]
    assert np.allclose(np.linalg.norm(outer, axis=1), 4.0)


def test_radius_conversion():
    assert radius_to_H(3.0, 1.0) == 2.0
    assert H_to_radius(2.0, 1.0) == 3.0


@pytest.mark.parametrize("kind", ["1d", "2d"])
def test_mesh_roundtrip(tmp_path, kind):
    m = build_mesh_1d((-1.0, 1.0), 0.7, 0.3) if kind == "1d" else build_disk_mesh_2d(1.0, 2.0, 0.3, 0.0)
    path = tmp_path / "mesh.txt"
    write_mesh(m, path)
    text = path.read_text()
    assert "POINTS" in text and "CELLS" in text and "LABELS" in text
    back = read_mesh(path)
    assert np.array_equal(back.points, m.points)
    assert np.array_equal(back.cells, m.cells)
    assert np.array_equal(back.cell_in_omega, m.cell_in_omega)
