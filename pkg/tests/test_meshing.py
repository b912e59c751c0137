import numpy as np
import pytest

from thinperm.errors import EmptyGammaD, MeshingFailed
from thinperm.geometry import CellGeometry, Disk, LayerGeometry, Polygon, Slabs
from thinperm.meshing import (
    TAG_GAMMA_D,
    TAG_GAMMA_N,
    TAG_LATERAL0,
    TAG_LATERAL1,
    TAG_SN_MINUS,
    TAG_SN_PLUS,
    NormalField,
    build_cell_mesh,
    build_layer_mesh,
    check_assumption_A4,
)

DISK = CellGeometry(solid_shape=Disk(center=(0.5, 0.0), radius=0.25))
SLABS = CellGeometry(solid_shape=Slabs(0.25))


def test_slabs_mesh_tags_and_area(slabs_mesh_16):
    m = slabs_mesh_16
    assert abs(m.area() - 1.5) < 1e-12
    assert set(m.boundary) == {TAG_GAMMA_D, TAG_LATERAL0, TAG_LATERAL1}
    # the two walls are straight lines at y = +-0.75
    for a, b in m.boundary[TAG_GAMMA_D]:
        assert abs(abs(m.vertices[a, 1]) - 0.75) < 1e-12
        assert abs(abs(m.vertices[b, 1]) - 0.75) < 1e-12


def test_disk_mesh_has_open_faces_and_conforming_circle(disk_mesh_16):
    m = disk_mesh_16
    assert TAG_SN_PLUS in m.boundary and TAG_SN_MINUS in m.boundary
    # all GammaD vertices on the circle within 1e-10
    for a, b in m.boundary[TAG_GAMMA_D]:
        for v in (a, b):
            r = np.hypot(m.vertices[v, 0] - 0.5, m.vertices[v, 1])
            assert abs(r - 0.25) < 1e-10


def test_disk_area_converges_second_order():
    exact = 2.0 - np.pi * 0.25**2
    errs = [abs(build_cell_mesh(DISK, h).area() - exact) for h in (1 / 16, 1 / 32)]
    assert errs[1] < errs[0] / 2.5  # polygonal hole: O(h^2) deficit


def test_periodic_pairing_exact_translation(disk_mesh_16):
    m = disk_mesh_16
    s, mast = m.periodic_pairs.T
    shift = m.vertices[s] - m.vertices[mast]
    assert np.abs(shift[:, 0] - 1.0).max() < 1e-12
    assert np.abs(shift[:, 1]).max() < 1e-12


def test_every_boundary_edge_tagged_once(disk_mesh_16):
    m = disk_mesh_16
    seen = set()
    for a, b, tag in m.boundary_edges():
        key = (min(a, b), max(a, b))
        assert key not in seen
        seen.add(key)


def test_a4_disk_moment_matrix(disk_mesh_16):
    rep = check_assumption_A4(disk_mesh_16)
    # full circle: int n n^T = pi * r * I
    assert rep.satisfied
    assert rep.rank == 2
    assert np.abs(rep.moment_matrix - np.pi * 0.25 * np.eye(2)).max() < 0.01


def test_a4_slabs_rank_one(slabs_mesh_16):
    rep = check_assumption_A4(slabs_mesh_16)
    assert not rep.satisfied
    assert rep.rank == 1
    assert np.abs(rep.moment_matrix - np.diag([0.0, 2.0])).max() < 1e-12


def test_a4_verdict_scale_invariant():
    for geom in (DISK, SLABS):
        verdicts = {check_assumption_A4(build_cell_mesh(geom, h)).satisfied for h in (1 / 8, 1 / 16, 1 / 32)}
        assert len(verdicts) == 1


def test_a4_empty_gamma_d():
    mesh = build_cell_mesh(CellGeometry(solid_shape=None), 1 / 8)
    with pytest.raises(EmptyGammaD):
        check_assumption_A4(mesh)


def test_mesh_size_bounds():
    with pytest.raises(MeshingFailed):
        build_cell_mesh(SLABS, 0.7)


def test_layer_mesh_slabs_area_and_tags():
    layer = LayerGeometry(cell=SLABS, eps=0.25, sigma_lengths=(1,))
    mesh = build_layer_mesh(layer, 0.25 / 16)
    # analytic area: L1 * 2 eps (1 - delta)
    assert abs(mesh.area() - 0.375) < 1e-10
    assert set(mesh.boundary) == {TAG_GAMMA_D, TAG_GAMMA_N}
    assert mesh.provenance is not None and mesh.provenance.max() == 3


def test_layer_mesh_disk_scaled_circles():
    layer = LayerGeometry(cell=DISK, eps=0.5, sigma_lengths=(1,))
    mesh = build_layer_mesh(layer, 0.5 / 8)
    assert mesh.provenance.max() == 1  # 2 cells
    centers = [np.array([0.25, 0.0]), np.array([0.75, 0.0])]
    for a, b in mesh.boundary[TAG_GAMMA_D]:
        p = mesh.vertices[a]
        r = min(np.hypot(*(p - c)) for c in centers)
        assert abs(r - 0.125) < 1e-10


def test_layer_mesh_shared_faces_glued():
    layer = LayerGeometry(cell=SLABS, eps=0.25, sigma_lengths=(1,))
    mesh = build_layer_mesh(layer, 0.25 / 8)
    cell = mesh.cell_mesh
    expected = 4 * cell.n_vertices - 3 * len(cell.periodic_pairs)
    assert mesh.n_vertices == expected


def test_normal_field_unit_and_corner_free_on_circle(disk_mesh_16):
    nf = NormalField.from_mesh(disk_mesh_16, tags=(TAG_GAMMA_D,))
    norms = np.array([np.hypot(*n) for n in nf.normals.values()])
    assert np.abs(norms - 1.0).max() < 1e-12
    assert not any(nf.corners.values())


def test_normal_field_flags_polygon_corners():
    poly = CellGeometry(solid_shape=Polygon(vertices=((0.35, -0.25), (0.65, -0.25), (0.65, 0.25), (0.35, 0.25))))
    mesh = build_cell_mesh(poly, 1 / 16)
    nf = NormalField.from_mesh(mesh, tags=(TAG_GAMMA_D,))
    corner_pts = {(0.35, -0.25), (0.65, -0.25), (0.65, 0.25), (0.35, 0.25)}
    flagged = {
        tuple(np.round(mesh.vertices[v], 10))
        for v, is_corner in nf.corners.items()
        if is_corner
    }
    assert corner_pts <= flagged
    assert len(flagged) == 4
