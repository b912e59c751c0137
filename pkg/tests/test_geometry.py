import numpy as np
import pytest

from thinperm.errors import MeshingFailed
from thinperm.geometry import CellGeometry, Disk, LayerGeometry, Polygon, Slabs


def test_slabs_channel_bounds():
    g = CellGeometry(solid_shape=Slabs(0.25))
    assert g.fluid_ybounds == (-0.75, 0.75)
    assert g.sn_empty
    assert g.sn_class == "empty"


def test_disk_keeps_faces_open():
    g = CellGeometry(solid_shape=Disk(center=(0.5, 0.0), radius=0.25))
    assert not g.sn_empty
    d = g.solid_boundary_distance(np.array([[0.5, 0.25], [0.5, 0.0]]))
    assert abs(d[0]) < 1e-14
    assert abs(d[1] - 0.25) < 1e-14


def test_union_capped_channel():
    g = CellGeometry(solid_shape=(Slabs(0.25), Disk(center=(0.5, 0.0), radius=0.2)))
    assert g.sn_empty
    assert len(g.holes) == 1
    assert g.slab is not None


def test_disk_exiting_laterally_rejected():
    g = CellGeometry(solid_shape=Disk(center=(0.5, 0.0), radius=0.6))
    with pytest.raises(MeshingFailed):
        g.validate_for_meshing(1 / 16)


def test_disk_touching_channel_wall_rejected():
    g = CellGeometry(solid_shape=(Slabs(0.25), Disk(center=(0.5, 0.0), radius=0.74)))
    with pytest.raises(MeshingFailed):
        g.validate_for_meshing(1 / 32)


def test_bad_slab_thickness():
    with pytest.raises(MeshingFailed):
        Slabs(1.0)
    with pytest.raises(MeshingFailed):
        Slabs(0.0)


def test_polygon_contains_and_distance():
    poly = Polygon(vertices=((0.4, -0.2), (0.6, -0.2), (0.6, 0.2), (0.4, 0.2)))
    inside = poly.contains(np.array([[0.5, 0.0], [0.1, 0.0]]))
    assert inside.tolist() == [True, False]
    d = poly.boundary_distance(np.array([[0.5, 0.0]]))
    assert abs(d[0] - 0.1) < 1e-12


def test_layer_eps_must_be_unit_fraction():
    cell = CellGeometry(solid_shape=Slabs(0.25))
    LayerGeometry(cell=cell, eps=1 / 3)  # 3 cells, fine
    with pytest.raises(MeshingFailed):
        LayerGeometry(cell=cell, eps=0.3)


def test_layer_counts():
    cell = CellGeometry(solid_shape=Slabs(0.25))
    layer = LayerGeometry(cell=cell, eps=0.25, sigma_lengths=(2,))
    assert layer.n_cells == 8
    assert layer.inv_eps == 4


def test_config_roundtrip():
    for g in (
        CellGeometry(solid_shape=Slabs(0.25)),
        CellGeometry(solid_shape=Disk(center=(0.5, 0.0), radius=0.25)),
        CellGeometry(solid_shape=(Slabs(0.25), Disk(center=(0.5, 0.0), radius=0.2))),
        CellGeometry(solid_shape=None),
        CellGeometry(solid_shape=Polygon(vertices=((0.4, -0.2), (0.6, -0.2), (0.5, 0.2)))),
    ):
        assert CellGeometry.from_config(g.config()) == g


def test_capped_disk_config_alias():
    g = CellGeometry.from_config(
        {"solid_shape": {"type": "capped_disk", "delta": 0.25, "center": [0.5, 0.0], "radius": 0.2}}
    )
    assert g.sn_empty and len(g.holes) == 1
