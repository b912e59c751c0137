import numpy as np
import pytest

from thinperm.cells import RegimeDescriptor, TangentUnit, solve_cell_suite
from thinperm.geometry import CellGeometry, Disk, Slabs
from thinperm.meshing import build_cell_mesh

SLABS = CellGeometry(solid_shape=Slabs(0.25))
DISK = CellGeometry(solid_shape=Disk(center=(0.5, 0.0), radius=0.25))
CAPPED = CellGeometry(solid_shape=(Slabs(0.25), Disk(center=(0.5, 0.0), radius=0.2)))


@pytest.fixture(scope="session")
def slabs_mesh_16():
    return build_cell_mesh(SLABS, 1 / 16)


@pytest.fixture(scope="session")
def slabs_mesh_32():
    return build_cell_mesh(SLABS, 1 / 32)


@pytest.fixture(scope="session")
def disk_mesh_16():
    return build_cell_mesh(DISK, 1 / 16)


@pytest.fixture(scope="session")
def disk_mesh_32():
    return build_cell_mesh(DISK, 1 / 32)


@pytest.fixture(scope="session")
def capped_mesh_16():
    return build_cell_mesh(CAPPED, 1 / 16)


@pytest.fixture(scope="session")
def capped_slip_suite(capped_mesh_16):
    regime = RegimeDescriptor.from_parameters(0.0, None, sn_empty=True)
    return solve_cell_suite(capped_mesh_16, regime, g_gamma_d=TangentUnit())


@pytest.fixture(scope="session")
def disk_slip_suite(disk_mesh_16):
    regime = RegimeDescriptor.from_parameters(0.0, None, sn_empty=False)
    return solve_cell_suite(disk_mesh_16, regime, g_gamma_d=TangentUnit(), p_b_n=1.0)


@pytest.fixture(scope="session")
def slabs_noslip_suite_16(slabs_mesh_16):
    regime = RegimeDescriptor.from_parameters(1.0, -2.0, sn_empty=True)
    return solve_cell_suite(slabs_mesh_16, regime, g_gamma_d=TangentUnit())


def l2_norm(disc, u_full):
    return float(np.sqrt(u_full @ (disc.vector_mass() @ u_full)))
