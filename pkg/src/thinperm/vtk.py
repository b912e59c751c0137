"""Legacy ASCII VTK export of meshes and nodal fields."""
import numpy as np


def write_vtk(path, mesh, point_data=None):
    """Unstructured-grid file with triangle cells and vertex point data.

    ``point_data`` maps name -> (nv,) scalars or (nv, 2) vectors (padded
    with a zero z component).  P2 fields should be passed restricted to
    the vertex nodes.
    """
    nv = mesh.n_vertices
    nt = mesh.n_triangles
    lines = [
        "# vtk DataFile Version 3.0",
        "thinperm field export",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} double",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{x:.16g} {y:.16g} 0")
    lines.append(f"CELLS {nt} {4 * nt}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)

    if point_data:
        lines.append(f"POINT_DATA {nv}")
        for name, values in point_data.items():
            values = np.asarray(values)
            if values.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(f"{v:.16g}" for v in values)
            else:
                lines.append(f"VECTORS {name} double")
                lines.extend(f"{v[0]:.16g} {v[1]:.16g} 0" for v in values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def field_point_data(field):
    """Vertex-restricted velocity/pressure of a mixed solution."""
    nv = field.disc.n_vertices
    return {
        "velocity": field.velocity_nodal()[:nv],
        "pressure": field.p,
    }
