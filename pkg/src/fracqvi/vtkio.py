"""Legacy-VTK (ASCII unstructured grid) export of meshes and nodal fields."""

import numpy as np

VTK_LINE = 3
VTK_TRIANGLE = 5
VTK_QUAD = 9
VTK_WEDGE = 13


def _fmt(x):
    return format(float(x), ".17g")


def _write_unstructured(fh, title, points3, cells, cell_type, point_data):
    fh.write("# vtk DataFile Version 3.0\n")
    fh.write(title[:255] + "\n")
    fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
    fh.write("POINTS %d double\n" % points3.shape[0])
    for p in points3:
        fh.write("%s %s %s\n" % (_fmt(p[0]), _fmt(p[1]), _fmt(p[2])))
    n_cells, npc = cells.shape
    fh.write("CELLS %d %d\n" % (n_cells, n_cells * (npc + 1)))
    for c in cells:
        fh.write(str(npc) + " " + " ".join(str(int(v)) for v in c) + "\n")
    fh.write("CELL_TYPES %d\n" % n_cells)
    for _ in range(n_cells):
        fh.write("%d\n" % cell_type)
    if point_data:
        fh.write("POINT_DATA %d\n" % points3.shape[0])
        for name, values in point_data.items():
            fh.write("SCALARS %s double 1\nLOOKUP_TABLE default\n" % name)
            for v in values:
                fh.write(_fmt(v) + "\n")


def write_base_vtk(path, base, point_data=None, title="base mesh"):
    """Base triangulation as VTK lines (1-d) or triangles (2-d)."""
    points3 = np.zeros((base.n_vertices, 3))
    points3[:, : base.dim] = base.vertices
    cell_type = VTK_LINE if base.dim == 1 else VTK_TRIANGLE
    with open(path, "w", newline="\n") as fh:
        _write_unstructured(fh, title, points3, base.elements, cell_type,
                            point_data or {})


def write_cylinder_vtk(path, mesh, point_data=None, title="cylinder mesh"):
    """Tensor cylinder as quads (1-d base) or wedges (2-d base)."""
    coords = mesh.node_coordinates()
    points3 = np.zeros((coords.shape[0], 3))
    points3[:, : coords.shape[1]] = coords
    cells = mesh.tensor_cells()
    if mesh.base.dim == 1:
        # tensor cell columns (b0,b1 | t0,t1) -> quad loop b0,b1,t1,t0
        cells = cells[:, [0, 1, 3, 2]]
        cell_type = VTK_QUAD
    else:
        cell_type = VTK_WEDGE
    with open(path, "w", newline="\n") as fh:
        _write_unstructured(fh, title, points3, cells, cell_type,
                            point_data or {})
