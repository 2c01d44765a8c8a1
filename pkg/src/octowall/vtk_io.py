"""Legacy ASCII VTK export of the forest's leaf blocks.

Leaves become quads (2D) or hexahedra (3D) with per-cell ``level`` and
``marked`` scalars. Corner points are written per cell without welding;
viewers handle the duplication and mesh topology is not part of the
contract.
"""

import numpy as np

from .forest import Forest, RefineMark

_VTK_QUAD = 9
_VTK_HEXAHEDRON = 12


def export_vtk(forest: Forest, path, title="octowall leaf blocks"):
    """Write the forest's leaves as a VTK unstructured grid."""
    leaves = forest.all_leaf_ids()
    lo, hi = forest.block_aabbs(leaves)
    n = len(leaves)
    if forest.dim == 2:
        corners_per = 4
        cell_type = _VTK_QUAD
        pts = np.empty((n, 4, 3))
        pts[:, :, 2] = 0.0
        pts[:, 0, 0], pts[:, 0, 1] = lo[:, 0], lo[:, 1]
        pts[:, 1, 0], pts[:, 1, 1] = hi[:, 0], lo[:, 1]
        pts[:, 2, 0], pts[:, 2, 1] = hi[:, 0], hi[:, 1]
        pts[:, 3, 0], pts[:, 3, 1] = lo[:, 0], hi[:, 1]
    else:
        corners_per = 8
        cell_type = _VTK_HEXAHEDRON
        pts = np.empty((n, 8, 3))
        for ci in range(8):
            x = hi[:, 0] if ci in (1, 2, 5, 6) else lo[:, 0]
            y = hi[:, 1] if ci in (2, 3, 6, 7) else lo[:, 1]
            z = hi[:, 2] if ci >= 4 else lo[:, 2]
            pts[:, ci, 0], pts[:, ci, 1], pts[:, ci, 2] = x, y, z

    flat = pts.reshape(-1, 3)
    levels = forest._level[leaves]
    marked = (forest.marks[leaves] == RefineMark.MARKED).astype(np.int64)

    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(flat)} float",
    ]
    lines.extend(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}" for p in flat)
    lines.append(f"CELLS {n} {n * (corners_per + 1)}")
    base = np.arange(n) * corners_per
    lines.extend(
        f"{corners_per} " + " ".join(str(base[i] + j) for j in range(corners_per))
        for i in range(n)
    )
    lines.append(f"CELL_TYPES {n}")
    lines.extend(str(cell_type) for _ in range(n))
    lines.append(f"CELL_DATA {n}")
    lines.append("SCALARS level int 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(str(int(v)) for v in levels)
    lines.append("SCALARS marked int 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(str(int(v)) for v in marked)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
