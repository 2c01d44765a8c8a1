"""octowall: complex boundary meshes embedded in forest-of-octrees grids.

Import boundary geometry (generated primitives, primitive text files, or
STL), bin its faces over a regular grid, and refine a block-structured
forest-of-octrees mesh near the geometry, with a serial reference backend
and a data-parallel backend that produce bitwise identical results.
"""

from .binning import (
    BinGrid,
    BinnedFaces,
    FaceBinIndicator,
    bin_of_point,
    compact_indicators,
    discretize_face,
    fill_bins,
)
from .distance import (
    check_near_edge,
    check_near_triangle,
    exact_point_triangle_distance,
    point_segment_distance_sq,
)
from .errors import (
    CapacityError,
    GeometryParseError,
    InvalidParameterError,
    OctowallError,
    ValidationFailure,
)
from .forest import Block, Forest, RefineMark, init_root_grid
from .geometry import (
    Aabb,
    CoordListGeometry,
    IndexedGeometry,
    bounding_box,
    generate_circle,
    generate_sphere,
    import_stl,
    import_text_primitives,
    index_to_coords,
)
from .nearwall import (
    CellFaceLinks,
    NearWallParams,
    NearWallResult,
    build_cell_face_links,
    mark_near_wall_binned,
    mark_near_wall_naive,
    propagate_marks,
    propagation_rounds,
    refine_near_wall,
)
from .vtk_io import export_vtk

__version__ = "0.1.0"

__all__ = [
    "Aabb",
    "BinGrid",
    "BinnedFaces",
    "Block",
    "CapacityError",
    "CellFaceLinks",
    "CoordListGeometry",
    "FaceBinIndicator",
    "Forest",
    "GeometryParseError",
    "IndexedGeometry",
    "InvalidParameterError",
    "NearWallParams",
    "NearWallResult",
    "OctowallError",
    "RefineMark",
    "ValidationFailure",
    "bin_of_point",
    "bounding_box",
    "build_cell_face_links",
    "check_near_edge",
    "check_near_triangle",
    "compact_indicators",
    "discretize_face",
    "exact_point_triangle_distance",
    "export_vtk",
    "fill_bins",
    "generate_circle",
    "generate_sphere",
    "import_stl",
    "import_text_primitives",
    "index_to_coords",
    "init_root_grid",
    "mark_near_wall_binned",
    "mark_near_wall_naive",
    "point_segment_distance_sq",
    "propagate_marks",
    "propagation_rounds",
    "refine_near_wall",
]
