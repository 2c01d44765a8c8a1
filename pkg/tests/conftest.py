import struct

import numpy as np
import pytest

from octowall.geometry import Aabb

# unit cube surface: 12 triangles, outward winding
_CUBE_QUADS = [
    # (corner indices into the 8 cube vertices, per face)
    (0, 3, 2, 1),  # z = 0
    (4, 5, 6, 7),  # z = 1
    (0, 1, 5, 4),  # y = 0
    (2, 3, 7, 6),  # y = 1
    (0, 4, 7, 3),  # x = 0
    (1, 2, 6, 5),  # x = 1
]


def cube_triangles(lo=0.0, hi=1.0):
    """12 triangles tiling the axis-aligned cube surface, (12, 3, 3)."""
    v = np.array(
        [[x, y, z] for z in (lo, hi) for y in (lo, hi) for x in (lo, hi)], dtype=np.float64
    )
    # index helper: x + 2*y + 4*z
    idx = lambda x, y, z: x + 2 * y + 4 * z  # noqa: E731
    corners = [
        idx(0, 0, 0), idx(1, 0, 0), idx(1, 1, 0), idx(0, 1, 0),
        idx(0, 0, 1), idx(1, 0, 1), idx(1, 1, 1), idx(0, 1, 1),
    ]
    tris = []
    for a, b, c, d in _CUBE_QUADS:
        qa, qb, qc, qd = (v[corners[k]] for k in (a, b, c, d))
        tris.append([qa, qb, qc])
        tris.append([qa, qc, qd])
    return np.asarray(tris)


def write_ascii_stl(path, tris, name="fixture"):
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"solid {name}\n")
        for t in tris:
            n = np.cross(t[1] - t[0], t[2] - t[0])
            norm = np.linalg.norm(n)
            n = n / norm if norm > 0 else n
            f.write(f"  facet normal {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
            f.write("    outer loop\n")
            for p in t:
                f.write(f"      vertex {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
            f.write("    endloop\n")
            f.write("  endfacet\n")
        f.write(f"endsolid {name}\n")


def write_binary_stl(path, tris, header=b"fixture"):
    tris = np.asarray(tris, dtype=np.float32)
    with open(path, "wb") as f:
        f.write(header.ljust(80, b"\0")[:80])
        f.write(struct.pack("<I", len(tris)))
        for t in tris:
            n = np.cross(t[1] - t[0], t[2] - t[0])
            norm = np.linalg.norm(n)
            n = (n / norm if norm > 0 else n).astype(np.float32)
            f.write(struct.pack("<3f", *n))
            for p in t:
                f.write(struct.pack("<3f", *p))
            f.write(struct.pack("<H", 0))


@pytest.fixture
def cube_ascii_stl(tmp_path):
    path = tmp_path / "cube_ascii.stl"
    write_ascii_stl(path, cube_triangles())
    return path


@pytest.fixture
def cube_binary_stl(tmp_path):
    path = tmp_path / "cube_binary.stl"
    write_binary_stl(path, cube_triangles())
    return path


@pytest.fixture
def unit_square():
    return Aabb((0.0, 0.0), (1.0, 1.0))


@pytest.fixture
def unit_cube():
    return Aabb((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
