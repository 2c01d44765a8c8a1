"""Boundary geometry: primitive generators, text/STL import, representation conversion.

Two representations are used. An indexed mesh stores shared vertices plus
per-face index tuples; a coordinate list stores the vertex coordinates of
every face directly (duplicating shared vertices) in a structure-of-arrays
layout so the proximity kernels can scan one coordinate component of one
vertex slot contiguously across all faces.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import GeometryParseError, InvalidParameterError


def as_point(p, dim):
    """Coerce to a finite float64 vector of length dim."""
    a = np.asarray(p, dtype=np.float64).reshape(-1)
    if a.shape[0] != dim:
        raise InvalidParameterError(f"expected a {dim}-component point, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise InvalidParameterError(f"point has non-finite components: {a}")
    return a


@dataclass
class Aabb:
    """Axis-aligned box, min <= max componentwise."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        self.min = np.asarray(self.min, dtype=np.float64).reshape(-1)
        self.max = np.asarray(self.max, dtype=np.float64).reshape(-1)
        if self.min.shape != self.max.shape:
            raise InvalidParameterError("aabb min/max dimension mismatch")
        if not (np.all(np.isfinite(self.min)) and np.all(np.isfinite(self.max))):
            raise InvalidParameterError("aabb has non-finite corners")
        if np.any(self.min > self.max):
            raise InvalidParameterError(f"aabb min {self.min} exceeds max {self.max}")

    @property
    def dim(self):
        return self.min.shape[0]

    @property
    def extent(self):
        return self.max - self.min

    def contains(self, p, tol=0.0):
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(p >= self.min - tol) and np.all(p <= self.max + tol))


@dataclass
class IndexedGeometry:
    """Shared-vertex mesh: edges in 2D, triangles in 3D.

    vertices: (n_vertices, dim) float32
    faces:    (n_faces, dim) int32 vertex indices (2 per edge, 3 per triangle)
    """

    dim: int
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise InvalidParameterError(f"dim must be 2 or 3, got {self.dim}")
        self.vertices = np.asarray(self.vertices, dtype=np.float32).reshape(-1, self.dim)
        self.faces = np.asarray(self.faces, dtype=np.int32).reshape(-1, self.dim)
        if not np.all(np.isfinite(self.vertices)):
            raise InvalidParameterError("geometry has non-finite vertex coordinates")
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise InvalidParameterError("face index out of range")
            for j in range(self.dim):
                for k in range(j + 1, self.dim):
                    if np.any(self.faces[:, j] == self.faces[:, k]):
                        raise InvalidParameterError("face has repeated vertex indices")

    @property
    def n_faces(self):
        return len(self.faces)

    @classmethod
    def empty(cls, dim):
        return cls(dim, np.zeros((0, dim), np.float32), np.zeros((0, dim), np.int32))


@dataclass
class CoordListGeometry:
    """Per-face vertex coordinates in structure-of-arrays layout.

    coords: (verts_per_face, dim, n_faces) float32, C-contiguous, so that
    coords[j, c, :] (component c of vertex slot j over all faces) is one
    contiguous run. verts_per_face equals dim (2 for edges, 3 for triangles).
    """

    dim: int
    coords: np.ndarray

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise InvalidParameterError(f"dim must be 2 or 3, got {self.dim}")
        self.coords = np.ascontiguousarray(self.coords, dtype=np.float32)
        if self.coords.ndim != 3 or self.coords.shape[0] != self.dim or self.coords.shape[1] != self.dim:
            raise InvalidParameterError(
                f"coords must have shape (verts_per_face={self.dim}, dim={self.dim}, n_faces), "
                f"got {self.coords.shape}"
            )
        if not np.all(np.isfinite(self.coords)):
            raise InvalidParameterError("geometry has non-finite coordinates")

    @property
    def n_faces(self):
        return self.coords.shape[2]

    def face(self, k):
        """Vertex coordinates of face k as a (verts_per_face, dim) array."""
        return self.coords[:, :, k]


def generate_circle(center, radius, n_edges):
    """Closed circle polygon: n_edges vertices at angles 2*pi*k/n_edges, counterclockwise."""
    center = as_point(center, 2)
    if n_edges < 3:
        raise InvalidParameterError(f"a circle needs at least 3 edges, got {n_edges}")
    if radius <= 0:
        raise InvalidParameterError(f"circle radius must be positive, got {radius}")
    ang = 2.0 * np.pi * np.arange(n_edges) / n_edges
    verts = np.stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)], axis=1)
    idx = np.arange(n_edges, dtype=np.int32)
    faces = np.stack([idx, (idx + 1) % n_edges], axis=1)
    return IndexedGeometry(2, verts.astype(np.float32), faces)


def generate_sphere(center, radius, n_lat, n_lon):
    """Latitude-longitude sphere tessellation: fans at both poles, two
    triangles per interior quad. n_lat latitude bands, n_lon meridians.

    Triangle count is 2*n_lon + 2*(n_lat-2)*n_lon; winding is outward.
    """
    center = as_point(center, 3)
    if n_lat < 2:
        raise InvalidParameterError(f"sphere needs n_lat >= 2, got {n_lat}")
    if n_lon < 3:
        raise InvalidParameterError(f"sphere needs n_lon >= 3, got {n_lon}")
    if radius <= 0:
        raise InvalidParameterError(f"sphere radius must be positive, got {radius}")

    # vertices: north pole, rings 1..n_lat-1, south pole
    verts = [center + np.array([0.0, 0.0, radius])]
    for k in range(1, n_lat):
        theta = np.pi * k / n_lat
        phi = 2.0 * np.pi * np.arange(n_lon) / n_lon
        ring = np.stack(
            [
                center[0] + radius * np.sin(theta) * np.cos(phi),
                center[1] + radius * np.sin(theta) * np.sin(phi),
                center[2] + radius * np.full(n_lon, np.cos(theta)),
            ],
            axis=1,
        )
        verts.append(ring)
    verts.append(center + np.array([0.0, 0.0, -radius]))
    verts = np.vstack([np.atleast_2d(v) for v in verts]).astype(np.float32)

    def ring_start(k):  # ring index k in 1..n_lat-1
        return 1 + (k - 1) * n_lon

    north, south = 0, len(verts) - 1
    faces = []
    # north fan
    r1 = ring_start(1)
    for j in range(n_lon):
        faces.append((north, r1 + j, r1 + (j + 1) % n_lon))
    # interior quads, two triangles each, outward winding
    for k in range(1, n_lat - 1):
        ra, rb = ring_start(k), ring_start(k + 1)
        for j in range(n_lon):
            jn = (j + 1) % n_lon
            faces.append((ra + j, rb + j, rb + jn))
            faces.append((ra + j, rb + jn, ra + jn))
    # south fan
    rl = ring_start(n_lat - 1)
    for j in range(n_lon):
        faces.append((south, rl + (j + 1) % n_lon, rl + j))
    return IndexedGeometry(3, verts, np.asarray(faces, dtype=np.int32))


def append_geometry(parts):
    """Concatenate indexed geometries, offsetting face indices per part."""
    parts = [p for p in parts]
    if not parts:
        raise InvalidParameterError("nothing to append")
    dim = parts[0].dim
    if any(p.dim != dim for p in parts):
        raise InvalidParameterError("cannot append geometries of mixed dimension")
    verts, faces, off = [], [], 0
    for p in parts:
        verts.append(p.vertices)
        faces.append(p.faces + off)
        off += len(p.vertices)
    return IndexedGeometry(dim, np.vstack(verts), np.vstack(faces))


def import_text_primitives(path, dim=None):
    """Read a primitive description file and build the concatenated indexed mesh.

    One primitive per line: ``circle cx cy r n_edges`` (2D) or
    ``sphere cx cy cz r n_lat n_lon`` (3D); ``#`` starts a comment.
    Multiple primitives concatenate with vertex indices offset per part.
    An empty file yields an empty geometry of dimension ``dim`` (default 2).
    """
    parts = []
    try:
        lines = open(path, encoding="utf-8").read().splitlines()
    except OSError as e:
        raise GeometryParseError(str(e), path=path) from None
    for ln, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        tok = text.split()
        kind, args = tok[0].lower(), tok[1:]
        try:
            if kind == "circle":
                if len(args) != 4:
                    raise GeometryParseError("circle takes 4 values: cx cy r n_edges", path, ln)
                cx, cy, r = (float(a) for a in args[:3])
                parts.append(generate_circle((cx, cy), r, _parse_count(args[3])))
            elif kind == "sphere":
                if len(args) != 6:
                    raise GeometryParseError("sphere takes 6 values: cx cy cz r n_lat n_lon", path, ln)
                cx, cy, cz, r = (float(a) for a in args[:4])
                parts.append(generate_sphere((cx, cy, cz), r, _parse_count(args[4]), _parse_count(args[5])))
            else:
                raise GeometryParseError(f"unknown primitive {kind!r}", path, ln)
        except ValueError:
            raise GeometryParseError(f"cannot parse numbers in {text!r}", path, ln) from None
        except InvalidParameterError as e:
            raise GeometryParseError(str(e), path, ln) from None
    if not parts:
        return IndexedGeometry.empty(dim if dim is not None else 2)
    out = append_geometry(parts)
    if dim is not None and out.dim != dim:
        raise GeometryParseError(f"file holds {out.dim}D primitives but a {dim}D run was requested", path)
    return out


def _parse_count(s):
    v = float(s)
    if v != int(v):
        raise ValueError(s)
    return int(v)


def index_to_coords(g: IndexedGeometry) -> CoordListGeometry:
    """Expand an indexed mesh into the coordinate-list form.

    Face order and vertex winding are preserved; the copied coordinates are
    bitwise equal to the indexed lookups (pure gather, no arithmetic).
    """
    d = g.dim
    coords = np.empty((d, d, g.n_faces), dtype=np.float32)
    for j in range(d):
        # coords[j, :, k] = vertices[faces[k, j]]
        coords[j, :, :] = g.vertices[g.faces[:, j]].T
    return CoordListGeometry(g.dim, coords)


def validate_faces(g: CoordListGeometry):
    """Reject degenerate faces: zero-length edges or zero-area triangles."""
    if g.n_faces == 0:
        return
    c = g.coords.astype(np.float64)
    if g.dim == 2:
        d = c[1] - c[0]
        bad = np.nonzero(d[0] * d[0] + d[1] * d[1] == 0.0)[0]
        if bad.size:
            raise InvalidParameterError(f"degenerate edge (identical endpoints) at face {bad[0]}")
        return
    u = c[1] - c[0]
    v = c[2] - c[0]
    w = c[2] - c[1]
    scale_sq = np.maximum(
        np.maximum((u * u).sum(axis=0), (v * v).sum(axis=0)), (w * w).sum(axis=0)
    )
    crx = u[1] * v[2] - u[2] * v[1]
    cry = u[2] * v[0] - u[0] * v[2]
    crz = u[0] * v[1] - u[1] * v[0]
    area2 = np.sqrt(crx * crx + cry * cry + crz * crz)
    bad = np.nonzero((scale_sq == 0.0) | (area2 < 1e-12 * scale_sq))[0]
    if bad.size:
        raise InvalidParameterError(f"degenerate triangle (zero area) at face {bad[0]}")


def bounding_box(g: CoordListGeometry) -> Aabb:
    """Componentwise min/max over every vertex entry of every face."""
    if g.n_faces == 0:
        raise InvalidParameterError("bounding box of empty geometry")
    lo = g.coords.min(axis=(0, 2)).astype(np.float64)
    hi = g.coords.max(axis=(0, 2)).astype(np.float64)
    return Aabb(lo, hi)


# ---------------------------------------------------------------------------
# STL import
# ---------------------------------------------------------------------------

_BINARY_HEADER = 80
_BINARY_RECORD = 50  # 12 f32 (normal + 3 vertices) + u16 attribute


def import_stl(path) -> CoordListGeometry:
    """Read an ASCII or binary STL file into the coordinate-list form.

    A file is treated as ASCII iff its first non-whitespace token is
    ``solid`` and the body actually parses as ASCII STL; otherwise it is
    read as binary (binary headers frequently begin with "solid" too).
    Stored facet normals are ignored; orientation comes from the winding.
    """
    try:
        data = open(path, "rb").read()
    except OSError as e:
        raise GeometryParseError(str(e), path=path) from None
    if data.lstrip()[:5] == b"solid":
        try:
            return _parse_ascii_stl(data, path)
        except GeometryParseError:
            # "solid"-prefixed binary file: fall back if the record layout fits
            if _binary_size_consistent(data):
                return _parse_binary_stl(data, path)
            raise
    return _parse_binary_stl(data, path)


def _binary_size_consistent(data):
    if len(data) < _BINARY_HEADER + 4:
        return False
    (n,) = struct.unpack_from("<I", data, _BINARY_HEADER)
    return len(data) == _BINARY_HEADER + 4 + n * _BINARY_RECORD


def _parse_ascii_stl(data, path):
    try:
        text = data.decode("utf-8", errors="strict")
    except UnicodeDecodeError:
        raise GeometryParseError("not valid ASCII STL text", path=path) from None
    # token stream with line tracking for error messages
    tokens = []
    for ln, line in enumerate(text.splitlines(), start=1):
        for t in line.split():
            tokens.append((t, ln))
    pos = 0

    def peek():
        return tokens[pos][0] if pos < len(tokens) else None

    def take(expect=None):
        nonlocal pos
        if pos >= len(tokens):
            raise GeometryParseError("unexpected end of file", path, tokens[-1][1] if tokens else None)
        t, ln = tokens[pos]
        pos += 1
        if expect is not None and t.lower() != expect:
            raise GeometryParseError(f"expected {expect!r}, got {t!r}", path, ln)
        return t, ln

    def take_float():
        t, ln = take()
        try:
            return float(t)
        except ValueError:
            raise GeometryParseError(f"expected a number, got {t!r}", path, ln) from None

    take("solid")
    # optional solid name: everything up to the first "facet"/"endsolid" keyword
    while peek() is not None and peek().lower() not in ("facet", "endsolid"):
        take()

    tris = []
    while True:
        t, ln = take()
        kw = t.lower()
        if kw == "endsolid":
            break
        if kw != "facet":
            raise GeometryParseError(f"expected 'facet' or 'endsolid', got {t!r}", path, ln)
        take("normal")
        for _ in range(3):
            take_float()  # stored normal, discarded
        take("outer")
        take("loop")
        tri = []
        for _ in range(3):
            take("vertex")
            tri.append([take_float(), take_float(), take_float()])
        take("endloop")
        take("endfacet")
        tris.append(tri)
    # trailing solid name tokens after endsolid are allowed; other keywords are not
    while pos < len(tokens):
        t, ln = tokens[pos]
        if t.lower() in ("facet", "solid", "vertex", "endsolid"):
            raise GeometryParseError(f"unexpected {t!r} after endsolid", path, ln)
        pos += 1
    return _tris_to_geometry(tris)


def _parse_binary_stl(data, path):
    if len(data) < _BINARY_HEADER + 4:
        raise GeometryParseError("binary STL shorter than header + facet count", path=path)
    (n,) = struct.unpack_from("<I", data, _BINARY_HEADER)
    need = _BINARY_HEADER + 4 + n * _BINARY_RECORD
    if len(data) < need:
        raise GeometryParseError(
            f"binary STL truncated: {n} facets need {need} bytes, file has {len(data)}", path=path
        )
    raw = np.frombuffer(data, dtype=np.uint8, count=n * _BINARY_RECORD, offset=_BINARY_HEADER + 4)
    rec = raw.reshape(n, _BINARY_RECORD)
    floats = rec[:, :48].copy().view("<f4").reshape(n, 4, 3)  # [normal, v1, v2, v3]
    tris = floats[:, 1:4, :]
    return _tris_to_geometry(tris)


def _tris_to_geometry(tris):
    tris = np.asarray(tris, dtype=np.float32)
    if tris.size == 0:
        return CoordListGeometry(3, np.zeros((3, 3, 0), np.float32))
    coords = np.transpose(tris, (1, 2, 0))  # (vertex slot, component, face)
    return CoordListGeometry(3, coords)
