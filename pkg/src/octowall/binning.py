"""Spatial binning of geometry faces over a regular grid.

Faces are assigned to every bin touched by their sample-point
discretization. The fill runs in batches of bins (the bin fraction knob
bounds transient indicator memory and nothing else) and each batch is
stream-compacted into the three-array BinnedFaces structure: flat face IDs
grouped by bin, per-bin counts, and per-bin start offsets. Per-bin IDs are
sorted ascending so the output is identical across backends and across
bin-fraction choices.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import backends
from .distance import _reject_degenerate_triangle
from .errors import CapacityError, InvalidParameterError
from .geometry import Aabb, CoordListGeometry, bounding_box, validate_faces

F32 = np.float32

EMPTY = np.int32(-1)

DEFAULT_OVERLAP_FACTOR = 10

# auto bin-fraction keeps the dense per-batch indicator under this many slots
_SLOT_BUDGET = 2**25

_DOMAIN_REL_TOL = 1e-6


@dataclass
class BinGrid:
    """Regular grid of bins_per_axis**dim bins covering the domain box."""

    domain: Aabb
    bins_per_axis: int

    def __post_init__(self):
        if self.bins_per_axis < 1:
            raise InvalidParameterError(f"bins_per_axis must be >= 1, got {self.bins_per_axis}")
        if np.any(self.domain.extent <= 0):
            raise InvalidParameterError("bin grid domain must have positive extent")
        # single-precision constants shared by every kernel on either backend
        self._min32 = self.domain.min.astype(np.float32)
        self._len32 = (self.domain.extent / self.bins_per_axis).astype(np.float32)

    @property
    def dim(self):
        return self.domain.dim

    @property
    def n_bins(self):
        return self.bins_per_axis**self.dim

    @property
    def bin_length(self):
        return self.domain.extent / self.bins_per_axis


def linear_bin_indices(points, grid: BinGrid, what="point"):
    """Linearized bin index (x fastest) for each point; clamps boundary points.

    points: (n, dim) float32. Points beyond the domain by more than
    1e-6 * extent raise; points on the max boundary clamp to the last bin.
    """
    p = np.asarray(points, dtype=np.float32)
    b = grid.bins_per_axis
    tol = _DOMAIN_REL_TOL * grid.domain.extent
    low = np.asarray(grid.domain.min, dtype=np.float64) - tol
    high = np.asarray(grid.domain.max, dtype=np.float64) + tol
    out_of_domain = np.any((p < low) | (p > high), axis=-1)
    if np.any(out_of_domain):
        bad = p[out_of_domain][0]
        raise InvalidParameterError(f"{what} outside binning domain: {bad.tolist()}")
    idx = np.floor((p - grid._min32) / grid._len32).astype(np.int64)
    np.clip(idx, 0, b - 1, out=idx)
    lin = idx[..., 0].copy()
    stride = 1
    for ax in range(1, grid.dim):
        stride *= b
        lin += idx[..., ax] * stride
    return lin


def bin_of_point(p, grid: BinGrid):
    """Bin of a single point: (per-axis tuple, linearized index)."""
    p = np.asarray(p, dtype=np.float32).reshape(1, grid.dim)
    lin = int(linear_bin_indices(p, grid)[0])
    b = grid.bins_per_axis
    tup = []
    rem = lin
    for _ in range(grid.dim):
        tup.append(rem % b)
        rem //= b
    return tuple(tup), lin


def default_spacing(grid: BinGrid):
    """Default discretization spacing: half the smallest bin edge."""
    return float(F32(0.5) * grid._len32.min())


def discretize_face(face, spacing):
    """Sample points covering one face, spaced at most ``spacing`` apart.

    An edge becomes ceil(len/spacing)+1 equally spaced points including both
    endpoints. A triangle discretizes edge v1->v2 that way, then each of
    those points spawns a segment to v3 discretized by the same rule, so the
    sample count scales with face size and all three vertices are included.
    """
    f = np.asarray(face, dtype=np.float32)
    if f.ndim != 2 or f.shape[0] not in (2, 3) or f.shape[1] != f.shape[0]:
        raise InvalidParameterError(f"face must be (2,2) or (3,3), got {f.shape}")
    if spacing <= 0:
        raise InvalidParameterError(f"spacing must be positive, got {spacing}")
    h = F32(spacing)
    if f.shape[0] == 2:
        if np.array_equal(f[0], f[1]):
            raise InvalidParameterError("degenerate edge: identical endpoints")
        return _sample_segment(f[0], f[1], h)
    _reject_degenerate_triangle(f[0], f[1], f[2])
    base = _sample_segment(f[0], f[1], h)
    parts = [_sample_segment(p, f[2], h) for p in base]
    return np.vstack(parts)


def _sample_segment(a, b, h):
    d = b - a
    length = np.sqrt(np.sum(d * d, dtype=np.float32))
    nseg = int(np.ceil(length / h))
    if nseg == 0:
        return a.reshape(1, -1).copy()
    t = np.arange(nseg + 1, dtype=np.float32) / F32(nseg)
    return a + t[:, None] * d


@dataclass
class FaceBinIndicator:
    """Dense per-batch occupancy: slot (face, local bin) holds the face ID or EMPTY."""

    slots: np.ndarray  # int32 (n_faces, batch_bins)
    first_bin: int  # global bin index of local column 0
    batch_index: int

    @property
    def batch_bins(self):
        return self.slots.shape[1]


@dataclass
class BinnedFaces:
    """Face IDs grouped by bin: flat ids, per-bin counts, per-bin start offsets."""

    n_bins: int
    ids: np.ndarray  # int32, grouped by bin, ascending within each bin
    counts: np.ndarray  # int32 (n_bins,)
    offsets: np.ndarray  # int32 (n_bins,)

    def faces_in_bin(self, b):
        o = self.offsets[b]
        return self.ids[o : o + self.counts[b]]

    def __eq__(self, other):
        if not isinstance(other, BinnedFaces):
            return NotImplemented
        return (
            self.n_bins == other.n_bins
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(self.offsets, other.offsets)
        )

    def dump_csv(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write("bin_id,count,offset\n")
            for b in range(self.n_bins):
                f.write(f"{b},{self.counts[b]},{self.offsets[b]}\n")


def auto_bin_fraction(n_bins, n_faces, slot_budget=_SLOT_BUDGET):
    """Smallest batch count keeping the dense indicator under the slot budget."""
    if n_faces == 0:
        return 1
    return max(1, math.ceil(n_bins * max(1, n_faces) / slot_budget))


def batch_ranges(n_bins, bin_fraction):
    """Split bins 0..n_bins into bin_fraction ascending batches; the last
    batch takes the remainder when the division is not exact."""
    if bin_fraction < 1:
        raise InvalidParameterError(f"bin_fraction must be >= 1, got {bin_fraction}")
    bf = min(bin_fraction, n_bins)
    per = math.ceil(n_bins / bf)
    return [(s, min(s + per, n_bins)) for s in range(0, n_bins, per)]


def fill_bins(
    geom: CoordListGeometry,
    grid: BinGrid,
    bin_fraction=None,
    overlap_factor=DEFAULT_OVERLAP_FACTOR,
    spacing=None,
    backend=backends.SERIAL,
) -> BinnedFaces:
    """Assign every face to each bin touched by its discretization.

    The output is independent of ``bin_fraction`` (a memory-footprint knob)
    and of the backend. Total stored IDs are capped at
    ``overlap_factor * n_faces``; overflowing that capacity raises
    CapacityError.
    """
    backends.validate_backend(backend)
    if geom.dim != grid.dim:
        raise InvalidParameterError(f"geometry is {geom.dim}D but bin grid is {grid.dim}D")
    if geom.n_faces == 0:
        raise InvalidParameterError("cannot bin empty geometry")
    validate_faces(geom)
    bbox = bounding_box(geom)
    tol = _DOMAIN_REL_TOL * grid.domain.extent
    if np.any(bbox.min < grid.domain.min - tol) or np.any(bbox.max > grid.domain.max + tol):
        raise InvalidParameterError(
            f"face outside binning domain: geometry spans {bbox.min.tolist()}..{bbox.max.tolist()}"
        )
    if bin_fraction is None:
        bin_fraction = auto_bin_fraction(grid.n_bins, geom.n_faces)
    h = F32(spacing) if spacing is not None else F32(default_spacing(grid))
    if h <= 0:
        raise InvalidParameterError(f"spacing must be positive, got {h}")

    n_faces = geom.n_faces
    capacity = overlap_factor * n_faces

    # face-to-bins occupancy is batching-independent; compute per-sample bin
    # indices once, then slice them per batch
    if backend == backends.PARALLEL:
        sample_faces, sample_bins = _sample_bins_parallel(geom, grid, h)
    else:
        sample_faces, sample_bins = _sample_bins_serial(geom, grid, h)

    counts = np.zeros(grid.n_bins, dtype=np.int32)
    id_chunks = []
    stored = 0
    for bi, (b0, b1) in enumerate(batch_ranges(grid.n_bins, bin_fraction)):
        indicator = _fill_indicator(sample_faces, sample_bins, n_faces, b0, b1, bi, backend)
        occupied = int(np.count_nonzero(indicator.slots != EMPTY))
        if stored + occupied > capacity:
            raise CapacityError(
                f"bin assignment overflow: {stored + occupied} face-bin entries exceed "
                f"capacity {capacity} (= {overlap_factor} x {n_faces} faces); raise "
                f"overlap_factor, or raise bin_fraction to shrink the per-batch indicator"
            )
        stored += occupied
        if backend == backends.PARALLEL:
            bcounts, bids = compact_indicators(indicator)
        else:
            bcounts, bids = _compact_serial(indicator)
        counts[b0:b1] = bcounts
        id_chunks.append(bids)

    ids = np.concatenate(id_chunks) if id_chunks else np.zeros(0, np.int32)
    offsets = np.zeros(grid.n_bins, dtype=np.int32)
    np.cumsum(counts[:-1], out=offsets[1:])
    return BinnedFaces(grid.n_bins, ids.astype(np.int32), counts, offsets)


def _sample_bins_serial(geom, grid, h):
    """Per-face loop: discretize, then map samples to bins."""
    faces, bins = [], []
    for k in range(geom.n_faces):
        pts = discretize_face(geom.face(k), h)
        lin = linear_bin_indices(pts, grid, what=f"sample of face {k}")
        faces.append(np.full(len(lin), k, dtype=np.int64))
        bins.append(lin)
    return np.concatenate(faces), np.concatenate(bins)


def _sample_bins_parallel(geom, grid, h):
    """Whole-geometry ragged discretization in one batch."""
    c = geom.coords
    if geom.dim == 2:
        faces, pts = _sample_segments_batch(c[0], c[1], h)
    else:
        p_face, p = _sample_segments_batch(c[0], c[1], h)
        v3 = c[2][:, p_face]  # (dim, n_base_points)
        faces2, pts = _sample_segments_batch(p.T, v3, h)
        faces = p_face[faces2]
    lin = linear_bin_indices(pts, grid, what="face sample")
    return faces, lin


def _sample_segments_batch(a, b, h):
    """Vectorized counterpart of _sample_segment over many segments.

    a, b: (dim, n) float32 endpoints. Returns (segment index, points (m, dim)).
    The arithmetic matches the serial path operation for operation.
    """
    d = b - a
    length = np.sqrt(np.sum(d * d, axis=0, dtype=np.float32))
    nseg = np.ceil(length / h).astype(np.int64)
    npts = nseg + 1
    total = int(npts.sum())
    seg_of = np.repeat(np.arange(len(length)), npts)
    starts = np.cumsum(npts) - npts
    i_of = np.arange(total, dtype=np.int64) - starts[seg_of]
    denom = np.maximum(nseg, 1).astype(np.float32)
    t = i_of.astype(np.float32) / denom[seg_of]
    pts = a[:, seg_of].T + t[:, None] * d[:, seg_of].T
    return seg_of, pts


def _fill_indicator(sample_faces, sample_bins, n_faces, b0, b1, batch_index, backend):
    """Build the dense per-batch indicator from precomputed sample bins."""
    slots = np.full((n_faces, b1 - b0), EMPTY, dtype=np.int32)
    in_batch = (sample_bins >= b0) & (sample_bins < b1)
    f = sample_faces[in_batch]
    b = sample_bins[in_batch] - b0
    if backend == backends.PARALLEL:
        slots[f, b] = f.astype(np.int32)
    else:
        for fi, bi in zip(f.tolist(), b.tolist()):
            slots[fi, bi] = fi
    return FaceBinIndicator(slots, b0, batch_index)


def compact_indicators(indicator: FaceBinIndicator):
    """Count-then-copy compaction of one batch: per-bin counts plus the
    concatenated non-EMPTY face IDs, ascending within each bin."""
    occ = indicator.slots != EMPTY
    counts = occ.sum(axis=0, dtype=np.int32)
    order = np.nonzero(occ.T)  # (bin-major) -> ids already ascending per bin
    ids = order[1].astype(np.int32)
    return counts, ids


def _compact_serial(indicator: FaceBinIndicator):
    counts = np.zeros(indicator.batch_bins, dtype=np.int32)
    ids = []
    for lb in range(indicator.batch_bins):
        col = indicator.slots[:, lb]
        present = sorted(int(v) for v in col[col != EMPTY])
        counts[lb] = len(present)
        ids.extend(present)
    return counts, np.asarray(ids, dtype=np.int32)
