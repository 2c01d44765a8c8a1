"""Near-wall refinement: mark blocks near geometry faces, propagate marks,
refine, repeat per level; build cell-face links on the final grid.

Marking sets a block's mark as soon as one of its cell centers passes the
near predicate for one candidate face. The naive strategy considers every
face; the binned strategy restricts each cell to the faces stored in the
bin containing its center, then dilates the marks over face-neighbor blocks
for 1 + floor(d_spec / block_length) rounds to restore the distance
guarantee that bin-local searches lose.

Both strategies run a conservative broad-phase prefilter (axis-aligned box
distance with a margin that dwarfs single-precision rounding) before the
exact predicate; it only discards face-cell pairs the predicate itself
would reject, so marked sets are unchanged.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import backends
from .binning import BinGrid, BinnedFaces, auto_bin_fraction, fill_bins, linear_bin_indices
from .distance import near_faces_mask
from .errors import CapacityError, InvalidParameterError
from .forest import Forest, RefineMark
from .geometry import CoordListGeometry, bounding_box, validate_faces


def _coordinate_scale(forest, geom):
    s = max(float(np.abs(forest.domain.min).max()), float(np.abs(forest.domain.max).max()))
    if geom.n_faces:
        s = max(s, float(np.abs(geom.coords).max()))
    return s


def _cull_reach(d_spec, scale):
    # margin >> any float32 rounding of the predicate at this scale
    return d_spec + 1e-3 * max(1.0, scale, d_spec)


def _face_boxes(geom):
    c = geom.coords.astype(np.float64)
    return c.min(axis=0).T.copy(), c.max(axis=0).T.copy()  # (F, dim) each


def _aabb_cull(blo, bhi, face_lo, face_hi, ids, reach):
    """Keep candidate faces whose box is within reach of the block box."""
    lo = face_lo[ids]
    hi = face_hi[ids]
    gap = np.maximum(0.0, np.maximum(lo - bhi, blo - hi))
    keep = np.einsum("nd,nd->n", gap, gap) <= reach * reach
    return ids[keep]


def _ragged_arange(counts):
    """[3, 2] -> [0, 1, 2, 0, 1]."""
    total = int(counts.sum())
    starts = np.cumsum(counts) - counts
    return np.arange(total, dtype=np.int64) - np.repeat(starts, counts)


class _CandidateIndex:
    """Per-block candidate face lists via hierarchical box culling.

    Face boxes inflated by the reach are rasterized once onto the root
    lattice; a deeper block's candidates are its parent's list narrowed by
    an exact box-distance cull. Lists stay ascending so every traversal
    order downstream is deterministic.
    """

    def __init__(self, forest, face_lo, face_hi, reach):
        self.forest = forest
        self.face_lo = face_lo
        self.face_hi = face_hi
        self.reach = reach
        self._memo = {}
        self._rasterize()

    def _rasterize(self):
        forest = self.forest
        dmin = forest.domain.min
        rlen = forest.block_length(0)
        rd = np.asarray(forest.root_dims, dtype=np.int64)
        ilo = np.floor((self.face_lo - self.reach - dmin) / rlen).astype(np.int64)
        ihi = np.floor((self.face_hi + self.reach - dmin) / rlen).astype(np.int64)
        np.clip(ilo, 0, rd - 1, out=ilo)
        np.clip(ihi, 0, rd - 1, out=ihi)
        span = ihi - ilo + 1
        counts = np.prod(span, axis=1)
        face_rep = np.repeat(np.arange(len(counts), dtype=np.int64), counts)
        r = _ragged_arange(counts)
        site = np.zeros(len(r), dtype=np.int64)
        stride = 1
        rem = r
        for ax in range(forest.dim):
            s = span[face_rep, ax]
            site += (ilo[face_rep, ax] + rem % s) * stride
            rem = rem // s
            stride *= int(rd[ax])
        order = np.lexsort((face_rep, site))
        self._site_faces = face_rep[order]
        n_sites = int(np.prod(rd))
        self._site_counts = np.bincount(site, minlength=n_sites)
        self._site_offsets = np.concatenate([[0], np.cumsum(self._site_counts[:-1])])

    def _root_list(self, bid):
        forest = self.forest
        c = forest._coords[bid]
        site = 0
        stride = 1
        for ax in range(forest.dim):
            site += int(c[ax]) * stride
            stride *= forest.root_dims[ax]
        o = self._site_offsets[site]
        return self._site_faces[o : o + self._site_counts[site]]

    def candidates(self, bid):
        """Ascending face IDs whose box lies within reach of the block box."""
        got = self._memo.get(bid)
        if got is not None:
            return got
        forest = self.forest
        if forest._level[bid] == 0:
            base = self._root_list(bid)
        else:
            base = self.candidates(int(forest._parent[bid]))
        if len(base):
            blo, bhi = forest.block_aabbs([bid])
            base = _aabb_cull(blo[0], bhi[0], self.face_lo, self.face_hi, base, self.reach)
        self._memo[bid] = base
        return base


def _check_marking_inputs(forest, geom, d_spec):
    if geom.dim != forest.dim:
        raise InvalidParameterError(f"geometry is {geom.dim}D but forest is {forest.dim}D")
    if geom.n_faces == 0:
        raise InvalidParameterError("cannot mark near-wall blocks with empty geometry")
    if d_spec <= 0:
        raise InvalidParameterError(f"near-wall distance must be positive, got {d_spec}")
    validate_faces(geom)


def _face_spheres(face_lo, face_hi, reach):
    """Bounding-sphere prefilter data: centers (dim, F) and per-face squared
    radius (||half extent|| + reach)**2, single precision.

    A cell center farther from the face's sphere center than that radius
    cannot pass the predicate (the margin inside ``reach`` covers all
    single-precision rounding), so prefiltered pairs are dropped exactly.
    """
    c = 0.5 * (face_lo + face_hi)
    r = np.linalg.norm(0.5 * (face_hi - face_lo), axis=1) + reach
    return c.T.astype(np.float32).copy(), (r * r).astype(np.float32)


_PROBE_CELLS = 8  # cells evaluated first; a hit skips the rest of the block


def _scan_block(centers, tri, fc, frad_sq, d_spec, dim, backend, allowed=None):
    """Does any cell center pass the near predicate for any candidate face?

    The bounding-sphere prefilter compacts the cell/face product down to
    plausible pairs before the full predicate runs. serial evaluates cells
    one at a time with an early exit; parallel evaluates the compacted pair
    list in two batches (a probe over the leading cells, then the rest).
    Identical results by construction: the prefilter only removes pairs the
    shared single-precision kernel would reject.
    """
    if backend == backends.PARALLEL:
        px = centers[:, 0:1]
        dx = px - fc[0]
        dy = centers[:, 1:2] - fc[1]
        dist = dx * dx + dy * dy
        if dim == 3:
            dz = centers[:, 2:3] - fc[2]
            dist = dist + dz * dz
        pre = dist <= frad_sq
        if allowed is not None:
            pre &= allowed
        ci, fi = np.nonzero(pre)
        if len(ci) == 0:
            return False
        probe = ci < _PROBE_CELLS
        for sel in (probe, ~probe):
            if not sel.any():
                continue
            cs, fs = ci[sel], fi[sel]
            qx = centers[cs, 0]
            qy = centers[cs, 1]
            qz = centers[cs, 2] if dim == 3 else None
            if near_faces_mask(qx, qy, qz, tri[:, :, fs], d_spec).any():
                return True
        return False

    for c in range(len(centers)):
        dx = centers[c, 0] - fc[0]
        dy = centers[c, 1] - fc[1]
        dist = dx * dx + dy * dy
        if dim == 3:
            dz = centers[c, 2] - fc[2]
            dist = dist + dz * dz
        pre = dist <= frad_sq
        if allowed is not None:
            pre &= allowed[c]
        if not pre.any():
            continue
        px, py = centers[c, 0], centers[c, 1]
        pz = centers[c, 2] if dim == 3 else None
        if near_faces_mask(px, py, pz, tri[:, :, pre], d_spec).any():
            return True
    return False


def mark_near_wall_naive(forest: Forest, level, geom: CoordListGeometry, d_spec, backend=backends.SERIAL):
    """Mark every leaf block at ``level`` with a cell center within ``d_spec``
    of any face. Existing marks are never cleared. Returns blocks marked."""
    backends.validate_backend(backend)
    _check_marking_inputs(forest, geom, d_spec)
    leaves = forest.leaf_blocks_at(level)
    if len(leaves) == 0:
        return 0
    face_lo, face_hi = _face_boxes(geom)
    reach = _cull_reach(d_spec, _coordinate_scale(forest, geom))
    index = _CandidateIndex(forest, face_lo, face_hi, reach)
    fc_all, frad_all = _face_spheres(face_lo, face_hi, reach)

    centers = forest.cell_centers_many(leaves)
    marked = 0
    for i, bid in enumerate(leaves):
        if forest.marks[bid] == RefineMark.MARKED:
            continue
        cand = index.candidates(int(bid))
        if len(cand) == 0:
            continue
        tri = geom.coords[:, :, cand]
        if _scan_block(centers[i], tri, fc_all[:, cand], frad_all[cand], d_spec, forest.dim, backend):
            forest.marks[bid] = RefineMark.MARKED
            marked += 1
    return marked


def _isin_sorted(values, sorted_arr):
    """Membership of ``values`` in an ascending array, via binary search."""
    if len(sorted_arr) == 0:
        return np.zeros(len(values), dtype=bool)
    pos = np.minimum(np.searchsorted(sorted_arr, values), len(sorted_arr) - 1)
    return sorted_arr[pos] == values


def mark_near_wall_binned(
    forest: Forest,
    level,
    geom: CoordListGeometry,
    bins: BinnedFaces,
    grid: BinGrid,
    d_spec,
    backend=backends.SERIAL,
):
    """Binned marking: each cell tests only the faces stored in the bin
    containing its center. Before propagation this marks a subset of the
    naive set. Returns blocks marked."""
    backends.validate_backend(backend)
    _check_marking_inputs(forest, geom, d_spec)
    if bins.n_bins != grid.n_bins:
        raise InvalidParameterError("bin structure does not match the bin grid")
    leaves = forest.leaf_blocks_at(level)
    if len(leaves) == 0:
        return 0
    face_lo, face_hi = _face_boxes(geom)
    reach = _cull_reach(d_spec, _coordinate_scale(forest, geom))
    index = _CandidateIndex(forest, face_lo, face_hi, reach)
    fc_all, frad_all = _face_spheres(face_lo, face_hi, reach)

    centers = forest.cell_centers_many(leaves)
    cell_bins = linear_bin_indices(
        centers.reshape(-1, forest.dim), grid, what="cell center"
    ).reshape(len(leaves), -1)

    marked = 0
    for i, bid in enumerate(leaves):
        if forest.marks[bid] == RefineMark.MARKED:
            continue
        cand = index.candidates(int(bid))
        if len(cand) == 0:
            continue
        cbins = cell_bins[i]
        ubins = np.unique(cbins)
        # per distinct bin of this block: which candidates its cells may test
        member = np.stack([_isin_sorted(cand, bins.faces_in_bin(b)) for b in ubins])
        keep = member.any(axis=0)
        if not keep.any():
            continue
        cand = cand[keep]
        member = member[:, keep]
        slot = np.searchsorted(ubins, cbins)  # bin slot per cell
        if _scan_block(
            centers[i],
            geom.coords[:, :, cand],
            fc_all[:, cand],
            frad_all[cand],
            d_spec,
            forest.dim,
            backend,
            allowed=member[slot],
        ):
            forest.marks[bid] = RefineMark.MARKED
            marked += 1
    return marked


def propagation_rounds(d_spec, block_length):
    """Dilation rounds needed to cover d_spec: 1 + floor(d_spec / block_length)."""
    if d_spec <= 0 or block_length <= 0:
        raise InvalidParameterError("d_spec and block_length must be positive")
    return 1 + math.floor(d_spec / block_length)


def propagate_marks(forest: Forest, level, d_spec, backend=backends.SERIAL, rounds=None):
    """Dilate MARKED over face-neighbor leaves at ``level``.

    Each round runs two passes to stay race-free under concurrent
    traversal: unmarked leaves that gather a MARKED face-neighbor first
    switch to INTERMEDIATE, then a second traversal promotes INTERMEDIATE
    to MARKED. Marked sources are gathered regardless of their level; the
    traversal (and therefore the write set) is the level's leaves.
    """
    backends.validate_backend(backend)
    ids = forest.ids_at_level(level)
    if np.any(forest.marks[ids] == RefineMark.INTERMEDIATE):
        raise InvalidParameterError(f"level {level} already carries intermediate marks")
    if rounds is None:
        rounds = propagation_rounds(d_spec, float(np.min(forest.block_length(level))))
    leaves = forest.leaf_blocks_at(level)
    if len(leaves) == 0 or rounds == 0:
        return
    nbr_lists = [forest.adjacent_leaf_ids(bid) for bid in leaves]
    pair_leaf = np.concatenate(
        [np.full(len(ns), pos, dtype=np.int64) for pos, ns in enumerate(nbr_lists)]
    )
    pair_nbr = np.concatenate([np.asarray(ns, dtype=np.int64) for ns in nbr_lists])

    for _ in range(rounds):
        if backend == backends.PARALLEL:
            gathered = np.bincount(
                pair_leaf,
                weights=(forest.marks[pair_nbr] == RefineMark.MARKED),
                minlength=len(leaves),
            ) > 0
            to_mark = leaves[(forest.marks[leaves] == RefineMark.NONE) & gathered]
            forest.marks[to_mark] = RefineMark.INTERMEDIATE
            inter = leaves[forest.marks[leaves] == RefineMark.INTERMEDIATE]
            forest.marks[inter] = RefineMark.MARKED
        else:
            for pos, bid in enumerate(leaves):
                if forest.marks[bid] != RefineMark.NONE:
                    continue
                for nb in nbr_lists[pos]:
                    if forest.marks[nb] == RefineMark.MARKED:
                        forest.marks[bid] = RefineMark.INTERMEDIATE
                        break
            for bid in leaves:
                if forest.marks[bid] == RefineMark.INTERMEDIATE:
                    forest.marks[bid] = RefineMark.MARKED


@dataclass
class StageTiming:
    stage: str
    level: int
    strategy: str
    bins_per_axis: int
    bin_fraction: int
    milliseconds: float

    CSV_HEADER = "stage,level,strategy,B,B_f,milliseconds"

    def csv_row(self):
        return (
            f"{self.stage},{self.level},{self.strategy},{self.bins_per_axis},"
            f"{self.bin_fraction},{self.milliseconds:.3f}"
        )


def write_timings_csv(path, timings):
    with open(path, "w", encoding="utf-8") as f:
        f.write(StageTiming.CSV_HEADER + "\n")
        for t in timings:
            f.write(t.csv_row() + "\n")


@dataclass
class NearWallParams:
    d_spec: float
    n_levels: int = 3
    strategy: str = "binned"  # "naive" | "binned"
    bins_per_axis: int = 8
    bin_fraction: int | None = None  # None: sized from an indicator memory budget
    overlap_factor: int = 10
    spacing: float | None = None
    backend: str = backends.SERIAL

    def __post_init__(self):
        if self.strategy not in ("naive", "binned"):
            raise InvalidParameterError(f"unknown strategy {self.strategy!r}")
        if self.n_levels < 1:
            raise InvalidParameterError(f"n_levels must be >= 1, got {self.n_levels}")
        backends.validate_backend(self.backend)


@dataclass
class NearWallResult:
    forest: Forest
    timings: list[StageTiming] = field(default_factory=list)
    marked_detected: list[int] = field(default_factory=list)  # per marking pass
    marked_refined: list[int] = field(default_factory=list)  # post propagation
    bins: BinnedFaces | None = None  # last level's bin structure
    grid: BinGrid | None = None

    @property
    def total_marked(self):
        return sum(self.marked_refined)

    def total_ms(self, stage=None):
        return sum(t.milliseconds for t in self.timings if stage is None or t.stage == stage)


def refine_near_wall(forest: Forest, geom: CoordListGeometry, params: NearWallParams) -> NearWallResult:
    """Run the per-level mark / propagate / refine loop.

    For each level L in 0..n_levels-2: build bins (binned strategy), mark
    leaf blocks at L, propagate marks (binned strategy), refine. Returns
    per-stage wall-clock timings alongside the marked-block counts.
    """
    if geom.n_faces == 0:
        raise InvalidParameterError("cannot refine around empty geometry")
    bbox = bounding_box(geom)
    tol = 1e-6 * forest.domain.extent
    if np.any(bbox.min < forest.domain.min - tol) or np.any(bbox.max > forest.domain.max + tol):
        raise InvalidParameterError(
            f"geometry spans {bbox.min.tolist()}..{bbox.max.tolist()}, outside the forest domain"
        )
    result = NearWallResult(forest=forest)
    binned = params.strategy == "binned"
    b = params.bins_per_axis if binned else 1
    bf = params.bin_fraction
    if binned and bf is None:
        bf = auto_bin_fraction(BinGrid(forest.domain, b).n_bins, geom.n_faces)

    def record(stage, level, ms):
        result.timings.append(
            StageTiming(stage, level, params.strategy, b, bf if binned else 1, ms)
        )

    for level in range(params.n_levels - 1):
        if binned:
            t0 = time.perf_counter()
            grid = BinGrid(forest.domain, params.bins_per_axis)
            bins = fill_bins(
                geom,
                grid,
                bin_fraction=bf,
                overlap_factor=params.overlap_factor,
                spacing=params.spacing,
                backend=params.backend,
            )
            record("bin_setup", level, 1e3 * (time.perf_counter() - t0))
            result.bins, result.grid = bins, grid

            t0 = time.perf_counter()
            n = mark_near_wall_binned(forest, level, geom, bins, grid, params.d_spec, params.backend)
            record("face_detection", level, 1e3 * (time.perf_counter() - t0))
            result.marked_detected.append(n)

            t0 = time.perf_counter()
            propagate_marks(forest, level, params.d_spec, backend=params.backend)
            record("propagation", level, 1e3 * (time.perf_counter() - t0))
        else:
            t0 = time.perf_counter()
            n = mark_near_wall_naive(forest, level, geom, params.d_spec, params.backend)
            record("face_detection", level, 1e3 * (time.perf_counter() - t0))
            result.marked_detected.append(n)

        leaves = forest.leaf_blocks_at(level)
        result.marked_refined.append(int(np.sum(forest.marks[leaves] == RefineMark.MARKED)))
        t0 = time.perf_counter()
        forest.refine_marked(level)
        record("refinement", level, 1e3 * (time.perf_counter() - t0))
    return result


@dataclass
class CellFaceLinks:
    """Per-cell face links on the finest level, for solver coupling.

    Cells appear only when they link at least one face; ``face_ids`` holds
    their ascending face lists back to back.
    """

    level: int
    d_link: float
    capacity: int
    block_ids: np.ndarray  # (n_cells,) int64
    cell_indices: np.ndarray  # (n_cells,) int64, x-fastest cell index
    offsets: np.ndarray  # (n_cells + 1,) int64
    face_ids: np.ndarray  # int32

    @property
    def n_linked_cells(self):
        return len(self.block_ids)

    def links_for(self, block_id, cell_index):
        sel = np.nonzero((self.block_ids == block_id) & (self.cell_indices == cell_index))[0]
        if len(sel) == 0:
            return np.zeros(0, dtype=np.int32)
        i = sel[0]
        return self.face_ids[self.offsets[i] : self.offsets[i + 1]]


def build_cell_face_links(
    forest: Forest,
    geom: CoordListGeometry,
    bins: BinnedFaces,
    grid: BinGrid,
    d_link=None,
    capacity=16,
) -> CellFaceLinks:
    """Link finest-level leaf cells to the nearby faces in their bin.

    A face is stored when the cell center passes the near predicate at
    ``d_link`` (default: sqrt(dim) times the finest cell diagonal). Raises
    CapacityError naming the worst cell if any list exceeds ``capacity``.
    """
    _check_marking_inputs(forest, geom, 1.0 if d_link is None else d_link)
    level = forest.n_levels - 1
    if d_link is None:
        cell_len = forest.block_length(level) / 4.0
        d_link = math.sqrt(forest.dim) * float(np.linalg.norm(cell_len))
    leaves = forest.leaf_blocks_at(level)
    if len(leaves) == 0:
        raise InvalidParameterError(f"no leaf blocks at finest level {level}")
    face_lo, face_hi = _face_boxes(geom)
    reach = _cull_reach(d_link, _coordinate_scale(forest, geom))
    index = _CandidateIndex(forest, face_lo, face_hi, reach)
    centers = forest.cell_centers_many(leaves)
    cell_bins = linear_bin_indices(
        centers.reshape(-1, forest.dim), grid, what="cell center"
    ).reshape(len(leaves), -1)

    out_blocks, out_cells, out_counts, out_faces = [], [], [], []
    for i, bid in enumerate(leaves):
        near = index.candidates(int(bid))
        if len(near) == 0:
            continue
        cbins = cell_bins[i]
        per_cell = {}
        for b in np.unique(cbins):
            cand = near[_isin_sorted(near, bins.faces_in_bin(b))]
            if len(cand) == 0:
                continue
            sel = np.nonzero(cbins == b)[0]
            tri = geom.coords[:, :, cand]
            px = centers[i][sel, 0:1]
            py = centers[i][sel, 1:2]
            pz = centers[i][sel, 2:3] if forest.dim == 3 else None
            mask = near_faces_mask(px, py, pz, tri, d_link)
            hits = mask.sum(axis=1)
            over = np.nonzero(hits > capacity)[0]
            if len(over):
                c = int(sel[over[0]])
                raise CapacityError(
                    f"cell-face link overflow: block {int(bid)} cell {c} links "
                    f"{int(hits[over[0]])} faces, capacity {capacity}"
                )
            for j in np.nonzero(hits > 0)[0]:
                per_cell[int(sel[j])] = cand[mask[j]]
        for c in sorted(per_cell):
            out_blocks.append(int(bid))
            out_cells.append(c)
            out_counts.append(len(per_cell[c]))
            out_faces.append(per_cell[c].astype(np.int32))
    offsets = np.concatenate([[0], np.cumsum(out_counts)]).astype(np.int64)
    faces = np.concatenate(out_faces).astype(np.int32) if out_faces else np.zeros(0, np.int32)
    return CellFaceLinks(
        level=level,
        d_link=float(d_link),
        capacity=capacity,
        block_ids=np.asarray(out_blocks, dtype=np.int64),
        cell_indices=np.asarray(out_cells, dtype=np.int64),
        offsets=offsets,
        face_ids=faces,
    )
