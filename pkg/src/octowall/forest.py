"""Forest-of-octrees Cartesian grid.

The root blocks tile the domain as a structured grid; each block is the
root of a quadtree (2D) or octree (3D) whose nodes are again blocks of
4 cells per axis. Blocks are addressed by dense integer IDs allocated in
creation order, and enumerated level by level through per-level ID sets.
Block positions are kept as integer lattice coordinates at their level, so
geometry (origins, cell centers, tiling) is exact and reproducible.
"""

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import InvalidParameterError
from .geometry import Aabb

CELLS_PER_AXIS = 4

DEFAULT_MAX_LEVEL = 10


class RefineMark(IntEnum):
    NONE = 0
    MARKED = 1
    INTERMEDIATE = 2


@dataclass
class Block:
    """Read-only view of one block."""

    id: int
    level: int
    origin: np.ndarray  # min corner, float64
    length: np.ndarray  # edge lengths per axis, float64
    parent: int  # -1 for roots
    children: tuple  # () for leaves, else 2**dim child IDs
    mark: RefineMark

    @property
    def is_leaf(self):
        return not self.children


class Forest:
    def __init__(self, domain: Aabb, root_dims, max_level=DEFAULT_MAX_LEVEL):
        root_dims = np.asarray(root_dims, dtype=np.int64).reshape(-1)
        if root_dims.shape[0] != domain.dim:
            raise InvalidParameterError(
                f"root_dims has {root_dims.shape[0]} axes but domain is {domain.dim}D"
            )
        if np.any(root_dims < 1):
            raise InvalidParameterError(f"root_dims must be >= 1 per axis, got {root_dims.tolist()}")
        if np.any(domain.extent <= 0):
            raise InvalidParameterError("domain must have positive extent")
        if domain.dim not in (2, 3):
            raise InvalidParameterError(f"domain must be 2D or 3D, got {domain.dim}D")
        self.dim = domain.dim
        self.domain = domain
        self.root_dims = tuple(int(v) for v in root_dims)
        self.max_level = max_level
        self.n_children = 2**self.dim
        self.cells_per_block = CELLS_PER_AXIS**self.dim

        cap = int(np.prod(root_dims))
        self._n = 0
        self._level = np.zeros(cap, dtype=np.int16)
        self._coords = np.zeros((cap, self.dim), dtype=np.int64)
        self._parent = np.full(cap, -1, dtype=np.int32)
        self._first_child = np.full(cap, -1, dtype=np.int32)
        self.marks = np.zeros(cap, dtype=np.int8)
        self._id_sets = [[]]
        self._index = {}

        # root grid in x-fastest order
        ranges = [np.arange(n) for n in self.root_dims]
        mesh = np.meshgrid(*ranges, indexing="ij")
        coords = np.stack([m.ravel(order="F") for m in mesh], axis=1)
        self._append_blocks(0, coords, parent=-1)

    # ------------------------------------------------------------------
    # storage
    # ------------------------------------------------------------------

    @property
    def n_blocks(self):
        return self._n

    @property
    def n_levels(self):
        return len(self._id_sets)

    def _ensure_capacity(self, extra):
        need = self._n + extra
        cap = len(self._level)
        if need <= cap:
            return
        new_cap = max(need, 2 * cap)

        def grow(arr, fill):
            shape = (new_cap,) + arr.shape[1:]
            out = np.full(shape, fill, dtype=arr.dtype)
            out[: self._n] = arr[: self._n]
            return out

        self._level = grow(self._level, 0)
        self._coords = grow(self._coords, 0)
        self._parent = grow(self._parent, -1)
        self._first_child = grow(self._first_child, -1)
        self.marks = grow(self.marks, 0)

    def _append_blocks(self, level, coords, parent):
        n = len(coords)
        self._ensure_capacity(n)
        ids = np.arange(self._n, self._n + n, dtype=np.int64)
        self._level[ids] = level
        self._coords[ids] = coords
        self._parent[ids] = parent
        self._first_child[ids] = -1
        self.marks[ids] = RefineMark.NONE
        self._n += n
        while len(self._id_sets) <= level:
            self._id_sets.append([])
        self._id_sets[level].extend(int(i) for i in ids)
        for i, c in zip(ids, coords):
            self._index[(level, tuple(int(v) for v in c))] = int(i)
        return ids

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------

    def ids_at_level(self, level):
        if level < 0 or level >= len(self._id_sets):
            return np.zeros(0, dtype=np.int64)
        return np.asarray(self._id_sets[level], dtype=np.int64)

    def is_leaf(self, bid):
        return self._first_child[bid] == -1

    def leaf_blocks_at(self, level):
        """IDs of childless blocks at a level, ascending."""
        ids = self.ids_at_level(level)
        return ids[self._first_child[ids] == -1]

    def all_leaf_ids(self):
        ids = np.arange(self._n, dtype=np.int64)
        return ids[self._first_child[: self._n] == -1]

    def block_length(self, level):
        """Edge lengths per axis of a block at the given level, float64."""
        return self.domain.extent / (np.asarray(self.root_dims) * (1 << level))

    def block_origins(self, ids):
        """Min corners, float64 (n, dim), exact from lattice coordinates."""
        ids = np.asarray(ids, dtype=np.int64)
        levels = self._level[ids].astype(np.int64)
        denom = np.asarray(self.root_dims)[None, :] * (1 << levels)[:, None]
        return self.domain.min[None, :] + self._coords[ids] * (self.domain.extent[None, :] / denom)

    def block(self, bid):
        bid = int(bid)
        if bid < 0 or bid >= self._n:
            raise InvalidParameterError(f"no block with id {bid}")
        level = int(self._level[bid])
        fc = int(self._first_child[bid])
        children = () if fc == -1 else tuple(range(fc, fc + self.n_children))
        return Block(
            id=bid,
            level=level,
            origin=self.block_origins([bid])[0],
            length=self.block_length(level),
            parent=int(self._parent[bid]),
            children=children,
            mark=RefineMark(int(self.marks[bid])),
        )

    def cell_centers(self, bid):
        """Centers of the 4-per-axis cell subdivision of one block, float32.

        Cell index runs x fastest: c = ix + 4*iy (+ 16*iz).
        """
        return self.cell_centers_many([bid])[0]

    def cell_centers_many(self, ids):
        """Cell centers for many blocks: float32 (n_blocks, 4**dim, dim).

        Computed in double precision from exact lattice coordinates, then
        rounded once to single precision, so every backend sees identical
        values.
        """
        ids = np.asarray(ids, dtype=np.int64)
        origins = self.block_origins(ids)  # (n, dim) f64
        levels = self._level[ids].astype(np.int64)
        lengths = self.domain.extent[None, :] / (
            np.asarray(self.root_dims)[None, :] * (1 << levels)[:, None]
        )
        frac = (np.arange(CELLS_PER_AXIS) + 0.5) / CELLS_PER_AXIS
        axes = [frac for _ in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        unit = np.stack([m.ravel(order="F") for m in mesh], axis=1)  # (4**dim, dim)
        centers = origins[:, None, :] + unit[None, :, :] * lengths[:, None, :]
        return centers.astype(np.float32)

    def block_aabbs(self, ids):
        """(origin, origin + length) per block, float64."""
        ids = np.asarray(ids, dtype=np.int64)
        lo = self.block_origins(ids)
        levels = self._level[ids].astype(np.int64)
        lengths = self.domain.extent[None, :] / (
            np.asarray(self.root_dims)[None, :] * (1 << levels)[:, None]
        )
        return lo, lo + lengths

    # ------------------------------------------------------------------
    # neighbors
    # ------------------------------------------------------------------

    def _lattice_dims(self, level):
        return tuple(n * (1 << level) for n in self.root_dims)

    def face_neighbors(self, bid):
        """Adjacent leaves per side, in side order (axis0-, axis0+, axis1-, ...).

        Each entry is a tuple of leaf IDs sharing that face: empty at a
        domain boundary, one ID for a same-level or coarser neighbor, and
        2**(dim-1) IDs where the neighboring region is refined finer.
        """
        bid = int(bid)
        level = int(self._level[bid])
        c = self._coords[bid]
        dims = self._lattice_dims(level)
        out = []
        for ax in range(self.dim):
            for step in (-1, 1):
                nc = c.copy()
                nc[ax] += step
                if nc[ax] < 0 or nc[ax] >= dims[ax]:
                    out.append(())
                    continue
                out.append(tuple(self._leaves_on_face(level, nc, ax, -step)))
        return out

    def _leaves_on_face(self, level, nc, axis, facing):
        """Leaf IDs covering lattice cell (level, nc), restricted to the face
        of that region facing direction ``facing`` along ``axis``."""
        key = (level, tuple(int(v) for v in nc))
        bid = self._index.get(key)
        if bid is None:
            # coarser: walk up until an ancestor block exists
            cc = np.asarray(nc, dtype=np.int64)
            lv = level
            while lv > 0:
                cc = cc // 2
                lv -= 1
                bid = self._index.get((lv, tuple(int(v) for v in cc)))
                if bid is not None:
                    return [bid] if self.is_leaf(bid) else []
            return []
        if self.is_leaf(bid):
            return [bid]
        # finer: collect leaf descendants on the shared face
        found = []
        stack = [bid]
        while stack:
            b = stack.pop()
            fc = self._first_child[b]
            if fc == -1:
                found.append(int(b))
                continue
            for ci in range(self.n_children):
                side = (ci >> axis) & 1
                # facing -1: the face on the min side of the region, so side bit 0
                if (facing == -1 and side == 0) or (facing == 1 and side == 1):
                    stack.append(fc + ci)
        return sorted(found)

    def adjacent_leaf_ids(self, bid):
        """Flat ascending list of all face-adjacent leaves of a leaf block."""
        ids = []
        for side in self.face_neighbors(bid):
            ids.extend(side)
        return sorted(set(ids))

    # ------------------------------------------------------------------
    # refinement
    # ------------------------------------------------------------------

    def _child_offsets(self):
        return np.array(
            [[(ci >> ax) & 1 for ax in range(self.dim)] for ci in range(self.n_children)],
            dtype=np.int64,
        )

    def _split(self, bid):
        return self._split_many(np.array([bid], dtype=np.int64))

    def _split_many(self, bids):
        """Split leaves (ascending id order) into 2**dim children each.

        Children are appended in parent order then child-index order, so the
        allocation is a pure function of the split set.
        """
        bids = np.asarray(bids, dtype=np.int64)
        if len(bids) == 0:
            return np.zeros(0, dtype=np.int64)
        if np.any(self._first_child[bids] != -1):
            raise InvalidParameterError("cannot split an already refined block")
        levels = self._level[bids]
        if np.any(levels >= self.max_level):
            raise InvalidParameterError(f"refinement beyond max level {self.max_level}")
        if len(np.unique(levels)) != 1:
            ids = np.zeros(0, dtype=np.int64)
            for b in bids:  # mixed levels: keep per-block order deterministic
                ids = np.concatenate([ids, self._split_many(np.array([b]))])
            return ids
        level = int(levels[0])
        offs = self._child_offsets()
        coords = (self._coords[bids] * 2)[:, None, :] + offs[None, :, :]
        ids = self._append_blocks(
            level + 1,
            coords.reshape(-1, self.dim),
            parent=np.repeat(bids, self.n_children).astype(np.int32),
        )
        self._first_child[bids] = ids[0] + np.arange(len(bids), dtype=np.int64) * self.n_children
        self.marks[bids] = RefineMark.NONE
        return ids

    def refine_marked(self, level):
        """Subdivide every MARKED leaf at a level, then restore 2:1 balance.

        Marked blocks are processed in ascending ID order and children are
        allocated from a monotone counter, so the resulting IDs are a pure
        function of the input marks. Returns the number of blocks split
        (including balance-induced splits).
        """
        ids = self.ids_at_level(level)
        if np.any(self.marks[ids] == RefineMark.INTERMEDIATE):
            raise InvalidParameterError(
                f"level {level} still carries intermediate marks; finish propagation first"
            )
        leaves = self.leaf_blocks_at(level)
        marked = leaves[self.marks[leaves] == RefineMark.MARKED]
        new_children = self._split_many(marked)
        n_split = len(marked)
        n_split += self._rebalance(new_children)
        return n_split

    def _rebalance(self, frontier):
        """Split leaves more than one level coarser than a face-adjacent leaf.

        Only neighbors of freshly created blocks can newly violate 2:1, so
        the sweep tracks a frontier instead of rescanning the whole forest.
        """
        n_split = 0
        frontier = list(frontier)
        while frontier:
            to_split = set()
            for cid in frontier:
                lv = int(self._level[cid])
                for nb in self.adjacent_leaf_ids(cid):
                    if int(self._level[nb]) < lv - 1:
                        to_split.add(int(nb))
            # coarser violators may sit on different levels; ascending id
            # order keeps the allocation deterministic either way
            frontier = list(self._split_many(np.asarray(sorted(to_split), dtype=np.int64)))
            n_split += len(to_split)
        return n_split

    # ------------------------------------------------------------------
    # comparison / summaries
    # ------------------------------------------------------------------

    def refines_at_least(self, other):
        """True if every leaf region of ``other`` exists here as a block
        (leaf or further refined): no region is coarser than in ``other``."""
        if self.root_dims != other.root_dims or self.dim != other.dim:
            raise InvalidParameterError("forests with different root grids are not comparable")
        for lv in range(other.n_levels):
            for bid in other.leaf_blocks_at(lv):
                key = (lv, tuple(int(v) for v in other._coords[bid]))
                if key not in self._index:
                    return False
        return True

    def level_signature(self):
        """Per level: sorted lattice coordinates of leaves (exact comparison key)."""
        sig = []
        for lv in range(self.n_levels):
            leaves = self.leaf_blocks_at(lv)
            coords = self._coords[leaves]
            order = np.lexsort(coords.T[::-1])
            sig.append(coords[order].copy())
        return sig

    def blocks_per_level(self):
        return [len(s) for s in self._id_sets]

    def leaves_per_level(self):
        return [int(len(self.leaf_blocks_at(lv))) for lv in range(self.n_levels)]


def init_root_grid(domain, root_dims, max_level=DEFAULT_MAX_LEVEL) -> Forest:
    """Build the level-0 structured root grid tiling the domain."""
    if not isinstance(domain, Aabb):
        domain = Aabb(*domain)
    return Forest(domain, root_dims, max_level=max_level)
