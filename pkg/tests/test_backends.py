"""Serial and data-parallel backends must produce bitwise identical output
on every kernel: bin fill, marking, propagation, and the full pipeline."""

import numpy as np
import pytest

from octowall.binning import BinGrid, fill_bins
from octowall.forest import init_root_grid
from octowall.geometry import Aabb, CoordListGeometry
from octowall.nearwall import (
    NearWallParams,
    mark_near_wall_binned,
    mark_near_wall_naive,
    refine_near_wall,
)


def random_soup(seed, dim, n_faces, lo=0.1, hi=0.9):
    """Random small-face geometry inside the unit box."""
    rng = np.random.default_rng(seed)
    anchors = rng.uniform(lo, hi, (n_faces, dim))
    coords = np.empty((dim, dim, n_faces), dtype=np.float32)
    for j in range(dim):
        offs = rng.uniform(-0.05, 0.05, (n_faces, dim))
        pts = np.clip(anchors + (offs if j else 0.0), lo, hi)
        coords[j] = pts.T.astype(np.float32)
    g = CoordListGeometry(dim, coords)
    # regenerate any degenerate faces by nudging
    from octowall.geometry import validate_faces

    for _ in range(20):
        try:
            validate_faces(g)
            return g
        except Exception:
            coords = coords + rng.uniform(1e-4, 2e-4, coords.shape).astype(np.float32)
            coords = np.clip(coords, lo, hi)
            g = CoordListGeometry(dim, coords)
    validate_faces(g)
    return g


@pytest.mark.parametrize("dim,seed", [(2, 0), (2, 7), (3, 1), (3, 9)])
def test_fill_bins_bitwise(dim, seed):
    domain = Aabb([0.0] * dim, [1.0] * dim)
    geom = random_soup(seed, dim, 200)
    for b in (1, 3, 8):
        grid = BinGrid(domain, b)
        s = fill_bins(geom, grid, backend="serial")
        p = fill_bins(geom, grid, backend="parallel")
        assert s == p


@pytest.mark.parametrize("dim,seed,d", [(2, 3, 0.07), (2, 4, 0.2), (3, 5, 0.1)])
def test_marking_bitwise(dim, seed, d):
    domain = Aabb([0.0] * dim, [1.0] * dim)
    geom = random_soup(seed, dim, 120)
    root = (6,) * dim
    fs = init_root_grid(domain, root)
    fp = init_root_grid(domain, root)
    assert mark_near_wall_naive(fs, 0, geom, d, backend="serial") == mark_near_wall_naive(
        fp, 0, geom, d, backend="parallel"
    )
    np.testing.assert_array_equal(fs.marks[: fs.n_blocks], fp.marks[: fp.n_blocks])

    grid = BinGrid(domain, 4)
    bins = fill_bins(geom, grid)
    fbs = init_root_grid(domain, root)
    fbp = init_root_grid(domain, root)
    assert mark_near_wall_binned(fbs, 0, geom, bins, grid, d, backend="serial") == mark_near_wall_binned(
        fbp, 0, geom, bins, grid, d, backend="parallel"
    )
    np.testing.assert_array_equal(fbs.marks[: fbs.n_blocks], fbp.marks[: fbp.n_blocks])


@pytest.mark.parametrize("dim,seed,strategy,b", [
    (2, 11, "binned", 4),
    (2, 12, "naive", 1),
    (3, 13, "binned", 2),
])
def test_full_pipeline_identical_forests(dim, seed, strategy, b):
    domain = Aabb([0.0] * dim, [1.0] * dim)
    geom = random_soup(seed, dim, 150)
    root = (4,) * dim

    def run(backend):
        f = init_root_grid(domain, root)
        params = NearWallParams(
            d_spec=0.08, n_levels=3, strategy=strategy, bins_per_axis=b, backend=backend
        )
        res = refine_near_wall(f, geom, params)
        return f, res

    fs, rs = run("serial")
    fp, rp = run("parallel")
    assert fs.n_levels == fp.n_levels
    assert fs.blocks_per_level() == fp.blocks_per_level()
    assert rs.marked_detected == rp.marked_detected
    assert rs.marked_refined == rp.marked_refined
    for a, b_ in zip(fs.level_signature(), fp.level_signature()):
        np.testing.assert_array_equal(a, b_)
    if rs.bins is not None:
        assert rs.bins == rp.bins


def test_boundary_straddling_faces(unit_square):
    """Faces that sit exactly on bin boundaries must bin identically."""
    coords = np.zeros((2, 2, 3), np.float32)
    coords[:, :, 0] = [[0.5, 0.25], [0.5, 0.75]]  # vertical edge on the B=2 bin seam
    coords[:, :, 1] = [[0.25, 0.5], [0.75, 0.5]]  # horizontal edge on the seam
    coords[:, :, 2] = [[0.124999, 0.125], [0.375, 0.375]]
    geom = CoordListGeometry(2, coords)
    for b in (2, 4, 8):
        grid = BinGrid(unit_square, b)
        assert fill_bins(geom, grid, backend="serial") == fill_bins(geom, grid, backend="parallel")
