import numpy as np
import pytest

from octowall.binning import (
    EMPTY,
    BinGrid,
    FaceBinIndicator,
    auto_bin_fraction,
    batch_ranges,
    bin_of_point,
    compact_indicators,
    default_spacing,
    discretize_face,
    fill_bins,
    linear_bin_indices,
)
from octowall.errors import CapacityError, InvalidParameterError
from octowall.geometry import (
    CoordListGeometry,
    generate_circle,
    generate_sphere,
    index_to_coords,
)


def edge_geometry(*edges):
    coords = np.zeros((2, 2, len(edges)), np.float32)
    for k, (a, b) in enumerate(edges):
        coords[0, :, k] = a
        coords[1, :, k] = b
    return CoordListGeometry(2, coords)


class TestBinGrid:
    def test_counts_and_lengths(self, unit_square):
        grid = BinGrid(unit_square, 4)
        assert grid.n_bins == 16
        np.testing.assert_allclose(grid.bin_length, [0.25, 0.25])

    def test_3d_counts(self, unit_cube):
        assert BinGrid(unit_cube, 3).n_bins == 27

    def test_invalid(self, unit_square):
        with pytest.raises(InvalidParameterError):
            BinGrid(unit_square, 0)


class TestBinOfPoint:
    def test_floor_arithmetic(self, unit_square):
        grid = BinGrid(unit_square, 2)
        assert bin_of_point((0.6, 0.3), grid) == ((1, 0), 1)

    def test_max_boundary_clamps(self, unit_square):
        grid = BinGrid(unit_square, 4)
        tup, lin = bin_of_point((1.0, 1.0), grid)
        assert tup == (3, 3) and lin == 15

    def test_single_bin(self, unit_square):
        grid = BinGrid(unit_square, 1)
        for p in [(0, 0), (0.5, 0.99), (1, 1)]:
            assert bin_of_point(p, grid)[1] == 0

    def test_outside_domain_rejected(self, unit_square):
        grid = BinGrid(unit_square, 2)
        with pytest.raises(InvalidParameterError, match="outside"):
            bin_of_point((1.5, 0.5), grid)

    def test_linearization_x_fastest_3d(self, unit_cube):
        grid = BinGrid(unit_cube, 2)
        assert bin_of_point((0.75, 0.25, 0.25), grid) == ((1, 0, 0), 1)
        assert bin_of_point((0.25, 0.75, 0.25), grid) == ((0, 1, 0), 2)
        assert bin_of_point((0.25, 0.25, 0.75), grid) == ((0, 0, 1), 4)


class TestDiscretizeFace:
    def test_edge_with_midpoint(self):
        pts = discretize_face([[0, 0], [1, 0]], 0.5)
        np.testing.assert_array_equal(pts, [[0, 0], [0.5, 0], [1, 0]])

    def test_tiny_triangle_just_vertices(self):
        tri = [[0, 0, 0], [0.01, 0, 0], [0, 0.01, 0]]
        pts = discretize_face(tri, 1.0)
        uniq = np.unique(pts, axis=0)
        assert len(uniq) == 3
        for v in tri:
            assert any(np.allclose(u, v) for u in uniq)

    def test_right_triangle_construction(self):
        # legs 1,1 at spacing 0.25: base edge has 5 points, all vertices present
        tri = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], np.float32)
        pts = discretize_face(tri, 0.25)
        base = pts[np.abs(pts[:, 1]) < 1e-9]
        assert len(np.unique(base[:, 0])) >= 5
        for v in tri:
            assert any(np.allclose(p, v, atol=1e-7) for p in pts)

    def test_sample_count_scales_with_size(self):
        small = discretize_face([[0, 0], [0.1, 0]], 0.05)
        large = discretize_face([[0, 0], [1.0, 0]], 0.05)
        assert len(large) > len(small)

    def test_degenerate_rejected(self):
        with pytest.raises(InvalidParameterError):
            discretize_face([[0, 0], [0, 0]], 0.5)

    def test_bad_spacing(self):
        with pytest.raises(InvalidParameterError):
            discretize_face([[0, 0], [1, 0]], 0.0)


class TestFillBins:
    def test_single_bin_holds_everything(self, unit_square):
        geom = index_to_coords(generate_circle((0.5, 0.5), 0.25, 16))
        bins = fill_bins(geom, BinGrid(unit_square, 1))
        assert bins.counts[0] == geom.n_faces
        np.testing.assert_array_equal(bins.ids, np.arange(geom.n_faces))

    def test_edge_spans_two_bins(self, unit_square):
        geom = edge_geometry(((0.25, 0.25), (0.75, 0.25)))
        bins = fill_bins(geom, BinGrid(unit_square, 2), spacing=0.5)
        assert list(bins.counts) == [1, 1, 0, 0]
        np.testing.assert_array_equal(bins.ids, [0, 0])

    def test_batching_invariance(self, unit_square):
        geom = index_to_coords(generate_circle((0.5, 0.5), 0.3, 400))
        grid = BinGrid(unit_square, 8)
        ref = fill_bins(geom, grid, bin_fraction=1)
        for bf in (2, 4, 7, 64):  # 7 does not divide 64 bins
            assert fill_bins(geom, grid, bin_fraction=bf) == ref

    def test_backends_identical(self, unit_square, unit_cube):
        geom2 = index_to_coords(generate_circle((0.5, 0.5), 0.3, 257))
        grid2 = BinGrid(unit_square, 5)
        assert fill_bins(geom2, grid2, backend="serial") == fill_bins(geom2, grid2, backend="parallel")
        geom3 = index_to_coords(generate_sphere((0.5, 0.5, 0.5), 0.3, 8, 12))
        grid3 = BinGrid(unit_cube, 4)
        assert fill_bins(geom3, grid3, backend="serial") == fill_bins(geom3, grid3, backend="parallel")

    def test_every_face_in_some_bin(self, unit_square):
        geom = index_to_coords(generate_circle((0.5, 0.5), 0.3, 100))
        bins = fill_bins(geom, BinGrid(unit_square, 8))
        assert set(bins.ids.tolist()) == set(range(geom.n_faces))

    def test_overlap_bound(self, unit_square):
        geom = index_to_coords(generate_circle((0.5, 0.5), 0.3, 100))
        bins = fill_bins(geom, BinGrid(unit_square, 8), overlap_factor=10)
        assert bins.counts.sum() <= 10 * geom.n_faces

    def test_ids_sorted_per_bin(self, unit_square):
        geom = index_to_coords(generate_circle((0.5, 0.5), 0.3, 123))
        bins = fill_bins(geom, BinGrid(unit_square, 4))
        for b in range(bins.n_bins):
            ids = bins.faces_in_bin(b)
            assert np.all(np.diff(ids) > 0)

    def test_capacity_overflow(self, unit_square):
        # one domain-spanning edge touches every bin column: 1 face, 16+ entries
        geom = edge_geometry(((0.01, 0.5), (0.99, 0.5)))
        with pytest.raises(CapacityError, match="overlap_factor"):
            fill_bins(geom, BinGrid(unit_square, 16), overlap_factor=10)

    def test_face_outside_domain(self, unit_square):
        geom = edge_geometry(((0.5, 0.5), (1.5, 0.5)))
        with pytest.raises(InvalidParameterError, match="outside"):
            fill_bins(geom, BinGrid(unit_square, 2))

    def test_degenerate_face_rejected_on_both_backends(self, unit_square):
        geom = edge_geometry(((0.5, 0.5), (0.5, 0.5)))
        for backend in ("serial", "parallel"):
            with pytest.raises(InvalidParameterError, match="degenerate"):
                fill_bins(geom, BinGrid(unit_square, 2), backend=backend)

    def test_empty_geometry_rejected(self, unit_square):
        geom = CoordListGeometry(2, np.zeros((2, 2, 0), np.float32))
        with pytest.raises(InvalidParameterError):
            fill_bins(geom, BinGrid(unit_square, 2))

    def test_default_spacing_half_bin(self, unit_square):
        grid = BinGrid(unit_square, 4)
        assert default_spacing(grid) == pytest.approx(0.125)

    def test_dump_csv(self, unit_square, tmp_path):
        geom = edge_geometry(((0.25, 0.25), (0.75, 0.25)))
        bins = fill_bins(geom, BinGrid(unit_square, 2), spacing=0.5)
        path = tmp_path / "bins.csv"
        bins.dump_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "bin_id,count,offset"
        assert lines[1] == "0,1,0"
        assert len(lines) == 5


class TestCompaction:
    def test_spec_example(self):
        # a bin whose slots hold ids {2, EMPTY, 0} compacts to count 2, [0, 2]
        slots = np.full((3, 1), EMPTY, dtype=np.int32)
        slots[2, 0] = 2
        slots[0, 0] = 0
        counts, ids = compact_indicators(FaceBinIndicator(slots, 0, 0))
        assert list(counts) == [2]
        np.testing.assert_array_equal(ids, [0, 2])

    def test_all_empty_bin(self):
        slots = np.full((4, 2), EMPTY, dtype=np.int32)
        counts, ids = compact_indicators(FaceBinIndicator(slots, 0, 0))
        assert list(counts) == [0, 0] and len(ids) == 0

    def test_offsets_prefix_sum(self):
        slots = np.full((5, 2), EMPTY, dtype=np.int32)
        slots[[0, 2, 4], 0] = [0, 2, 4]
        slots[[1, 3], 1] = [1, 3]
        counts, ids = compact_indicators(FaceBinIndicator(slots, 0, 0))
        assert list(counts) == [3, 2]
        offsets = np.concatenate([[0], np.cumsum(counts[:-1])])
        assert list(offsets) == [0, 3]
        assert len(ids) == 5


class TestBatching:
    def test_batch_ranges_exact(self):
        assert batch_ranges(8, 2) == [(0, 4), (4, 8)]

    def test_batch_ranges_remainder(self):
        assert batch_ranges(8, 3) == [(0, 3), (3, 6), (6, 8)]

    def test_batch_fraction_larger_than_bins(self):
        assert batch_ranges(4, 100) == [(0, 1), (1, 2), (2, 3), (3, 4)]

    def test_invalid(self):
        with pytest.raises(InvalidParameterError):
            batch_ranges(8, 0)

    def test_auto_bin_fraction_caps_slots(self):
        bf = auto_bin_fraction(4096, 120000, slot_budget=2**25)
        assert (4096 / bf) * 120000 <= 2**25 * 1.01
        assert auto_bin_fraction(16, 100) == 1


class TestLinearBinIndices:
    def test_matches_scalar(self, unit_square):
        grid = BinGrid(unit_square, 7)
        rng = np.random.default_rng(5)
        pts = rng.random((500, 2)).astype(np.float32)
        lin = linear_bin_indices(pts, grid)
        for i in range(0, 500, 37):
            assert bin_of_point(pts[i], grid)[1] == lin[i]
