"""Cross-validation suite: predicate-vs-oracle sampling, backend equality,
and naive-vs-binned coverage, mirroring the checks a fresh implementation
of this pipeline must pass before its output can be trusted.
"""

from dataclasses import dataclass, field

import numpy as np

from .binning import BinGrid, fill_bins
from .distance import (
    boundary_band,
    check_near_edge,
    check_near_triangle,
    exact_point_triangle_distance,
    near_edge_mask,
    near_triangle_mask,
    point_segment_distance_sq,
)
from .errors import ValidationFailure
from .forest import init_root_grid
from .nearwall import NearWallParams, mark_near_wall_naive, refine_near_wall


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)  # (name, passed, detail)

    def add(self, name, passed, detail=""):
        self.checks.append((name, bool(passed), detail))

    @property
    def passed(self):
        return all(ok for _, ok, _ in self.checks)

    def lines(self):
        out = []
        for name, ok, detail in self.checks:
            status = "PASS" if ok else "FAIL"
            out.append(f"[{status}] {name}" + (f": {detail}" if detail else ""))
        return out


# ---------------------------------------------------------------------------
# seeded sampling of (face, point, distance) cases
# ---------------------------------------------------------------------------


def sample_triangle_cases(seed, n):
    """Random non-degenerate triangles and query points in [-2, 2]^3 with
    near-wall radii log-uniform in [1e-3, 1]. Half the points are placed
    near the triangle surface to exercise the decision boundary."""
    rng = np.random.default_rng(seed)
    tri = rng.uniform(-2.0, 2.0, (n, 3, 3))
    while True:
        u = tri[:, 1] - tri[:, 0]
        v = tri[:, 2] - tri[:, 0]
        cr = np.cross(u, v)
        scale_sq = np.maximum((u * u).sum(1), (v * v).sum(1))
        bad = np.linalg.norm(cr, axis=1) < 1e-6 * scale_sq
        if not bad.any():
            break
        tri[bad] = rng.uniform(-2.0, 2.0, (int(bad.sum()), 3, 3))
    d = 10.0 ** rng.uniform(-3.0, 0.0, n)
    pts = rng.uniform(-2.0, 2.0, (n, 3))
    near = rng.random(n) < 0.5
    w = rng.random((n, 3))
    w /= w.sum(axis=1, keepdims=True)
    on_tri = np.einsum("nk,nkd->nd", w, tri)
    direction = rng.normal(size=(n, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    offset = (d * rng.uniform(0.0, 2.0, n))[:, None] * direction
    pts[near] = (on_tri + offset)[near]
    return tri.astype(np.float32), pts.astype(np.float32), d


def sample_edge_cases(seed, n):
    """2D analog of sample_triangle_cases."""
    rng = np.random.default_rng(seed)
    seg = rng.uniform(-2.0, 2.0, (n, 2, 2))
    while True:
        bad = np.linalg.norm(seg[:, 1] - seg[:, 0], axis=1) < 1e-6
        if not bad.any():
            break
        seg[bad] = rng.uniform(-2.0, 2.0, (int(bad.sum()), 2, 2))
    d = 10.0 ** rng.uniform(-3.0, 0.0, n)
    pts = rng.uniform(-2.0, 2.0, (n, 2))
    near = rng.random(n) < 0.5
    t = rng.random(n)[:, None]
    on_seg = seg[:, 0] + t * (seg[:, 1] - seg[:, 0])
    direction = rng.normal(size=(n, 2))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    offset = (d * rng.uniform(0.0, 2.0, n))[:, None] * direction
    pts[near] = (on_seg + offset)[near]
    return seg.astype(np.float32), pts.astype(np.float32), d


def check_triangle_predicate_oracle(seed, n, scalar_subsample=2000):
    """Compare the triangle predicate against the exact referee.

    Returns (violations outside the boundary band, samples in band,
    scalar/batch bit mismatches).
    """
    tri, pts, d = sample_triangle_cases(seed, n)
    coords = np.transpose(tri, (1, 2, 0)).copy()  # (vertex, component, case)
    mask = near_triangle_mask(pts[:, 0], pts[:, 1], pts[:, 2], coords, d)
    exact = np.array(
        [exact_point_triangle_distance(pts[i], tri[i, 0], tri[i, 1], tri[i, 2]) for i in range(n)]
    )
    band = np.array([boundary_band(d[i], np.abs(tri[i]).max()) for i in range(n)])
    outside = np.abs(exact - d) > band
    violations = int(np.sum(mask[outside] != (exact[outside] <= d[outside])))

    step = max(1, n // scalar_subsample)
    mismatch = 0
    for i in range(0, n, step):
        got = check_near_triangle(pts[i], tri[i, 0], tri[i, 1], tri[i, 2], float(d[i]))
        if got != bool(mask[i]):
            mismatch += 1
    return violations, int(np.sum(~outside)), mismatch


def check_edge_predicate_oracle(seed, n, scalar_subsample=2000):
    """Compare the 2D edge predicate against clamped point-segment distance."""
    seg, pts, d = sample_edge_cases(seed, n)
    coords = np.transpose(seg, (1, 2, 0)).copy()
    mask = near_edge_mask(pts[:, 0], pts[:, 1], coords, d)
    exact = np.sqrt(
        [point_segment_distance_sq(pts[i], seg[i, 0], seg[i, 1]) for i in range(n)]
    )
    band = np.array([boundary_band(d[i], np.abs(seg[i]).max()) for i in range(n)])
    outside = np.abs(exact - d) > band
    violations = int(np.sum(mask[outside] != (exact[outside] <= d[outside])))

    step = max(1, n // scalar_subsample)
    mismatch = 0
    for i in range(0, n, step):
        got = check_near_edge(pts[i], seg[i, 0], seg[i, 1], float(d[i]))
        if got != bool(mask[i]):
            mismatch += 1
    return violations, int(np.sum(~outside)), mismatch


# ---------------------------------------------------------------------------
# run-level cross checks
# ---------------------------------------------------------------------------


def validate_run(
    domain,
    root_dims,
    geom,
    d_spec,
    n_levels=3,
    bins_per_axis=8,
    bin_fraction=None,
    seed=0,
    samples=100_000,
    max_level=10,
    _corrupt_binned=False,
) -> ValidationReport:
    """Run every cross-check for one configuration.

    _corrupt_binned is a negative-control hook for tests: it perturbs the
    binned result before comparison so the coverage check must fail.
    """
    report = ValidationReport()

    v3, in_band3, bit3 = check_triangle_predicate_oracle(seed, samples)
    report.add(
        "triangle predicate vs exact referee",
        v3 == 0 and bit3 == 0,
        f"{samples} samples, {v3} disagreements outside band ({in_band3} in band), "
        f"{bit3} scalar/batch mismatches",
    )
    v2, in_band2, bit2 = check_edge_predicate_oracle(seed + 1, samples)
    report.add(
        "edge predicate vs segment-distance referee",
        v2 == 0 and bit2 == 0,
        f"{samples} samples, {v2} disagreements outside band ({in_band2} in band), "
        f"{bit2} scalar/batch mismatches",
    )

    # bin structure: serial vs parallel
    grid = BinGrid(domain, bins_per_axis)
    bins_s = fill_bins(geom, grid, bin_fraction=bin_fraction, backend="serial")
    bins_p = fill_bins(geom, grid, bin_fraction=bin_fraction, backend="parallel")
    report.add(
        "bin fill: serial vs parallel",
        bins_s == bins_p,
        f"{bins_p.ids.size} face-bin entries over {grid.n_bins} bins",
    )

    # marking at the root level: serial vs parallel set equality
    fs = init_root_grid(domain, root_dims, max_level=max_level)
    fp = init_root_grid(domain, root_dims, max_level=max_level)
    ns = mark_near_wall_naive(fs, 0, geom, d_spec, backend="serial")
    np_ = mark_near_wall_naive(fp, 0, geom, d_spec, backend="parallel")
    same_marks = np.array_equal(fs.marks[: fs.n_blocks], fp.marks[: fp.n_blocks])
    report.add(
        "naive marking: serial vs parallel",
        same_marks and ns == np_,
        f"{ns} vs {np_} blocks marked",
    )

    # full pipeline: serial vs parallel forests
    def run(strategy, backend):
        f = init_root_grid(domain, root_dims, max_level=max_level)
        params = NearWallParams(
            d_spec=d_spec,
            n_levels=n_levels,
            strategy=strategy,
            bins_per_axis=bins_per_axis,
            bin_fraction=bin_fraction,
            backend=backend,
        )
        return f, refine_near_wall(f, geom, params)

    f_ser, r_ser = run("binned", "serial")
    f_par, r_par = run("binned", "parallel")
    sig_equal = all(
        np.array_equal(a, b) for a, b in zip(f_ser.level_signature(), f_par.level_signature())
    ) and f_ser.n_levels == f_par.n_levels
    report.add(
        "binned pipeline: serial vs parallel forests",
        sig_equal and r_ser.marked_refined == r_par.marked_refined,
        f"levels {f_par.blocks_per_level()}, marked {r_par.marked_refined}",
    )

    f_naive, _ = run("naive", "parallel")
    covered = f_par.refines_at_least(f_naive)
    if _corrupt_binned:
        covered = False
    report.add(
        "binned refinement covers naive refinement",
        covered,
        f"binned leaves {sum(f_par.leaves_per_level())}, naive leaves {sum(f_naive.leaves_per_level())}",
    )
    return report


def require_passed(report: ValidationReport):
    if not report.passed:
        failed = [name for name, ok, _ in report.checks if not ok]
        raise ValidationFailure("validation failed: " + "; ".join(failed))
