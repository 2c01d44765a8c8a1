"""Command-line entry point: run the import / bin / refine pipeline, sweep
bin densities, or run the validation suite.

Exit codes: 0 ok, 2 configuration error, 3 geometry parse error,
4 capacity exceeded, 5 validation failure, 6 I/O error.
"""

import argparse
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import backends
from .binning import BinGrid, fill_bins
from .errors import InvalidParameterError, OctowallError
from .forest import init_root_grid
from .geometry import Aabb, import_stl, import_text_primitives, index_to_coords
from .nearwall import NearWallParams, refine_near_wall, write_timings_csv
from .report import SweepRow, render_run_figures, render_sweep_figures, write_sweep_csv
from .validate import require_passed, validate_run
from .vtk_io import export_vtk

EXIT_OK = 0
EXIT_IO = 6


@dataclass
class RunConfig:
    dim: int = 2
    domain: Aabb = None
    root_dims: tuple = None
    stl: str = None
    primitives: str = None
    d_spec: float = 0.1
    n_levels: int = 3
    strategy: str = "binned"
    bins_per_axis: int = 8
    bin_fraction: int | None = None
    backend: str = backends.SERIAL
    seed: int = 0
    max_level: int = 10
    out_vtk: str = None
    out_csv: str = None
    dump_bins: str = None
    plot: bool = False
    validate: bool = False
    sweep: list = field(default_factory=list)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise InvalidParameterError(f"--dim must be 2 or 3, got {self.dim}")
        if self.domain is None:
            self.domain = Aabb([0.0] * self.dim, [1.0] * self.dim)
        if self.domain.dim != self.dim:
            raise InvalidParameterError(
                f"--domain lists {self.domain.dim}D corners but --dim is {self.dim}"
            )
        if self.root_dims is None:
            self.root_dims = (16,) * self.dim
        if len(self.root_dims) != self.dim:
            raise InvalidParameterError(
                f"--root-dims needs {self.dim} values, got {len(self.root_dims)}"
            )
        if self.d_spec <= 0:
            raise InvalidParameterError(f"--dspec must be positive, got {self.d_spec}")
        if self.n_levels < 1:
            raise InvalidParameterError(f"--levels must be >= 1, got {self.n_levels}")
        if self.strategy not in ("naive", "binned"):
            raise InvalidParameterError(f"--strategy must be naive or binned, got {self.strategy}")
        if self.bins_per_axis < 1:
            raise InvalidParameterError(f"--bin-density must be >= 1, got {self.bins_per_axis}")
        backends.validate_backend(self.backend)
        if (self.stl is None) == (self.primitives is None):
            raise InvalidParameterError("provide exactly one geometry source: --stl or --primitives")
        if self.stl is not None and self.dim != 3:
            raise InvalidParameterError("an STL file holds triangles; --stl requires --dim 3")


def load_geometry(config: RunConfig):
    if config.stl is not None:
        return import_stl(config.stl)
    return index_to_coords(import_text_primitives(config.primitives, dim=config.dim))


def run(config: RunConfig):
    """One pipeline execution plus artifacts; returns (forest, result, geom)."""
    geom = load_geometry(config)
    forest = init_root_grid(config.domain, config.root_dims, max_level=config.max_level)
    params = NearWallParams(
        d_spec=config.d_spec,
        n_levels=config.n_levels,
        strategy=config.strategy,
        bins_per_axis=config.bins_per_axis,
        bin_fraction=config.bin_fraction,
        backend=config.backend,
    )
    result = refine_near_wall(forest, geom, params)

    if config.out_vtk:
        export_vtk(forest, config.out_vtk)
    if config.out_csv:
        write_timings_csv(config.out_csv, result.timings)
    if config.dump_bins:
        bins = result.bins
        if bins is None:  # naive run: dump the degenerate single-bin structure
            bins = fill_bins(geom, BinGrid(config.domain, 1), backend=config.backend)
        bins.dump_csv(config.dump_bins)
    if config.plot and config.out_csv:
        render_run_figures(result, forest, config.out_csv, geom)
    print_summary(forest, result, geom)
    return forest, result, geom


def print_summary(forest, result, geom):
    print("run summary")
    print(f"  faces: {geom.n_faces}")
    print(f"  blocks per level: {forest.blocks_per_level()}")
    print(f"  leaves per level: {forest.leaves_per_level()}")
    print(f"  marked per level (detect): {result.marked_detected}")
    print(f"  marked per level (refined): {result.marked_refined}")
    for stage in ("bin_setup", "face_detection", "propagation", "refinement"):
        ms = result.total_ms(stage)
        if ms:
            print(f"  {stage}: {ms:.1f} ms")
    if result.bins is not None:
        counts = result.bins.counts
        occupied = int(np.count_nonzero(counts))
        print(
            f"  bins: {result.bins.n_bins} total, {occupied} occupied, "
            f"max {int(counts.max())} faces, {int(counts.sum())} stored ids "
            f"({counts.sum() / max(1, geom.n_faces):.2f}x faces)"
        )


def sweep(config: RunConfig, bin_densities):
    """One pipeline run per bin density; B=1 runs the naive strategy."""
    geom = load_geometry(config)
    rows = []
    for b in bin_densities:
        strategy = "naive" if b == 1 else "binned"
        try:
            forest = init_root_grid(config.domain, config.root_dims, max_level=config.max_level)
            params = NearWallParams(
                d_spec=config.d_spec,
                n_levels=config.n_levels,
                strategy=strategy,
                bins_per_axis=b,
                bin_fraction=config.bin_fraction,
                backend=config.backend,
            )
            t0 = time.perf_counter()
            result = refine_near_wall(forest, geom, params)
            total = 1e3 * (time.perf_counter() - t0)
            rows.append(
                SweepRow(
                    bins_per_axis=b,
                    bin_setup_ms=result.total_ms("bin_setup"),
                    face_detect_ms=result.total_ms("face_detection"),
                    total_ms=total,
                    blocks_marked=result.total_marked,
                    blocks_final=sum(forest.leaves_per_level()),
                )
            )
            print(f"B={b}: total {total:.1f} ms, marked {result.total_marked}")
        except OctowallError as e:
            rows.append(SweepRow(b, 0, 0, 0, 0, 0, error=str(e)))
            print(f"B={b}: FAILED: {e}", file=sys.stderr)
    if config.out_csv:
        write_sweep_csv(config.out_csv, rows)
        if config.plot:
            render_sweep_figures(rows, config.out_csv)
    return rows


def validate(config: RunConfig):
    geom = load_geometry(config)
    report = validate_run(
        config.domain,
        config.root_dims,
        geom,
        config.d_spec,
        n_levels=config.n_levels,
        bins_per_axis=config.bins_per_axis,
        bin_fraction=config.bin_fraction,
        seed=config.seed,
        max_level=config.max_level,
    )
    for line in report.lines():
        print(line)
    require_passed(report)
    return report


def build_parser():
    p = argparse.ArgumentParser(
        prog="octowall",
        description="Embed boundary meshes in a forest-of-octrees grid with near-wall refinement.",
    )
    p.add_argument("--dim", type=int, choices=(2, 3), default=None)
    p.add_argument("--domain", type=float, nargs="+", metavar="F",
                   help="x0 y0 [z0] x1 y1 [z1]")
    p.add_argument("--root-dims", type=int, nargs="+", metavar="N")
    p.add_argument("--stl", metavar="PATH")
    p.add_argument("--primitives", metavar="PATH")
    p.add_argument("--dspec", type=float, default=None)
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--strategy", choices=("naive", "binned"), default=None)
    p.add_argument("--bin-density", type=int, default=None, metavar="B")
    p.add_argument("--bin-fraction", type=int, default=None, metavar="BF")
    p.add_argument("--backend", choices=backends.BACKENDS, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-level", type=int, default=None)
    p.add_argument("--out-vtk", metavar="PATH")
    p.add_argument("--out-csv", metavar="PATH")
    p.add_argument("--dump-bins", metavar="PATH")
    p.add_argument("--plot", action="store_true")
    p.add_argument("--validate", action="store_true")
    p.add_argument("--sweep", metavar="B1,B2,...")
    p.add_argument("--config", metavar="PATH", help="key=value defaults; flags win")
    return p


_CONFIG_KEYS = {
    "dim": int,
    "dspec": float,
    "levels": int,
    "strategy": str,
    "bin_density": int,
    "bin_fraction": int,
    "backend": str,
    "seed": int,
    "max_level": int,
    "stl": str,
    "primitives": str,
    "out_vtk": str,
    "out_csv": str,
    "dump_bins": str,
    "domain": str,
    "root_dims": str,
}


def read_config_file(path):
    values = {}
    try:
        lines = open(path, encoding="utf-8").read().splitlines()
    except OSError as e:
        raise InvalidParameterError(f"cannot read config file: {e}") from None
    for ln, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise InvalidParameterError(f"{path}: line {ln}: expected key=value, got {text!r}")
        key, value = (s.strip() for s in text.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise InvalidParameterError(f"{path}: line {ln}: unknown key {key!r}")
        if key == "domain":
            values[key] = [float(v) for v in value.split()]
        elif key == "root_dims":
            values[key] = [int(v) for v in value.split()]
        else:
            values[key] = _CONFIG_KEYS[key](value)
    return values


def config_from_args(args):
    file_values = read_config_file(args.config) if args.config else {}

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return file_values.get(key, default)

    dim = pick(args.dim, "dim", 2)
    domain_vals = pick(args.domain, "domain", None)
    domain = None
    if domain_vals is not None:
        if len(domain_vals) != 2 * dim:
            raise InvalidParameterError(
                f"--domain needs {2 * dim} values for dim={dim}, got {len(domain_vals)}"
            )
        domain = Aabb(domain_vals[:dim], domain_vals[dim:])
    root_dims = pick(args.root_dims, "root_dims", None)
    return RunConfig(
        dim=dim,
        domain=domain,
        root_dims=tuple(root_dims) if root_dims is not None else None,
        stl=pick(args.stl, "stl", None),
        primitives=pick(args.primitives, "primitives", None),
        d_spec=pick(args.dspec, "dspec", 0.1),
        n_levels=pick(args.levels, "levels", 3),
        strategy=pick(args.strategy, "strategy", "binned"),
        bins_per_axis=pick(args.bin_density, "bin_density", 8),
        bin_fraction=pick(args.bin_fraction, "bin_fraction", None),
        backend=pick(args.backend, "backend", backends.SERIAL),
        seed=pick(args.seed, "seed", 0),
        max_level=pick(args.max_level, "max_level", 10),
        out_vtk=pick(args.out_vtk, "out_vtk", None),
        out_csv=pick(args.out_csv, "out_csv", None),
        dump_bins=pick(args.dump_bins, "dump_bins", None),
        plot=args.plot,
        validate=args.validate,
        sweep=[int(s) for s in args.sweep.split(",")] if args.sweep else [],
    )


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        if config.validate:
            validate(config)
        elif config.sweep:
            sweep(config, config.sweep)
        else:
            run(config)
        return EXIT_OK
    except OctowallError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
