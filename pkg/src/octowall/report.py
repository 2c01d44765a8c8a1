"""Benchmark reports: sweep CSV plus optional matplotlib figures.

The CSVs are the canonical artifact; figures are rendered next to them on
request and follow the same quantities the benchmark plots in the source
material track (stage times against bin density, inserted blocks against
bin density).
"""

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

SWEEP_CSV_HEADER = "B,bin_setup_ms,face_detect_ms,total_ms,blocks_marked,blocks_final"


@dataclass
class SweepRow:
    bins_per_axis: int
    bin_setup_ms: float
    face_detect_ms: float
    total_ms: float
    blocks_marked: int
    blocks_final: int
    error: str = ""

    def csv_row(self):
        return (
            f"{self.bins_per_axis},{self.bin_setup_ms:.3f},{self.face_detect_ms:.3f},"
            f"{self.total_ms:.3f},{self.blocks_marked},{self.blocks_final}"
        )


def write_sweep_csv(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        f.write(SWEEP_CSV_HEADER + "\n")
        for r in rows:
            if not r.error:
                f.write(r.csv_row() + "\n")


def render_sweep_figures(rows, base_path):
    """Render timing-vs-B and blocks-vs-B figures next to the sweep CSV.

    base_path: the CSV path; figures land at <stem>_times.png and
    <stem>_blocks.png. Returns the written paths.
    """
    rows = [r for r in rows if not r.error]
    if not rows:
        return []
    stem = str(base_path)
    if stem.endswith(".csv"):
        stem = stem[:-4]
    bs = [r.bins_per_axis for r in rows]

    out = []
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(bs, [r.bin_setup_ms for r in rows], "o-", label="bin setup")
    ax.plot(bs, [r.face_detect_ms for r in rows], "s-", label="face detection")
    ax.plot(bs, [r.total_ms for r in rows], "^-", label="total")
    ax.set_xlabel("bin density B")
    ax.set_ylabel("time [ms]")
    ax.set_yscale("log")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    path = stem + "_times.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    out.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(bs, [r.blocks_marked for r in rows], "o-", label="blocks marked")
    ax.plot(bs, [r.blocks_final for r in rows], "s-", label="final leaf blocks")
    ax.set_xlabel("bin density B")
    ax.set_ylabel("blocks")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = stem + "_blocks.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    out.append(path)
    return out


def render_run_figures(result, forest, base_path, geom=None):
    """Render per-stage timings (and in 2D the leaf-block layout) for one run."""
    stem = str(base_path)
    if stem.endswith(".csv"):
        stem = stem[:-4]
    out = []

    stages = {}
    for t in result.timings:
        stages[t.stage] = stages.get(t.stage, 0.0) + t.milliseconds
    fig, ax = plt.subplots(figsize=(6, 4))
    names = list(stages)
    ax.bar(names, [stages[s] for s in names])
    ax.set_ylabel("time [ms]")
    ax.set_title("stage totals")
    fig.tight_layout()
    path = stem + "_stages.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    out.append(path)

    if forest.dim == 2:
        leaves = forest.all_leaf_ids()
        lo, hi = forest.block_aabbs(leaves)
        levels = forest._level[leaves]
        fig, ax = plt.subplots(figsize=(6, 6))
        cmap = plt.get_cmap("viridis", int(levels.max()) + 1 if len(levels) else 1)
        for i in range(len(leaves)):
            ax.add_patch(
                plt.Rectangle(
                    (lo[i, 0], lo[i, 1]),
                    hi[i, 0] - lo[i, 0],
                    hi[i, 1] - lo[i, 1],
                    fill=True,
                    facecolor=cmap(int(levels[i])),
                    edgecolor="k",
                    linewidth=0.1,
                )
            )
        if geom is not None and geom.dim == 2:
            ax.plot(
                [geom.coords[0, 0], geom.coords[1, 0]],
                [geom.coords[0, 1], geom.coords[1, 1]],
                "r-",
                linewidth=0.5,
            )
        ax.set_xlim(forest.domain.min[0], forest.domain.max[0])
        ax.set_ylim(forest.domain.min[1], forest.domain.max[1])
        ax.set_aspect("equal")
        ax.set_title("leaf blocks by level")
        fig.tight_layout()
        path = stem + "_mesh.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        out.append(path)
    return out
