import pytest

from octowall.cli import main
from octowall.errors import ValidationFailure
from octowall.geometry import generate_circle, index_to_coords
from octowall.validate import require_passed, validate_run

from conftest import cube_triangles, write_ascii_stl


@pytest.fixture
def circle_file(tmp_path):
    p = tmp_path / "circle.txt"
    p.write_text("circle 0.5 0.5 0.25 256\n")
    return p


def run_cli(*args):
    return main([str(a) for a in args])


class TestRun:
    def test_circle_run_writes_artifacts(self, tmp_path, circle_file, capsys):
        vtk = tmp_path / "out.vtk"
        csv = tmp_path / "out.csv"
        code = run_cli(
            "--dim", 2, "--root-dims", 8, 8, "--primitives", circle_file,
            "--dspec", 0.1, "--levels", 3, "--strategy", "binned", "--bin-density", 4,
            "--backend", "parallel", "--out-vtk", vtk, "--out-csv", csv,
        )
        assert code == 0
        assert vtk.exists() and csv.exists()
        out = capsys.readouterr().out
        assert "blocks per level" in out and "faces: 256" in out
        lines = csv.read_text().splitlines()
        assert lines[0] == "stage,level,strategy,B,B_f,milliseconds"

    def test_runs_deterministic_vtk(self, tmp_path, circle_file):
        out = []
        for name in ("a.vtk", "b.vtk"):
            vtk = tmp_path / name
            assert run_cli(
                "--dim", 2, "--root-dims", 8, 8, "--primitives", circle_file,
                "--dspec", 0.1, "--levels", 2, "--out-vtk", vtk,
            ) == 0
            out.append(vtk.read_bytes())
        assert out[0] == out[1]

    def test_backends_give_identical_vtk(self, tmp_path, circle_file):
        blobs = []
        for backend in ("serial", "parallel"):
            vtk = tmp_path / f"{backend}.vtk"
            assert run_cli(
                "--dim", 2, "--root-dims", 8, 8, "--primitives", circle_file,
                "--dspec", 0.1, "--levels", 3, "--backend", backend, "--out-vtk", vtk,
            ) == 0
            blobs.append(vtk.read_bytes())
        assert blobs[0] == blobs[1]

    def test_stl_run(self, tmp_path):
        stl = tmp_path / "cube.stl"
        write_ascii_stl(stl, 0.25 + 0.5 * cube_triangles())
        code = run_cli(
            "--dim", 3, "--root-dims", 4, 4, 4, "--stl", stl, "--dspec", 0.1,
            "--levels", 2, "--bin-density", 2, "--backend", "parallel",
        )
        assert code == 0

    def test_plot_renders_figures(self, tmp_path, circle_file):
        csv = tmp_path / "run.csv"
        assert run_cli(
            "--dim", 2, "--root-dims", 8, 8, "--primitives", circle_file,
            "--dspec", 0.1, "--levels", 2, "--out-csv", csv, "--plot",
        ) == 0
        assert (tmp_path / "run_stages.png").exists()
        assert (tmp_path / "run_mesh.png").exists()

    def test_dump_bins(self, tmp_path, circle_file):
        dump = tmp_path / "bins.csv"
        assert run_cli(
            "--dim", 2, "--root-dims", 8, 8, "--primitives", circle_file,
            "--dspec", 0.1, "--levels", 2, "--bin-density", 4, "--dump-bins", dump,
        ) == 0
        lines = dump.read_text().splitlines()
        assert lines[0] == "bin_id,count,offset"
        assert len(lines) == 17


class TestExitCodes:
    def test_unreadable_stl_is_parse_error(self, tmp_path):
        vtk = tmp_path / "never.vtk"
        code = run_cli(
            "--dim", 3, "--stl", tmp_path / "missing.stl", "--dspec", 0.1, "--out-vtk", vtk,
        )
        assert code == 3
        assert not vtk.exists()  # no partial artifacts

    def test_malformed_stl_is_parse_error(self, tmp_path):
        bad = tmp_path / "bad.stl"
        bad.write_text("solid x\nfacet normal 0 0 1\nendsolid x\n")
        assert run_cli("--dim", 3, "--stl", bad, "--dspec", 0.1) == 3

    def test_stl_in_2d_run_is_config_error(self, tmp_path, cube_ascii_stl):
        assert run_cli("--dim", 2, "--stl", cube_ascii_stl, "--dspec", 0.1) == 2

    def test_no_geometry_source(self):
        assert run_cli("--dim", 2, "--dspec", 0.1) == 2

    def test_two_geometry_sources(self, tmp_path, circle_file, cube_ascii_stl):
        assert run_cli("--dim", 2, "--primitives", circle_file, "--stl", cube_ascii_stl) == 2

    def test_bad_domain_arity(self, circle_file):
        assert run_cli("--dim", 2, "--domain", 0, 0, 1, "--primitives", circle_file) == 2

    def test_bad_dspec(self, circle_file):
        assert run_cli("--dim", 2, "--primitives", circle_file, "--dspec", -1) == 2

    def test_capacity_error_code(self, tmp_path):
        # a domain-spanning edge at high bin density overflows 10x capacity
        p = tmp_path / "wide.txt"
        p.write_text("circle 0.5 0.5 0.45 3\n")
        code = run_cli(
            "--dim", 2, "--primitives", p, "--dspec", 0.05, "--levels", 2,
            "--strategy", "binned", "--bin-density", 64,
        )
        assert code == 4

    def test_io_error_code(self, tmp_path, circle_file):
        assert run_cli(
            "--dim", 2, "--root-dims", 4, 4, "--primitives", circle_file,
            "--dspec", 0.1, "--levels", 1, "--out-vtk", tmp_path / "no" / "dir.vtk",
        ) == 6


class TestSweep:
    def test_sweep_csv_and_figures(self, tmp_path, circle_file, capsys):
        csv = tmp_path / "sweep.csv"
        code = run_cli(
            "--dim", 2, "--root-dims", 8, 8, "--primitives", circle_file,
            "--dspec", 0.1, "--levels", 2, "--backend", "parallel",
            "--sweep", "1,2,4", "--out-csv", csv, "--plot",
        )
        assert code == 0
        lines = csv.read_text().splitlines()
        assert lines[0] == "B,bin_setup_ms,face_detect_ms,total_ms,blocks_marked,blocks_final"
        assert len(lines) == 4
        b1 = lines[1].split(",")
        assert b1[0] == "1" and float(b1[1]) == 0.0  # B=1 runs naive: no bin setup
        assert (tmp_path / "sweep_times.png").exists()
        assert (tmp_path / "sweep_blocks.png").exists()

    def test_sweep_survives_per_run_failure(self, tmp_path, capsys):
        p = tmp_path / "wide.txt"
        p.write_text("circle 0.5 0.5 0.45 3\n")
        csv = tmp_path / "sweep.csv"
        code = run_cli(
            "--dim", 2, "--primitives", p, "--dspec", 0.05, "--levels", 2,
            "--sweep", "2,64", "--out-csv", csv,
        )
        assert code == 0  # failed B=64 run recorded, sweep continues
        lines = csv.read_text().splitlines()
        assert len(lines) == 2  # header + the B=2 row


class TestValidateCommand:
    def test_validation_passes(self, tmp_path, capsys):
        p = tmp_path / "c.txt"
        p.write_text("circle 0.5 0.5 0.25 128\n")
        code = run_cli(
            "--dim", 2, "--root-dims", 8, 8, "--primitives", p, "--dspec", 0.1,
            "--bin-density", 4, "--validate", "--seed", 3,
        )
        assert code == 0
        out = capsys.readouterr().out
        assert out.count("[PASS]") == 6 and "[FAIL]" not in out

    def test_corrupted_results_fail_validation(self, unit_square):
        geom = index_to_coords(generate_circle((0.5, 0.5), 0.25, 64))
        report = validate_run(
            unit_square, (8, 8), geom, 0.1, samples=2000, _corrupt_binned=True
        )
        assert not report.passed
        with pytest.raises(ValidationFailure):
            require_passed(report)


class TestConfigFile:
    def test_file_values_used_and_flags_win(self, tmp_path, circle_file):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "dim = 2\nroot_dims = 8 8\ndspec = 0.1\nlevels = 2\n"
            f"primitives = {circle_file}\nbin_density = 2\n"
        )
        vtk = tmp_path / "from_file.vtk"
        assert run_cli("--config", cfg, "--out-vtk", vtk) == 0
        assert vtk.exists()
        # flag overrides the file's levels=2; deeper run makes more blocks
        vtk2 = tmp_path / "deeper.vtk"
        assert run_cli("--config", cfg, "--levels", 3, "--out-vtk", vtk2) == 0
        assert vtk2.stat().st_size > vtk.stat().st_size

    def test_bad_config_line(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("what is this\n")
        assert run_cli("--config", cfg) == 2

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("nonsense = 3\n")
        assert run_cli("--config", cfg) == 2
