import json
import os

import pytest

from segkernel.cli import main
from segkernel.profile import load_profile


@pytest.fixture(scope="module")
def cache_dir(tmp_path_factory):
    """Small shared profile cache so CLI runs stay quick."""
    d = tmp_path_factory.mktemp("cache")
    code = main([
        "profile", "--T", "12", "--N-profile", "1201",
        "--newton-tol", "1e-9", "--out", str(d),
    ])
    assert code == 0
    return str(d)


def common_args(cache_dir):
    return ["--T", "12", "--N-profile", "1201", "--newton-tol", "1e-9",
            "--cache-dir", cache_dir]


def read_lines(path):
    with open(path) as fh:
        return fh.read().splitlines()


class TestProfileCommand:
    def test_cache_written_and_loadable(self, cache_dir, capsys):
        files = os.listdir(cache_dir)
        assert files == ["profile_T12_N1201_tol1e-09.txt"]
        table = load_profile(os.path.join(cache_dir, files[0]))
        assert table.n_nodes == 1201

    def test_prints_constants(self, tmp_path, capsys):
        code = main(["profile", "--T", "12", "--N-profile", "1201",
                     "--newton-tol", "1e-9", "--out", str(tmp_path)])
        out = capsys.readouterr().out
        assert code == 0
        assert out.startswith("# segkernel v1")
        assert any(line.startswith("A=") for line in out.splitlines())
        assert any(line.startswith("B=") for line in out.splitlines())


class TestSolveCommand:
    def test_report(self, cache_dir, tmp_path):
        out = tmp_path / "conv.csv"
        code = main(["solve", *common_args(cache_dir),
                     "--omega", "0.5", "--R", "20", "--N", "401,801",
                     "--out", str(out)])
        assert code == 0
        lines = read_lines(out)
        assert lines[0] == "# segkernel v1"
        header = [l for l in lines if not l.startswith("#")][0]
        assert header == "N,error,order"
        rows = [l for l in lines if not l.startswith("#")][1:]
        assert len(rows) == 2
        order = float(rows[1].split(",")[2])
        assert 1.8 <= order <= 2.2


class TestCounterexampleCommand:
    def test_rows_and_columns(self, cache_dir, tmp_path):
        out = tmp_path / "ce.csv"
        code = main(["counterexample", *common_args(cache_dir),
                     "--theta", "0.5", "--R", "50,100", "--out", str(out)])
        assert code == 0
        lines = [l for l in read_lines(out) if not l.startswith("#")]
        assert lines[0].split(",") == [
            "theta", "alpha", "R", "omega", "N", "r", "phi1_at_0",
            "phi2_at_0", "dev_from_profile_derivative", "resolution_ok",
        ]
        assert len(lines) == 3
        assert all(row.endswith("true") for row in lines[1:])

    def test_numerical_failure_exit_code_with_row_written(self, cache_dir, tmp_path):
        out = tmp_path / "ce_bad.csv"
        code = main(["counterexample", *common_args(cache_dir),
                     "--theta", "0.5", "--R", "50", "--N", "401",
                     "--out", str(out)])
        assert code == 2
        rows = [l for l in read_lines(out) if not l.startswith("#")][1:]
        assert len(rows) == 1
        assert rows[0].endswith("false")


class TestSweepCommand:
    def test_cartesian_plan_size(self, cache_dir, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(["sweep", *common_args(cache_dir),
                     "--theta", "0.5", "--omega", "0.2,0.4",
                     "--omegaR", "4,8", "--N", "801", "--out", str(out)])
        assert code == 0
        rows = [l for l in read_lines(out) if not l.startswith("#")][1:]
        assert len(rows) == 4

    def test_byte_determinism(self, cache_dir, tmp_path):
        args = ["sweep", *common_args(cache_dir), "--theta", "0.5",
                "--omega", "0,0.2", "--R", "20", "--N", "801", "--seed", "42"]
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_jobs_matches_serial(self, cache_dir, tmp_path):
        base = ["sweep", *common_args(cache_dir), "--theta", "0.5",
                "--omega", "0.2,0.3,0.4", "--R", "15", "--N", "601"]
        out1, out2 = tmp_path / "s.csv", tmp_path / "p.csv"
        assert main(base + ["--out", str(out1)]) == 0
        assert main(base + ["--jobs", "2", "--out", str(out2)]) == 0
        strip = lambda p: [l for l in read_lines(p) if "jobs" not in l]
        assert strip(out1) == strip(out2)

    def test_estimated_method(self, cache_dir, tmp_path):
        out = tmp_path / "est.csv"
        code = main(["sweep", *common_args(cache_dir), "--theta", "0.5",
                     "--omega", "0.3", "--R", "15", "--N", "601",
                     "--method", "estimated", "--out", str(out)])
        assert code == 0
        row = [l for l in read_lines(out) if not l.startswith("#")][1]
        assert row.split(",")[4] == "estimated"

    def test_orth_mode(self, cache_dir, tmp_path):
        out = tmp_path / "orth.csv"
        code = main(["sweep", *common_args(cache_dir), "--theta", "0.5",
                     "--omega", "0", "--R", "20", "--N", "801",
                     "--orth-mode", "one", "--out", str(out)])
        assert code == 0
        row = [l for l in read_lines(out) if not l.startswith("#")][1]
        assert row.split(",")[5] == "one"


class TestEigCommand:
    def test_table(self, cache_dir, tmp_path):
        out = tmp_path / "eig.csv"
        code = main(["eig", *common_args(cache_dir), "--omega", "0.1,0.3",
                     "--R", "20", "--N", "801", "--out", str(out)])
        assert code == 0
        rows = [l for l in read_lines(out) if not l.startswith("#")][1:]
        assert len(rows) == 2
        lam01 = float(rows[0].split(",")[3])
        lam03 = float(rows[1].split(",")[3])
        assert abs((lam03 - lam01) - 0.08) <= 1e-10


class TestConfigAndErrors:
    def test_config_file_with_flag_override(self, cache_dir, tmp_path):
        cfg = {
            "command": "sweep", "theta": 0.5, "omega": "0.2", "R": "15",
            "N": 601, "T": 12, "N-profile": 1201, "newton-tol": 1e-9,
            "cache-dir": cache_dir, "out": str(tmp_path / "cfg.csv"),
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        assert main(["--config", str(path)]) == 0
        lines = read_lines(tmp_path / "cfg.csv")
        assert any(l == "# theta=0.5" for l in lines)
        # flag overrides the file
        assert main(["--config", str(path), "--out", str(tmp_path / "o2.csv"),
                     "--theta", "0.6"]) == 0
        lines2 = read_lines(tmp_path / "o2.csv")
        assert any(l == "# theta=0.6" for l in lines2)

    def test_usage_errors(self, cache_dir, tmp_path, capsys):
        assert main([]) == 1
        assert main(["sweep", *common_args(cache_dir), "--theta", "0.5",
                     "--omega", "0.2", "--out", str(tmp_path / "x.csv")]) == 1
        assert main(["--config", "/nonexistent.json"]) == 1
        capsys.readouterr()

    def test_unwritable_output(self, cache_dir):
        code = main(["solve", *common_args(cache_dir), "--omega", "0.5",
                     "--R", "20", "--N", "401,801",
                     "--out", "/nonexistent-dir/x.csv"])
        assert code == 1
