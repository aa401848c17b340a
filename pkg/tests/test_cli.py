"""Config parsing, CSV emission, pipeline determinism, CLI exit codes."""

import json
import os

import pytest

from pdrenorm import cli
from pdrenorm.exceptions import ConfigError

MINIMAL = """
[seed]
family = "degenerate"
[tower]
depth = 2
degrees = 10
[run]
out = "{out}"
stages = ["fixed-point", "tower", "classn", "scope", "geometry"]
"""


class TestConfig:
    def test_parse_sections_and_json_values(self):
        cfg = cli.ExperimentConfig.parse(
            '[seed]\nb = 0.07\nfamily = "rich"\n[tower]\ndepth = 4\n'
        )
        assert cfg["seed"]["b"] == 0.07
        assert cfg["tower"]["depth"] == 4

    def test_defaults_present(self):
        cfg = cli.ExperimentConfig.parse("")
        assert cfg["solver"]["degree"] == 16

    def test_bad_json_rejected(self):
        with pytest.raises(ConfigError):
            cli.ExperimentConfig.parse("[seed]\nb = nope\n")

    def test_key_outside_section_rejected(self):
        with pytest.raises(ConfigError):
            cli.ExperimentConfig.parse("b = 1\n")

    def test_invalid_depth_rejected(self):
        with pytest.raises(ConfigError):
            cli.ExperimentConfig.parse("[tower]\ndepth = 0\n")

    def test_digest_stable_and_sensitive(self):
        a = cli.ExperimentConfig.parse("[seed]\nb = 0.05\n")
        b = cli.ExperimentConfig.parse("[seed]\nb = 0.05\n")
        c = cli.ExperimentConfig.parse("[seed]\nb = 0.06\n")
        assert a.digest() == b.digest() != c.digest()


class TestCsv:
    def test_header_only_for_empty_records(self, tmp_path):
        path = cli.emit_csv(tmp_path / "t.csv", ["a", "b"], [])
        assert open(path).read() == "a,b\n"

    def test_seventeen_digits_and_lf(self, tmp_path):
        path = cli.emit_csv(tmp_path / "t.csv", ["x"], [[1.0 / 3.0]])
        raw = open(path, "rb").read()
        assert raw == b"x\n0.33333333333333331\n"

    def test_round_trip_through_reader(self, tmp_path):
        import csv

        rows = [[0, 1.5, "vcv"], [1, -2.25e-10, "cc"]]
        path = cli.emit_csv(tmp_path / "t.csv", ["i", "x", "w"], rows)
        with open(path, newline="") as fh:
            back = list(csv.reader(fh))
        assert back[0] == ["i", "x", "w"]
        assert float(back[2][1]) == -2.25e-10

    def test_quoting(self, tmp_path):
        path = cli.emit_csv(tmp_path / "t.csv", ["a"], [['x,"y']])
        assert open(path).read() == 'a\n"x,""y"\n'


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    roots = []
    for tag in ("a", "b"):
        out = str(tmp_path_factory.mktemp(f"run_{tag}") / "out")
        cfg = cli.ExperimentConfig.parse(MINIMAL.format(out=out))
        manifest = cli.run(cfg)
        roots.append((out, manifest))
    return roots


class TestPipeline:

    def test_all_stages_ok(self, two_runs):
        _, manifest = two_runs[0]
        assert [s["status"] for s in manifest.stages] == ["ok"] * 5

    def test_geometry_has_all_level2_and_3_pieces(self, two_runs):
        out, _ = two_runs[0]
        rows = open(os.path.join(out, "geometry.csv")).read().strip().splitlines()
        assert len(rows) - 1 >= 1

    def test_reruns_byte_identical(self, two_runs):
        (out_a, _), (out_b, _) = two_runs
        for name in sorted(os.listdir(out_a)):
            if not name.endswith(".csv"):
                continue
            with open(os.path.join(out_a, name), "rb") as fh:
                first = fh.read()
            with open(os.path.join(out_b, name), "rb") as fh:
                second = fh.read()
            assert first == second, f"{name} differs between reruns"

    def test_manifest_written(self, two_runs):
        out, _ = two_runs[0]
        with open(os.path.join(out, "manifest.json")) as fh:
            payload = json.load(fh)
        assert payload["config_hash"]
        assert "fixedpoint.csv" in payload["outputs"]

    def test_depth_over_knob_fails_cleanly(self, tmp_path):
        out = str(tmp_path / "deep")
        cfg = cli.ExperimentConfig.parse(
            MINIMAL.format(out=out).replace("depth = 2", "depth = 11")
        )
        from pdrenorm.exceptions import StageFailed

        with pytest.raises(StageFailed):
            cli.run(cfg)
        with open(os.path.join(out, "manifest.json")) as fh:
            payload = json.load(fh)
        assert payload["stages"][-1]["status"] == "failed"


class TestCommands:
    def test_holder_command(self, capsys):
        assert cli.main(["holder", "--b1", "0.01", "--b1t", "0.0001"]) == 0
        assert capsys.readouterr().out.strip() == "0.75"

    def test_holder_domain_error_exit_code(self, capsys):
        assert cli.main(["holder", "--b1", "2.0", "--b1t", "0.1"]) == 3

    def test_missing_config_exit_code(self, capsys):
        assert cli.main(["run", "--config", "/definitely/not/here.cfg"]) == 2

    def test_plot_script_golden(self, tmp_path):
        path = cli.emit_plot_script(
            tmp_path / "plots.gp",
            [("resonance", "sweep.csv", "1:8", "resonance ratio vs b1")],
        )
        text = open(path).read()
        assert text == (
            "# gnuplot script generated by pdrenorm; run from this directory\n"
            "set datafile separator ','\n"
            "set key autotitle columnhead\n"
            "set logscale y\n"
            "set title 'resonance ratio vs b1'\n"
            "plot 'sweep.csv' using 1:8 with linespoints\n"
            "pause -1 'resonance: press enter'\n"
        )

    def test_fixed_point_command(self, tmp_path, capsys):
        out = str(tmp_path / "fp")
        assert cli.main(["fixed-point", "--degree", "12", "--tol", "1e-9",
                         "--out", out]) == 0
        assert os.path.exists(os.path.join(out, "fstar.func"))
        rows = open(os.path.join(out, "fixedpoint.csv")).read().splitlines()
        sigma = float(rows[1].split(",")[1])
        assert 2.4 <= 1.0 / sigma <= 2.7

    def test_worker_count_env(self, monkeypatch):
        monkeypatch.setenv("RENORM_THREADS", "3")
        assert cli.worker_count() == 3
        monkeypatch.setenv("RENORM_THREADS", "junk")
        assert cli.worker_count() == 1
