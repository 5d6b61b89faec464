import filecmp
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from unbounded_ie import cli
from unbounded_ie.scenario import ScenarioError, load

SCENARIOS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "scenarios")


def scenario(name):
    return os.path.join(SCENARIOS, name + ".ini")


def run(args, out):
    return cli.main(args + ["--out", str(out)])


def report(out):
    with open(os.path.join(out, "report.json")) as fh:
        return json.load(fh)


def write(tmp_path, text, name="s.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestScenarioErrors:
    def test_empty_file(self, tmp_path, capsys):
        path = write(tmp_path, "")
        assert run(["apply", "--scenario", path], tmp_path / "o") == 1
        err = capsys.readouterr().err
        assert f"{path}:1:" in err

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioError):
            load(tmp_path / "nope.ini")

    def test_unknown_kernel_has_line(self, tmp_path, capsys):
        path = write(tmp_path, "[scenario]\nname = x\n\n[kernel]\nname = no_such_kernel\n")
        assert run(["apply", "--scenario", path], tmp_path / "o") == 1
        assert f"{path}:5:" in capsys.readouterr().err

    def test_bad_number_has_line(self, tmp_path, capsys):
        path = write(tmp_path, "[kernel]\nname = exponential\ng = identity\n[grid]\noutput = 0, 1, many\n")
        assert run(["apply", "--scenario", path], tmp_path / "o") == 1
        assert f"{path}:5:" in capsys.readouterr().err

    def test_missing_header(self, tmp_path):
        path = write(tmp_path, "name = x\n")
        with pytest.raises(ScenarioError, match=":1:"):
            load(path)

    def test_mixed_case_keys(self, tmp_path):
        sc = load(write(tmp_path, "[solver]\nM_grid = 1, 2\n"))
        assert sc.floats("solver", "M_grid") == [1.0, 2.0]

    def test_unit_ball_needs_seed(self, tmp_path, capsys):
        path = write(tmp_path, "[kernel]\nname = exponential\ng = identity\n"
                               "[grid]\noutput = -1, 1, 3\n[input]\nprofile = unit_ball\n")
        assert run(["apply", "--scenario", path], tmp_path / "o") == 1
        assert "seed" in capsys.readouterr().err
        assert run(["apply", "--scenario", path, "--seed", "3"], tmp_path / "o2") == 0

    def test_bad_seed(self, tmp_path):
        assert run(["apply", "--scenario", scenario("fredholm_constant"), "--seed", "-1"], tmp_path) == 1


class TestSubcommands:
    def test_apply_constant(self, tmp_path):
        out = tmp_path / "o"
        assert run(["apply", "--scenario", scenario("fredholm_constant")], out) == 0
        data = np.loadtxt(out / "output.csv", delimiter=",", skiprows=1)
        assert np.max(np.abs(data[:, -1] - 2.0)) <= 1e-6

    def test_check_kernel_saturating(self, tmp_path):
        out = tmp_path / "o"
        assert run(["check-kernel", "--scenario", scenario("check_saturating")], out) == 0
        rep = report(out)
        assert rep["certified"] is True
        assert rep["car4"] == pytest.approx(2.0, abs=1e-6)

    def test_check_kernel_divergent(self, tmp_path):
        out = tmp_path / "o"
        assert run(["check-kernel", "--scenario", scenario("check_divergent")], out) == 2
        assert report(out)["certified"] is False

    def test_fixed_point_hammerstein(self, tmp_path):
        out = tmp_path / "o"
        assert run(["fixed-point", "--scenario", scenario("hammerstein")], out) == 0
        rep = report(out)
        assert rep["radius_search"]["radius"] == pytest.approx(2 / 3, abs=1e-10)
        assert rep["picard"]["converged"] is True
        sol = np.loadtxt(out / "solution.csv", delimiter=",", skiprows=1)
        assert np.max(np.abs(sol[:, -1] - 2 / 3)) <= 1e-6

    def test_solve_fredholm(self, tmp_path):
        out = tmp_path / "o"
        assert run(["solve-fredholm", "--scenario", scenario("nystrom")], out) == 0
        sol = np.loadtxt(out / "solution.csv", delimiter=",", skiprows=1)
        assert np.max(np.abs(sol[:, -1] - 2 * np.exp(-sol[:, 0]))) <= 1e-6

    def test_wrong_operator_for_fixed_point(self, tmp_path, capsys):
        assert run(["fixed-point", "--scenario", scenario("fredholm_constant")], tmp_path / "o") == 1
        assert "fredholm_constant.ini:" in capsys.readouterr().err


class TestArtifacts:
    def test_manifest(self, tmp_path):
        out = tmp_path / "o"
        code = run(["volterra-approx", "--scenario", scenario("volterra")], out)
        assert code == 0
        with open(out / "manifest.json") as fh:
            man = json.load(fh)
        assert man["subcommand"] == "volterra-approx"
        assert man["seed"] == 7 and man["generator"].endswith("PCG64")
        assert man["exit_code"] == code
        assert filecmp.cmp(out / "scenario.ini", scenario("volterra"), shallow=False)
        assert man["scenario_sha256"] == load(scenario("volterra")).sha256
        for name in man["artifacts"]:
            assert (out / name).exists()
        assert {"numpy", "scipy", "python", "unbounded_ie"} <= set(man["versions"])

    def test_seed_override_recorded(self, tmp_path):
        out = tmp_path / "o"
        run(["volterra-approx", "--scenario", scenario("volterra"), "--seed", "11"], out)
        with open(out / "manifest.json") as fh:
            assert json.load(fh)["seed"] == 11

    def test_golden_rerun_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run(["fixed-point", "--scenario", scenario("hammerstein")], out) == 0
        cmp = filecmp.dircmp(a, b)
        assert not cmp.diff_files and not cmp.left_only and not cmp.right_only

    def test_rerun_from_output_dir(self, tmp_path):
        a = tmp_path / "a"
        assert run(["apply", "--scenario", scenario("fredholm_constant")], a) == 0
        b = tmp_path / "b"
        assert run(["apply", "--scenario", str(a / "scenario.ini")], b) == 0
        assert filecmp.cmp(a / "output.csv", b / "output.csv", shallow=False)

    def test_console_script(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "unbounded_ie.cli", "--version"],
                              capture_output=True, text=True)
        assert proc.returncode == 0 and proc.stdout.strip()
