import json
import subprocess
import sys

import pytest

from stochmhd import cli

SMALL = ["--set", "discretization.cutoff=8", "--set", "discretization.t_end=0.1",
         "--set", "experiment.m_paths=3"]


def run(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "stochmhd", *args], capture_output=True,
                          text=True, cwd=cwd)


class TestSubprocess:
    def test_simulate_is_byte_identical_across_runs_and_threads(self, tmp_path):
        a = run("simulate", *SMALL, "--out", str(tmp_path / "a"), "--threads", "1")
        b = run("simulate", *SMALL, "--out", str(tmp_path / "b"), "--threads", "3")
        assert a.returncode == 0 and b.returncode == 0, a.stderr + b.stderr
        for name in ("paths.csv", "report.jsonl", "config.ini", "checks.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_echoed_config_reproduces_run(self, tmp_path):
        first = run("simulate", *SMALL, "--seed", "99", "--out", str(tmp_path / "a"))
        assert first.returncode == 0, first.stderr
        echo = tmp_path / "a" / "config.ini"
        assert "seed = 99" in echo.read_text()
        again = run("simulate", "--config", str(echo), "--out", str(tmp_path / "b"))
        assert again.returncode == 0, again.stderr
        assert (tmp_path / "a" / "paths.csv").read_bytes() == (tmp_path / "b" / "paths.csv").read_bytes()

    def test_unknown_subcommand(self):
        res = run("fly")
        assert res.returncode == cli.EXIT_USAGE
        assert "invalid choice" in res.stderr


class TestExitCodes:
    def test_energy_check_default(self, tmp_path, capsys):
        code = cli.main(["energy-check", "--set", "experiment.m_paths=4",
                         "--set", "discretization.cutoff=8", "--out", str(tmp_path)])
        assert code == cli.EXIT_OK
        lines = [json.loads(s) for s in (tmp_path / "report.jsonl").read_text().splitlines()]
        energy1 = next(r for r in lines if r.get("name") == "energy1")
        assert round(energy1["rhs"], 5) == 1.22157
        summary = lines[-1]
        assert summary["type"] == "summary" and summary["exit"] == 0
        assert "wall" not in json.dumps(summary)

    def test_hypothesis_violation(self, tmp_path, capsys):
        code = cli.main(["stability", "--set", "noise.g_kind=multiplicative-bounded",
                         "--set", "noise.gamma1=5", "--out", str(tmp_path)])
        assert code == cli.EXIT_HYPOTHESIS
        assert "L = 1.25 must be below 1" in capsys.readouterr().err
        assert not (tmp_path / "report.jsonl").exists()

    def test_blow_up(self, tmp_path, capsys):
        code = cli.main(["simulate", "--set", "discretization.cutoff=8",
                         "--set", "discretization.dt=0.5", "--set", "discretization.t_end=5",
                         "--set", "initial.h_norm=1e30", "--set", "experiment.m_paths=2",
                         "--out", str(tmp_path)])
        assert code == cli.EXIT_BLOWUP

    def test_failed_check(self, tmp_path, capsys):
        # a single-path energy check has an infinite half-width and cannot pass
        code = cli.main(["energy-check", "--set", "experiment.m_paths=1",
                         "--set", "discretization.cutoff=8", "--out", str(tmp_path)])
        assert code == cli.EXIT_FAIL

    def test_malformed_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[discretization]\ndt = often\n")
        assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
        assert "discretization.dt (line 2)" in capsys.readouterr().err

    def test_bad_threads(self, tmp_path, capsys):
        assert cli.main(["simulate", "--threads", "0", "--out", str(tmp_path)]) == cli.EXIT_USAGE


class TestSubcommands:
    @pytest.mark.parametrize("command,extra", [
        ("pmoment-check", ["--set", "experiment.m_paths=4"]),
        ("monotonicity-check", ["--config", "builtin:monotone", "--set", "experiment.samples=50"]),
        ("convergence", ["--config", "builtin:convergence", "--set", "experiment.cutoffs=4,8,16",
                         "--set", "discretization.t_end=0.1"]),
        ("stability", ["--config", "builtin:ergodic", "--set", "experiment.m_paths=2",
                       "--set", "discretization.t_end=10"]),
        ("martingale-ratio", ["--config", "builtin:ergodic", "--set", "discretization.t_end=20"]),
        ("invariant-measure", ["--config", "builtin:ergodic", "--set", "experiment.m_paths=1",
                               "--set", "discretization.t_end=20"]),
        ("moment-audit", ["--config", "builtin:ergodic", "--set", "experiment.m_paths=1",
                          "--set", "discretization.t_end=20"]),
    ])
    def test_runs_and_writes_artifacts(self, tmp_path, capsys, command, extra):
        small = ["--set", "discretization.cutoff=8"] if "builtin:convergence" not in extra else []
        code = cli.main([command, *small, *extra, "--out", str(tmp_path), "--plot-data"])
        assert code in (cli.EXIT_OK, cli.EXIT_FAIL)
        assert (tmp_path / "config.ini").exists() and (tmp_path / "checks.csv").exists()
        lines = (tmp_path / "report.jsonl").read_text().splitlines()
        assert json.loads(lines[-1])["command"] == command
        for csv in tmp_path.glob("*.csv"):
            if csv.name != "checks.csv":
                assert (tmp_path / (csv.stem + ".dat")).exists()

    def test_uniqueness_replay(self, tmp_path, capsys):
        code = cli.main(["uniqueness-replay", *SMALL, "--threads", "2", "--out", str(tmp_path)])
        assert code == cli.EXIT_OK

    def test_ou_validate_small(self, tmp_path, capsys):
        code = cli.main(["ou-validate", "--set", "experiment.m_paths=2000", "--out", str(tmp_path)])
        assert code in (cli.EXIT_OK, cli.EXIT_FAIL)
        assert (tmp_path / "weak_errors.csv").read_text().startswith("dt,mean_error,second_error")
