import json
import os

import pytest

from rwrs_lab.cli import main
from rwrs_lab.config import (ConfigError, build_plan, canonical_toml,
                             config_hash, grid_for, parse_config_text)

MINIMAL = """
[run]
master_seed = 777
threads = 1
output_dir = "{out}"

[walk]
kind = "srw"

[scenery]
distribution = "rademacher"

[grid]
b = 2.0
j_values = [8, 10]

[experiments.variance]
replicas = 150
rel_tolerance = 0.5
"""


def write_config(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def run_dirs(out_root):
    return sorted(os.path.join(out_root, d) for d in os.listdir(out_root))


def report_bytes(run_dir):
    out = {}
    for name in sorted(os.listdir(run_dir)):
        if name.endswith(".report.json") or name.endswith(".csv"):
            with open(os.path.join(run_dir, name), "rb") as fh:
                out[name] = fh.read()
    return out


class TestParsing:
    def test_defaults_applied(self):
        resolved = parse_config_text(MINIMAL.format(out="runs"))
        assert resolved["run"]["horizon_T"] == 1.0
        assert resolved["scenery"]["chi"] == 1.0
        assert resolved["experiments.variance"]["replicas"] == 150

    def test_unknown_key_rejected_with_path(self):
        bad = MINIMAL.format(out="runs") + "\n[experiments.lemmas]\npairz = 3\n"
        with pytest.raises(ConfigError, match="experiments.lemmas.pairz"):
            parse_config_text(bad)

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="walks"):
            parse_config_text(MINIMAL.format(out="runs") + "\n[walks]\nkind='x'\n")

    def test_unknown_experiment_rejected(self):
        with pytest.raises(ConfigError, match="experiments.bogus"):
            parse_config_text(MINIMAL.format(out="runs")
                              + "\n[experiments.bogus]\nreplicas = 1\n")

    def test_type_mismatch_rejected(self):
        bad = MINIMAL.format(out="runs").replace("replicas = 150",
                                                 'replicas = "many"')
        with pytest.raises(ConfigError, match="experiments.variance.replicas"):
            parse_config_text(bad)

    def test_requires_an_experiment(self):
        head = MINIMAL.format(out="runs").split("[experiments.variance]")[0]
        with pytest.raises(ConfigError, match="at least one experiment"):
            parse_config_text(head)

    def test_canonical_roundtrip_stable(self):
        resolved = parse_config_text(MINIMAL.format(out="runs"))
        text = canonical_toml(resolved)
        again = parse_config_text(text)
        assert canonical_toml(again) == text
        assert config_hash(again) == config_hash(resolved)

    def test_grid_override_per_experiment(self):
        text = MINIMAL.format(out="runs").replace(
            "[experiments.variance]",
            "[experiments.variance]\nj_values = [4, 6]")
        resolved = parse_config_text(text)
        assert grid_for(resolved, "variance") == (16, 64)

    def test_pareto_beta2_named_violation(self):
        text = MINIMAL.format(out="runs").replace(
            'distribution = "rademacher"',
            'distribution = "pareto"\nbeta = 2.0')
        resolved = parse_config_text(text)
        with pytest.raises(ConfigError, match="variance"):
            build_plan(resolved)

    def test_diagonal_walk_rejected_for_sampling_runs(self):
        text = MINIMAL.format(out="runs").replace('kind = "srw"',
                                                  'kind = "diagonal"')
        with pytest.raises(ConfigError, match="aperiodic"):
            build_plan(parse_config_text(text))


class TestCliRun:
    def test_smoke_run_exit_zero(self, tmp_path, capsys):
        out = tmp_path / "runs"
        cfg = write_config(tmp_path, MINIMAL.format(out=out))
        assert main(["run", cfg]) == 0
        (run_dir,) = run_dirs(out)
        names = set(os.listdir(run_dir))
        assert {"manifest.json", "resolved.toml", "variance.report.json",
                "variance.csv"} <= names
        with open(os.path.join(run_dir, "manifest.json")) as fh:
            manifest = json.load(fh)
        assert manifest["overall_passed"] is True
        assert "variance" in manifest["experiments"]
        assert manifest["experiments"]["variance"]["wall_clock_seconds"] > 0

    def test_invalid_config_exit_one(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "[run]\nmaster_seed = 'x'\n")
        assert main(["run", cfg]) == 1
        assert "master_seed" in capsys.readouterr().err

    def test_beta2_exit_one_names_violation(self, tmp_path, capsys):
        text = MINIMAL.format(out=tmp_path / "runs").replace(
            'distribution = "rademacher"', 'distribution = "pareto"\nbeta = 2.0')
        cfg = write_config(tmp_path, text)
        assert main(["run", cfg]) == 1
        err = capsys.readouterr().err
        assert "variance" in err  # the diverging moment is named

    def test_verdict_failure_exit_two(self, tmp_path):
        # impossible tolerance: the variance estimate cannot be within 1e-6
        text = MINIMAL.format(out=tmp_path / "runs").replace(
            "rel_tolerance = 0.5", "rel_tolerance = 1e-6")
        cfg = write_config(tmp_path, text)
        assert main(["run", cfg]) == 2

    def test_identical_rerun_byte_identical(self, tmp_path):
        out = tmp_path / "runs"
        cfg = write_config(tmp_path, MINIMAL.format(out=out))
        assert main(["run", cfg]) == 0
        assert main(["run", cfg]) == 0
        d1, d2 = run_dirs(out)
        assert report_bytes(d1) == report_bytes(d2)

    def test_thread_counts_byte_identical(self, tmp_path):
        outs = []
        for threads in (1, 2, 0):  # 0 resolves to the machine default
            out = tmp_path / f"runs{threads}"
            text = MINIMAL.format(out=out).replace("threads = 1",
                                                   f"threads = {threads}")
            cfg = write_config(tmp_path, text, name=f"cfg{threads}.toml")
            assert main(["run", cfg]) == 0
            (d,) = run_dirs(out)
            outs.append(report_bytes(d))
        assert outs[0] == outs[1] == outs[2]

    def test_resolved_config_reproduces_run(self, tmp_path):
        out = tmp_path / "runs"
        cfg = write_config(tmp_path, MINIMAL.format(out=out))
        assert main(["run", cfg]) == 0
        (d1,) = run_dirs(out)
        resolved = os.path.join(d1, "resolved.toml")
        assert main(["run", resolved]) == 0
        d1, d2 = run_dirs(out)
        assert report_bytes(d1) == report_bytes(d2)
        # the manifest embeds the same resolved config text
        with open(os.path.join(d2, "manifest.json")) as fh:
            manifest = json.load(fh)
        with open(resolved) as fh:
            assert manifest["resolved_config"] == fh.read()

    def test_validate_command(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINIMAL.format(out=tmp_path / "runs"))
        assert main(["validate", cfg]) == 0
        assert "config ok" in capsys.readouterr().out

    def test_validate_heavy_tail_fills_scale(self, tmp_path, capsys):
        text = MINIMAL.format(out=tmp_path / "runs").replace(
            'kind = "srw"', 'kind = "heavy_tail_1d"')
        cfg = write_config(tmp_path, text)
        assert main(["validate", cfg]) == 0


class TestPlots:
    def test_emit_plots(self, tmp_path, capsys):
        out = tmp_path / "runs"
        text = MINIMAL.format(out=out) + (
            "\n[experiments.lemmas]\npairs = 20\nexit_replicas = 50\n"
            "exit_constancy = 5.0\nintersection_bound = 10.0\n")
        cfg = write_config(tmp_path, text)
        assert main(["run", cfg]) in (0, 2)
        (run_dir,) = run_dirs(out)
        assert main(["plots", run_dir]) == 0
        plot_dir = os.path.join(run_dir, "plots")
        names = set(os.listdir(plot_dir))
        assert {"variance_plot.csv", "lemmas_plot.csv",
                "lemmas_exit_plot.csv"} <= names
        with open(os.path.join(plot_dir, "variance_plot.csv")) as fh:
            header = fh.readline().strip().split(",")
        assert header[:4] == ["n", "log_n", "estimate", "stderr"]
        assert "target" in header

    def test_empty_directory_error(self, tmp_path, capsys):
        assert main(["plots", str(tmp_path)]) == 1
        assert ".report.json" in capsys.readouterr().err
