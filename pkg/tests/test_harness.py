import json
from pathlib import Path

import pytest

from gauntlet.cli import main
from gauntlet.errors import ConfigError, ReportIOError, TamperedReportError
from gauntlet.presets import ExperimentConfig, get_preset, list_presets, trial_rng
from gauntlet.reports import (
    compute_aggregates,
    load_rows,
    run_experiment,
    run_trials,
    verify_report,
)

EXPECTED_PRESETS = {
    "sum-differencing",
    "countmod-quadratic",
    "bq-linear",
    "bq-omega1",
    "xor1",
    "xor2",
    "median-footnote",
    "dp-median-rank",
    "kmeans-uniform",
    "kmeans-mixture",
    "games-stateless-suite",
    "leakage-full",
}


class TestPresets:
    def test_catalogue_contains_all(self):
        presets = list_presets()
        assert EXPECTED_PRESETS <= set(presets)
        assert len(presets) >= 12

    def test_round_trip_serialization(self):
        for name, config in list_presets().items():
            clone = ExperimentConfig.from_json(json.loads(json.dumps(config.to_json())))
            assert clone == config, name

    def test_mixture_preset_uses_two_component_generator(self):
        config = get_preset("kmeans-mixture")
        assert config.params["distribution"] == "mixture"
        assert len(config.params["means"]) == 2

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            get_preset("nope")

    def test_zero_trials_rejected(self):
        config = get_preset("xor1")
        config.trials = 0
        with pytest.raises(ConfigError):
            config.validate()

    def test_unknown_runner_key(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(
                {"experiment": "x", "mechanism": {"id": "dp_sum", "params": {}}, "trials": 1}
            )

    def test_unknown_mechanism_id(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(
                {"experiment": "x", "mechanism": {"id": "bogus", "params": {}}, "trials": 1}
            )


class TestRunExperiment:
    def test_bq_preset_rows(self, tmp_path):
        config = get_preset("bq-omega1")
        config.trials = 3
        report = run_experiment(config, out_dir=str(tmp_path))
        assert report.aggregates["success_rate"] == 1.0
        assert all(row["metric"] == 0.0 for row in report.rows)
        assert (tmp_path / "bq-omega1" / "rows.csv").exists()
        assert (tmp_path / "bq-omega1" / "report.json").exists()

    def test_figures_rendered(self, tmp_path):
        config = get_preset("xor1")
        config.trials = 4
        report = run_experiment(config, out_dir=str(tmp_path), render_figures=True)
        assert report.figure_paths and report.figure_paths[0].exists()
        assert report.figure_paths[0].suffix == ".png"

    def test_rows_deterministic_across_runs(self, tmp_path):
        config = get_preset("sum-differencing")
        config.trials = 5
        run_experiment(config, out_dir=str(tmp_path / "a"), render_figures=False)
        run_experiment(config, out_dir=str(tmp_path / "b"), render_figures=False)
        a = (tmp_path / "a" / "sum-differencing" / "rows.csv").read_bytes()
        b = (tmp_path / "b" / "sum-differencing" / "rows.csv").read_bytes()
        assert a == b

    def test_trial_rows_independent_of_worker_count(self, monkeypatch):
        config = get_preset("xor2")
        config.trials = 6
        rows_serial = run_trials(config)
        monkeypatch.setenv("GAUNTLET_THREADS", "4")
        rows_parallel = run_trials(config)
        assert rows_serial == rows_parallel

    def test_trial_rng_streams_are_stable(self):
        a = trial_rng(123, 7).random(4).tolist()
        b = trial_rng(123, 7).random(4).tolist()
        c = trial_rng(123, 8).random(4).tolist()
        assert a == b and a != c


class TestVerifyReport:
    def make_report(self, tmp_path, preset="xor1", trials=4):
        config = get_preset(preset)
        config.trials = trials
        report = run_experiment(config, out_dir=str(tmp_path), render_figures=False)
        return report.out_dir

    def test_fresh_report_ok(self, tmp_path):
        out = self.make_report(tmp_path)
        assert verify_report(str(out)) == "OK"

    def test_edited_cell_detected(self, tmp_path):
        out = self.make_report(tmp_path)
        rows_path = out / "rows.csv"
        lines = rows_path.read_text().splitlines()
        cells = lines[1].split(",")
        cells[-2] = "0.123"
        lines[1] = ",".join(cells)
        rows_path.write_text("\n".join(lines) + "\n")
        with pytest.raises(TamperedReportError):
            verify_report(str(out))

    def test_edited_aggregate_detected(self, tmp_path):
        out = self.make_report(tmp_path)
        payload = json.loads((out / "report.json").read_text())
        payload["aggregates"]["success_rate"] = 0.0
        (out / "report.json").write_text(json.dumps(payload))
        with pytest.raises(TamperedReportError):
            verify_report(str(out))

    def test_missing_json_is_io_error(self, tmp_path):
        out = self.make_report(tmp_path)
        (out / "report.json").unlink()
        with pytest.raises(ReportIOError):
            verify_report(str(out))

    def test_aggregates_recomputable_from_parsed_rows(self, tmp_path):
        out = self.make_report(tmp_path, preset="median-footnote", trials=5)
        rows = load_rows(out / "rows.csv")
        payload = json.loads((out / "report.json").read_text())
        assert compute_aggregates(rows) == payload["aggregates"]


class TestCli:
    def test_list(self, capsys):
        assert main(["list"]) == 0
        out = capsys.readouterr().out
        for name in EXPECTED_PRESETS:
            assert name in out

    def test_run_and_verify(self, tmp_path, capsys):
        rc = main(["run", "xor1", "--trials", "3", "--out", str(tmp_path)])
        assert rc == 0
        rc = main(["verify", str(tmp_path / "xor1")])
        assert rc == 0
        assert "OK" in capsys.readouterr().out

    def test_run_config_file(self, tmp_path):
        config = get_preset("sum-differencing")
        config.trials = 2
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(config.to_json()))
        assert main(["run", str(path), "--out", str(tmp_path), "--no-figures"]) == 0

    def test_unknown_preset_fails_cleanly(self, capsys):
        assert main(["run", "bogus-preset"]) == 2
        assert "error" in capsys.readouterr().err

    def test_seed_override_changes_rows(self, tmp_path):
        main(["run", "xor1", "--trials", "3", "--seed", "1", "--out", str(tmp_path / "s1"), "--no-figures"])
        main(["run", "xor1", "--trials", "3", "--seed", "2", "--out", str(tmp_path / "s2"), "--no-figures"])
        a = (tmp_path / "s1" / "xor1" / "rows.csv").read_text()
        b = (tmp_path / "s2" / "xor1" / "rows.csv").read_text()
        assert a.splitlines()[0] == b.splitlines()[0]  # same header
