import json
from pathlib import Path

import numpy as np
import pytest

from panelcorr.cli import main
from panelcorr.ingest import PricePanel, Quarter, write_price_csv
from panelcorr.pipeline import RunConfig, StageError, run_pipeline, write_report
from panelcorr.synth import FactorModelSpec, generate_factor_panel

LIGHT_SA = dict(sa_alpha=0.95, sa_moves_per_temp=300, sa_patience=3)


@pytest.fixture(scope="module")
def panel_csv(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("data")
    spec = FactorModelSpec(n_entities=6, n_quarters=75, market_beta=1.0,
                           memberships=[[0, 1, 2], [3, 4, 5]],
                           cluster_loading=0.6, noise_scale=0.5, seed=11)
    panel, _, _ = generate_factor_panel(spec)
    path = tmp / "panel.csv"
    write_price_csv(panel, path)
    return path


def small_config(panel_csv, out_dir, seed=4, **kw):
    base = dict(seed=seed, out_dir=out_dir, input=panel_csv, size_s=60,
                null_rounds=25, restarts=6,
                interval_split="1975Q1", reference_start="1991Q1",
                reference_end="1991Q4", **LIGHT_SA)
    base.update(kw)
    return RunConfig(**base)


class TestRunPipeline:
    def test_smoke_produces_one_artifact_set_per_window(self, panel_csv, tmp_path):
        config = small_config(panel_csv, tmp_path / "run")
        manifest = run_pipeline(config)
        assert manifest["n_windows"] == 16
        window_files = sorted((tmp_path / "run" / "windows").glob("*.json"))
        assert len(window_files) == 16
        listed = {a["path"] for a in manifest["artifacts"]}
        assert len(listed) == len(manifest["artifacts"])
        assert "regimes.json" in listed
        assert "timeline.json" in listed

    def test_reference_defaults_accepted(self, panel_csv, tmp_path):
        # the published parameter set must validate without complaint
        config = RunConfig(seed=1, out_dir=tmp_path, input=panel_csv,
                           size_s=60, null_rounds=1000, restarts=200)
        assert config.null_rounds == 1000
        assert config.restarts == 200
        assert config.size_s == 60

    def test_manifest_completeness(self, panel_csv, tmp_path):
        config = small_config(panel_csv, tmp_path / "run")
        manifest = run_pipeline(config)
        out = tmp_path / "run"
        listed = {a["path"] for a in manifest["artifacts"]}
        for path in listed:
            assert (out / path).exists()
        on_disk = {
            str(p.relative_to(out))
            for p in out.rglob("*")
            if p.is_file() and p.name != "manifest.json"
        }
        assert on_disk == listed

    def test_determinism_byte_identical(self, panel_csv, tmp_path):
        m1 = run_pipeline(small_config(panel_csv, tmp_path / "a", seed=9))
        m2 = run_pipeline(small_config(panel_csv, tmp_path / "b", seed=9))
        h1 = {a["path"]: a["sha256"] for a in m1["artifacts"]}
        h2 = {a["path"]: a["sha256"] for a in m2["artifacts"]}
        assert h1 == h2

    def test_different_seed_changes_stochastic_outputs(self, panel_csv, tmp_path):
        m1 = run_pipeline(small_config(panel_csv, tmp_path / "a", seed=1))
        m2 = run_pipeline(small_config(panel_csv, tmp_path / "b", seed=2))
        h1 = {a["path"]: a["sha256"] for a in m1["artifacts"]}
        h2 = {a["path"]: a["sha256"] for a in m2["artifacts"]}
        assert h1 != h2

    def test_stage_error_names_stage_and_window(self, tmp_path):
        # one entity goes flat inside the later windows: the correlation stage
        # must fail and say where
        quarters = Quarter.span(Quarter(1980, 1), 70)
        rng = np.random.default_rng(0)
        levels = 100 * np.exp(rng.normal(0, 0.02, size=(5, 70)).cumsum(axis=1))
        levels[0, 5:] = levels[0, 5]
        panel = PricePanel([f"S{i}" for i in range(5)], quarters, levels)
        path = tmp_path / "flat.csv"
        write_price_csv(panel, path)
        config = small_config(path, tmp_path / "run")
        with pytest.raises(StageError, match=r"stage 'corrlab'.*window"):
            run_pipeline(config)

    def test_national_override_used(self, panel_csv, tmp_path):
        spec = FactorModelSpec(n_entities=6, n_quarters=75, market_beta=1.0,
                               memberships=[[0, 1, 2], [3, 4, 5]],
                               cluster_loading=0.6, noise_scale=0.5, seed=11)
        panel, _, market = generate_factor_panel(spec)
        override = tmp_path / "national.csv"
        lines = ["quarter,value"] + [
            f"{q},{float(v)!r}" for q, v in zip(panel.quarters[1:], market)
        ]
        override.write_text("\n".join(lines) + "\n")
        with_override = run_pipeline(
            small_config(panel_csv, tmp_path / "a", national=override))
        without = run_pipeline(small_config(panel_csv, tmp_path / "b"))
        rec_a = json.loads((tmp_path / "a" / "windows" / "1993Q4.json").read_text())
        rec_b = json.loads((tmp_path / "b" / "windows" / "1993Q4.json").read_text())
        assert rec_a["market_effect"]["k_ols"] != rec_b["market_effect"]["k_ols"]

    def test_stage_subsets(self, panel_csv, tmp_path):
        spectra_only = run_pipeline(small_config(panel_csv, tmp_path / "s"),
                                    stages=("spectra",))
        rec = json.loads((tmp_path / "s" / "windows" / "1993Q4.json").read_text())
        assert "eigenvalues" in rec
        assert "partition" not in rec
        assert not (tmp_path / "s" / "regimes.json").exists()

        run_pipeline(small_config(panel_csv, tmp_path / "m"), stages=("market",))
        assert (tmp_path / "m" / "regimes.json").exists()

        with pytest.raises(ValueError, match="tracking requires"):
            run_pipeline(small_config(panel_csv, tmp_path / "t"), stages=("tracking",))

    def test_seed_is_mandatory(self, panel_csv, tmp_path):
        with pytest.raises(ValueError, match="seed"):
            RunConfig(seed=None, out_dir=tmp_path, input=panel_csv)


class TestReport:
    def test_report_files_and_consistency(self, panel_csv, tmp_path):
        out = tmp_path / "run"
        run_pipeline(small_config(panel_csv, out))
        paths = write_report(out)
        names = {p.name for p in paths}
        assert names == {
            "mean_correlation.csv", "eigenvalues.csv", "absorption.csv",
            "eigenvector_components.csv", "market_effect.csv", "cluster_timeline.csv",
        }
        # the null critical value column must match the per-window artifacts
        lines = (out / "report" / "eigenvalues.csv").read_text().strip().split("\n")
        header = lines[0].split(",")
        idx = header.index("lambda_5pct")
        for line in lines[1:]:
            cells = line.split(",")
            rec = json.loads((out / "windows" / f"{cells[0]}.json").read_text())
            assert float(cells[idx]) == rec["null"]["lambda_5pct"]

    def test_report_requires_completed_run(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="manifest"):
            write_report(tmp_path)

    def test_flat_input_gives_flat_curves(self, tmp_path):
        # pure noise panel: mean correlation hovers near zero in every window
        rng = np.random.default_rng(3)
        quarters = Quarter.span(Quarter(1980, 1), 70)
        levels = 100 * np.exp(rng.normal(0, 0.02, size=(5, 70)).cumsum(axis=1))
        panel = PricePanel([f"S{i}" for i in range(5)], quarters, levels)
        path = tmp_path / "noise.csv"
        write_price_csv(panel, path)
        out = tmp_path / "run"
        run_pipeline(small_config(path, out, seed=8), stages=("spectra",))
        write_report(out)
        lines = (out / "report" / "mean_correlation.csv").read_text().strip().split("\n")
        means = [float(line.split(",")[1]) for line in lines[1:]]
        assert np.max(np.abs(means)) < 0.35


class TestCli:
    def test_synth_run_report_round_trip(self, tmp_path, capsys):
        data = tmp_path / "d"
        assert main(["synth", "--entities", "6", "--quarters", "75", "--clusters", "2",
                     "--gamma", "0.6", "--seed", "3", "--out", str(data)]) == 0
        assert (data / "panel.csv").exists()
        assert (data / "planted_partition.json").exists()
        assert (data / "market.csv").exists()

        out = tmp_path / "run"
        code = main([
            "run", "--input", str(data / "panel.csv"), "--seed", "7",
            "--s", "60", "--rounds", "20", "--restarts", "5",
            "--sa-alpha", "0.95", "--sa-moves", "300", "--sa-patience", "3",
            "--interval-split", "1975Q1",
            "--reference-start", "1991Q1", "--reference-end", "1991Q4",
            "--out", str(out), "--exact-out", "--report",
        ])
        assert code == 0
        assert (out / "manifest.json").exists()
        assert (out / "report" / "cluster_timeline.csv").exists()

    def test_ingest_verb(self, panel_csv, tmp_path, capsys):
        returns_out = tmp_path / "returns.csv"
        assert main(["ingest", "--input", str(panel_csv),
                     "--returns-out", str(returns_out)]) == 0
        captured = capsys.readouterr()
        assert "6 entities x 76 quarters" in captured.out
        assert returns_out.exists()

    def test_analyze_and_regimes_verbs(self, panel_csv, tmp_path):
        assert main(["analyze", "--input", str(panel_csv), "--seed", "2",
                     "--s", "60", "--rounds", "15",
                     "--out", str(tmp_path / "an"), "--exact-out"]) == 0
        assert (tmp_path / "an" / "windows").exists()
        assert main(["regimes", "--input", str(panel_csv), "--seed", "2",
                     "--s", "60", "--out", str(tmp_path / "rg"), "--exact-out"]) == 0
        assert (tmp_path / "rg" / "regimes.json").exists()

    def test_missing_input_exits_nonzero(self, tmp_path, capsys):
        code = main(["run", "--input", str(tmp_path / "nope.csv"), "--seed", "1",
                     "--out", str(tmp_path / "x"), "--exact-out"])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
