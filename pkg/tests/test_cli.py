import json

import numpy as np
import pandas as pd
import pytest

from trendbands import __version__, cli, estimator
from trendbands.cli import build_parser, resolve_config, run_subcommand
from trendbands.config import settings


@pytest.fixture
def series_csv(tmp_path):
    rng = np.random.default_rng(21)
    n = 150
    tau = np.arange(1, n + 1) / n
    values = np.sin(3 * tau) + 0.2 * rng.standard_normal(n)
    cells = np.where(rng.random(n) < 0.2, "NA", np.round(values, 6).astype(str))
    cells[[0, -1]] = np.round(values[[0, -1]], 6).astype(str)
    path = tmp_path / "series.csv"
    pd.DataFrame({"time": np.arange(n), "value": cells}).to_csv(path, index=False)
    return path


@pytest.fixture
def daily_csv(tmp_path):
    rng = np.random.default_rng(22)
    dates = pd.date_range("2001-01-01", "2003-12-31", freq="D")
    years = 2000.0 + (dates.to_julian_date().to_numpy() - 2451545.0) / 365.25
    values = np.cos(2 * np.pi * years) + 0.1 * rng.standard_normal(dates.size)
    keep = rng.random(dates.size) < 0.3
    keep[[0, -1]] = True
    path = tmp_path / "daily.csv"
    pd.DataFrame({"date": dates[keep].strftime("%Y-%m-%d"), "value": values[keep]}).to_csv(path, index=False)
    return path


@pytest.fixture
def no_store_override(monkeypatch):
    monkeypatch.setattr(settings, "DATABASE_URL_OVERRIDE", None)


def _meta(directory, name):
    return json.loads((directory / f"{name}.meta.json").read_text())


def test_fit_writes_table_and_sidecar(series_csv, tmp_path):
    out = tmp_path / "out"
    assert run_subcommand(["fit", "--input", str(series_csv), "--h", "0.1", "--output-dir", str(out)]) == 0
    frame = pd.read_csv(out / "fit.csv")
    assert list(frame.columns) == ["tau", "estimate", "valid", "observed_probability"]
    assert len(frame) == 150 - 2 * 15 - 1
    meta = _meta(out, "fit")
    assert meta["version"] == __version__
    assert meta["seed"] == settings.DEFAULT_SEED
    assert meta["config"]["h"] == 0.1
    assert meta["outputs"] == ["fit.csv"]


def test_local_linear_fit_reports_slope(series_csv, tmp_path):
    argv = ["fit", "--input", str(series_csv), "--h", "0.1", "--estimator", "local_linear", "--output-dir", str(tmp_path)]
    assert run_subcommand(argv) == 0
    assert "slope" in pd.read_csv(tmp_path / "fit.csv").columns


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["nonsense"],
        ["fit", "--h", "0.1"],
        ["fit", "--input", "missing.csv", "--h", "0.1"],
        ["fit", "--unknown-flag"],
        ["band", "--h", "abc"],
    ],
)
def test_usage_errors_exit_with_one(argv, tmp_path):
    assert run_subcommand(argv + ["--output-dir", str(tmp_path)] if argv else argv) == 1


def test_version_flag_exits_cleanly():
    assert run_subcommand(["--version"]) == 0


def test_bad_data_exits_with_two_and_writes_nothing(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,value\n1,1.0\n2,oops\n")
    out = tmp_path / "out"
    assert run_subcommand(["fit", "--input", str(path), "--h", "0.1", "--output-dir", str(out)]) == 2
    assert not out.exists() or not any(out.iterdir())


def test_band_is_deterministic_and_replayable(series_csv, tmp_path):
    out = tmp_path / "out"
    argv = ["band", "--input", str(series_csv), "--h", "0.1", "--B", "99", "--gamma", "0.5", "--output-dir", str(out)]
    assert run_subcommand(argv) == 0
    first = {name: (out / name).read_bytes() for name in ("pointwise.csv", "simultaneous.csv", "band.meta.json")}
    assert run_subcommand(argv) == 0
    assert first == {name: (out / name).read_bytes() for name in first}

    meta = _meta(out, "band")
    assert meta["results"]["gamma"] == 0.5
    assert 0 < meta["results"]["alpha_s"] <= 0.05
    simultaneous = pd.read_csv(out / "simultaneous.csv")
    assert simultaneous["alpha_s"].iloc[0] == meta["results"]["alpha_s"]

    again = tmp_path / "again"
    assert run_subcommand(["replay", str(out / "band.meta.json"), "--output-dir", str(again)]) == 0
    for name in ("pointwise.csv", "simultaneous.csv"):
        assert (again / name).read_bytes() == first[name]


def test_band_on_coverage_subset(series_csv, tmp_path):
    argv = [
        "band", "--input", str(series_csv), "--h", "0.06", "--B", "49", "--method", "dwb", "--ell", "4",
        "--subset", "G_sub", "--output-dir", str(tmp_path),
    ]
    assert run_subcommand(argv) == 0
    assert len(pd.read_csv(tmp_path / "pointwise.csv")) == 52
    assert len(pd.read_csv(tmp_path / "simultaneous.csv")) <= 26


def test_flags_override_config_file(series_csv, tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"input": str(series_csv), "h": 0.2, "B": 49, "gamma": 0.3}))
    cfg = resolve_config({"config": str(config), "h": 0.1})
    assert (cfg.h, cfg.B, cfg.gamma) == (0.1, 49, 0.3)
    assert cfg.alpha == 0.05

    parsed = vars(build_parser().parse_args(["band", "--config", str(config), "--B", "19"]))
    assert "gamma" not in parsed
    assert resolve_config({k: v for k, v in parsed.items() if k != "command"}).B == 19


def test_unknown_config_key_is_rejected(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"bandwidth": 0.1}))
    assert run_subcommand(["fit", "--config", str(config), "--output-dir", str(tmp_path)]) == 1


def test_mcv_table(series_csv, tmp_path):
    assert run_subcommand(["mcv", "--input", str(series_csv), "--k", "2", "--output-dir", str(tmp_path)]) == 0
    frame = pd.read_csv(tmp_path / "mcv.csv")
    assert list(frame.columns) == ["h", "criterion", "criterion_cv"]
    assert len(frame) == 20
    meta = _meta(tmp_path, "mcv")
    assert meta["results"]["selected_h"] in frame["h"].round(2).tolist()
    assert meta["results"]["k"] == 2


@pytest.mark.parametrize("k, evaluations", [(0, 20), (2, 40)])
def test_mcv_evaluates_each_criterion_once(series_csv, tmp_path, monkeypatch, k, evaluations):
    calls = []
    criterion = estimator.mcv_criterion

    def counted(series, k, h, *args, **kwargs):
        calls.append((k, h))
        return criterion(series, k, h, *args, **kwargs)

    monkeypatch.setattr(estimator, "mcv_criterion", counted)
    monkeypatch.setattr(cli, "mcv_criterion", counted)
    argv = ["mcv", "--input", str(series_csv), "--k", str(k), "--output-dir", str(tmp_path)]
    assert run_subcommand(argv) == 0
    assert len(calls) == evaluations
    assert len(set(calls)) == evaluations
    frame = pd.read_csv(tmp_path / "mcv.csv")
    if k == 0:
        np.testing.assert_array_equal(frame["criterion"], frame["criterion_cv"])


def test_seasonal_outputs(daily_csv, tmp_path):
    argv = [
        "seasonal", "--input", str(daily_csv), "--time-column", "date", "--date-format", "%Y-%m-%d",
        "--max-M", "3", "--residuals-M", "1", "--output-dir", str(tmp_path),
    ]
    assert run_subcommand(argv) == 0
    table = pd.read_csv(tmp_path / "seasonal.csv")
    assert list(table["M"]) == [1, 2, 3]
    assert len(pd.read_csv(tmp_path / "coefficients.csv")) == 6
    residuals = pd.read_csv(tmp_path / "residuals.csv")
    assert len(residuals) == 1095
    assert _meta(tmp_path, "seasonal")["results"]["best_mse"] == 3


def test_unusable_date_format_exits_with_two(daily_csv, tmp_path):
    argv = [
        "periodogram", "--input", str(daily_csv), "--time-column", "date", "--date-format", "%Y-%Q-%d",
        "--output-dir", str(tmp_path / "out"),
    ]
    assert run_subcommand(argv) == 2
    assert not (tmp_path / "out" / "periodogram.csv").exists()


def test_seasonal_needs_a_time_axis(series_csv, tmp_path):
    assert run_subcommand(["seasonal", "--input", str(series_csv), "--output-dir", str(tmp_path)]) == 1


def test_periodogram_peak(daily_csv, tmp_path):
    argv = [
        "periodogram", "--input", str(daily_csv), "--time-column", "date", "--date-format", "%Y-%m-%d",
        "--f-min", "0.5", "--f-max", "2", "--f-step", "0.01", "--output-dir", str(tmp_path),
    ]
    assert run_subcommand(argv) == 0
    frame = pd.read_csv(tmp_path / "periodogram.csv")
    assert len(frame) == 151
    assert abs(_meta(tmp_path, "periodogram")["results"]["peak_frequency"] - 1.0) <= 0.011


def test_simulate_with_store_reuses_reports(tmp_path, no_store_override):
    argv = [
        "simulate", "--n", "100", "--mc-reps", "2", "--B", "39", "--h", "0.06", "--gamma", "0.2",
        "--label", "smoke", "--store", "--output-dir", str(tmp_path),
    ]
    assert run_subcommand(argv) == 0
    first = pd.read_csv(tmp_path / "coverage.csv")
    assert not _meta(tmp_path, "simulate")["results"]["reused"]
    assert first["completed_reps"].iloc[0] + first["dropped_reps"].iloc[0] == 2

    assert run_subcommand(argv) == 0
    assert _meta(tmp_path, "simulate")["results"]["reused"]
    pd.testing.assert_frame_equal(pd.read_csv(tmp_path / "coverage.csv"), first)

    assert run_subcommand(["reports", "--output-dir", str(tmp_path)]) == 0
    reports = pd.read_csv(tmp_path / "reports.csv")
    assert list(reports["label"]) == ["smoke"]
    assert (tmp_path / "trendbands.db").exists()
