"""Tests for the figure renderer: panel outputs, degraded mode, schema
errors that name the offending file and column, and deterministic output."""

import json
from pathlib import Path

import pytest

from innoplot.render import (SchemaError, load_spec, main, read_hist_csv,
                             read_runs_csv, read_summary, render)
from innosim.harness import (apply_overrides, builtin_catalog,
                             run_batch_records, summarize, write_reports,
                             write_timeseries)

SELFORG_KEYS = ("fitness_t0", "fitness_tT", "p_diversity_t0",
                "p_diversity_tT", "n_diversity_t0", "n_diversity_tT")


@pytest.fixture(scope="module")
def market_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("market")
    cfg = apply_overrides(builtin_catalog()["moi-volatile-one"],
                          {"runs": "4", "t_innov": "10", "t_end": "60"})
    recs = run_batch_records(cfg, jobs=1, record_timeseries=True)
    write_reports(out, cfg, recs, summarize(cfg, recs))
    write_timeseries(out, recs)
    return out


@pytest.fixture(scope="module")
def society_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("society")
    cfg = apply_overrides(builtin_catalog()["selforg-pn"],
                          {"runs": "2", "horizon": "40"})
    recs = run_batch_records(cfg, jobs=1)
    write_reports(out, cfg, recs, summarize(cfg, recs))
    return out


def write_spec(path: Path, **body) -> Path:
    path.write_text(json.dumps(body), encoding="utf-8")
    return path


def market_spec(market_dir, tmp_path, *, timeseries=True, **extra) -> Path:
    body = {"kind": "market-panel",
            "runs_csv": str(market_dir / "runs.csv"),
            "summary_json": str(market_dir / "summary.json"),
            "output": str(tmp_path / "fig" / "market")}
    if timeseries:
        body["timeseries_json"] = str(market_dir / "timeseries.json")
    body.update(extra)
    return write_spec(tmp_path / "spec.json", **body)


def society_spec(society_dir, tmp_path, *, csv_hists=True, **extra) -> Path:
    body = {"kind": "selforg-panel",
            "summary_json": str(society_dir / "summary.json"),
            "output": str(tmp_path / "fig" / "society")}
    if csv_hists:
        body["histograms"] = {k: str(society_dir / f"hist_{k}.csv")
                              for k in SELFORG_KEYS}
    body.update(extra)
    return write_spec(tmp_path / "spec.json", **body)


class TestMarketPanel:
    def test_writes_png_and_svg(self, market_dir, tmp_path):
        written = render(market_spec(market_dir, tmp_path))
        assert [p.suffix for p in written] == [".png", ".svg"]
        for p in written:
            assert p.exists() and p.stat().st_size > 0

    def test_innovator_series_emphasized(self, market_dir, tmp_path):
        render(market_spec(market_dir, tmp_path))
        svg = (tmp_path / "fig" / "market.svg").read_text(encoding="utf-8")
        assert "innovator" in svg  # legend label for the bold trajectory

    def test_degraded_without_timeseries(self, market_dir, tmp_path):
        render(market_spec(market_dir, tmp_path, timeseries=False))
        svg = (tmp_path / "fig" / "market.svg").read_text(encoding="utf-8")
        assert "time series not recorded" in svg

    def test_output_extension_stripped(self, market_dir, tmp_path):
        spec = market_spec(market_dir, tmp_path,
                           output=str(tmp_path / "fig" / "panel.png"))
        written = render(spec)
        assert {p.name for p in written} == {"panel.png", "panel.svg"}

    def test_deterministic_svg(self, market_dir, tmp_path):
        spec = market_spec(market_dir, tmp_path)
        render(spec)
        first = (tmp_path / "fig" / "market.svg").read_bytes()
        render(spec)
        assert (tmp_path / "fig" / "market.svg").read_bytes() == first


class TestSelfOrgPanel:
    def test_from_hist_csvs(self, society_dir, tmp_path):
        written = render(society_spec(society_dir, tmp_path))
        assert all(p.exists() for p in written)

    def test_from_summary_fallback(self, society_dir, tmp_path):
        written = render(society_spec(society_dir, tmp_path, csv_hists=False))
        assert all(p.exists() for p in written)

    def test_csv_and_summary_sources_agree(self, society_dir, tmp_path):
        # batch hist_*.csv files carry the same histograms as summary.json
        summary = read_summary(society_dir / "summary.json")
        for key in SELFORG_KEYS:
            h = read_hist_csv(society_dir / f"hist_{key}.csv")
            assert h["counts"] == list(summary["histograms"][f"hist_{key}"]["counts"])

    def test_incomplete_histogram_map_rejected(self, society_dir, tmp_path):
        spec = society_spec(society_dir, tmp_path)
        body = json.loads(spec.read_text())
        del body["histograms"]["n_diversity_tT"]
        spec.write_text(json.dumps(body))
        with pytest.raises(SchemaError, match="n_diversity_tT"):
            render(spec)


class TestSchemaErrors:
    def test_unknown_kind(self, tmp_path):
        spec = write_spec(tmp_path / "s.json", kind="pie", output="x")
        with pytest.raises(SchemaError, match="kind"):
            load_spec(spec)

    def test_missing_output(self, tmp_path):
        spec = write_spec(tmp_path / "s.json", kind="market-panel",
                          runs_csv="a", summary_json="b")
        with pytest.raises(SchemaError, match="output"):
            load_spec(spec)

    def test_spec_not_json(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text("{not json")
        with pytest.raises(SchemaError, match=str(p)):
            load_spec(p)

    def test_runs_csv_missing_column(self, market_dir, tmp_path):
        src = (market_dir / "runs.csv").read_text().splitlines()
        bad = tmp_path / "runs.csv"
        header = src[0].replace("g_or_s", "gg")
        bad.write_text("\n".join([header] + src[1:]) + "\n")
        with pytest.raises(SchemaError) as err:
            read_runs_csv(bad)
        assert "runs.csv" in str(err.value) and "g_or_s" in str(err.value)

    def test_runs_csv_non_numeric(self, market_dir, tmp_path):
        src = (market_dir / "runs.csv").read_text().splitlines()
        cols = src[0].split(",")
        row = src[1].split(",")
        row[cols.index("g_or_s")] = "oops"
        bad = tmp_path / "runs.csv"
        bad.write_text("\n".join([src[0], ",".join(row)]) + "\n")
        with pytest.raises(SchemaError, match="g_or_s"):
            read_runs_csv(bad)

    def test_summary_missing_field(self, tmp_path):
        p = write_spec(tmp_path / "summary.json", scenario={}, metrics={})
        with pytest.raises(SchemaError) as err:
            read_summary(p)
        assert "histograms" in str(err.value) and "summary.json" in str(err.value)

    def test_hist_csv_bad_header(self, tmp_path):
        p = tmp_path / "hist.csv"
        p.write_text("lo,hi,count\n0.0,1.0,3\n")
        with pytest.raises(SchemaError, match="bin_lo"):
            read_hist_csv(p)

    def test_missing_input_file(self, tmp_path):
        with pytest.raises(SchemaError, match="nowhere.csv"):
            read_runs_csv(tmp_path / "nowhere.csv")


class TestCli:
    def test_ok_exit_zero(self, market_dir, tmp_path, capsys):
        assert main([str(market_spec(market_dir, tmp_path))]) == 0
        out = capsys.readouterr().out
        assert "market.png" in out and "market.svg" in out

    def test_schema_error_exit_two(self, market_dir, tmp_path, capsys):
        spec = market_spec(market_dir, tmp_path,
                           runs_csv=str(tmp_path / "absent.csv"))
        assert main([str(spec)]) == 2
        err = capsys.readouterr().err
        assert "absent.csv" in err

    def test_bad_kind_exit_two_names_field(self, tmp_path, capsys):
        spec = write_spec(tmp_path / "s.json", kind="nope", output="x")
        assert main([str(spec)]) == 2
        assert "kind" in capsys.readouterr().err
