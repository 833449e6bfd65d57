"""Render figure panels from innosim batch outputs.

Reads only the simulator's published files (runs.csv, summary.json,
hist_*.csv and the optional timeseries.json) and displays them; nothing is
recomputed from model state.  Invoked as ``render_figure <spec.json>``; each
spec produces one PNG and one SVG.  Output is deterministic for identical
inputs: timestamps are stripped from the SVG metadata and element ids are
derived from a fixed hash salt.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

HASH_SALT = "innoplot"
PNG_DPI = 120

MARKET_SCATTER_COLUMNS = ("ip_nearest_consumer_dist", "ic_mean_producer_dist")
SELFORG_HIST_KEYS = ("fitness_t0", "fitness_tT", "p_diversity_t0",
                     "p_diversity_tT", "n_diversity_t0", "n_diversity_tT")


class SchemaError(Exception):
    """Input file does not match the expected schema; message names the
    file and the offending column or field."""


# --- input readers ---

def _read_json(path: str | Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise SchemaError(f"{path}: cannot read ({e})") from e
    try:
        body = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: not valid JSON ({e})") from e
    return body


def load_spec(path: str | Path) -> dict:
    body = _read_json(path)
    if not isinstance(body, dict):
        raise SchemaError(f"{path}: top level must be an object")
    kind = body.get("kind")
    if kind not in ("market-panel", "selforg-panel"):
        raise SchemaError(
            f"{path}: field 'kind' must be 'market-panel' or 'selforg-panel', "
            f"got {kind!r}")
    if "output" not in body:
        raise SchemaError(f"{path}: missing field 'output'")
    required = ("runs_csv", "summary_json") if kind == "market-panel" \
        else ("summary_json",)
    for key in required:
        if key not in body:
            raise SchemaError(f"{path}: missing field '{key}'")
    return body


def read_runs_csv(path: str | Path) -> list[dict]:
    try:
        f = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise SchemaError(f"{path}: cannot read ({e})") from e
    with f:
        reader = csv.DictReader(f)
        cols = reader.fieldnames or []
        for col in ("run_index", "seed", "g_or_s", "flags"):
            if col not in cols:
                raise SchemaError(f"{path}: missing column '{col}'")
        rows = list(reader)
    for row in rows:
        if row["g_or_s"] not in ("", None):
            try:
                float(row["g_or_s"])
            except ValueError:
                raise SchemaError(
                    f"{path}: column 'g_or_s' has non-numeric value "
                    f"{row['g_or_s']!r}") from None
    return rows


def read_summary(path: str | Path) -> dict:
    body = _read_json(path)
    for key in ("scenario", "metrics", "histograms"):
        if key not in body:
            raise SchemaError(f"{path}: missing field '{key}'")
    return body


def read_hist_csv(path: str | Path) -> dict:
    """A histogram as {'bin_edges': [...], 'counts': [...]}."""
    try:
        f = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise SchemaError(f"{path}: cannot read ({e})") from e
    with f:
        reader = csv.DictReader(f)
        cols = reader.fieldnames or []
        for col in ("bin_lo", "bin_hi", "count"):
            if col not in cols:
                raise SchemaError(f"{path}: missing column '{col}'")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no histogram rows")
    try:
        edges = [float(r["bin_lo"]) for r in rows] + [float(rows[-1]["bin_hi"])]
        counts = [int(r["count"]) for r in rows]
    except ValueError as e:
        raise SchemaError(f"{path}: non-numeric histogram cell ({e})") from e
    return {"bin_edges": edges, "counts": counts}


def read_timeseries(path: str | Path) -> list[dict]:
    body = _read_json(path)
    if not isinstance(body, list) or not body:
        raise SchemaError(f"{path}: expected a non-empty list of runs")
    first = body[0]
    for key in ("cash", "satisfaction"):
        if key not in first:
            raise SchemaError(f"{path}: missing field '{key}'")
    return body


def _summary_hist(summary: dict, summary_path, name: str) -> dict:
    hists = summary["histograms"]
    if name not in hists:
        raise SchemaError(f"{summary_path}: missing histogram '{name}'")
    h = hists[name]
    for key in ("bin_edges", "counts"):
        if key not in h:
            raise SchemaError(
                f"{summary_path}: histogram '{name}' missing field '{key}'")
    return h


def _scenario_field(summary: dict, key: str, default=None):
    """A scalar from the scenario echo's flat config text."""
    text = summary.get("scenario", {}).get("config_text", "")
    for line in text.splitlines():
        if "=" in line:
            k, v = (s.strip() for s in line.split("=", 1))
            if k == key:
                return v
    return default


# --- drawing helpers ---

def _draw_hist(ax, hist: dict, title: str, color: str) -> None:
    edges, counts = hist["bin_edges"], hist["counts"]
    widths = [hi - lo for lo, hi in zip(edges[:-1], edges[1:])]
    ax.bar(edges[:-1], counts, width=widths, align="edge",
           color=color, edgecolor="black", linewidth=0.4)
    ax.set_title(title, fontsize=9)
    ax.tick_params(labelsize=7)


def _annotate_missing(ax, message: str) -> None:
    ax.text(0.5, 0.5, message, ha="center", va="center",
            fontsize=10, color="dimgray", transform=ax.transAxes)
    ax.set_xticks([])
    ax.set_yticks([])


# --- panels ---

def render_market_panel(spec: dict, spec_path) -> plt.Figure:
    rows = read_runs_csv(spec["runs_csv"])
    summary = read_summary(spec["summary_json"])
    series = None
    if spec.get("timeseries_json"):
        series = read_timeseries(spec["timeseries_json"])

    fig, axes = plt.subplots(2, 2, figsize=(10, 8))
    name = summary["scenario"].get("name", "")
    fig.suptitle(name, fontsize=12)
    ul, ur, ll, lr = axes[0][0], axes[0][1], axes[1][0], axes[1][1]

    t_innov = _scenario_field(summary, "t_innov")
    if series is not None:
        run = series[0]
        cash = run["cash"]  # [t][producer]
        steps = range(len(cash))
        innovators = set(run.get("innovator_slots", []))
        n_producers = len(cash[0])
        for i in range(n_producers):
            traj = [row[i] for row in cash]
            if i in innovators:
                ul.plot(steps, traj, color="black", linewidth=2.2, zorder=3,
                        label="innovator" if i == min(innovators) else None)
            else:
                ul.plot(steps, traj, color="lightsteelblue", linewidth=0.5,
                        zorder=1)
        if innovators:
            ul.legend(fontsize=8)
        sat = run["satisfaction"]
        mean_sat = [sum(row) / len(row) for row in sat]
        ur.plot(range(len(sat)), mean_sat, color="darkred", linewidth=1.2)
        if t_innov is not None:
            for ax in (ul, ur):
                ax.axvline(float(t_innov), color="gray", linestyle=":",
                           linewidth=0.8)
    else:
        _annotate_missing(ul, "time series not recorded")
        _annotate_missing(ur, "time series not recorded")
    ul.set_title("producer cash (innovator in bold)", fontsize=9)
    ur.set_title("mean consumer satisfaction", fontsize=9)
    ul.set_xlabel("step", fontsize=8)
    ur.set_xlabel("step", fontsize=8)

    # efficiency vs distance scatter, using whichever distance the model
    # reported (consumer distance for producer-side runs, producer distance
    # for need-adaptation runs)
    scatter_col = None
    for col in MARKET_SCATTER_COLUMNS:
        if col in rows[0] and any(r[col] != "" for r in rows):
            scatter_col = col
            break
    if scatter_col is None:
        raise SchemaError(
            f"{spec['runs_csv']}: no populated distance column among "
            f"{MARKET_SCATTER_COLUMNS}")
    pts = [(float(r[scatter_col]), float(r["g_or_s"])) for r in rows
           if r[scatter_col] != "" and r["g_or_s"] != ""]
    ll.scatter([p[0] for p in pts], [p[1] for p in pts], s=9,
               color="steelblue", alpha=0.7)
    ll.set_xlabel(scatter_col, fontsize=8)
    ll.set_ylabel("efficiency", fontsize=8)
    corr = next((c for c in summary.get("correlations", [])
                 if c.get("covariate") == scatter_col), None)
    title = "efficiency vs distance"
    if corr and corr.get("r") is not None:
        title += f"  (r = {corr['r']:+.3f})"
    ll.set_title(title, fontsize=9)

    hist_name = "hist_s" if "hist_s" in summary["histograms"] else "hist_g"
    _draw_hist(lr, _summary_hist(summary, spec["summary_json"], hist_name),
               f"efficiency histogram ({hist_name[5:]})", "seagreen")
    for ax in (ul, ur, ll, lr):
        ax.tick_params(labelsize=7)
    fig.tight_layout(rect=(0, 0, 1, 0.96))
    return fig


def render_selforg_panel(spec: dict, spec_path) -> plt.Figure:
    summary = read_summary(spec["summary_json"])
    hist_paths = spec.get("histograms")
    hists = {}
    if hist_paths is not None:
        for key in SELFORG_HIST_KEYS:
            if key not in hist_paths:
                raise SchemaError(f"{spec_path}: histograms missing field '{key}'")
            hists[key] = read_hist_csv(hist_paths[key])
    else:
        for key in SELFORG_HIST_KEYS:
            hists[key] = _summary_hist(summary, spec["summary_json"],
                                       f"hist_{key}")
    fig, axes = plt.subplots(3, 2, figsize=(9, 10))
    fig.suptitle(summary["scenario"].get("name", ""), fontsize=12)
    layout = [
        ("fitness_t0", "fitness at t = 0", "goldenrod"),
        ("fitness_tT", "fitness at t = T", "goldenrod"),
        ("p_diversity_t0", "P-string pairwise distances, t = 0", "steelblue"),
        ("p_diversity_tT", "P-string pairwise distances, t = T", "steelblue"),
        ("n_diversity_t0", "N-string pairwise distances, t = 0", "indianred"),
        ("n_diversity_tT", "N-string pairwise distances, t = T", "indianred"),
    ]
    for ax, (key, title, color) in zip(axes.flat, layout):
        _draw_hist(ax, hists[key], title, color)
    fig.tight_layout(rect=(0, 0, 1, 0.96))
    return fig


# --- entry point ---

def render(spec_path: str | Path) -> list[Path]:
    spec = load_spec(spec_path)
    plt.rcParams["svg.hashsalt"] = HASH_SALT
    if spec["kind"] == "market-panel":
        fig = render_market_panel(spec, spec_path)
    else:
        fig = render_selforg_panel(spec, spec_path)
    stem = Path(spec["output"])
    if stem.suffix.lower() in (".png", ".svg"):
        stem = stem.with_suffix("")
    stem.parent.mkdir(parents=True, exist_ok=True)
    png, svg = stem.with_suffix(".png"), stem.with_suffix(".svg")
    fig.savefig(png, dpi=PNG_DPI)
    fig.savefig(svg, metadata={"Date": None})
    plt.close(fig)
    return [png, svg]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render_figure",
        description="Render a figure panel from simulator batch outputs")
    parser.add_argument("spec", help="path to a figure spec JSON file")
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    try:
        written = render(args.spec)
    except SchemaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    for p in written:
        print(f"wrote {p}")
    return 0


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
