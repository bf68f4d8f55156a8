"""Report serialization: deterministic JSON documents and flat CSV tables.

Report files are pure functions of (config, seeds): floats are written with
shortest round-trip repr and keys in a fixed order, so reruns are comparable
byte for byte.  Wall-clock timing never enters these files (it lives in the
run manifest).
"""

from __future__ import annotations

import json
import math
import os

from .analysis import StatReport

REPORT_SUFFIX = ".report.json"


def report_json_text(report: StatReport) -> str:
    return json.dumps(report.payload(), indent=2, sort_keys=True) + "\n"


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_csv_text(rows: list[dict]) -> str:
    """CSV with the column order of the first row (insertion order is frozen)."""
    if not rows:
        return "\n"
    header = list(rows[0].keys())
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(row.get(col, "")) for col in header))
    return "\n".join(lines) + "\n"


def write_report(report: StatReport, out_dir: str) -> list[str]:
    """Write <experiment>.report.json and <experiment>.csv; returns filenames."""
    files = []
    jpath = os.path.join(out_dir, report.experiment + REPORT_SUFFIX)
    with open(jpath, "w", encoding="utf-8") as fh:
        fh.write(report_json_text(report))
    files.append(os.path.basename(jpath))
    cpath = os.path.join(out_dir, report.experiment + ".csv")
    with open(cpath, "w", encoding="utf-8") as fh:
        fh.write(rows_csv_text(report.rows))
    files.append(os.path.basename(cpath))
    return files


def load_report_payload(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _with_log_n(rows: list[dict], keep: list[str]) -> list[dict]:
    out = []
    for row in rows:
        plot_row = {"n": row["n"], "log_n": math.log(row["n"])}
        plot_row.update({k: row[k] for k in keep if k in row})
        out.append(plot_row)
    return out


# Plot-ready projections per experiment: x = log n plus estimate/error columns.
_PLOT_COLUMNS = {
    "variance": ["estimate", "stderr", "target", "rel_error"],
    "normality": ["ks_stat", "ks_pvalue", "ad_stat", "ad_pvalue"],
    "truncation": ["touch_freq", "touch_se", "drift", "drift_envelope"],
    "lemmas": ["origin_lt_over_log", "origin_lt_se", "intersection_over_n",
               "intersection_se", "max_site_lt_over_log"],
}


def emit_plots(report_dir: str, out_dir: str | None = None) -> list[str]:
    """Write plot-ready CSVs from the report JSONs in ``report_dir``.

    Raises FileNotFoundError listing the expected files when none are present.
    """
    names = sorted(f for f in os.listdir(report_dir) if f.endswith(REPORT_SUFFIX))
    if not names:
        raise FileNotFoundError(
            f"no *{REPORT_SUFFIX} files in {report_dir}; expected per-experiment "
            "reports such as variance" + REPORT_SUFFIX
        )
    out_dir = out_dir or os.path.join(report_dir, "plots")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name in names:
        payload = load_report_payload(os.path.join(report_dir, name))
        exp = payload["experiment"]
        if exp in _PLOT_COLUMNS:
            plot_rows = _with_log_n(payload["rows"], _PLOT_COLUMNS[exp])
        elif exp == "covariance":
            plot_rows = [{"s": r["s"], "t": r["t"], "cov": r["cov"],
                          "stderr": r["stderr"], "target": r["target"],
                          "ratio": r["ratio"]} for r in payload["rows"]]
        elif exp == "concentration":
            # long format keyed by (n, scenery_seed), plus a per-n summary
            plot_rows = [{"n": r["n"], "log_n": math.log(r["n"]),
                          "scenery_seed": r["scenery_seed"],
                          "quenched_mean": r["quenched_mean"],
                          "quenched_se": r["quenched_se"]}
                         for r in payload["rows"]]
            summary_rows = _with_log_n(
                payload["summary"]["per_n"],
                ["spread", "spread_se", "spread_noise_corrected", "noise_floor"])
            spath = os.path.join(out_dir, "concentration_spread_plot.csv")
            with open(spath, "w", encoding="utf-8") as fh:
                fh.write(rows_csv_text(summary_rows))
            written.append(os.path.basename(spath))
        else:
            plot_rows = payload["rows"]
        path = os.path.join(out_dir, f"{exp}_plot.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(rows_csv_text(plot_rows))
        written.append(os.path.basename(path))
        if exp == "lemmas":
            epath = os.path.join(out_dir, "lemmas_exit_plot.csv")
            exit_rows = _with_log_n(payload["summary"]["exit_rows"],
                                    ["exit_prob", "exit_se",
                                     "exit_prob_times_log"])
            with open(epath, "w", encoding="utf-8") as fh:
                fh.write(rows_csv_text(exit_rows))
            written.append(os.path.basename(epath))
    return written
