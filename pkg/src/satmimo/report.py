"""Run output files: metrics.json, CSV time series, and rendered figures.

JSON carries the structured reports, CSV the series (plot-tool
agnostic), and the figures directory holds rendered PNGs of the same
data.  metrics.json lists every written file in its manifest section;
all writers are deterministic so reruns are file-hash identical.
"""

from __future__ import annotations

import json
import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .config import RunManifest, emit_scenario
from .csi import write_replay as csi_write_replay
from .engine import MetricsReport, ModeComparison
from .scenario import Scenario


def _write_csv(path: str, header: list, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_run_outputs(out_dir: str, manifest: RunManifest, scenario: Scenario,
                      reports: dict, comparison: ModeComparison | None,
                      figures: bool = True, diagnostics: list | None = None) -> dict:
    """Write all artifacts for a set of runs; returns the metrics document."""
    os.makedirs(out_dir, exist_ok=True)
    os.makedirs(os.path.join(out_dir, "timeseries"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "constellations"), exist_ok=True)
    if figures:
        os.makedirs(os.path.join(out_dir, "figures"), exist_ok=True)
    files: list = []

    for mode, report in reports.items():
        tag = mode.replace("-", "_")
        files.append(_write_mer_csv(out_dir, tag, report))
        files.append(_write_pll_csv(out_dir, tag, report))
        files.append(_write_offsets_csv(out_dir, tag, report))
        files.extend(_write_constellations_csv(out_dir, tag, report))
        if report.residual is not None:
            rp = _write_residual_series_csv(out_dir, tag, report)
            if rp:
                files.append(rp)
        if report.csi_snapshots:
            path = os.path.join(out_dir, f"csi_replay_{tag}.json")
            csi_write_replay(path, report.csi_snapshots)
            files.append(os.path.relpath(path, out_dir))

    hist_report = _residual_report(reports)
    if hist_report is not None:
        path = os.path.join(out_dir, "residual_phase_hist.csv")
        stats = hist_report.residual
        _write_csv(
            path,
            ["bin_left_deg", "bin_right_deg", "probability"],
            zip(stats.hist_edges_deg[:-1], stats.hist_edges_deg[1:], stats.hist_probs),
        )
        files.append(os.path.relpath(path, out_dir))

    if figures:
        files.extend(render_figures(out_dir, reports))

    doc = {
        "tool_version": manifest.tool_version,
        "config_hash": manifest.config_hash,
        "run_manifest": manifest.to_json_dict(),
        "scenario": emit_scenario(scenario),
        "runs": {mode: r.to_json_dict() for mode, r in reports.items()},
        "comparison": comparison.to_json_dict() if comparison else None,
        "diagnostics": diagnostics or [],
        "manifest": {"files": sorted(files) + ["metrics.json"]},
    }
    with open(os.path.join(out_dir, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc


def _write_mer_csv(out_dir: str, tag: str, report: MetricsReport) -> str:
    path = os.path.join(out_dir, "timeseries", f"mer_{tag}.csv")
    rows = []
    for w in report.windows:
        for k, mer in enumerate(w.mer_db):
            rows.append([w.t_s, k, mer, int(w.stable), w.decoded_stream[k],
                         int(w.decode_ok[k]), w.precoder_mode])
    _write_csv(path, ["t_s", "ut", "mer_db", "stable", "decoded_stream", "decode_ok",
                      "precoder_mode"], rows)
    return os.path.relpath(path, out_dir)


def _write_pll_csv(out_dir: str, tag: str, report: MetricsReport) -> str:
    path = os.path.join(out_dir, "timeseries", f"pll_offsets_{tag}.csv")
    tl = report.pll_timeline
    rows = []
    for i, t in enumerate(tl["t_s"]):
        for n, (est, true) in enumerate(zip(tl["est_offset_hz"][i], tl["true_offset_hz"][i])):
            rows.append([t, n, est, true])
    _write_csv(path, ["t_s", "sat", "est_offset_hz", "true_offset_hz"], rows)
    return os.path.relpath(path, out_dir)


def _write_offsets_csv(out_dir: str, tag: str, report: MetricsReport) -> str:
    path = os.path.join(out_dir, "timeseries", f"impairment_offsets_{tag}.csv")
    tl = report.offsets_timeline
    keys = [k for k in tl.keys() if k != "t_s"]
    rows = []
    for i, t in enumerate(tl["t_s"]):
        rows.append([t] + [tl[k][i] for k in keys])
    _write_csv(path, ["t_s"] + keys, rows)
    return os.path.relpath(path, out_dir)


def _write_constellations_csv(out_dir: str, tag: str, report: MetricsReport) -> list:
    out = []
    for k, symbols in report.constellations.items():
        path = os.path.join(out_dir, "constellations", f"{tag}_ut{k + 1}.csv")
        _write_csv(path, ["re", "im"], ([float(s.real), float(s.imag)] for s in symbols))
        out.append(os.path.relpath(path, out_dir))
    return out


def _write_residual_series_csv(out_dir: str, tag: str, report: MetricsReport) -> str | None:
    stats = report.residual
    if stats.n_decimated == 0 or report.residual_t0_s is None:
        return None
    path = os.path.join(out_dir, "timeseries", f"residual_phase_{tag}.csv")
    t0 = report.residual_t0_s
    stride = report.residual_stride_s or 0.0
    rows = ([t0 + i * stride, float(v)] for i, v in enumerate(stats.samples_deg))
    _write_csv(path, ["t_s", "deg"], rows)
    return os.path.relpath(path, out_dir)


def _residual_report(reports: dict) -> MetricsReport | None:
    for mode in ("mimo-precoded", "siso", "uncoordinated-ffr"):
        r = reports.get(mode)
        if r is not None and r.residual is not None and r.residual.n > 0:
            return r
    return None


# ---- figures ------------------------------------------------------------------


def render_figures(out_dir: str, reports: dict) -> list:
    """Render PNG figures next to the delimited output; returns written paths."""
    files = []
    hist_report = _residual_report(reports)
    if hist_report is not None:
        files.append(_fig_residual_hist(out_dir, hist_report))
    for mode, report in reports.items():
        tag = mode.replace("-", "_")
        if report.constellations:
            files.append(_fig_constellations(out_dir, tag, report))
        if report.windows:
            files.append(_fig_mer_timeline(out_dir, tag, report))
        if report.pll_timeline["t_s"]:
            files.append(_fig_pll_offsets(out_dir, tag, report))
    return files


def _save(fig, out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, "figures", name)
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return os.path.relpath(path, out_dir)


def _fig_residual_hist(out_dir: str, report: MetricsReport) -> str:
    stats = report.residual
    fig, ax = plt.subplots(figsize=(6, 4))
    centers = 0.5 * (stats.hist_edges_deg[:-1] + stats.hist_edges_deg[1:])
    width = stats.hist_edges_deg[1] - stats.hist_edges_deg[0]
    ax.bar(centers, stats.hist_probs, width=width, color="#0072BD", alpha=0.6,
           edgecolor="black", linewidth=0.3)
    if stats.std_deg > 0:
        x = np.linspace(stats.hist_edges_deg[0], stats.hist_edges_deg[-1], 400)
        pdf = (width / (stats.std_deg * math.sqrt(2 * math.pi))
               * np.exp(-0.5 * ((x - stats.mean_deg) / stats.std_deg) ** 2))
        ax.plot(x, pdf, "k--", linewidth=1.2, label="Gaussian fit")
        ax.legend(loc="upper left", fontsize=9)
    ax.annotate(f"STD: {stats.std_deg:.4f}", xy=(0.97, 0.92), xycoords="axes fraction",
                ha="right", fontsize=11)
    ax.set_xlabel("residual inter-satellite phase (deg)")
    ax.set_ylabel("probability")
    span = max(5.0, 5.0 * stats.std_deg)
    ax.set_xlim(-span, span)
    fig.tight_layout()
    return _save(fig, out_dir, "residual_phase_hist.png")


def _fig_constellations(out_dir: str, tag: str, report: MetricsReport) -> str:
    n_ut = len(report.constellations)
    fig, axes = plt.subplots(1, n_ut, figsize=(4 * n_ut, 4), squeeze=False)
    for k, symbols in sorted(report.constellations.items()):
        ax = axes[0][k]
        ax.scatter(np.real(symbols), np.imag(symbols), s=2, color="#0072BD", alpha=0.5)
        ax.set_title(f"UT-{k + 1} ({report.mode})", fontsize=10)
        ax.set_xlabel("I")
        ax.set_ylabel("Q")
        ax.set_aspect("equal")
        lim = 1.8
        ax.set_xlim(-lim, lim)
        ax.set_ylim(-lim, lim)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_dir, f"constellations_{tag}.png")


def _fig_mer_timeline(out_dir: str, tag: str, report: MetricsReport) -> str:
    fig, ax = plt.subplots(figsize=(7, 4))
    t = [w.t_s for w in report.windows]
    n_ut = len(report.windows[0].mer_db)
    for k in range(n_ut):
        ax.plot(t, [w.mer_db[k] for w in report.windows], linewidth=1.0,
                label=f"UT-{k + 1}")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("MER (dB)")
    ax.set_title(f"per-window MER, {report.mode}", fontsize=10)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=9)
    fig.tight_layout()
    return _save(fig, out_dir, f"mer_timeline_{tag}.png")


def _fig_pll_offsets(out_dir: str, tag: str, report: MetricsReport) -> str:
    tl = report.pll_timeline
    t = tl["t_s"]
    est = np.asarray(tl["est_offset_hz"])
    true = np.asarray(tl["true_offset_hz"])
    fig, ax = plt.subplots(figsize=(7, 4))
    for n in range(est.shape[1]):
        ax.plot(t, est[:, n], linewidth=1.0, label=f"sat {n + 1} estimate")
        ax.plot(t, true[:, n], "--", linewidth=0.8, label=f"sat {n + 1} actual")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("chain frequency offset (Hz)")
    ax.set_title(f"reference-tone tracking, {report.mode}", fontsize=10)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, out_dir, f"pll_offsets_{tag}.png")
