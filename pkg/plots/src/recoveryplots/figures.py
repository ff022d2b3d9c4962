"""Figure rendering from recoverysim CSV outputs.

Five figure kinds, all read-only over the CSVs:
  fig2    - empirical CDF of user throughput per HARQ mode / BLER series
  fig3    - average user throughput vs residual error rate (log x)
  fig4    - average per-packet throughput vs residual error rate (log x)
  delay   - average user throughput vs network delay
  contour - (p_na, p_da) throughput-degradation matrix with the 5% iso-line
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGURE_KINDS = ("fig2", "fig3", "fig4", "delay", "contour")

DEGRADATION_THRESHOLD_PCT = 5.0


class FigureError(Exception):
    """Missing input, empty data, or absent columns."""


@dataclass
class FigureSpec:
    kind: str
    input_csv: Path
    output_png: Path
    threshold_pct: float = DEGRADATION_THRESHOLD_PCT

    def validate(self) -> None:
        if self.kind not in FIGURE_KINDS:
            raise FigureError(f"unknown figure kind {self.kind!r}")
        if not Path(self.input_csv).exists():
            raise FigureError(f"input CSV not found: {self.input_csv}")


def _read_rows(path: Path, required: tuple) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise FigureError(
                f"{path}: missing required columns {', '.join(missing)}"
            )
        rows = list(reader)
    if not rows:
        raise FigureError(f"{path}: no data rows")
    return rows


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def render_fig2(spec: FigureSpec):
    """User-throughput CDF, one line per (harq_mode, p_e) series."""
    rows = _read_rows(spec.input_csv, ("harq_mode", "value", "user_tput_mbps", "agg"))
    series: dict = {}
    for row in rows:
        if row["agg"] == "1":
            continue
        key = (row["harq_mode"], row["value"])
        series.setdefault(key, []).append(float(row["user_tput_mbps"]))
    if not series:
        raise FigureError(f"{spec.input_csv}: no per-seed rows for the CDF")
    fig, ax = plt.subplots(figsize=(6, 4))
    for (mode, p_e), values in sorted(series.items()):
        xs = np.sort(values)
        ys = np.arange(1, len(xs) + 1) / len(xs)
        ax.step(xs, ys, where="post", label=f"{mode}, BLER {p_e}")
    ax.set_xlabel("User throughput (Mbps)")
    ax.set_ylabel("Empirical CDF")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, spec.output_png)


def _tput_vs_residual(spec: FigureSpec, column: str, ylabel: str):
    rows = _read_rows(
        spec.input_csv, ("tcp", "rlc", "analytic_p_re", column, "agg")
    )
    series: dict = {}
    for row in rows:
        if row["agg"] != "1":
            continue
        key = (row["tcp"], row["rlc"])
        series.setdefault(key, []).append(
            (float(row["analytic_p_re"]), float(row[column]))
        )
    if not series:
        raise FigureError(f"{spec.input_csv}: no aggregate rows")
    fig, ax = plt.subplots(figsize=(6, 4))
    for (tcp, rlc), points in sorted(series.items()):
        points.sort()
        xs = [p for p, _ in points]
        ys = [t for _, t in points]
        ax.plot(xs, ys, marker="o", label=f"{tcp.upper()} + RLC {rlc.upper()}")
    ax.set_xscale("log")
    ax.set_xlabel("HARQ residual error rate")
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=8)
    return _save(fig, spec.output_png)


def render_fig3(spec: FigureSpec):
    """Average user throughput vs residual error rate."""
    return _tput_vs_residual(spec, "user_tput_mbps", "Average user throughput (Mbps)")


def render_fig4(spec: FigureSpec):
    """Average throughput per FTP packet vs residual error rate."""
    return _tput_vs_residual(
        spec, "pkt_tput_mbps", "Average throughput per FTP packet (Mbps)"
    )


def render_delay(spec: FigureSpec):
    """Average user throughput vs network delay, per RLC mode and residual point."""
    rows = _read_rows(
        spec.input_csv, ("rlc", "p_re_target", "value", "user_tput_mbps", "agg")
    )
    series: dict = {}
    for row in rows:
        if row["agg"] != "1":
            continue
        key = (row["rlc"], row["p_re_target"])
        series.setdefault(key, []).append(
            (float(row["value"]), float(row["user_tput_mbps"]))
        )
    if not series:
        raise FigureError(f"{spec.input_csv}: no aggregate rows")
    fig, ax = plt.subplots(figsize=(6, 4))
    for (rlc, target), points in sorted(series.items()):
        points.sort()
        label = f"RLC {rlc.upper()}, P_re {target}"
        ax.plot([p for p, _ in points], [t for _, t in points], marker="s", label=label)
    ax.set_xlabel("Network delay (ms)")
    ax.set_ylabel("Average user throughput (Mbps)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, spec.output_png)


def load_grid_matrix(path: Path):
    """Degradation matrix CSV: row header p_na, column headers p_da."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3 or len(rows[0]) < 3:
        raise FigureError(f"{path}: degradation matrix needs at least 2x2 cells")
    try:
        p_da = np.array([float(v) for v in rows[0][1:]])
        p_na = np.array([float(r[0]) for r in rows[1:]])
        cells = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    except ValueError as exc:
        raise FigureError(f"{path}: malformed matrix value: {exc}") from exc
    return p_na, p_da, cells


def render_contour(spec: FigureSpec):
    """Filled degradation contour; the region at or below the threshold is
    left white and the threshold iso-line is drawn on top."""
    p_na, p_da, cells = load_grid_matrix(spec.input_csv)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    thr = spec.threshold_pct
    top = max(float(np.nanmax(cells)), thr + 1.0)
    levels = [thr] + [thr + (top - thr) * f for f in (0.25, 0.5, 0.75, 1.0)]
    filled = ax.contourf(p_da, p_na, cells, levels=levels, cmap="OrRd", extend="max")
    iso = ax.contour(
        p_da, p_na, cells, levels=[thr], colors="black", linewidths=1.5
    )
    ax.clabel(iso, fmt=lambda _: f"{thr:g}%")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("DTX-to-ACK error probability")
    ax.set_ylabel("NACK-to-ACK error probability")
    fig.colorbar(filled, ax=ax, label="Throughput degradation (%)")
    out = _save(fig, spec.output_png)
    return out, iso


RENDERERS = {
    "fig2": render_fig2,
    "fig3": render_fig3,
    "fig4": render_fig4,
    "delay": render_delay,
    "contour": render_contour,
}

DEFAULT_INPUTS = {
    "fig2": "harq_vs_l1arq_raw.csv",
    "fig3": "residual_sweep_agg.csv",
    "fig4": "residual_sweep_agg.csv",
    "delay": "delay_sweep_agg.csv",
    "contour": "degradation_grid_matrix.csv",
}


def render(spec: FigureSpec):
    """Render one figure; returns the output path."""
    spec.validate()
    result = RENDERERS[spec.kind](spec)
    return result[0] if isinstance(result, tuple) else result
