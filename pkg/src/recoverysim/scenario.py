"""Experiment runner: builds per-seed job matrices for the study families,
executes them on a worker pool, and writes deterministic CSV outputs.

Families:
  residual_sweep   - user/packet throughput vs target residual error rate,
                     all TCP x RLC combinations
  delay_sweep      - CUBIC throughput vs network delay at fixed residual rates
  harq_vs_l1arq    - combining gain study at configurable channel BLER
  degradation_grid - (p_na, p_da) throughput-degradation matrix without ARQ
  single_run       - one configuration across seeds
"""

from __future__ import annotations

import copy
import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import yaml

from .analytics import (
    degradation_grid,
    log_grid,
    residual_error_approx,
    sweep_error_params,
)
from .harq import HARQ_COMBINING, L1_ARQ, HarqConfig
from .link import ErrorModelParams, LinkConfig
from .metrics import aggregate_seeds
from .rlc import RlcAmConfig, UmConfig
from .simulation import SimConfig, run_simulation
from .tcp import CUBIC, TcpConfig
from .traffic import FtpConfig

RESIDUAL_SWEEP = "residual_sweep"
DELAY_SWEEP = "delay_sweep"
HARQ_VS_L1ARQ = "harq_vs_l1arq"
DEGRADATION_GRID = "degradation_grid"
SINGLE_RUN = "single_run"

EXPERIMENTS = (RESIDUAL_SWEEP, DELAY_SWEEP, HARQ_VS_L1ARQ, DEGRADATION_GRID, SINGLE_RUN)


class ConfigError(Exception):
    """Invalid scenario file, override, or parameter combination."""


DEFAULT_SCENARIO = {
    "experiment": SINGLE_RUN,
    "seeds": 10,
    "seed_base": 1,
    "sim": {
        "sim_seconds": 60.0,
        "warmup_seconds": 4.0,
        "rlc_mode": "am",
        "ul_latency_slots": 2,
        "ul_loss_prob": None,
        "trace_cwnd": False,
    },
    "link": {
        "slot_us": 500,
        "tb_bits": 75_000,
        "combining_gain": 0.95,
    },
    "errors": {
        "p_ch": 0.01,
        "p_e": 0.1,
        "p_na": 0.0,
        "p_da": 0.0,
        "p_an": 0.0,
        "n_max": 6,
    },
    "harq": {
        "n_processes": 8,
        "max_retx": 6,
        "mode": HARQ_COMBINING,
        "feedback_delay_slots": 4,
        "giveup_counts_initial": False,
    },
    "rlc_am": {
        "max_retx": 13,
        "t_poll_retransmit_ms": 25,
        "t_reassembly_ms": 50,
        "sn_bits": 18,
        "poll_pdu_every": 16,
    },
    "um": {"t_reassembly_ms": 50},
    "tcp": {
        "mss_bytes": 1500,
        "init_cwnd_mss": 3,
        "ssthresh_init_mss": 500,
        "variant": "cubic",
        "cubic_beta": 0.2,
        "cubic_c": 0.4,
        "network_delay_ms": 10.0,
        "delay_is_round_trip": False,
        "rto_min_ms": 200,
        "rto_initial_ms": 1000,
        "dupack_threshold": 3,
    },
    "ftp": {
        "file_bytes": 35_000_000,
        "lambda_per_s": 0.25,
        "n_users": 1,
    },
    "residual_sweep": {
        "targets": [2e-6, 1e-5, 5e-5, 8e-5, 1e-3],
        "tcp_variants": ["reno", "cubic"],
        "rlc_modes": ["am", "um"],
        "p_da_default": 1e-3,
    },
    "delay_sweep": {
        "delays_ms": [0, 10, 20, 30, 40, 50],
        "p_re_targets": [2e-6, 8e-5],
        "rlc_modes": ["am", "um"],
        "p_da_default": 1e-3,
    },
    "harq_vs_l1arq": {
        "p_e_points": [0.1, 0.5],
        "modes": [HARQ_COMBINING, L1_ARQ],
    },
    "degradation_grid": {
        "p_na": {"lo": 1e-5, "hi": 1e-1, "n": 7},
        "p_da": {"lo": 1e-5, "hi": 1e-1, "n": 7},
        "seeds": 3,
        "p_ch": 0.01,
        "p_e": 0.1,
        "threshold_pct": 5.0,
    },
    "single_run": {},
}

CSV_COLUMNS = [
    "experiment",
    "sweep_param",
    "value",
    "tcp",
    "rlc",
    "harq_mode",
    "p_re_target",
    "p_na",
    "p_da",
    "seed",
    "agg",
    "user_tput_mbps",
    "pkt_tput_mbps",
    "residual_rate",
    "analytic_p_re",
    "sdu_loss_rate",
    "tb_concluded",
    "tb_lost",
    "files_completed",
    "incomplete_files",
    "user_tput_se",
    "pkt_tput_se",
]


def _merge(dst: dict, src: dict, path: str = "") -> dict:
    for key, value in src.items():
        if key not in dst:
            raise ConfigError(f"unknown configuration key {path + key!r}")
        if isinstance(dst[key], dict) and isinstance(value, dict):
            _merge(dst[key], value, path + key + ".")
        else:
            dst[key] = value
    return dst


def load_scenario(path: str | Path | None) -> dict:
    """Scenario defaults merged with an optional YAML file."""
    resolved = copy.deepcopy(DEFAULT_SCENARIO)
    if path is None:
        return resolved
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except FileNotFoundError as exc:
        raise ConfigError(f"scenario file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse scenario file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("scenario file must contain a mapping")
    return _merge(resolved, data)


def apply_override(resolved: dict, assignment: str) -> None:
    """Apply one `dotted.key=value` command-line override."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = float(raw)  # accepts 1e-3, which YAML 1.1 reads as a string
        if value.is_integer() and "." not in raw and "e" not in raw.lower():
            value = int(value)
    except ValueError:
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from exc
    node = resolved
    parts = key.split(".")
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            raise ConfigError(f"unknown configuration section {key!r}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown configuration key {key!r}")
    node[parts[-1]] = value


def build_sim_config(resolved: dict, seed: int) -> SimConfig:
    sim = resolved["sim"]
    try:
        cfg = SimConfig(
            sim_seconds=float(sim["sim_seconds"]),
            warmup_seconds=float(sim["warmup_seconds"]),
            master_seed=seed,
            rlc_mode=sim["rlc_mode"],
            link=LinkConfig(**resolved["link"]),
            errors=ErrorModelParams(**resolved["errors"]),
            harq=HarqConfig(**resolved["harq"]),
            rlc_am=RlcAmConfig(**resolved["rlc_am"]),
            um=UmConfig(**resolved["um"]),
            tcp=TcpConfig(**resolved["tcp"]),
            ftp=FtpConfig(**resolved["ftp"]),
            ul_latency_slots=int(sim["ul_latency_slots"]),
            ul_loss_prob=sim["ul_loss_prob"],
            trace_cwnd=bool(sim["trace_cwnd"]),
        )
        cfg.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _seeds(resolved: dict) -> list:
    n = int(resolved["seeds"])
    if n < 1:
        raise ConfigError("seeds must be >= 1")
    base = int(resolved["seed_base"])
    return [base + i for i in range(n)]


# -- job construction -------------------------------------------------------


def _residual_jobs(resolved: dict) -> list:
    spec = resolved[RESIDUAL_SWEEP]
    jobs = []
    skipped = []
    for target in spec["targets"]:
        params = sweep_error_params(
            target,
            p_ch=resolved["errors"]["p_ch"],
            p_e=resolved["errors"]["p_e"],
            p_da_default=spec["p_da_default"],
            n_max=resolved["errors"]["n_max"],
        )
        if params is None:
            skipped.append(target)
            continue
        analytic = residual_error_approx(params)
        for variant in spec["tcp_variants"]:
            for mode in spec["rlc_modes"]:
                for seed in _seeds(resolved):
                    cfg = build_sim_config(resolved, seed)
                    cfg = replace(
                        cfg,
                        rlc_mode=mode,
                        errors=params,
                        tcp=replace(cfg.tcp, variant=variant),
                    )
                    labels = {
                        "sweep_param": "p_re_target",
                        "value": target,
                        "tcp": variant,
                        "rlc": mode,
                        "harq_mode": cfg.harq.mode,
                        "p_re_target": target,
                        "p_na": params.p_na,
                        "p_da": params.p_da,
                        "analytic_p_re": analytic,
                    }
                    jobs.append((labels, cfg))
    return jobs, skipped


def _delay_jobs(resolved: dict) -> list:
    spec = resolved[DELAY_SWEEP]
    jobs = []
    skipped = []
    for target in spec["p_re_targets"]:
        params = sweep_error_params(
            target,
            p_ch=resolved["errors"]["p_ch"],
            p_e=resolved["errors"]["p_e"],
            p_da_default=spec["p_da_default"],
            n_max=resolved["errors"]["n_max"],
        )
        if params is None:
            skipped.append(target)
            continue
        analytic = residual_error_approx(params)
        for mode in spec["rlc_modes"]:
            for delay in spec["delays_ms"]:
                for seed in _seeds(resolved):
                    cfg = build_sim_config(resolved, seed)
                    cfg = replace(
                        cfg,
                        rlc_mode=mode,
                        errors=params,
                        tcp=replace(cfg.tcp, variant=CUBIC, network_delay_ms=float(delay)),
                    )
                    labels = {
                        "sweep_param": "network_delay_ms",
                        "value": float(delay),
                        "tcp": CUBIC,
                        "rlc": mode,
                        "harq_mode": cfg.harq.mode,
                        "p_re_target": target,
                        "p_na": params.p_na,
                        "p_da": params.p_da,
                        "analytic_p_re": analytic,
                    }
                    jobs.append((labels, cfg))
    return jobs, skipped


def _harq_jobs(resolved: dict) -> list:
    spec = resolved[HARQ_VS_L1ARQ]
    jobs = []
    for p_e in spec["p_e_points"]:
        for mode in spec["modes"]:
            for seed in _seeds(resolved):
                cfg = build_sim_config(resolved, seed)
                cfg = replace(
                    cfg,
                    errors=replace(cfg.errors, p_e=float(p_e)),
                    harq=replace(cfg.harq, mode=mode),
                )
                labels = {
                    "sweep_param": "p_e",
                    "value": float(p_e),
                    "tcp": cfg.tcp.variant,
                    "rlc": cfg.rlc_mode,
                    "harq_mode": mode,
                    "analytic_p_re": residual_error_approx(cfg.errors),
                }
                jobs.append((labels, cfg))
    return jobs, []


def _single_jobs(resolved: dict) -> list:
    jobs = []
    for seed in _seeds(resolved):
        cfg = build_sim_config(resolved, seed)
        labels = {
            "sweep_param": "single",
            "value": 0.0,
            "tcp": cfg.tcp.variant,
            "rlc": cfg.rlc_mode,
            "harq_mode": cfg.harq.mode,
            "analytic_p_re": residual_error_approx(cfg.errors),
        }
        jobs.append((labels, cfg))
    return jobs, []


# -- execution ----------------------------------------------------------------


def _run_job(cfg: SimConfig):
    return run_simulation(cfg)


def execute_jobs(configs: list, workers: int | None = None) -> list:
    """Run SimConfigs, preserving order; parallel when workers allow."""
    if workers is None:
        workers = os.cpu_count() or 1
    workers = min(workers, len(configs)) if configs else 1
    if workers <= 1:
        return [_run_job(cfg) for cfg in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, configs, chunksize=1))


# -- CSV output ----------------------------------------------------------------


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def _row(labels: dict, **fields) -> dict:
    row = {col: "" for col in CSV_COLUMNS}
    row.update({k: _fmt(v) for k, v in labels.items() if k in row})
    row.update({k: _fmt(v) for k, v in fields.items()})
    return row


def _write_csv(path: Path, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _sort_key(row: dict):
    return tuple(
        row[c]
        for c in (
            "sweep_param",
            "value",
            "p_re_target",
            "tcp",
            "rlc",
            "harq_mode",
            "p_na",
            "p_da",
            "seed",
        )
    )


def run_scenario(
    resolved: dict, out_dir: str | Path, workers: int | None = None
) -> dict:
    """Run the configured experiment; returns output paths and results."""
    experiment = resolved["experiment"]
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "resolved_config.txt", "w") as fh:
        yaml.safe_dump(resolved, fh, sort_keys=True, default_flow_style=False)

    if experiment == DEGRADATION_GRID:
        return _run_grid(resolved, out)

    builders = {
        RESIDUAL_SWEEP: _residual_jobs,
        DELAY_SWEEP: _delay_jobs,
        HARQ_VS_L1ARQ: _harq_jobs,
        SINGLE_RUN: _single_jobs,
    }
    jobs, skipped = builders[experiment](resolved)
    if not jobs:
        raise ConfigError(f"experiment {experiment} produced no runnable jobs")
    results = execute_jobs([cfg for _, cfg in jobs], workers=workers)

    raw_rows = []
    groups: dict = {}
    for (labels, cfg), metrics in zip(jobs, results):
        raw_rows.append(
            _row(
                labels,
                experiment=experiment,
                seed=cfg.master_seed,
                agg=0,
                user_tput_mbps=metrics.mean_user_throughput_bps / 1e6,
                pkt_tput_mbps=metrics.mean_per_packet_throughput_bps / 1e6,
                residual_rate=metrics.mac_residual_rate,
                sdu_loss_rate=metrics.rlc_sdu_loss_rate,
                tb_concluded=metrics.tb_concluded,
                tb_lost=metrics.tb_lost,
                files_completed=metrics.files_completed,
                incomplete_files=metrics.incomplete_files,
            )
        )
        key = tuple(sorted((k, _fmt(v)) for k, v in labels.items()))
        groups.setdefault(key, (labels, []))[1].append(metrics)

    agg_rows = []
    for _, (labels, metrics_list) in sorted(groups.items()):
        if len(metrics_list) < 2:
            continue
        agg = aggregate_seeds(metrics_list)
        agg_rows.append(
            _row(
                labels,
                experiment=experiment,
                agg=1,
                user_tput_mbps=agg.user_tput_bps / 1e6,
                pkt_tput_mbps=agg.pkt_tput_bps / 1e6,
                residual_rate=agg.residual_rate,
                sdu_loss_rate=agg.sdu_loss_rate,
                tb_concluded=agg.tb_concluded,
                tb_lost=agg.tb_lost,
                user_tput_se=agg.user_tput_se / 1e6,
                pkt_tput_se=agg.pkt_tput_se / 1e6,
            )
        )

    raw_rows.sort(key=_sort_key)
    agg_rows.sort(key=_sort_key)
    raw_path = out / f"{experiment}_raw.csv"
    agg_path = out / f"{experiment}_agg.csv"
    _write_csv(raw_path, raw_rows)
    _write_csv(agg_path, agg_rows)
    return {
        "raw_csv": raw_path,
        "agg_csv": agg_path,
        "skipped_targets": skipped,
        "jobs": jobs,
        "results": results,
    }


def _run_grid(resolved: dict, out: Path) -> dict:
    spec = resolved[DEGRADATION_GRID]
    grid_seeds = [int(resolved["seed_base"]) + i for i in range(int(spec["seeds"]))]
    p_na_values = _grid_axis(spec["p_na"])
    p_da_values = _grid_axis(spec["p_da"])
    base = build_sim_config(resolved, seed=grid_seeds[0])
    grid = degradation_grid(
        base,
        p_na_values,
        p_da_values,
        seeds=grid_seeds,
        p_ch=float(spec["p_ch"]),
        p_e=float(spec["p_e"]),
        threshold_pct=float(spec["threshold_pct"]),
    )
    matrix_path = out / "degradation_grid_matrix.csv"
    with open(matrix_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p_na\\p_da"] + [_fmt(v) for v in grid.p_da_values])
        for p_na, row in zip(grid.p_na_values, grid.degradation_pct):
            writer.writerow([_fmt(p_na)] + [_fmt(v) for v in row])

    rows = []
    for i, p_na in enumerate(grid.p_na_values):
        for j, p_da in enumerate(grid.p_da_values):
            labels = {
                "sweep_param": "p_na/p_da",
                "value": grid.degradation_pct[i][j],
                "tcp": resolved["tcp"]["variant"],
                "rlc": "um",
                "p_na": p_na,
                "p_da": p_da,
            }
            rows.append(
                _row(labels, experiment=DEGRADATION_GRID, agg=1,
                     user_tput_mbps=grid.baseline_tput_bps
                     * (1 - grid.degradation_pct[i][j] / 100.0) / 1e6)
            )
    rows.sort(key=_sort_key)
    agg_path = out / f"{DEGRADATION_GRID}_agg.csv"
    _write_csv(agg_path, rows)
    return {
        "matrix_csv": matrix_path,
        "agg_csv": agg_path,
        "grid": grid,
    }


def _grid_axis(axis_spec) -> list:
    if isinstance(axis_spec, dict):
        try:
            return log_grid(float(axis_spec["lo"]), float(axis_spec["hi"]), int(axis_spec["n"]))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad grid axis {axis_spec!r}: {exc}") from exc
    values = [float(v) for v in axis_spec]
    return values
