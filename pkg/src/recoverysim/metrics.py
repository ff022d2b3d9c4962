"""KPI collection and aggregation: goodput, throughput per FTP packet,
residual/loss rates, empirical CDFs, and multi-seed pooling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import US_PER_S


@dataclass
class RunMetrics:
    """Per-run KPI record; counts are kept so multi-seed pooling can weight
    rates by their denominators."""

    config_key: str
    seed: int
    user_throughput_bps: list
    per_packet_throughput_bps: list
    mac_residual_rate: float
    tb_delivered: int
    tb_residual_na: int
    tb_residual_da: int
    tb_giveup: int
    rlc_sdu_loss_rate: float
    sdu_delivered: int
    sdu_lost: int
    sdu_discarded_tx: int
    files_arrived: int
    files_completed: int
    incomplete_files: int
    cwnd_mean: float
    cwnd_max: float
    spurious_harq_retx: int = 0
    tcp_fast_retransmits: int = 0
    tcp_rtos: int = 0
    # (kind, w_max, K, epoch start us, cwnd at epoch start) per CUBIC epoch
    cubic_epochs: list = field(default_factory=list)

    @property
    def tb_concluded(self) -> int:
        return (
            self.tb_delivered + self.tb_residual_na + self.tb_residual_da + self.tb_giveup
        )

    @property
    def tb_lost(self) -> int:
        return self.tb_residual_na + self.tb_residual_da + self.tb_giveup

    @property
    def mean_user_throughput_bps(self) -> float:
        return float(np.mean(self.user_throughput_bps))

    @property
    def mean_per_packet_throughput_bps(self) -> float:
        if not self.per_packet_throughput_bps:
            return 0.0
        return float(np.mean(self.per_packet_throughput_bps))


def user_throughput(delivery_records, window_start_us: int, window_end_us: int) -> float:
    """Goodput in bit/s: delivered application bytes inside the window.

    `delivery_records` is an iterable of (time_us, nbytes) events; events
    before the window start (warm-up) are ignored.
    """
    if window_end_us <= window_start_us:
        raise ValueError("observation window must have positive length")
    total = 0
    for t, nbytes in delivery_records:
        if window_start_us <= t <= window_end_us:
            total += nbytes
    return total * 8 * US_PER_S / (window_end_us - window_start_us)


def empirical_cdf(samples) -> list:
    """Step CDF as (value, cumulative probability) pairs."""
    if len(samples) == 0:
        raise ValueError("empirical_cdf needs at least one sample")
    ordered = sorted(samples)
    n = len(ordered)
    return [(v, (i + 1) / n) for i, v in enumerate(ordered)]


def percentile(samples, q: float) -> float:
    """Linearly interpolated percentile (q in [0, 100])."""
    if len(samples) == 0:
        raise ValueError("percentile needs at least one sample")
    return float(np.percentile(np.asarray(samples, dtype=float), q))


@dataclass
class AggregateMetrics:
    """Seed-pooled means with standard errors; rates pooled by their counts."""

    config_key: str
    n_runs: int
    user_tput_bps: float
    user_tput_se: float
    pkt_tput_bps: float
    pkt_tput_se: float
    residual_rate: float
    sdu_loss_rate: float
    tb_concluded: int
    tb_lost: int
    sdu_delivered: int
    sdu_lost: int


def _mean_se(values) -> tuple:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return 0.0, 0.0
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, 0.0
    return mean, float(arr.std(ddof=1) / math.sqrt(arr.size))


def aggregate_seeds(runs: list) -> AggregateMetrics:
    """Pool per-seed RunMetrics; loss rates are weighted by event counts so
    they equal the rate over the concatenated logs."""
    if len(runs) < 2:
        raise ValueError("aggregation needs at least two runs")
    keys = {r.config_key for r in runs}
    if len(keys) != 1:
        raise ValueError(f"cannot aggregate runs of different configs: {keys}")

    user_mean, user_se = _mean_se([r.mean_user_throughput_bps for r in runs])

    pkt_samples = [s for r in runs for s in r.per_packet_throughput_bps]
    pkt_mean = float(np.mean(pkt_samples)) if pkt_samples else 0.0
    pkt_se = _mean_se(
        [r.mean_per_packet_throughput_bps for r in runs if r.per_packet_throughput_bps]
    )[1]

    tb_concluded = sum(r.tb_concluded for r in runs)
    tb_lost = sum(r.tb_lost for r in runs)
    residual = tb_lost / tb_concluded if tb_concluded else 0.0

    sdu_delivered = sum(r.sdu_delivered for r in runs)
    sdu_lost = sum(r.sdu_lost for r in runs)
    sdu_total = sdu_delivered + sdu_lost
    sdu_rate = sdu_lost / sdu_total if sdu_total else 0.0

    return AggregateMetrics(
        config_key=runs[0].config_key,
        n_runs=len(runs),
        user_tput_bps=user_mean,
        user_tput_se=user_se,
        pkt_tput_bps=pkt_mean,
        pkt_tput_se=pkt_se,
        residual_rate=residual,
        sdu_loss_rate=sdu_rate,
        tb_concluded=tb_concluded,
        tb_lost=tb_lost,
        sdu_delivered=sdu_delivered,
        sdu_lost=sdu_lost,
    )
