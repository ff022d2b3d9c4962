"""FTP Model 3 source: fixed-size files arriving per user as a Poisson
process, with per-file bookkeeping for the throughput-per-packet metric.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import US_PER_S


@dataclass
class FtpConfig:
    file_bytes: int = 35_000_000
    lambda_per_s: float = 0.25
    n_users: int = 1

    def validate(self) -> None:
        if self.file_bytes <= 0:
            raise ValueError("file_bytes must be > 0")
        if self.lambda_per_s <= 0:
            raise ValueError("lambda_per_s must be > 0")
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")

    @property
    def offered_load_bps(self) -> float:
        return self.file_bytes * 8 * self.lambda_per_s


@dataclass
class FileTransfer:
    id: int
    user: int
    arrival_time: int
    start_byte: int  # offset in the user's TCP byte stream
    end_byte: int
    first_byte_sent: int | None = None
    last_byte_delivered: int | None = None


def next_arrival_delta_us(rng, cfg: FtpConfig) -> int:
    """Exponential inter-arrival time (mean 1/lambda), in microseconds."""
    return max(1, int(rng.expovariate(cfg.lambda_per_s) * US_PER_S))


def per_packet_throughput_bps(ft: FileTransfer, file_bytes: int) -> float:
    """Application throughput for one completed file transfer."""
    if ft.last_byte_delivered is None:
        raise ValueError(f"file {ft.id} not completed")
    duration_us = ft.last_byte_delivered - ft.arrival_time
    if duration_us <= 0:
        raise ValueError(f"file {ft.id} has non-positive transfer duration")
    return file_bytes * 8 * US_PER_S / duration_us
