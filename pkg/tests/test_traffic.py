import pytest

from recoverysim.engine import RngStream, seconds
from recoverysim.traffic import (
    FileTransfer,
    FtpConfig,
    next_arrival_delta_us,
    per_packet_throughput_bps,
)


def test_offered_load_at_defaults_is_70_mbps():
    cfg = FtpConfig()
    assert cfg.offered_load_bps == pytest.approx(70e6)


def test_inter_arrival_mean():
    cfg = FtpConfig()
    rng = RngStream(101, "traffic")
    n = 10**5
    mean_s = sum(next_arrival_delta_us(rng, cfg) for _ in range(n)) / n / 1e6
    # exponential with mean 4 s; 3-sigma CI of the sample mean
    assert abs(mean_s - 4.0) < 3 * 4.0 / n**0.5


def test_high_rate_limit_shrinks_deltas():
    cfg = FtpConfig(lambda_per_s=1e6)
    rng = RngStream(1, "traffic")
    deltas = [next_arrival_delta_us(rng, cfg) for _ in range(100)]
    assert max(deltas) < seconds(0.001)


def test_fixed_seed_reproduces_arrivals():
    cfg = FtpConfig()
    a = [next_arrival_delta_us(RngStream(5, "t"), cfg) for _ in range(1)]
    b = [next_arrival_delta_us(RngStream(5, "t"), cfg) for _ in range(1)]
    assert a == b


def test_per_packet_throughput_arithmetic():
    ft = FileTransfer(
        id=0, user=0, arrival_time=0, start_byte=0, end_byte=35_000_000,
        last_byte_delivered=seconds(4),
    )
    assert per_packet_throughput_bps(ft, 35_000_000) == pytest.approx(70e6)
    ft.last_byte_delivered = seconds(2)
    assert per_packet_throughput_bps(ft, 35_000_000) == pytest.approx(140e6)


def test_per_packet_throughput_guards():
    ft = FileTransfer(id=0, user=0, arrival_time=0, start_byte=0, end_byte=1)
    with pytest.raises(ValueError):
        per_packet_throughput_bps(ft, 35_000_000)
    ft.last_byte_delivered = 0
    with pytest.raises(ValueError):
        per_packet_throughput_bps(ft, 35_000_000)


def test_config_validation():
    with pytest.raises(ValueError):
        FtpConfig(file_bytes=0).validate()
    with pytest.raises(ValueError):
        FtpConfig(lambda_per_s=0).validate()
