"""Discrete-event simulator of stacked data-recovery loops (HARQ, RLC ARQ,
TCP) over an abstract radio link with non-ideal control and feedback
channels, plus the closed-form residual-error model they are validated
against."""

from .analytics import (
    give_up_prob,
    residual_error_approx,
    residual_error_exact,
)
from .engine import RngStream, Simulator
from .harq import HarqConfig, HarqEntity, measured_residual_rate, tb_fate_monte_carlo
from .link import ErrorModelParams, LinkConfig
from .metrics import RunMetrics, aggregate_seeds, empirical_cdf, user_throughput
from .rlc import RlcAmConfig, StatusPdu, UmConfig
from .simulation import SimConfig, run_simulation
from .tcp import TcpConfig, TcpReceiver, TcpSender, cubic_window
from .traffic import FtpConfig

__version__ = "0.1.0"

__all__ = [
    "ErrorModelParams",
    "FtpConfig",
    "HarqConfig",
    "HarqEntity",
    "LinkConfig",
    "RlcAmConfig",
    "RngStream",
    "RunMetrics",
    "SimConfig",
    "Simulator",
    "StatusPdu",
    "TcpConfig",
    "TcpReceiver",
    "TcpSender",
    "UmConfig",
    "aggregate_seeds",
    "cubic_window",
    "empirical_cdf",
    "give_up_prob",
    "measured_residual_rate",
    "residual_error_approx",
    "residual_error_exact",
    "run_simulation",
    "tb_fate_monte_carlo",
    "user_throughput",
]
