"""Closed-form residual-error model and the control-channel design grid.

The exact expression combines the four feedback-error event terms with the
give-up probability; the two-term approximation keeps only the dominant
false-ACK contributions.  The degradation grid sweeps (p_na, p_da) over UM
simulations to map throughput loss against a no-error baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .link import ErrorModelParams


def give_up_prob(p_e: float, n: int) -> float:
    """Probability that all n retransmission attempts fail: p_e ** n."""
    if not 0.0 <= p_e <= 1.0:
        raise ValueError(f"p_e={p_e} outside [0, 1]")
    if n < 0:
        raise ValueError(f"n={n} must be >= 0")
    return p_e**n


@dataclass
class ResidualErrorResult:
    p_re_exact: float
    p_re_approx: float
    p_gu: float
    term_nack_to_ack: float
    term_dtx_to_ack: float
    term_ack_to_nack: float

    @property
    def dominant_term_breakdown(self) -> dict:
        return {
            "nack_to_ack": self.term_nack_to_ack,
            "dtx_to_ack": self.term_dtx_to_ack,
            "give_up": self.p_gu,
            "ack_to_nack": self.term_ack_to_nack,
        }


def residual_error_exact(p: ErrorModelParams) -> ResidualErrorResult:
    """Residual MAC error probability with all four terms."""
    p.validate()
    t_na = (1.0 - p.p_ch) * p.p_e * p.p_na
    t_da = p.p_ch * p.p_da
    t_an = (1.0 - p.p_ch) * (1.0 - p.p_e) * p.p_an
    p_gu = give_up_prob(p.p_e, p.n_max)
    exact = t_na + t_da + p_gu + t_an
    return ResidualErrorResult(
        p_re_exact=exact,
        p_re_approx=t_na + t_da,
        p_gu=p_gu,
        term_nack_to_ack=t_na,
        term_dtx_to_ack=t_da,
        term_ack_to_nack=t_an,
    )


def residual_error_approx(p: ErrorModelParams) -> float:
    """Two-term approximation: (1 - p_ch) p_e p_na + p_ch p_da."""
    p.validate()
    return (1.0 - p.p_ch) * p.p_e * p.p_na + p.p_ch * p.p_da


def invert_p_na_for_target(
    target_p_re: float, p_ch: float, p_e: float, p_da: float
) -> float | None:
    """Solve the approximation for p_na given a target residual rate.

    Returns None when the target cannot be reached with a valid
    probability (p_na outside [0, 1]).
    """
    if p_e <= 0 or p_ch >= 1:
        return None
    p_na = (target_p_re - p_ch * p_da) / ((1.0 - p_ch) * p_e)
    if not 0.0 <= p_na <= 1.0:
        return None
    return p_na


def sweep_error_params(
    target_p_re: float,
    *,
    p_ch: float = 0.01,
    p_e: float = 0.1,
    p_da_default: float = 1e-3,
    n_max: int = 6,
) -> ErrorModelParams | None:
    """Error parameters hitting a target residual rate via the approximation.

    p_na carries the bulk of the target; when the DTX term alone would
    overshoot a small target, p_da is scaled down so half the budget comes
    from each path.
    """
    if target_p_re <= 0:
        return None
    p_da = min(p_da_default, target_p_re / (2.0 * p_ch)) if p_ch > 0 else p_da_default
    p_na = invert_p_na_for_target(target_p_re, p_ch, p_e, p_da)
    if p_na is None:
        return None
    return ErrorModelParams(p_ch=p_ch, p_e=p_e, p_na=p_na, p_da=p_da, n_max=n_max)


@dataclass
class DegradationGrid:
    p_na_values: list
    p_da_values: list
    degradation_pct: list  # rows indexed by p_na, columns by p_da
    baseline_tput_bps: float
    threshold_pct: float = 5.0

    def within_threshold(self) -> list:
        """Boolean mask of cells at or below the threshold degradation."""
        return [
            [cell <= self.threshold_pct for cell in row] for row in self.degradation_pct
        ]


def degradation_grid(
    base_config,
    p_na_values,
    p_da_values,
    *,
    seeds=(1, 2, 3),
    p_ch: float = 0.01,
    p_e: float = 0.1,
    threshold_pct: float = 5.0,
) -> DegradationGrid:
    """Throughput-degradation matrix over (p_na, p_da) without RLC recovery.

    Each cell runs UM simulations at the fixed control-channel operating
    point and reports 100 * (1 - tput / baseline).  The same seed set is
    reused per cell so the comparison is paired.
    """
    p_na_values = list(p_na_values)
    p_da_values = list(p_da_values)
    if len(p_na_values) < 2 or len(p_da_values) < 2:
        raise ValueError("degradation grid needs at least 2x2 cells")

    from .simulation import run_simulation  # late import: this module is imported there

    def mean_tput(params: ErrorModelParams) -> float:
        vals = []
        for seed in seeds:
            cfg = replace(
                base_config, rlc_mode="um", errors=params, master_seed=seed
            )
            vals.append(run_simulation(cfg).mean_user_throughput_bps)
        return float(np.mean(vals))

    baseline = mean_tput(
        ErrorModelParams(p_ch=p_ch, p_e=p_e, p_na=0.0, p_da=0.0, p_an=0.0,
                         n_max=base_config.errors.n_max)
    )
    if baseline <= 0:
        raise RuntimeError("baseline simulation delivered no throughput")

    matrix = []
    for p_na in p_na_values:
        row = []
        for p_da in p_da_values:
            params = ErrorModelParams(
                p_ch=p_ch, p_e=p_e, p_na=p_na, p_da=p_da, p_an=0.0,
                n_max=base_config.errors.n_max,
            )
            tput = mean_tput(params)
            row.append(100.0 * (1.0 - tput / baseline))
        matrix.append(row)
    return DegradationGrid(
        p_na_values=p_na_values,
        p_da_values=p_da_values,
        degradation_pct=matrix,
        baseline_tput_bps=baseline,
        threshold_pct=threshold_pct,
    )


def log_grid(lo: float, hi: float, n: int) -> list:
    """n log-spaced values in [lo, hi]."""
    if n < 2:
        raise ValueError("need at least two grid points")
    return [float(v) for v in np.logspace(math.log10(lo), math.log10(hi), n)]
