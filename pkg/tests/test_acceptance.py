"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The heavy fixtures (full 60 s runs at the Table-1 operating point, 10 seeds
each) are session-scoped and shared across criteria.  Statistical checks
use 3-sigma binomial bands or pooled standard errors as stated; every
tolerance is frozen here, nothing is calibrated after the fact.
"""

import time
from dataclasses import replace

import pytest

from recoverysim.analytics import (
    give_up_prob,
    residual_error_exact,
    sweep_error_params,
)
from recoverysim.harq import (
    HARQ_COMBINING,
    L1_ARQ,
    HarqConfig,
    measured_residual_rate,
    tb_fate_monte_carlo,
)
from recoverysim.link import ErrorModelParams, LinkConfig, decode_failure_prob
from recoverysim.metrics import aggregate_seeds
from recoverysim.scenario import load_scenario, run_scenario
from recoverysim.simulation import AM, UM, SimConfig, run_simulation
from recoverysim.tcp import CUBIC, RENO, TcpConfig, cubic_window

from oracles import binomial_3sigma

SEEDS = list(range(1, 11))
SWEEP_TARGETS = [2e-6, 1e-5, 5e-5, 8e-5, 1e-3]
DELAYS_MS = [0, 10, 20, 30, 40, 50]


def _report(criterion: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"{criterion}: {detail}"


def _run_many(tag, configs):
    out = []
    t0 = time.time()
    for i, cfg in enumerate(configs):
        out.append(run_simulation(cfg))
        if (i + 1) % 10 == 0:
            print(f"  [{tag}] {i + 1}/{len(configs)} runs, {time.time() - t0:.0f}s")
    return out


def _sweep_cfg(variant, rlc_mode, target, seed):
    return SimConfig(
        master_seed=seed,
        rlc_mode=rlc_mode,
        errors=sweep_error_params(target),
        tcp=TcpConfig(variant=variant),
    )


@pytest.fixture(scope="session")
def sweep_runs():
    """Residual-error sweep: 5 targets x (TCP x RLC) x 10 seeds, 60 s each."""
    results = {}
    for variant in (RENO, CUBIC):
        for rlc_mode in (AM, UM):
            for target in SWEEP_TARGETS:
                configs = [
                    _sweep_cfg(variant, rlc_mode, target, seed) for seed in SEEDS
                ]
                results[(variant, rlc_mode, target)] = _run_many(
                    f"sweep {variant}/{rlc_mode}/{target:g}", configs
                )
    return results


@pytest.fixture(scope="session")
def sweep_aggregates(sweep_runs):
    return {key: aggregate_seeds(runs) for key, runs in sweep_runs.items()}


@pytest.fixture(scope="session")
def delay_runs():
    """Network-delay sweep for CUBIC at the 8e-5 residual-error point."""
    results = {}
    params = sweep_error_params(8e-5)
    for rlc_mode in (AM, UM):
        for delay in DELAYS_MS:
            configs = [
                SimConfig(
                    master_seed=seed,
                    rlc_mode=rlc_mode,
                    errors=params,
                    tcp=TcpConfig(variant=CUBIC, network_delay_ms=float(delay)),
                )
                for seed in SEEDS
            ]
            results[(rlc_mode, delay)] = _run_many(
                f"delay {rlc_mode}/{delay}ms", configs
            )
    return {key: aggregate_seeds(runs) for key, runs in results.items()}


@pytest.fixture(scope="session")
def harq_mode_runs():
    """HARQ-with-combining vs L1 ARQ at cell-edge BLER 0.5."""
    results = {}
    for mode in (HARQ_COMBINING, L1_ARQ):
        configs = [
            SimConfig(
                master_seed=seed,
                rlc_mode=UM,
                errors=ErrorModelParams(p_ch=0.01, p_e=0.5),
                harq=HarqConfig(mode=mode),
                tcp=TcpConfig(variant=CUBIC),
            )
            for seed in SEEDS
        ]
        results[mode] = aggregate_seeds(_run_many(f"harq {mode}", configs))
    return results


@pytest.fixture(scope="session")
def variant_runs():
    """CUBIC vs Reno at 10 ms delay with no injected residual errors."""
    results = {}
    for variant in (RENO, CUBIC):
        configs = [
            SimConfig(
                master_seed=seed,
                rlc_mode=AM,
                errors=ErrorModelParams(p_ch=0.01, p_e=0.1),
                tcp=TcpConfig(variant=variant, network_delay_ms=10.0),
                ul_loss_prob=0.0,
            )
            for seed in SEEDS
        ]
        results[variant] = aggregate_seeds(_run_many(f"variant {variant}", configs))
    return results


def _pooled_se(a, b):
    return (a.user_tput_se**2 + b.user_tput_se**2) ** 0.5


# -- criteria ------------------------------------------------------------------


def test_criterion_01_eq2_exactness():
    """give_up_prob(0.1, 6) = 1e-6; L1-ARQ give-up frequency over 1e8 TBs
    inside the 3-sigma binomial band. Runtime < 5 min."""
    t0 = time.time()
    analytic = give_up_prob(0.1, 6)
    exact_ok = abs(analytic - 1e-6) < 1e-18
    params = ErrorModelParams(p_ch=0.0, p_e=0.1, n_max=6)
    n = 10**8
    # budget of 6 decode attempts: the convention under which the formula
    # p_e**n is the exact give-up probability
    log = tb_fate_monte_carlo(
        params, n, combining_enabled=False, attempt_budget=6, seed=42
    )
    freq = log.giveup / n
    band = binomial_3sigma(1e-6, n)
    elapsed = time.time() - t0
    mc_ok = abs(freq - 1e-6) < band
    _report(
        "C1 eq2-exactness",
        exact_ok and mc_ok and elapsed < 300,
        f"analytic={analytic:.3e}, mc={freq:.3e} (band +/-{band:.1e}, "
        f"{log.giveup} give-ups), {elapsed:.0f}s",
    )


def test_criterion_02_eq1_vs_monte_carlo():
    """MAC residual rate from 1e7-TB Monte Carlo matches the closed form
    within 3 sigma for a 3x3x3 grid over (p_na, p_da, p_ch) at p_e = 0.1.

    Grid values sit in the paper-typical operating ranges (corruption rates
    1e-4..1e-3, control-channel loss around 1%), where the first-order
    closed form is accurate to well under one sigma at this sample size.
    n_max = 15 so the give-up term is negligible on both sides.
    Runtime < 30 min."""
    t0 = time.time()
    n = 10**7
    failures = []
    worst = 0.0
    cell = 0
    for p_na in (1e-4, 3e-4, 1e-3):
        for p_da in (1e-4, 3e-4, 1e-3):
            for p_ch in (1e-3, 5e-3, 1e-2):
                cell += 1
                params = ErrorModelParams(
                    p_ch=p_ch, p_e=0.1, p_na=p_na, p_da=p_da, n_max=15
                )
                expected = residual_error_exact(params).p_re_exact
                log = tb_fate_monte_carlo(
                    params,
                    n,
                    combining_enabled=True,
                    combining_gain=0.95,
                    seed=1000 + cell,
                )
                rate = measured_residual_rate(log)
                band = binomial_3sigma(expected, n)
                dev = abs(rate - expected) / (band / 3.0)
                worst = max(worst, dev)
                if abs(rate - expected) >= band:
                    failures.append((p_na, p_da, p_ch, rate, expected))
    elapsed = time.time() - t0
    _report(
        "C2 eq1-vs-monte-carlo",
        not failures and elapsed < 1800,
        f"27 cells, worst deviation {worst:.2f} sigma, {elapsed:.0f}s"
        + (f", failures: {failures}" if failures else ""),
    )


def test_criterion_03_rlc_am_zero_loss(sweep_runs):
    """No end-to-end SDU loss in AM at the worst sweep point (P_re = 1e-3),
    10 seeds x 60 s, max_retx = 13."""
    lost = 0
    tb_lost_total = 0
    runs_checked = 0
    for variant in (RENO, CUBIC):
        for m in sweep_runs[(variant, AM, 1e-3)]:
            lost += m.sdu_lost
            tb_lost_total += m.tb_lost
            runs_checked += 1
    _report(
        "C3 rlc-am-zero-loss",
        lost == 0 and tb_lost_total > 0 and runs_checked == 20,
        f"{runs_checked} runs, {tb_lost_total} residual TB losses injected, "
        f"{lost} SDUs lost end-to-end",
    )


def test_criterion_04_throughput_trend(sweep_aggregates):
    """User throughput non-increasing in P_re for all four TCP x RLC
    combinations, per-point tolerance of one pooled standard error."""
    violations = []
    for variant in (RENO, CUBIC):
        for rlc_mode in (AM, UM):
            series = [sweep_aggregates[(variant, rlc_mode, t)] for t in SWEEP_TARGETS]
            for i in range(len(series) - 1):
                lo, hi = series[i], series[i + 1]
                slack = _pooled_se(lo, hi)
                if hi.user_tput_bps > lo.user_tput_bps + slack:
                    violations.append(
                        (variant, rlc_mode, SWEEP_TARGETS[i], SWEEP_TARGETS[i + 1],
                         lo.user_tput_bps / 1e6, hi.user_tput_bps / 1e6, slack / 1e6)
                    )
    summary = "; ".join(
        f"{v}/{r}: " + " -> ".join(
            f"{sweep_aggregates[(v, r, t)].user_tput_bps / 1e6:.1f}"
            for t in SWEEP_TARGETS
        )
        for v in (RENO, CUBIC)
        for r in (AM, UM)
    )
    _report(
        "C4 fig3-trend",
        not violations,
        f"Mbps across targets: {summary}"
        + (f"; violations: {violations}" if violations else ""),
    )


def test_criterion_05_arq_value_threshold(sweep_aggregates):
    """AM-over-UM user-throughput gain < 1% at P_re <= 2e-6 and >= 5% at
    P_re >= 8e-5 for at least one TCP variant (10-seed aggregates)."""
    gains = {}
    for variant in (RENO, CUBIC):
        g = {}
        for target in SWEEP_TARGETS:
            am = sweep_aggregates[(variant, AM, target)].user_tput_bps
            um = sweep_aggregates[(variant, UM, target)].user_tput_bps
            g[target] = am / um - 1.0
        gains[variant] = g
    satisfied = [
        v
        for v, g in gains.items()
        if g[2e-6] < 0.01 and g[8e-5] >= 0.05 and g[1e-3] >= 0.05
    ]
    detail = "; ".join(
        f"{v}: " + ", ".join(f"{t:g}:{g[t] * 100:+.2f}%" for t in SWEEP_TARGETS)
        for v, g in gains.items()
    )
    _report("C5 arq-value", bool(satisfied), f"satisfied by {satisfied or 'none'}; {detail}")


def test_criterion_06_delay_sweep(delay_runs):
    """CUBIC throughput non-increasing in network delay at P_re = 8e-5, and
    the UM curve at or below the AM curve at every delay (one SE slack)."""
    violations = []
    for rlc_mode in (AM, UM):
        series = [delay_runs[(rlc_mode, d)] for d in DELAYS_MS]
        for i in range(len(series) - 1):
            lo, hi = series[i], series[i + 1]
            if hi.user_tput_bps > lo.user_tput_bps + _pooled_se(lo, hi):
                violations.append(
                    ("trend", rlc_mode, DELAYS_MS[i + 1],
                     lo.user_tput_bps / 1e6, hi.user_tput_bps / 1e6)
                )
    for d in DELAYS_MS:
        am, um = delay_runs[(AM, d)], delay_runs[(UM, d)]
        if um.user_tput_bps > am.user_tput_bps + _pooled_se(am, um):
            violations.append(("um>am", d, um.user_tput_bps / 1e6, am.user_tput_bps / 1e6))
    curves = {
        mode: [round(delay_runs[(mode, d)].user_tput_bps / 1e6, 1) for d in DELAYS_MS]
        for mode in (AM, UM)
    }
    _report(
        "C6 delay-sweep",
        not violations,
        f"Mbps vs delay {DELAYS_MS}: {curves}"
        + (f"; violations: {violations}" if violations else ""),
    )


def test_criterion_07_harq_vs_l1arq(harq_mode_runs):
    """At p_e = 0.5, HARQ with combining strictly outperforms L1 ARQ, and
    decode-failure probability strictly decreases per combined copy."""
    harq = harq_mode_runs[HARQ_COMBINING].user_tput_bps
    l1 = harq_mode_runs[L1_ARQ].user_tput_bps
    cfg = LinkConfig(combining_enabled=True, combining_gain=0.95)
    params = ErrorModelParams(p_e=0.5)
    probs = [decode_failure_prob(k, cfg, params) for k in range(1, 8)]
    monotone = all(a > b for a, b in zip(probs, probs[1:]))
    _report(
        "C7 harq-vs-l1arq",
        harq > l1 and monotone,
        f"HARQ {harq / 1e6:.1f} Mbps vs L1-ARQ {l1 / 1e6:.1f} Mbps; "
        f"decode failure per copy strictly decreasing: {monotone}",
    )


def test_criterion_08_cubic_vs_reno_per_packet(variant_runs):
    """CUBIC mean per-packet throughput at or above Reno's at 10 ms delay
    with zero injected residual error."""
    cubic = variant_runs[CUBIC].pkt_tput_bps
    reno = variant_runs[RENO].pkt_tput_bps
    ok = cubic >= reno * (1.0 - 1e-9)  # only float-noise slack
    _report(
        "C8 cubic-vs-reno",
        ok,
        f"CUBIC {cubic / 1e6:.2f} Mbps vs Reno {reno / 1e6:.2f} Mbps per packet",
    )


def test_criterion_09_cubic_epoch_identities(sweep_runs):
    """W(K) = w_max and W(0) = 0.8 * w_max hold exactly for every CUBIC
    loss epoch recorded in the sweep traces (beta = 0.2)."""
    cfg = TcpConfig(variant=CUBIC)
    checked = 0
    bad = []

    class _Epoch:
        def __init__(self, w_max, k):
            self.cubic_w_max = w_max
            self.cubic_k = k

    for (variant, rlc_mode, target), runs in sweep_runs.items():
        if variant != CUBIC:
            continue
        for m in runs:
            for kind, w_max, k, t0, cwnd0 in m.cubic_epochs:
                if kind != "loss":
                    continue
                checked += 1
                e = _Epoch(w_max, k)
                w_at_k = cubic_window(k, e, cfg)
                w_at_0 = cubic_window(0.0, e, cfg)
                if abs(w_at_k - w_max) > 1e-9 * max(w_max, 1.0):
                    bad.append(("W(K)", target, w_at_k, w_max))
                if abs(w_at_0 - 0.8 * w_max) > 1e-9 * max(w_max, 1.0):
                    bad.append(("W(0)", target, w_at_0, 0.8 * w_max))
    _report(
        "C9 cubic-epochs",
        checked > 0 and not bad,
        f"{checked} loss epochs checked"
        + (f"; violations: {bad[:5]}" if bad else ", all identities exact"),
    )


def test_criterion_10_determinism(tmp_path):
    """Two invocations with identical config and seeds produce byte-identical
    raw CSVs."""
    scenario = load_scenario(None)
    scenario["seeds"] = 2
    scenario["sim"]["sim_seconds"] = 6.0
    scenario["sim"]["warmup_seconds"] = 1.0
    scenario["ftp"]["file_bytes"] = 2_000_000
    scenario["ftp"]["lambda_per_s"] = 1.0
    scenario["errors"]["p_na"] = 1e-3
    out_a = run_scenario(scenario, tmp_path / "a")
    out_b = run_scenario(scenario, tmp_path / "b")
    raw_same = out_a["raw_csv"].read_bytes() == out_b["raw_csv"].read_bytes()
    agg_same = out_a["agg_csv"].read_bytes() == out_b["agg_csv"].read_bytes()
    _report(
        "C10 determinism",
        raw_same and agg_same,
        f"raw identical: {raw_same}, aggregate identical: {agg_same}",
    )
