import pytest

from recoverysim.engine import RngStream
from recoverysim.harq import (
    DELIVERED,
    GIVEUP_LOSS,
    HARQ_COMBINING,
    IDLE,
    L1_ARQ,
    RESIDUAL_LOSS,
    RETRANSMIT,
    WAITING_FEEDBACK,
    HarqConfig,
    HarqEntity,
    TbOutcomeLog,
    measured_residual_rate,
    tb_fate_monte_carlo,
)
from recoverysim.link import ACK, DTX, NACK, ErrorModelParams, FeedbackSignal, LinkConfig

from oracles import binomial_3sigma, harq_outcome_probabilities


class Harness:
    """HARQ entity wired to a scripted PDU source and recording sinks."""

    def __init__(self, params=None, cfg=None, link=None, seed=1):
        self.queue = []
        self.delivered = []
        self.givenup = []
        self.entity = HarqEntity(
            cfg or HarqConfig(),
            link or LinkConfig(),
            params or ErrorModelParams(p_ch=0.0, p_e=0.0),
            pull_pdus=self.pull,
            has_data=lambda: bool(self.queue),
            deliver=self.delivered.append,
            on_giveup=self.givenup.append,
            rng_grant=RngStream(seed, "grant"),
            rng_decode=RngStream(seed, "decode"),
            rng_feedback=RngStream(seed, "feedback"),
        )

    def pull(self, byte_budget):
        if not self.queue:
            return []
        return [self.queue.pop(0)]

    def drive(self, n_pdus, max_slots=100_000):
        """Push n PDUs through the loop until every TB concludes."""
        self.queue = [f"pdu{i}" for i in range(n_pdus)]
        slot = 0
        while slot < max_slots:
            self.entity.on_slot(slot)
            if not self.entity.work_pending() and self.entity.log.concluded >= n_pdus:
                break
            slot += 1
        return self.entity.log


def test_no_data_means_no_attempts():
    h = Harness()
    assert h.entity.on_slot(0) == []


def test_new_tb_uses_lowest_idle_process():
    h = Harness()
    h.queue = ["pdu"]
    attempts = h.entity.on_slot(0)
    assert len(attempts) == 1
    assert attempts[0].process_id == 0
    assert h.entity.processes[0].state == WAITING_FEEDBACK


def test_all_processes_waiting_stalls_transmission():
    h = Harness(cfg=HarqConfig(n_processes=2, feedback_delay_slots=10))
    h.queue = ["a", "b", "c"]
    assert len(h.entity.on_slot(0)) == 1
    assert len(h.entity.on_slot(1)) == 1
    # both processes now wait for feedback; third PDU must wait
    assert h.entity.on_slot(2) == []


def test_transmission_outcome_mapping():
    h = Harness()
    h.queue = ["pdu"]
    h.entity.on_slot(0)
    proc = h.entity.processes[0]
    assert h.entity.on_transmission_outcome(proc, True, True) == ACK
    assert h.entity.on_transmission_outcome(proc, True, False) == NACK
    before = proc.combined_copies
    assert h.entity.on_transmission_outcome(proc, False, False) == DTX
    assert proc.combined_copies == before


def test_missed_grant_does_not_count_combined_copy():
    h = Harness(params=ErrorModelParams(p_ch=1.0, p_e=0.0))
    h.queue = ["pdu"]
    h.entity.on_slot(0)
    proc = h.entity.processes[0]
    assert proc.attempt_index == 1
    assert proc.combined_copies == 0


def test_feedback_ack_on_delivered_frees_process():
    h = Harness()
    h.queue = ["pdu"]
    h.entity.on_slot(0)
    proc = h.entity.processes[0]
    decision = h.entity.on_feedback(proc, FeedbackSignal(ACK, ACK))
    assert decision == DELIVERED
    assert proc.state == IDLE and proc.tb is None
    assert h.entity.log.delivered == 1


def test_nack_read_as_ack_is_residual_loss():
    h = Harness(params=ErrorModelParams(p_ch=0.0, p_e=1.0))
    h.queue = ["pdu"]
    h.entity.on_slot(0)
    proc = h.entity.processes[0]
    decision = h.entity.on_feedback(proc, FeedbackSignal(NACK, ACK))
    assert decision == RESIDUAL_LOSS
    assert h.entity.log.residual_na == 1
    assert h.delivered == []  # the receiver never got the block


def test_dtx_read_as_ack_is_residual_loss():
    h = Harness(params=ErrorModelParams(p_ch=1.0))
    h.queue = ["pdu"]
    h.entity.on_slot(0)
    proc = h.entity.processes[0]
    assert h.entity.on_feedback(proc, FeedbackSignal(DTX, ACK)) == RESIDUAL_LOSS
    assert h.entity.log.residual_da == 1


def test_budget_exhaustion_gives_up():
    # attempt_index 7 with max_retx 6: the next NACK is a give-up
    h = Harness(params=ErrorModelParams(p_ch=0.0, p_e=1.0))
    h.queue = ["pdu"]
    h.entity.on_slot(0)
    proc = h.entity.processes[0]
    proc.attempt_index = 7
    decision = h.entity.on_feedback(proc, FeedbackSignal(NACK, NACK))
    assert decision == GIVEUP_LOSS
    assert h.entity.log.giveup == 1
    assert h.givenup == [["pdu"]]


def test_retransmit_until_budget():
    h = Harness(params=ErrorModelParams(p_ch=0.0, p_e=1.0), cfg=HarqConfig(max_retx=2))
    log = h.drive(1)
    assert log.giveup == 1
    assert log.concluded == 1
    # 1 initial + 2 retransmissions were attempted
    assert h.entity.cfg.attempt_budget == 3


def test_giveup_counts_initial_convention():
    cfg = HarqConfig(max_retx=6, giveup_counts_initial=True)
    assert cfg.attempt_budget == 6
    assert HarqConfig(max_retx=6).attempt_budget == 7


def test_every_tb_reaches_exactly_one_outcome():
    params = ErrorModelParams(p_ch=0.2, p_e=0.5, p_na=0.1, p_da=0.1, p_an=0.1, n_max=3)
    h = Harness(params=params, cfg=HarqConfig(max_retx=3), seed=11)
    log = h.drive(2000)
    assert log.concluded == 2000
    assert log.delivered + log.residual_na + log.residual_da + log.giveup == 2000


def test_ack_to_nack_never_loses_a_block():
    # certain delivery on first try, but feedback always reads NACK
    params = ErrorModelParams(p_ch=0.0, p_e=0.0, p_an=1.0)
    h = Harness(params=params, cfg=HarqConfig(max_retx=4), seed=3)
    log = h.drive(50)
    assert log.concluded == 50
    assert log.delivered == 50
    assert log.residual == 0 and log.giveup == 0
    assert log.spurious_retx > 0


def test_measured_residual_rate_trivial_cases():
    log = TbOutcomeLog(delivered=100)
    assert measured_residual_rate(log) == 0.0
    with pytest.raises(ValueError):
        measured_residual_rate(TbOutcomeLog())


def test_forced_corruption_loses_every_tb():
    # every first transmission fails and is falsely acknowledged
    params = ErrorModelParams(p_ch=0.0, p_e=1.0, p_na=1.0)
    h = Harness(params=params, seed=5)
    log = h.drive(200)
    assert measured_residual_rate(log) == 1.0


def test_entity_matches_exact_outcome_probabilities():
    """The event-driven loop reproduces the exact per-TB fate distribution."""
    params = ErrorModelParams(p_ch=0.2, p_e=0.5, p_na=0.3, p_da=0.25, n_max=2)
    cfg = HarqConfig(max_retx=2, mode=L1_ARQ, n_processes=4)
    h = Harness(params=params, cfg=cfg, seed=17)
    n = 20_000
    log = h.drive(n)
    exact = harq_outcome_probabilities(
        p_ch=0.2, p_e=0.5, p_na=0.3, p_da=0.25, budget=3, combining=False
    )
    assert log.concluded == n
    for key, count in (
        ("delivered", log.delivered),
        ("residual_na", log.residual_na),
        ("residual_da", log.residual_da),
        ("giveup", log.giveup),
    ):
        assert abs(count / n - exact[key]) < binomial_3sigma(exact[key], n), key


def test_vectorized_mc_matches_exact_probabilities_l1():
    params = ErrorModelParams(p_ch=0.1, p_e=0.4, p_na=0.2, p_da=0.15, n_max=3)
    n = 400_000
    log = tb_fate_monte_carlo(
        params, n, combining_enabled=False, attempt_budget=4, seed=9
    )
    exact = harq_outcome_probabilities(
        p_ch=0.1, p_e=0.4, p_na=0.2, p_da=0.15, budget=4, combining=False
    )
    assert log.concluded == n
    assert abs(log.delivered / n - exact["delivered"]) < binomial_3sigma(
        exact["delivered"], n
    )
    assert abs((log.residual + log.giveup) / n - exact["loss"]) < binomial_3sigma(
        exact["loss"], n
    )


def test_vectorized_mc_matches_exact_probabilities_combining():
    params = ErrorModelParams(p_ch=0.15, p_e=0.5, p_na=0.1, p_da=0.1, n_max=4)
    n = 400_000
    log = tb_fate_monte_carlo(
        params, n, combining_enabled=True, combining_gain=0.95, attempt_budget=5, seed=13
    )
    exact = harq_outcome_probabilities(
        p_ch=0.15, p_e=0.5, p_na=0.1, p_da=0.1, budget=5, combining=True, gain=0.95
    )
    assert abs(log.delivered / n - exact["delivered"]) < binomial_3sigma(
        exact["delivered"], n
    )
    assert abs(log.giveup / n - exact["giveup"]) < binomial_3sigma(exact["giveup"], n)


def test_entity_and_vectorized_mc_agree():
    """Two independent implementations of the same loop, one distribution."""
    kwargs = dict(p_ch=0.25, p_e=0.6, p_na=0.2, p_da=0.3, budget=2, combining=False)
    exact = harq_outcome_probabilities(**kwargs)
    params = ErrorModelParams(p_ch=0.25, p_e=0.6, p_na=0.2, p_da=0.3, n_max=1)
    h = Harness(params=params, cfg=HarqConfig(max_retx=1, mode=L1_ARQ), seed=23)
    n_e = 20_000
    log_e = h.drive(n_e)
    n_v = 200_000
    log_v = tb_fate_monte_carlo(
        params, n_v, combining_enabled=False, attempt_budget=2, seed=29
    )
    for key in ("delivered", "giveup"):
        p = exact[key]
        assert abs(getattr(log_e, key) / n_e - p) < binomial_3sigma(p, n_e)
        assert abs(getattr(log_v, key) / n_v - p) < binomial_3sigma(p, n_v)


def test_residual_rate_example_against_approximation():
    """Table-style operating point: rate approximately matches the two
    dominant-term arithmetic 0.99*0.1*1e-3 + 0.01*1e-3 = 1.09e-4."""
    params = ErrorModelParams(p_ch=0.01, p_e=0.1, p_na=1e-3, p_da=1e-3, n_max=6)
    n = 10**7
    log = tb_fate_monte_carlo(params, n, combining_enabled=True, seed=31)
    rate = measured_residual_rate(log)
    expected = 0.99 * 0.1 * 1e-3 + 0.01 * 1e-3
    assert abs(rate - expected) < binomial_3sigma(expected, n)


def test_combining_mode_flag_controls_decode_model():
    cfg = HarqConfig(mode=L1_ARQ)
    h = Harness(cfg=cfg)
    assert h.entity.link_cfg.combining_enabled is False
    h2 = Harness(cfg=HarqConfig(mode=HARQ_COMBINING))
    assert h2.entity.link_cfg.combining_enabled is True
