import pytest

from recoverysim.engine import RngStream
from recoverysim.link import (
    ACK,
    DTX,
    NACK,
    ErrorModelParams,
    LinkConfig,
    TransmissionAttempt,
    attempt_decode,
    corrupt_feedback,
    decode_failure_prob,
    grant_received,
)

from oracles import binomial_3sigma


def _rng(label="test"):
    return RngStream(2024, label)


def test_grant_never_missed_at_zero():
    params = ErrorModelParams(p_ch=0.0)
    rng = _rng()
    assert all(grant_received(params, rng) for _ in range(1000))


def test_grant_always_missed_at_one():
    params = ErrorModelParams(p_ch=1.0)
    rng = _rng()
    assert not any(grant_received(params, rng) for _ in range(1000))


def test_grant_miss_frequency_matches_p_ch():
    params = ErrorModelParams(p_ch=0.01)
    rng = _rng("grant-freq")
    n = 10**6
    misses = sum(not grant_received(params, rng) for _ in range(n))
    assert abs(misses / n - 0.01) < binomial_3sigma(0.01, n)


def test_decode_failure_without_combining_is_flat():
    cfg = LinkConfig(combining_enabled=False)
    params = ErrorModelParams(p_e=0.1)
    for copies in (1, 2, 5, 7):
        assert decode_failure_prob(copies, cfg, params) == pytest.approx(0.1)
    # six independent attempts all fail with probability p_e^6
    assert 0.1**6 == pytest.approx(1e-6)


def test_decode_failure_with_ideal_combining_doubles_exponent():
    cfg = LinkConfig(combining_enabled=True, combining_gain=1.0)
    params = ErrorModelParams(p_e=0.1)
    assert decode_failure_prob(2, cfg, params) == pytest.approx(1e-2)


def test_decode_failure_with_chase_gain():
    cfg = LinkConfig(combining_enabled=True, combining_gain=0.95)
    params = ErrorModelParams(p_e=0.1)
    assert decode_failure_prob(2, cfg, params) == pytest.approx(0.1**1.95)
    assert decode_failure_prob(2, cfg, params) == pytest.approx(1.122e-2, rel=1e-3)


def test_decode_failure_strictly_decreasing_in_copies():
    cfg = LinkConfig(combining_enabled=True, combining_gain=0.95)
    params = ErrorModelParams(p_e=0.3)
    probs = [decode_failure_prob(k, cfg, params) for k in range(1, 9)]
    assert all(a > b for a, b in zip(probs, probs[1:]))


def test_attempt_decode_requires_a_copy():
    cfg = LinkConfig()
    params = ErrorModelParams()
    att = TransmissionAttempt(process_id=0, attempt_index=1, combined_copies=0)
    with pytest.raises(ValueError):
        attempt_decode(att, cfg, params, _rng())


def test_attempt_decode_certain_cases():
    cfg = LinkConfig()
    rng = _rng()
    att = TransmissionAttempt(0, 1, 1)
    assert attempt_decode(att, cfg, ErrorModelParams(p_e=0.0), rng)
    assert not attempt_decode(att, cfg, ErrorModelParams(p_e=1.0), rng)


def test_corrupt_feedback_certain_nack_to_ack():
    params = ErrorModelParams(p_na=1.0)
    signal = corrupt_feedback(NACK, params, _rng())
    assert signal.true_state == NACK and signal.observed_state == ACK


def test_corrupt_feedback_clean_ack():
    params = ErrorModelParams(p_an=0.0)
    signal = corrupt_feedback(ACK, params, _rng())
    assert signal.observed_state == ACK


def test_corrupt_feedback_dtx_to_ack_frequency():
    params = ErrorModelParams(p_da=1e-2)
    rng = _rng("dta-freq")
    n = 10**6
    hits = sum(
        corrupt_feedback(DTX, params, rng).observed_state == ACK for _ in range(n)
    )
    assert abs(hits / n - 1e-2) < binomial_3sigma(1e-2, n)


def test_corrupt_feedback_forbidden_transitions_never_happen():
    params = ErrorModelParams(p_ch=0.3, p_na=0.5, p_da=0.5, p_an=0.5)
    rng = _rng("matrix")
    for _ in range(2000):
        assert corrupt_feedback(DTX, params, rng).observed_state in (DTX, ACK)
        assert corrupt_feedback(NACK, params, rng).observed_state in (NACK, ACK)
        assert corrupt_feedback(ACK, params, rng).observed_state in (ACK, NACK)


def test_corrupt_feedback_rejects_unknown_state():
    with pytest.raises(ValueError):
        corrupt_feedback("MAYBE", ErrorModelParams(), _rng())


def test_params_validation():
    with pytest.raises(ValueError):
        ErrorModelParams(p_e=1.5).validate()
    with pytest.raises(ValueError):
        ErrorModelParams(n_max=-1).validate()
    with pytest.raises(ValueError):
        LinkConfig(tb_bits=0).validate()
