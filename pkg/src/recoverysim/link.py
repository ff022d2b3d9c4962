"""Abstract radio link: per-slot transport blocks with a configured BLER,
a Chase-combining abstraction, and the non-ideal grant/feedback channels.

Replaces a full PHY with three stochastic primitives:
  - grant_received: the UE misses the scheduling grant with prob p_ch,
  - attempt_decode: decode failure at p_e, lowered per combined copy,
  - corrupt_feedback: ACK/NACK/DTX misread on the feedback channel.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import SLOT_US

ACK = "ACK"
NACK = "NACK"
DTX = "DTX"

_STATES = (ACK, NACK, DTX)


@dataclass
class ErrorModelParams:
    """Probabilities of the control/data channel error events.

    p_ch: grant (PDCCH) missed per transmission
    p_e:  first-transmission block error rate
    p_na: NACK read as ACK
    p_da: DTX read as ACK
    p_an: ACK read as NACK
    n_max: HARQ retransmission budget
    """

    p_ch: float = 0.01
    p_e: float = 0.1
    p_na: float = 0.0
    p_da: float = 0.0
    p_an: float = 0.0
    n_max: int = 6

    def validate(self) -> None:
        for name in ("p_ch", "p_e", "p_na", "p_da", "p_an"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.n_max < 0:
            raise ValueError(f"n_max={self.n_max} must be >= 0")


@dataclass
class LinkConfig:
    """Per-slot transmission opportunity of fixed transport-block size."""

    slot_us: int = SLOT_US
    tb_bits: int = 75_000  # 150 Mbps peak at 2000 slots/s
    combining_gain: float = 0.95
    combining_enabled: bool = True

    def validate(self) -> None:
        if self.tb_bits <= 0:
            raise ValueError("tb_bits must be > 0")
        if self.slot_us <= 0:
            raise ValueError("slot_us must be > 0")
        if not 0.0 < self.combining_gain <= 1.0:
            raise ValueError("combining_gain must be in (0, 1]")

    @property
    def tb_bytes(self) -> int:
        return self.tb_bits // 8


@dataclass
class TransmissionAttempt:
    """One over-the-air try for a transport block.

    combined_copies counts only attempts whose grant was received; the
    receiver cannot add energy from a transmission it never saw.
    """

    process_id: int
    attempt_index: int  # 1 = initial transmission
    combined_copies: int


@dataclass
class FeedbackSignal:
    true_state: str
    observed_state: str


def grant_received(params: ErrorModelParams, rng) -> bool:
    """False with probability p_ch: the UE missed the resource grant."""
    return not (rng.random() < params.p_ch)


def decode_failure_prob(
    combined_copies: int, cfg: LinkConfig, params: ErrorModelParams
) -> float:
    """Decode-failure probability after the given number of combined copies.

    With combining: p_e^(1 + gain * (copies - 1)); the first copy sees the
    configured BLER exactly, each further copy adds `gain` of an ideal
    exponent increment.  Without combining every attempt fails at p_e.
    """
    if combined_copies < 1:
        raise ValueError("attempt needs at least one combined copy")
    if not cfg.combining_enabled or combined_copies == 1:
        return params.p_e
    exponent = 1.0 + cfg.combining_gain * (combined_copies - 1)
    return params.p_e**exponent


def attempt_decode(
    att: TransmissionAttempt, cfg: LinkConfig, params: ErrorModelParams, rng
) -> bool:
    """True if the receiver decodes this attempt."""
    return not (rng.random() < decode_failure_prob(att.combined_copies, cfg, params))


def corrupt_feedback(true_state: str, params: ErrorModelParams, rng) -> FeedbackSignal:
    """Apply the feedback corruption matrix.

    Only the three transitions with nonzero probability exist:
    NACK->ACK (p_na), DTX->ACK (p_da), ACK->NACK (p_an).
    """
    if true_state not in _STATES:
        raise ValueError(f"unknown feedback state {true_state!r}")
    observed = true_state
    if true_state == NACK:
        if rng.random() < params.p_na:
            observed = ACK
    elif true_state == DTX:
        if rng.random() < params.p_da:
            observed = ACK
    else:  # ACK
        if rng.random() < params.p_an:
            observed = NACK
    return FeedbackSignal(true_state, observed)
