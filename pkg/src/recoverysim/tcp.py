"""Transport layer: Reno and CUBIC senders, a cumulative-ACK receiver, and
the fixed-delay pipe between the application server and the radio stack.

The sender works on a byte stream in MSS-sized segments.  Reno follows the
classic RFC 5681 state machine (fast recovery exits on any new ACK); CUBIC
replaces the linear congestion-avoidance growth with the cubic law
W(t) = C*(t - K)^3 + W_max using the configured (beta, C).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .engine import Simulator, ms

RENO = "reno"
CUBIC = "cubic"

SLOW_START = "slow_start"
CONG_AVOID = "cong_avoid"
FAST_RECOVERY = "fast_recovery"

_RTO_MAX_US = 60_000_000


@dataclass
class TcpConfig:
    mss_bytes: int = 1500
    init_cwnd_mss: int = 3
    ssthresh_init_mss: int = 500
    variant: str = RENO
    cubic_beta: float = 0.2
    cubic_c: float = 0.4
    network_delay_ms: float = 10.0
    delay_is_round_trip: bool = False  # True: configured value is the full RTT part
    rto_min_ms: int = 200
    rto_initial_ms: int = 1000
    dupack_threshold: int = 3

    def validate(self) -> None:
        if min(self.mss_bytes, self.init_cwnd_mss, self.ssthresh_init_mss) <= 0:
            raise ValueError("mss/init_cwnd/ssthresh must be positive")
        if self.variant not in (RENO, CUBIC):
            raise ValueError(f"unknown TCP variant {self.variant!r}")
        if not 0.0 < self.cubic_beta < 1.0:
            raise ValueError("cubic_beta must be in (0, 1)")
        if self.cubic_c <= 0:
            raise ValueError("cubic_c must be > 0")
        if self.network_delay_ms < 0:
            raise ValueError("network_delay_ms must be >= 0")
        if self.dupack_threshold < 1:
            raise ValueError("dupack_threshold must be >= 1")

    @property
    def one_way_delay_us(self) -> int:
        d = ms(self.network_delay_ms)
        return d // 2 if self.delay_is_round_trip else d


def pipe_transfer(sim: Simulator, cfg: TcpConfig, callback, payload) -> None:
    """Schedule a lossless, in-order handoff across the server<->RAN pipe."""
    sim.schedule_in(cfg.one_way_delay_us, callback, payload)


def cubic_window(t_since_epoch_s: float, state, cfg: TcpConfig) -> float:
    """W(t) = C*(t - K)^3 + W_max in MSS units for the current epoch."""
    dt = t_since_epoch_s - state.cubic_k
    return cfg.cubic_c * dt * dt * dt + state.cubic_w_max


class TcpSender:
    """Byte-stream sender with congestion control and adaptive RTO."""

    def __init__(self, cfg: TcpConfig, sim: Simulator, *, transmit, trace_cwnd=False):
        cfg.validate()
        self.cfg = cfg
        self.sim = sim
        self.transmit = transmit  # callback(list[(seq, nbytes, is_retx)])

        mss = cfg.mss_bytes
        self.mss = mss
        self.snd_una = 0
        self.snd_nxt = 0
        self.app_limit = 0  # total bytes handed over by the application
        self.cwnd = float(cfg.init_cwnd_mss)  # MSS units
        self.ssthresh = float(cfg.ssthresh_init_mss)
        self.phase = SLOW_START
        self.dupack_count = 0

        # CUBIC epoch state
        self.cubic_w_max = 0.0
        self.cubic_k = 0.0
        self.cubic_epoch_start: int | None = None
        self._cubic_armed = False
        self.epochs: list = []  # (kind, w_max, k_seconds, epoch_start_us)

        # RTO estimation (RFC 6298 style)
        self.srtt: float | None = None
        self.rttvar = 0.0
        self.rto_us = ms(cfg.rto_initial_ms)
        self._rtt_q = deque()  # (end_seq, sent_at) of first transmissions
        self._retx_mark = 0  # acks at or below this carry no clean RTT sample

        self._rto_deadline: int | None = None
        self._rto_event_at: int | None = None

        self.retransmit_count = 0
        self.rto_count = 0
        self.fast_retransmit_count = 0
        self.cwnd_sum = 0.0
        self.cwnd_samples = 0
        self.cwnd_peak = self.cwnd
        self.trace_cwnd = trace_cwnd
        self.cwnd_trace: list = []

    # -- application input ----------------------------------------------------

    def app_write(self, nbytes: int) -> None:
        self.app_limit += nbytes
        self.send_more()

    @property
    def flight_bytes(self) -> int:
        return self.snd_nxt - self.snd_una

    @property
    def flight_mss(self) -> float:
        return self.flight_bytes / self.mss

    # -- transmission ---------------------------------------------------------

    def send_more(self) -> None:
        out = None
        cwnd_bytes = int(self.cwnd * self.mss)
        while self.snd_nxt < self.app_limit:
            nbytes = min(self.mss, self.app_limit - self.snd_nxt)
            if self.snd_nxt - self.snd_una + nbytes > cwnd_bytes:
                break
            if out is None:
                out = []
            end = self.snd_nxt + nbytes
            out.append((self.snd_nxt, nbytes, end <= self._retx_mark))
            self._rtt_q.append((end, self.sim.now))
            self.snd_nxt = end
        if out:
            self.transmit(out)
            self._ensure_rto_timer()

    def _retransmit_head(self) -> None:
        nbytes = min(self.mss, self.app_limit - self.snd_una)
        if nbytes <= 0:
            return
        self.retransmit_count += 1
        self._retx_mark = max(self._retx_mark, self.snd_una + nbytes)
        self.transmit([(self.snd_una, nbytes, True)])
        self._ensure_rto_timer()

    # -- ACK processing ---------------------------------------------------------

    def on_ack(self, ack: int) -> None:
        if ack > self.snd_una:
            self._on_new_ack(ack)
        elif ack == self.snd_una and self.snd_nxt > self.snd_una:
            self._on_dup_ack()

    def _on_new_ack(self, ack: int) -> None:
        self._sample_rtt(ack)
        self.snd_una = ack
        self.dupack_count = 0
        if self.phase == FAST_RECOVERY:
            # deflate and resume congestion avoidance
            self.cwnd = max(self.ssthresh, 1.0)
            self.phase = CONG_AVOID
            if self.cfg.variant == CUBIC:
                self._cubic_start_epoch("loss")
        elif self.phase == SLOW_START:
            if self.cwnd + 1.0 >= self.ssthresh:
                # land exactly on the threshold before congestion avoidance
                self.cwnd = max(self.cwnd, self.ssthresh)
                self.phase = CONG_AVOID
                if self.cfg.variant == CUBIC:
                    kind = "loss" if self._cubic_armed else "start"
                    self._cubic_start_epoch(kind)
            else:
                self.cwnd += 1.0
        else:  # congestion avoidance
            if self.cfg.variant == RENO:
                self.cwnd += 1.0 / self.cwnd
            else:
                self._cubic_on_ack()
        self.cwnd_sum += self.cwnd
        self.cwnd_samples += 1
        if self.cwnd > self.cwnd_peak:
            self.cwnd_peak = self.cwnd
        if self.trace_cwnd:
            self.cwnd_trace.append((self.sim.now, self.cwnd))
        if self.snd_una == self.snd_nxt:
            self._rto_deadline = None  # all data acknowledged
        else:
            self._restart_rto_timer()
        self.send_more()

    def _on_dup_ack(self) -> None:
        self.dupack_count += 1
        if self.phase == FAST_RECOVERY:
            self.cwnd += 1.0  # inflate per extra duplicate
            self.send_more()
            return
        if self.dupack_count == self.cfg.dupack_threshold:
            self._enter_fast_recovery()

    def _enter_fast_recovery(self) -> None:
        if self.cfg.variant == RENO:
            self.ssthresh = max(self.flight_mss / 2.0, 2.0)
        else:
            self._cubic_on_loss()
        self.fast_retransmit_count += 1
        self.phase = FAST_RECOVERY
        self._retransmit_head()
        self.cwnd = self.ssthresh + self.cfg.dupack_threshold
        if self.trace_cwnd:
            self.cwnd_trace.append((self.sim.now, self.cwnd))
        self.send_more()

    # -- CUBIC ---------------------------------------------------------------

    def _cubic_on_loss(self) -> None:
        self.cubic_w_max = self.cwnd
        self.ssthresh = max(self.cwnd * (1.0 - self.cfg.cubic_beta), 2.0)
        self._cubic_armed = True

    def _cubic_start_epoch(self, kind: str) -> None:
        if not self._cubic_armed:
            # congestion avoidance entered without a prior loss
            self.cubic_w_max = self.cwnd
        self.cubic_k = (
            max(self.cubic_w_max - self.cwnd, 0.0) / self.cfg.cubic_c
        ) ** (1.0 / 3.0)
        self.cubic_epoch_start = self.sim.now
        self._cubic_armed = False
        # (kind, w_max, K, epoch start, cwnd at epoch start)
        self.epochs.append(
            (kind, self.cubic_w_max, self.cubic_k, self.sim.now, self.cwnd)
        )

    def _cubic_on_ack(self) -> None:
        if self.cubic_epoch_start is None:
            self._cubic_start_epoch("start")
        t = (self.sim.now - self.cubic_epoch_start) / 1e6
        target = cubic_window(t, self, self.cfg)
        if target > self.cwnd:
            self.cwnd += (target - self.cwnd) / self.cwnd

    # -- RTO -----------------------------------------------------------------

    def _sample_rtt(self, ack: int) -> None:
        sample = None
        q = self._rtt_q
        while q and q[0][0] <= ack:
            end_seq, sent_at = q.popleft()
            if end_seq > self._retx_mark:
                sample = self.sim.now - sent_at
        if sample is None:
            return
        if self.srtt is None:
            self.srtt = float(sample)
            self.rttvar = sample / 2.0
        else:
            self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.srtt - sample)
            self.srtt = 0.875 * self.srtt + 0.125 * sample
        self.rto_us = int(self.srtt + max(ms(1), 4.0 * self.rttvar))
        self.rto_us = min(max(self.rto_us, ms(self.cfg.rto_min_ms)), _RTO_MAX_US)

    def _ensure_rto_timer(self) -> None:
        if self._rto_deadline is None and self.snd_nxt > self.snd_una:
            self._restart_rto_timer()

    def _restart_rto_timer(self) -> None:
        self._rto_deadline = self.sim.now + self.rto_us
        if self._rto_event_at is None or self._rto_event_at > self._rto_deadline:
            self._rto_event_at = self._rto_deadline
            self.sim.schedule(self._rto_deadline, self._on_rto_event)

    def _on_rto_event(self) -> None:
        self._rto_event_at = None
        if self._rto_deadline is None:
            return
        if self.sim.now < self._rto_deadline:
            self._rto_event_at = self._rto_deadline
            self.sim.schedule(self._rto_deadline, self._on_rto_event)
            return
        self.on_rto()

    def on_rto(self) -> None:
        """Retransmission timeout: collapse to one segment and slow start.

        Without selective acknowledgments the sender cannot tell which of
        the outstanding segments arrived, so transmission resumes from
        snd_una (go-back-N); the receiver discards the duplicates.
        """
        self.rto_count += 1
        if self.cfg.variant == RENO:
            self.ssthresh = max(self.flight_mss / 2.0, 2.0)
        else:
            self._cubic_on_loss()
        self.cwnd = 1.0
        self.phase = SLOW_START
        self.dupack_count = 0
        self.rto_us = min(self.rto_us * 2, _RTO_MAX_US)  # Karn backoff
        if self.trace_cwnd:
            self.cwnd_trace.append((self.sim.now, self.cwnd))
        self._rto_deadline = None
        if self.snd_nxt > self.snd_una:
            self.retransmit_count += 1
            self._retx_mark = max(self._retx_mark, self.snd_nxt)
            self._rtt_q.clear()
            self.snd_nxt = self.snd_una
        self.send_more()


class TcpReceiver:
    """Cumulative-ACK receiver with out-of-order buffering."""

    def __init__(self, *, on_deliver=None):
        self.rcv_nxt = 0
        self._ooo: dict[int, int] = {}  # seq -> end of buffered segment
        self.on_deliver = on_deliver or (lambda nbytes: None)
        self.dup_segments = 0

    def on_segment(self, seq: int, nbytes: int) -> int:
        """Process one segment, return the cumulative ACK to send."""
        end = seq + nbytes
        if end <= self.rcv_nxt:
            self.dup_segments += 1
            return self.rcv_nxt
        if seq <= self.rcv_nxt:
            advanced = end - self.rcv_nxt
            self.rcv_nxt = end
            advanced += self._drain_ooo()
            self.on_deliver(advanced)
        else:
            cur = self._ooo.get(seq)
            if cur is None or cur < end:
                self._ooo[seq] = end
            else:
                self.dup_segments += 1
        return self.rcv_nxt

    def _drain_ooo(self) -> int:
        advanced = 0
        ooo = self._ooo
        while ooo:
            end = ooo.pop(self.rcv_nxt, None)
            if end is not None:
                advanced += end - self.rcv_nxt
                self.rcv_nxt = end
                continue
            # overlapping buffered data (rare): scan once
            hit = False
            for seq in list(ooo):
                if seq <= self.rcv_nxt:
                    end = ooo.pop(seq)
                    if end > self.rcv_nxt:
                        advanced += end - self.rcv_nxt
                        self.rcv_nxt = end
                        hit = True
            if not hit:
                break
        return advanced
