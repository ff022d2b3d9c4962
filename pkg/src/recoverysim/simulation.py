"""Single-run assembly: server TCP sender, network pipe, gNB RLC+HARQ over
the abstract radio link, UE RLC receiver and TCP receiver, FTP3 traffic.

Downlink data flows server -> pipe -> gNB RLC -> HARQ/slots -> UE RLC ->
UE TCP.  TCP ACKs and RLC status reports ride an uplink with fixed latency;
status (and ACK batch) loss mirrors the analytic downlink residual rate
unless configured explicitly.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass, field

from .analytics import residual_error_exact
from .engine import Simulator, seconds
from .harq import HarqConfig, HarqEntity
from .link import ErrorModelParams, LinkConfig
from .metrics import RunMetrics
from .rlc import (
    AmReceiver,
    AmTransmitter,
    RlcAmConfig,
    UmConfig,
    UmReceiver,
    UmTransmitter,
)
from .tcp import TcpConfig, TcpReceiver, TcpSender, pipe_transfer
from .traffic import FileTransfer, FtpConfig, next_arrival_delta_us

AM = "am"
UM = "um"


@dataclass
class SimConfig:
    sim_seconds: float = 60.0
    warmup_seconds: float = 4.0
    master_seed: int = 1
    rlc_mode: str = AM
    link: LinkConfig = field(default_factory=LinkConfig)
    errors: ErrorModelParams = field(default_factory=ErrorModelParams)
    harq: HarqConfig = field(default_factory=HarqConfig)
    rlc_am: RlcAmConfig = field(default_factory=RlcAmConfig)
    um: UmConfig = field(default_factory=UmConfig)
    tcp: TcpConfig = field(default_factory=TcpConfig)
    ftp: FtpConfig = field(default_factory=FtpConfig)
    ul_latency_slots: int = 2
    ul_loss_prob: float | None = None  # None: mirror the analytic DL residual rate
    trace_cwnd: bool = False

    def validate(self) -> None:
        if self.sim_seconds <= self.warmup_seconds:
            raise ValueError("sim_seconds must exceed warmup_seconds")
        if self.rlc_mode not in (AM, UM):
            raise ValueError(f"unknown rlc_mode {self.rlc_mode!r}")
        self.link.validate()
        self.errors.validate()
        self.harq.validate()
        self.rlc_am.validate()
        self.um.validate()
        self.tcp.validate()
        self.ftp.validate()

    def key(self) -> str:
        """Canonical configuration identity, independent of the seed."""
        d = asdict(self)
        d.pop("master_seed")
        d.pop("trace_cwnd")
        return json.dumps(d, sort_keys=True)


class _UserStack:
    """One user's full protocol stack on its own single-user link."""

    def __init__(self, sim: Simulator, cfg: SimConfig, user: int):
        self.sim = sim
        self.cfg = cfg
        self.user = user
        self.slot_us = cfg.link.slot_us
        self.warmup_us = seconds(cfg.warmup_seconds)
        self.ul_latency_us = cfg.ul_latency_slots * self.slot_us

        if cfg.ul_loss_prob is not None:
            self.ul_loss = cfg.ul_loss_prob
        else:
            self.ul_loss = residual_error_exact(cfg.errors).p_re_exact
        self.rng_ul = sim.stream(f"ul/u{user}")
        self.rng_traffic = sim.stream(f"traffic/u{user}")

        self.sender = TcpSender(
            cfg.tcp, sim, transmit=self._on_segments_sent, trace_cwnd=cfg.trace_cwnd
        )
        self.receiver = TcpReceiver(on_deliver=self._on_app_delivery)

        if cfg.rlc_mode == AM:
            self.rlc_tx = AmTransmitter(
                cfg.rlc_am,
                sim,
                on_data_available=self._wake_mac,
                on_sdu_discarded=self._on_sdu_discarded,
            )
            self.rlc_rx = AmReceiver(
                cfg.rlc_am, sim, deliver=self._on_rlc_deliver, send_status=self._send_status
            )
        else:
            self.rlc_tx = UmTransmitter(on_data_available=self._wake_mac)
            self.rlc_rx = UmReceiver(cfg.um, sim, deliver=self._on_rlc_deliver)

        self.mac = HarqEntity(
            cfg.harq,
            cfg.link,
            cfg.errors,
            pull_pdus=self.rlc_tx.build,
            has_data=self.rlc_tx.has_data,
            deliver=self._on_tb_delivered,
            on_giveup=self.rlc_tx.on_mac_loss,
            rng_grant=sim.stream(f"grant/u{user}"),
            rng_decode=sim.stream(f"decode/u{user}"),
            rng_feedback=sim.stream(f"feedback/u{user}"),
        )
        self._mac_active = False
        self._last_slot = -1
        self._in_slot = False
        self._ack_buf: list = []

        self.files: deque[FileTransfer] = deque()
        self.completed: list[FileTransfer] = []
        self.files_arrived = 0
        self.sdus_delivered = 0
        self.sdus_discarded_tx = 0
        self.bytes_in_window = 0
        self.total_delivered = 0

        self.sim.schedule_in(
            next_arrival_delta_us(self.rng_traffic, cfg.ftp), self._on_file_arrival
        )

    # -- traffic ---------------------------------------------------------------

    def _on_file_arrival(self) -> None:
        nbytes = self.cfg.ftp.file_bytes
        start = self.sender.app_limit
        ft = FileTransfer(
            id=self.files_arrived,
            user=self.user,
            arrival_time=self.sim.now,
            start_byte=start,
            end_byte=start + nbytes,
            first_byte_sent=self.sim.now,
        )
        self.files_arrived += 1
        self.files.append(ft)
        self.sender.app_write(nbytes)
        self.sim.schedule_in(
            next_arrival_delta_us(self.rng_traffic, self.cfg.ftp), self._on_file_arrival
        )

    # -- downlink data path ------------------------------------------------------

    def _on_segments_sent(self, segments) -> None:
        pipe_transfer(self.sim, self.cfg.tcp, self._on_segments_at_gnb, segments)

    def _on_segments_at_gnb(self, segments) -> None:
        enqueue = self.rlc_tx.enqueue_sdu
        for seq, nbytes, _is_retx in segments:
            enqueue((seq, nbytes), nbytes)

    def _on_tb_delivered(self, pdus) -> None:
        on_pdu = self.rlc_rx.on_pdu
        for pdu in pdus:
            on_pdu(pdu)

    def _on_rlc_deliver(self, sdus) -> None:
        buf = self._ack_buf
        on_segment = self.receiver.on_segment
        self.sdus_delivered += len(sdus)
        for seq, nbytes in sdus:
            buf.append(on_segment(seq, nbytes))
        if not self._in_slot:
            self._flush_acks()

    # -- uplink ------------------------------------------------------------------

    def _flush_acks(self) -> None:
        if not self._ack_buf:
            return
        acks = self._ack_buf
        self._ack_buf = []
        if self.ul_loss > 0.0 and self.rng_ul.random() < self.ul_loss:
            return  # the whole uplink allocation was lost
        self.sim.schedule_in(
            self.ul_latency_us + self.cfg.tcp.one_way_delay_us,
            self._on_acks_at_server,
            acks,
        )

    def _on_acks_at_server(self, acks) -> None:
        on_ack = self.sender.on_ack
        for ack in acks:
            on_ack(ack)

    def _send_status(self, status) -> None:
        if self.ul_loss > 0.0 and self.rng_ul.random() < self.ul_loss:
            return
        self.sim.schedule_in(self.ul_latency_us, self.rlc_tx.on_status, status)

    # -- MAC slot loop ---------------------------------------------------------

    def _wake_mac(self) -> None:
        if self._mac_active:
            return
        self._mac_active = True
        now = self.sim.now
        slot_us = self.slot_us
        nxt = now if now % slot_us == 0 else (now // slot_us + 1) * slot_us
        if nxt // slot_us <= self._last_slot:
            nxt = (self._last_slot + 1) * slot_us
        self.sim.schedule(nxt, self._on_slot_tick)

    def _on_slot_tick(self) -> None:
        slot = self.sim.now // self.slot_us
        self._last_slot = slot
        self._in_slot = True
        self.mac.on_slot(slot)
        self._in_slot = False
        self._flush_acks()
        if self.mac.work_pending():
            self.sim.schedule(self.sim.now + self.slot_us, self._on_slot_tick)
        else:
            self._mac_active = False

    # -- delivery accounting ------------------------------------------------------

    def _on_app_delivery(self, nbytes: int) -> None:
        now = self.sim.now
        self.total_delivered += nbytes
        if now >= self.warmup_us:
            self.bytes_in_window += nbytes
        files = self.files
        while files and self.total_delivered >= files[0].end_byte:
            ft = files.popleft()
            ft.last_byte_delivered = now
            if now >= self.warmup_us:
                self.completed.append(ft)

    def _on_sdu_discarded(self, sdu) -> None:
        self.sdus_discarded_tx += 1

    # -- per-user results ----------------------------------------------------------

    def user_throughput_bps(self) -> float:
        window_us = seconds(self.cfg.sim_seconds) - self.warmup_us
        return self.bytes_in_window * 8 * 1_000_000 / window_us

    def per_packet_samples(self) -> list:
        out = []
        for ft in self.completed:
            duration = ft.last_byte_delivered - ft.arrival_time
            if duration > 0:
                out.append(self.cfg.ftp.file_bytes * 8 * 1_000_000 / duration)
        return out

    def rlc_lost_sdus(self) -> int:
        if self.cfg.rlc_mode == UM:
            return self.rlc_rx.lost_sdus
        return self.sdus_discarded_tx


def run_simulation(cfg: SimConfig) -> RunMetrics:
    """Execute one seeded run and collect its KPI record."""
    cfg.validate()
    sim = Simulator(cfg.master_seed)
    stacks = [_UserStack(sim, cfg, u) for u in range(cfg.ftp.n_users)]
    sim.run_until(seconds(cfg.sim_seconds))

    log_delivered = sum(s.mac.log.delivered for s in stacks)
    log_na = sum(s.mac.log.residual_na for s in stacks)
    log_da = sum(s.mac.log.residual_da for s in stacks)
    log_gu = sum(s.mac.log.giveup for s in stacks)
    concluded = log_delivered + log_na + log_da + log_gu
    residual_rate = (log_na + log_da + log_gu) / concluded if concluded else 0.0

    sdu_delivered = sum(s.sdus_delivered for s in stacks)
    sdu_lost = sum(s.rlc_lost_sdus() for s in stacks)
    sdu_total = sdu_delivered + sdu_lost
    sdu_loss_rate = sdu_lost / sdu_total if sdu_total else 0.0

    pkt_samples = []
    for s in stacks:
        pkt_samples.extend(s.per_packet_samples())

    cwnd_means = [
        s.sender.cwnd_sum / s.sender.cwnd_samples
        for s in stacks
        if s.sender.cwnd_samples
    ]
    return RunMetrics(
        config_key=cfg.key(),
        seed=cfg.master_seed,
        user_throughput_bps=[s.user_throughput_bps() for s in stacks],
        per_packet_throughput_bps=pkt_samples,
        mac_residual_rate=residual_rate,
        tb_delivered=log_delivered,
        tb_residual_na=log_na,
        tb_residual_da=log_da,
        tb_giveup=log_gu,
        rlc_sdu_loss_rate=sdu_loss_rate,
        sdu_delivered=sdu_delivered,
        sdu_lost=sdu_lost,
        sdu_discarded_tx=sum(s.sdus_discarded_tx for s in stacks),
        files_arrived=sum(s.files_arrived for s in stacks),
        files_completed=sum(len(s.completed) for s in stacks),
        incomplete_files=sum(len(s.files) for s in stacks),
        cwnd_mean=sum(cwnd_means) / len(cwnd_means) if cwnd_means else 0.0,
        cwnd_max=max((s.sender.cwnd_peak for s in stacks), default=0.0),
        spurious_harq_retx=sum(s.mac.log.spurious_retx for s in stacks),
        tcp_fast_retransmits=sum(s.sender.fast_retransmit_count for s in stacks),
        tcp_rtos=sum(s.sender.rto_count for s in stacks),
        cubic_epochs=[e for s in stacks for e in s.sender.epochs],
    )
