"""RLC layer: acknowledged mode (sliding-window ARQ with status reports,
segmentation/reassembly and poll/reassembly timers) and unacknowledged mode
(in-order delivery with a reordering window, no recovery).

Sequence numbers are per SDU; segments of one SDU share its SN and carry a
byte offset, mirroring 5G AMD PDUs.  SNs are kept as unbounded integers --
there is no wire encoding to fit -- while the configured SN width still
bounds the transmit window.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .engine import Simulator, ms


@dataclass
class RlcAmConfig:
    max_retx: int = 13
    t_poll_retransmit_ms: int = 25
    t_reassembly_ms: int = 50
    sn_bits: int = 18
    poll_pdu_every: int = 16

    def validate(self) -> None:
        if self.max_retx < 0:
            raise ValueError("max_retx must be >= 0")
        if self.t_poll_retransmit_ms <= 0 or self.t_reassembly_ms <= 0:
            raise ValueError("RLC timers must be > 0")
        if self.sn_bits < 2:
            raise ValueError("sn_bits must be >= 2")
        if self.poll_pdu_every < 1:
            raise ValueError("poll_pdu_every must be >= 1")

    @property
    def window_size(self) -> int:
        return 2 ** (self.sn_bits - 1)


@dataclass
class UmConfig:
    t_reassembly_ms: int = 50

    def validate(self) -> None:
        if self.t_reassembly_ms <= 0:
            raise ValueError("t_reassembly must be > 0")


class RlcAmPdu:
    """AMD PDU or PDU segment: a byte slice [so, so+nbytes) of SDU `sn`."""

    __slots__ = ("sn", "so", "nbytes", "is_last_segment", "poll", "sdu_id", "sdu")

    def __init__(self, sn, so, nbytes, is_last_segment, poll, sdu_id, sdu):
        self.sn = sn
        self.so = so
        self.nbytes = nbytes
        self.is_last_segment = is_last_segment
        self.poll = poll
        self.sdu_id = sdu_id
        self.sdu = sdu

    def __repr__(self):  # debugging aid
        return (
            f"Pdu(sn={self.sn}, so={self.so}, n={self.nbytes}, "
            f"last={self.is_last_segment}, poll={self.poll})"
        )


@dataclass
class StatusPdu:
    ack_sn: int
    # (sn, so_start, so_end) byte ranges still missing; so_end None = to end
    nack_list: list = field(default_factory=list)


class _TxSdu:
    __slots__ = ("sdu_id", "sdu", "nbytes", "retx_count", "retx_pending")

    def __init__(self, sdu_id, sdu, nbytes):
        self.sdu_id = sdu_id
        self.sdu = sdu
        self.nbytes = nbytes
        self.retx_count = 0
        self.retx_pending = False


class AmTransmitter:
    """AM transmit side: window, segmentation, retransmission and polling."""

    def __init__(
        self,
        cfg: RlcAmConfig,
        sim: Simulator,
        *,
        on_data_available=None,
        on_sdu_discarded=None,
    ):
        cfg.validate()
        self.cfg = cfg
        self.sim = sim
        self.on_data_available = on_data_available or (lambda: None)
        self.on_sdu_discarded = on_sdu_discarded or (lambda sdu: None)

        self.tx_next = 0  # next fresh SN
        self.tx_next_ack = 0  # lowest unacknowledged SN
        self._queue = deque()  # SDUs not yet assigned an SN
        self._cur = None  # (_TxSdu, offset) partially segmented head SDU
        self._inflight: dict[int, _TxSdu] = {}
        self._retx = deque()  # (sn, so_start, so_end)
        self._next_sdu_id = 0

        self._pdu_since_poll = 0
        self._poll_sn = -1
        self._poll_outstanding = False
        self._poll_timer_version = 0
        self._force_poll = False

        self.discarded_sdus = 0

    # -- upper-layer input ---------------------------------------------------

    def enqueue_sdu(self, sdu, nbytes: int) -> None:
        self._queue.append(_TxSdu(self._next_sdu_id, sdu, nbytes))
        self._next_sdu_id += 1
        self.on_data_available()

    def buffered_sdus(self) -> int:
        return len(self._queue) + (1 if self._cur else 0)

    # -- MAC-facing ------------------------------------------------------------

    def _window_full(self) -> bool:
        return self.tx_next - self.tx_next_ack >= self.cfg.window_size

    def has_data(self) -> bool:
        if self._retx or self._force_poll:
            return True
        return bool(self._queue or self._cur) and not self._window_full()

    def build(self, byte_budget: int) -> list[RlcAmPdu]:
        """PDUs for one transmission opportunity; retransmissions first."""
        if byte_budget <= 0:
            raise ValueError("byte_budget must be > 0")
        pdus: list[RlcAmPdu] = []
        budget = byte_budget
        while budget > 0:
            if self._retx:
                sn, so, so_end = self._retx[0]
                entry = self._inflight.get(sn)
                if entry is None:  # acked meanwhile
                    self._retx.popleft()
                    continue
                end = so_end if so_end is not None else entry.nbytes
                take = min(budget, end - so)
                last = so + take == entry.nbytes
                pdus.append(
                    RlcAmPdu(sn, so, take, last, False, entry.sdu_id, entry.sdu)
                )
                budget -= take
                if so + take == end:
                    self._retx.popleft()
                    if not any(r[0] == sn for r in self._retx):
                        entry.retx_pending = False
                else:
                    self._retx[0] = (sn, so + take, so_end)
            elif (self._cur or self._queue) and not self._window_full():
                if self._cur is None:
                    entry = self._queue.popleft()
                    sn = self.tx_next
                    self.tx_next += 1
                    self._inflight[sn] = entry
                    self._cur = (sn, entry, 0)
                sn, entry, offset = self._cur
                take = min(budget, entry.nbytes - offset)
                last = offset + take == entry.nbytes
                pdus.append(
                    RlcAmPdu(sn, offset, take, last, False, entry.sdu_id, entry.sdu)
                )
                budget -= take
                if last:
                    self._cur = None
                else:
                    self._cur = (sn, entry, offset + take)
            else:
                break
        if pdus:
            self._apply_polling(pdus)
        return pdus

    def _apply_polling(self, pdus: list[RlcAmPdu]) -> None:
        poll = False
        for pdu in pdus:
            self._pdu_since_poll += 1
            if self._pdu_since_poll >= self.cfg.poll_pdu_every:
                pdu.poll = True
                self._pdu_since_poll = 0
                poll = True
        # poll when the buffers drain so the last loss is still reported
        if self._force_poll or not (self._retx or self._cur or self._queue):
            pdus[-1].poll = True
            self._pdu_since_poll = 0
            self._force_poll = False
            poll = True
        if poll:
            self._poll_sn = max(self._poll_sn, max(p.sn for p in pdus if p.poll))
            self._start_poll_timer()

    # -- status handling ---------------------------------------------------

    def on_status(self, status: StatusPdu) -> None:
        if status.ack_sn > self.tx_next:  # malformed: acks beyond sent data
            return
        nacked: dict[int, list] = {}
        for sn, so_start, so_end in status.nack_list:
            if sn >= status.ack_sn:
                continue  # malformed entry
            nacked.setdefault(sn, []).append((so_start, so_end))

        for sn in list(self._inflight):
            if sn >= status.ack_sn:
                continue
            entry = self._inflight[sn]
            if sn not in nacked:
                del self._inflight[sn]
                continue
            if entry.retx_pending:
                continue  # this loss is already queued
            entry.retx_count += 1
            if entry.retx_count > self.cfg.max_retx:
                del self._inflight[sn]
                self.discarded_sdus += 1
                self.on_sdu_discarded(entry.sdu)
                continue
            entry.retx_pending = True
            for so_start, so_end in nacked[sn]:
                self._retx.append((sn, so_start or 0, so_end))

        self._advance_window()

        if self._poll_outstanding and (
            status.ack_sn > self._poll_sn or self._poll_sn in nacked
        ):
            self._cancel_poll_timer()
        if self.has_data():
            self.on_data_available()

    def _advance_window(self) -> None:
        while self.tx_next_ack < self.tx_next and self.tx_next_ack not in self._inflight:
            self.tx_next_ack += 1

    def on_mac_loss(self, pdus: list[RlcAmPdu]) -> None:
        """Transmitter-side give-up report: requeue the lost byte ranges."""
        for pdu in pdus:
            entry = self._inflight.get(pdu.sn)
            if entry is None or entry.retx_pending:
                continue
            entry.retx_count += 1
            if entry.retx_count > self.cfg.max_retx:
                del self._inflight[pdu.sn]
                self.discarded_sdus += 1
                self.on_sdu_discarded(entry.sdu)
                self._advance_window()
                continue
            entry.retx_pending = True
            self._retx.append((pdu.sn, pdu.so, pdu.so + pdu.nbytes))
        if self._retx:
            self.on_data_available()

    # -- poll-retransmit timer ----------------------------------------------

    def _start_poll_timer(self) -> None:
        self._poll_outstanding = True
        self._poll_timer_version += 1
        self.sim.schedule_in(
            ms(self.cfg.t_poll_retransmit_ms),
            self._on_poll_timer,
            self._poll_timer_version,
        )

    def _cancel_poll_timer(self) -> None:
        self._poll_outstanding = False
        self._poll_timer_version += 1

    def _on_poll_timer(self, version: int) -> None:
        if version != self._poll_timer_version or not self._poll_outstanding:
            return
        self.on_poll_retransmit_timer()

    def on_poll_retransmit_timer(self) -> None:
        """Re-solicit a status: retransmit the highest unacked PDU polled."""
        if not self._inflight:
            self._poll_outstanding = False
            return
        sn = max(self._inflight)
        entry = self._inflight[sn]
        entry.retx_count += 1
        if entry.retx_count > self.cfg.max_retx:
            del self._inflight[sn]
            self.discarded_sdus += 1
            self.on_sdu_discarded(entry.sdu)
            self._advance_window()
            self._poll_outstanding = False
            return
        if not entry.retx_pending:
            entry.retx_pending = True
            self._retx.append((sn, 0, None))
        self._force_poll = True
        self.on_data_available()


class _RxSlot:
    """Per-SN reception state: received byte ranges of one SDU."""

    __slots__ = ("ranges", "total", "sdu")

    def __init__(self):
        self.ranges: list = []  # merged, sorted (start, end)
        self.total = None  # known once the last segment arrives
        self.sdu = None

    def add(self, so: int, nbytes: int, is_last: bool, sdu) -> bool:
        """Insert a segment; returns True if it added new bytes."""
        if self.sdu is None:
            self.sdu = sdu
        if is_last:
            self.total = so + nbytes
        start, end = so, so + nbytes
        merged = []
        added = False
        placed = False
        for s, e in self.ranges:
            if e < start or s > end:
                merged.append((s, e))
            else:
                if s > start or e < end:
                    added = True
                start, end = min(s, start), max(e, end)
                placed = True
        if not placed:
            added = True
        merged.append((start, end))
        merged.sort()
        self.ranges = merged
        return added

    @property
    def complete(self) -> bool:
        return (
            self.total is not None
            and len(self.ranges) == 1
            and self.ranges[0] == (0, self.total)
        )

    def missing(self) -> list:
        """Byte ranges not yet received, as (so_start, so_end|None)."""
        gaps = []
        pos = 0
        for s, e in self.ranges:
            if s > pos:
                gaps.append((pos, s))
            pos = max(pos, e)
        if self.total is None:
            gaps.append((pos, None))
        elif pos < self.total:
            gaps.append((pos, self.total))
        return gaps


class AmReceiver:
    """AM receive side: in-order delivery, gap detection, status generation."""

    def __init__(
        self,
        cfg: RlcAmConfig,
        sim: Simulator,
        *,
        deliver,
        send_status,
    ):
        cfg.validate()
        self.cfg = cfg
        self.sim = sim
        self.deliver = deliver
        self.send_status = send_status

        self.rx_next = 0  # lowest SN not fully received
        self.rx_highest = 0  # highest received SN + 1
        self._slots: dict[int, _RxSlot] = {}
        self._timer_version = 0
        self._timer_running = False
        self.out_of_window_drops = 0
        self.duplicate_drops = 0

    def on_pdu(self, pdu: RlcAmPdu) -> list:
        delivered = []
        sn = pdu.sn
        if sn == self.rx_next and pdu.is_last_segment and pdu.so == 0 and sn not in self._slots:
            # in-order unsegmented PDU: deliver without buffering
            self.rx_next = sn + 1
            if self.rx_next > self.rx_highest:
                self.rx_highest = self.rx_next
            delivered.append(pdu.sdu)
            if self._slots:
                self._drain_completed(delivered)
            if self._timer_running and not self._has_gap():
                self._stop_reassembly_timer()
        elif sn < self.rx_next or sn >= self.rx_next + self.cfg.window_size:
            if sn < self.rx_next:
                self.duplicate_drops += 1
            else:
                self.out_of_window_drops += 1
        else:
            slot = self._slots.get(sn)
            if slot is None:
                slot = _RxSlot()
                self._slots[sn] = slot
            if not slot.add(pdu.so, pdu.nbytes, pdu.is_last_segment, pdu.sdu):
                self.duplicate_drops += 1
            self.rx_highest = max(self.rx_highest, sn + 1)
            self._drain_completed(delivered)
            if self._has_gap():
                if not self._timer_running:
                    self._start_reassembly_timer()
            else:
                self._stop_reassembly_timer()
        if pdu.poll:
            self.send_status(self._build_status())
        if delivered:
            self.deliver(delivered)
        return delivered

    def _drain_completed(self, delivered: list) -> None:
        while True:
            head = self._slots.get(self.rx_next)
            if head is None or not head.complete:
                break
            delivered.append(head.sdu)
            del self._slots[self.rx_next]
            self.rx_next += 1

    def _has_gap(self) -> bool:
        """True when loss is evidenced, not merely an SDU tail in flight."""
        if self.rx_next < self.rx_highest - 1:
            return True
        if self.rx_next == self.rx_highest - 1:
            slot = self._slots.get(self.rx_next)
            if slot is None:
                return True
            ranges = slot.ranges
            return len(ranges) > 1 or (bool(ranges) and ranges[0][0] > 0)
        return False

    def _build_status(self) -> StatusPdu:
        """Cumulative ACK plus NACKs for every evidenced gap.

        A missing range counts as a gap only if data beyond it has been
        received; the trailing bytes of the newest, still-arriving SDU are
        not reported, and the ACK stops below that SDU so the transmitter
        never releases bytes the receiver does not hold.
        """
        highest = self.rx_highest - 1
        head = self._slots.get(highest)
        highest_partial = head is not None and not head.complete
        ack_sn = self.rx_highest - 1 if highest_partial else self.rx_highest
        nacks = []
        for sn in range(self.rx_next, ack_sn):
            slot = self._slots.get(sn)
            if slot is None:
                nacks.append((sn, 0, None))
            elif not slot.complete:
                for so_start, so_end in slot.missing():
                    nacks.append((sn, so_start, so_end))
        return StatusPdu(ack_sn=ack_sn, nack_list=nacks)

    # -- reassembly timer -----------------------------------------------------

    def _start_reassembly_timer(self) -> None:
        self._timer_running = True
        self._timer_version += 1
        self.sim.schedule_in(
            ms(self.cfg.t_reassembly_ms), self._on_timer, self._timer_version
        )

    def _stop_reassembly_timer(self) -> None:
        self._timer_running = False
        self._timer_version += 1

    def _on_timer(self, version: int) -> None:
        if version != self._timer_version or not self._timer_running:
            return
        self._timer_running = False
        self.on_reassembly_timer()

    def on_reassembly_timer(self) -> StatusPdu:
        """Expiry: report cumulative ACK plus NACKs for every detected gap."""
        status = self._build_status()
        self.send_status(status)
        if self._has_gap():
            self._start_reassembly_timer()
        return status


class UmTransmitter:
    """UM transmit side: SN assignment and segmentation, no recovery."""

    def __init__(self, on_data_available=None):
        self.tx_next = 0
        self._queue = deque()
        self._cur = None
        self._next_sdu_id = 0
        self.on_data_available = on_data_available or (lambda: None)

    def enqueue_sdu(self, sdu, nbytes: int) -> None:
        self._queue.append((self._next_sdu_id, sdu, nbytes))
        self._next_sdu_id += 1
        self.on_data_available()

    def buffered_sdus(self) -> int:
        return len(self._queue) + (1 if self._cur else 0)

    def has_data(self) -> bool:
        return bool(self._queue or self._cur)

    def build(self, byte_budget: int) -> list[RlcAmPdu]:
        if byte_budget <= 0:
            raise ValueError("byte_budget must be > 0")
        pdus: list[RlcAmPdu] = []
        budget = byte_budget
        while budget > 0 and (self._cur or self._queue):
            if self._cur is None:
                sdu_id, sdu, nbytes = self._queue.popleft()
                self._cur = (self.tx_next, sdu_id, sdu, nbytes, 0)
                self.tx_next += 1
            sn, sdu_id, sdu, nbytes, offset = self._cur
            take = min(budget, nbytes - offset)
            last = offset + take == nbytes
            pdus.append(RlcAmPdu(sn, offset, take, last, False, sdu_id, sdu))
            budget -= take
            self._cur = None if last else (sn, sdu_id, sdu, nbytes, offset + take)
        return pdus

    def on_status(self, status: StatusPdu) -> None:  # no ARQ in UM
        pass

    def on_mac_loss(self, pdus) -> None:
        pass


class UmReceiver:
    """UM receive side: reordering within t_reassembly, then gaps are lost."""

    def __init__(self, cfg: UmConfig, sim: Simulator, *, deliver):
        cfg.validate()
        self.cfg = cfg
        self.sim = sim
        self.deliver = deliver
        self.rx_next = 0
        self.rx_highest = 0
        self._slots: dict[int, _RxSlot] = {}
        self._timer_version = 0
        self._timer_running = False
        self._trigger_high = 0
        self.lost_sdus = 0
        self.delivered_sdus = 0
        self.duplicate_drops = 0

    def on_pdu(self, pdu: RlcAmPdu) -> list:
        sn = pdu.sn
        if sn == self.rx_next and pdu.is_last_segment and pdu.so == 0 and sn not in self._slots:
            self.rx_next = sn + 1
            if self.rx_next > self.rx_highest:
                self.rx_highest = self.rx_next
            self.delivered_sdus += 1
            delivered = [pdu.sdu]
            if self._slots:
                delivered.extend(self._drain())
            elif self._timer_running and self.rx_next >= self.rx_highest:
                self._stop_timer()
            self.deliver(delivered)
            return delivered
        if sn < self.rx_next:
            self.duplicate_drops += 1
            return []
        slot = self._slots.get(sn)
        if slot is None:
            slot = _RxSlot()
            self._slots[sn] = slot
        if not slot.add(pdu.so, pdu.nbytes, pdu.is_last_segment, pdu.sdu):
            self.duplicate_drops += 1
        self.rx_highest = max(self.rx_highest, sn + 1)
        delivered = self._drain()
        if self.rx_next < self.rx_highest and not self._timer_running:
            self._start_timer()
        if delivered:
            self.deliver(delivered)
        return delivered

    def _drain(self) -> list:
        delivered = []
        while True:
            head = self._slots.get(self.rx_next)
            if head is None or not head.complete:
                break
            delivered.append(head.sdu)
            self.delivered_sdus += 1
            del self._slots[self.rx_next]
            self.rx_next += 1
        if self.rx_next >= self.rx_highest:
            self._stop_timer()
        return delivered

    def _start_timer(self) -> None:
        self._timer_running = True
        self._timer_version += 1
        # SNs above this mark get a fresh timer round before being dropped
        self._trigger_high = self.rx_highest
        self.sim.schedule_in(
            ms(self.cfg.t_reassembly_ms), self._on_timer, self._timer_version
        )

    def _stop_timer(self) -> None:
        self._timer_running = False
        self._timer_version += 1

    def _on_timer(self, version: int) -> None:
        if version != self._timer_version or not self._timer_running:
            return
        self._timer_running = False
        self.on_reassembly_timer()

    def on_reassembly_timer(self) -> list:
        """Expiry: discard the gap SDUs, advance, deliver what follows."""
        delivered = []
        while self.rx_next < self._trigger_high:
            head = self._slots.get(self.rx_next)
            if head is not None and head.complete:
                delivered.append(head.sdu)
                self.delivered_sdus += 1
                del self._slots[self.rx_next]
            else:
                if head is not None:
                    del self._slots[self.rx_next]
                self.lost_sdus += 1
            self.rx_next += 1
        delivered.extend(self._drain())
        if self.rx_next < self.rx_highest:
            self._start_timer()
        if delivered:
            self.deliver(delivered)
        return delivered
