"""Lossy broadcast channel and the stop-and-wait transport on top of it.

Header layout, MSB to LSB, serialised big-endian::

    src[15:12] dst[11:8] ack[7] end[6] tag[5:4] seq[3:0]
"""
from __future__ import annotations

import heapq
import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

BROADCAST = 0xF
HEADER_BYTES = 2
ACK_BYTES = HEADER_BYTES
MAX_PAYLOAD = 60
DEFAULT_BITRATE = 64100.0
ACK_TIMEOUT = 0.050
MAX_RETRIES = 20


class Tag(IntEnum):
    POSE_UPDATE = 0
    TOF_SCAN_REQUEST = 1
    TOF_SCAN_RESPONSE = 2
    CONTROL = 3


MESSAGE_SIZES = {Tag.POSE_UPDATE: 16, Tag.TOF_SCAN_REQUEST: 4, Tag.CONTROL: 16}
SR_MAX_BYTES = 1146
F_SCAN = math.ceil(SR_MAX_BYTES / MAX_PAYLOAD)  # 20 fragments


class HeaderError(ValueError):
    pass


class ReassemblyOverflow(RuntimeError):
    pass


@dataclass(frozen=True)
class PacketHeader:
    src: int
    dst: int
    ack: bool = False
    end: bool = False
    tag: int = 0
    seq: int = 0

    def __post_init__(self):
        for name, width in (("src", 4), ("dst", 4), ("tag", 2), ("seq", 4)):
            v = getattr(self, name)
            if not 0 <= int(v) < (1 << width):
                raise HeaderError(f"{name}={v} does not fit in {width} bits")
        if self.src == BROADCAST:
            raise HeaderError("source address must not be the broadcast address")


def encode_header(h: PacketHeader) -> bytes:
    word = (h.src << 12) | (h.dst << 8) | (int(h.ack) << 7) | (int(h.end) << 6) | (h.tag << 4) | h.seq
    return word.to_bytes(2, "big")


def decode_header(raw: bytes) -> PacketHeader:
    if len(raw) < 2:
        raise HeaderError(f"need 2 header bytes, got {len(raw)}")
    word = int.from_bytes(raw[:2], "big")
    src = word >> 12
    if src == BROADCAST:
        raise HeaderError("source address must not be the broadcast address")
    return PacketHeader(src, (word >> 8) & 0xF, bool(word >> 7 & 1), bool(word >> 6 & 1),
                        (word >> 4) & 0x3, word & 0xF)


@dataclass(frozen=True)
class Packet:
    header: PacketHeader
    payload: bytes = b""

    def __post_init__(self):
        if len(self.payload) > MAX_PAYLOAD:
            raise ValueError(f"payload of {len(self.payload)} bytes exceeds {MAX_PAYLOAD}")

    def to_bytes(self) -> bytes:
        return encode_header(self.header) + bytes(self.payload)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Packet":
        return cls(decode_header(raw), bytes(raw[2:]))

    def __len__(self) -> int:
        return HEADER_BYTES + len(self.payload)


@dataclass(frozen=True)
class Message:
    tag: Tag
    body: bytes

    def __post_init__(self):
        object.__setattr__(self, "tag", Tag(self.tag))
        n = len(self.body)
        if self.tag is Tag.TOF_SCAN_RESPONSE:
            if n > SR_MAX_BYTES:
                raise ValueError(f"scan response of {n} bytes exceeds {SR_MAX_BYTES}")
        elif n != MESSAGE_SIZES[self.tag]:
            raise ValueError(f"{self.tag.name} body must be {MESSAGE_SIZES[self.tag]} bytes, got {n}")

    def fragments(self) -> list[bytes]:
        if not self.body:
            return [b""]
        return [self.body[i:i + MAX_PAYLOAD] for i in range(0, len(self.body), MAX_PAYLOAD)]


@dataclass(frozen=True)
class ChannelModel:
    loss_prob: float = 0.0
    max_bitrate: float = DEFAULT_BITRATE
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.loss_prob < 1.0:
            raise ValueError("loss_prob must lie in [0, 1)")
        if self.max_bitrate <= 0:
            raise ValueError("max_bitrate must be positive")

    def airtime(self, n_bytes: int) -> float:
        return n_bytes * 8.0 / self.max_bitrate


def required_bandwidth(n: int, d: float, p_sm: float, velocity: float | None = None,
                       pum: int = 16, ack: int = ACK_BYTES, tsr: int = 4, sr: int = SR_MAX_BYTES,
                       f_scan: int = F_SCAN) -> dict:
    """Swarm bandwidth model in bits per meter travelled (and per second).

    ``B = (N/d)(PUM + ACK(N-1)) + N p_sm (TSR + SR + f_scan ACK)`` bytes,
    with the map-update broadcast term taken as zero.
    """
    if n < 1 or d <= 0 or not 0.0 <= p_sm <= 1.0:
        raise ValueError("need n >= 1, d > 0 and p_sm in [0, 1]")
    b = (n / d) * (pum + ack * (n - 1)) + n * p_sm * (tsr + sr + f_scan * ack)
    out = {"bytes_per_m": b, "bits_per_m": 8.0 * b}
    if velocity is not None:
        out["bits_per_s"] = 8.0 * b * velocity
    return out


PACKET_LOG_HEADER = "t,src,dst,ack,end,tag,seq,len"


@dataclass
class DeliveryReport:
    src: int
    dst: int
    tag: Tag
    delivered_to: set[int]
    failed: set[int]
    t_start: float
    t_end: float = math.nan

    @property
    def ok(self) -> bool:
        return not self.failed


@dataclass
class _Outgoing:
    msg: Message
    dst: int
    recipients: set[int]
    fragments: list[bytes]
    report: DeliveryReport
    frag: int = 0


@dataclass
class Node:
    """Per-address transport state machine."""

    address: int
    peers: set[int]
    failed: bool = False
    queue: deque = field(default_factory=deque)
    current: _Outgoing | None = None
    pending: set[int] = field(default_factory=set)
    retries: int = 0
    timer_token: int = -1
    in_flight: Packet | None = None
    seq_out: dict[int, int] = field(default_factory=dict)
    last_seq_in: dict[tuple[int, int], int] = field(default_factory=dict)
    buffers: dict[tuple[int, int], bytearray] = field(default_factory=dict)
    inbox: list[tuple[float, int, Message]] = field(default_factory=list)

    def next_seq(self, dst: int) -> int:
        s = self.seq_out.get(dst, 0)
        self.seq_out[dst] = (s + 1) & 0xF
        return s


class Network:
    """Discrete-event broadcast medium shared by all nodes.

    Every packet reaches every other live node after its airtime unless
    dropped, independently per receiver, with probability ``loss_prob``.
    There is no media access control; transmissions may overlap.
    """

    def __init__(self, addresses, channel: ChannelModel | None = None,
                 on_message: Callable | None = None, on_report: Callable | None = None,
                 rng: np.random.Generator | None = None):
        self.channel = channel or ChannelModel()
        self.rng = rng if rng is not None else np.random.default_rng(self.channel.seed)
        addrs = sorted(int(a) for a in addresses)
        if len(set(addrs)) != len(addrs) or any(not 0 <= a < BROADCAST for a in addrs):
            raise ValueError("addresses must be unique and within 0..14")
        self.nodes = {a: Node(a, set(addrs) - {a}) for a in addrs}
        self.now = 0.0
        self._events: list = []
        self._counter = itertools.count()
        self._tokens = itertools.count()
        self.on_message = on_message
        self.on_report = on_report
        self.log: list[tuple] = []
        self.payload_bytes = 0
        self.header_bytes = 0
        self.ack_bytes = 0
        self.reports: list[DeliveryReport] = []

    # accounting -----------------------------------------------------------
    @property
    def on_air_bytes(self) -> int:
        return self.payload_bytes + self.header_bytes + self.ack_bytes

    @property
    def model_bytes(self) -> int:
        """Bytes as counted by the bandwidth model: message bodies plus ACKs."""
        return self.payload_bytes + self.ack_bytes

    def packet_log_csv(self) -> str:
        rows = [PACKET_LOG_HEADER]
        rows += [f"{t:.6f},{s},{d},{int(a)},{int(e)},{g},{q},{n}" for t, s, d, a, e, g, q, n in self.log]
        return "\n".join(rows) + "\n"

    # scheduling -----------------------------------------------------------
    def _schedule(self, t: float, kind: str, *args) -> None:
        heapq.heappush(self._events, (t, next(self._counter), kind, args))

    def idle(self) -> bool:
        if self._events:
            return False
        return all(n.failed or (n.current is None and not n.queue) for n in self.nodes.values())

    def busy(self, address: int) -> bool:
        n = self.nodes[address]
        return n.current is not None or bool(n.queue)

    def run_until(self, t: float) -> None:
        while self._events and self._events[0][0] <= t:
            when, _, kind, args = heapq.heappop(self._events)
            self.now = when
            getattr(self, "_ev_" + kind)(*args)
        self.now = max(self.now, t)

    def run_until_idle(self, limit: float = math.inf) -> None:
        while self._events and self._events[0][0] <= limit:
            self.run_until(self._events[0][0])

    # public API -----------------------------------------------------------
    def send(self, src: int, msg: Message, dst: int = BROADCAST) -> None:
        node = self.nodes[src]
        if node.failed:
            return
        if dst != BROADCAST and dst not in self.nodes:
            raise ValueError(f"unknown destination {dst}")
        node.queue.append((msg, dst))
        if node.current is None:
            self._start_next(node)

    def fail(self, address: int) -> None:
        """The node goes silent: it neither sends nor receives from now on."""
        node = self.nodes[address]
        node.failed = True
        node.queue.clear()
        node.current = None
        node.in_flight = None

    def forget_peer(self, address: int, peer: int) -> None:
        self.nodes[address].peers.discard(peer)

    # internals ------------------------------------------------------------
    def _start_next(self, node: Node) -> None:
        while node.queue and node.current is None:
            msg, dst = node.queue.popleft()
            recipients = set(node.peers) if dst == BROADCAST else {dst}
            report = DeliveryReport(node.address, dst, msg.tag, set(), set(), self.now)
            if not recipients:
                # nobody to wait for: a broadcast still goes on air once
                if dst == BROADCAST:
                    frags = msg.fragments()
                    for k, frag in enumerate(frags):
                        hdr = PacketHeader(node.address, dst, False, k == len(frags) - 1,
                                           int(msg.tag), node.next_seq(dst))
                        self._transmit(Packet(hdr, frag), data=True)
                report.t_end = self.now
                self._finish(node, report)
                continue
            node.current = _Outgoing(msg, dst, recipients, msg.fragments(), report)
            self._send_fragment(node)

    def _send_fragment(self, node: Node) -> None:
        out = node.current
        last = out.frag == len(out.fragments) - 1
        hdr = PacketHeader(node.address, out.dst, False, last, int(out.msg.tag), node.next_seq(out.dst))
        node.in_flight = Packet(hdr, out.fragments[out.frag])
        node.pending = set(out.recipients)
        node.retries = 0
        self._transmit(node.in_flight, data=True)
        self._arm_timer(node)

    def _arm_timer(self, node: Node) -> None:
        node.timer_token = next(self._tokens)
        self._schedule(self.now + ACK_TIMEOUT, "timeout", node.address, node.timer_token)

    def _transmit(self, pkt: Packet, data: bool) -> None:
        h = pkt.header
        self.log.append((self.now, h.src, h.dst, h.ack, h.end, h.tag, h.seq, len(pkt)))
        if data:
            self.payload_bytes += len(pkt.payload)
            self.header_bytes += HEADER_BYTES
        else:
            self.ack_bytes += len(pkt)
        arrive = self.now + self.channel.airtime(len(pkt))
        raw = pkt.to_bytes()
        for addr in sorted(self.nodes):
            if addr == h.src:
                continue
            lost = self.rng.random() < self.channel.loss_prob
            if not lost:
                self._schedule(arrive, "arrive", addr, raw)

    def _ev_arrive(self, addr: int, raw: bytes) -> None:
        node = self.nodes[addr]
        if node.failed:
            return
        pkt = Packet.from_bytes(raw)
        h = pkt.header
        if h.ack:
            self._handle_ack(node, h)
            return
        if h.dst not in (addr, BROADCAST):
            return
        self._transmit(Packet(PacketHeader(addr, h.src, True, False, h.tag, h.seq)), data=False)
        key = (h.src, h.dst)
        if node.last_seq_in.get(key) == h.seq:
            return  # retransmission already accepted; only re-ACKed
        node.last_seq_in[key] = h.seq
        buf = node.buffers.setdefault(key, bytearray())
        buf.extend(pkt.payload)
        if len(buf) > SR_MAX_BYTES:
            node.buffers[key] = bytearray()
            log.warning("node %d: reassembly buffer from %d overflowed; reset", addr, h.src)
            return
        if h.end:
            body = bytes(buf)
            node.buffers[key] = bytearray()
            try:
                msg = Message(Tag(h.tag), body)
            except ValueError as exc:
                log.warning("node %d: dropped malformed message from %d: %s", addr, h.src, exc)
                return
            node.inbox.append((self.now, h.src, msg))
            if self.on_message is not None:
                self.on_message(addr, h.src, msg)

    def _handle_ack(self, node: Node, h: PacketHeader) -> None:
        pkt = node.in_flight
        if pkt is None or h.dst != node.address or h.seq != pkt.header.seq or h.tag != pkt.header.tag:
            return
        node.pending.discard(h.src)
        if not node.pending:
            self._advance(node)

    def _advance(self, node: Node) -> None:
        out = node.current
        node.timer_token = -1
        out.report.delivered_to = set(out.recipients)
        out.frag += 1
        if out.frag < len(out.fragments) and out.recipients:
            self._send_fragment(node)
            return
        node.in_flight = None
        node.current = None
        out.report.delivered_to = set(out.recipients)
        out.report.t_end = self.now
        self._finish(node, out.report)
        self._start_next(node)

    def _ev_timeout(self, addr: int, token: int) -> None:
        node = self.nodes[addr]
        if node.failed or token != node.timer_token or node.in_flight is None:
            return
        if node.retries < MAX_RETRIES:
            node.retries += 1
            self._transmit(node.in_flight, data=True)
            self._arm_timer(node)
            return
        out = node.current
        out.report.failed |= node.pending
        out.recipients -= node.pending
        log.info("node %d: TIMEOUT towards %s", addr, sorted(node.pending))
        node.pending = set()
        if out.recipients:
            self._advance(node)
        else:
            node.in_flight = None
            node.current = None
            out.report.t_end = self.now
            self._finish(node, out.report)
            self._start_next(node)

    def _finish(self, node: Node, report: DeliveryReport) -> None:
        self.reports.append(report)
        if self.on_report is not None:
            self.on_report(node.address, report)

    def unacked_in_flight(self) -> dict[int, int]:
        """Number of unacknowledged data packets per transmitter (0 or 1)."""
        return {a: int(n.in_flight is not None) for a, n in self.nodes.items()}
