"""Packet-to-flow assembly.

Packets are grouped per (device, 5-tuple) key and cut into flow records
by two rules: a record ends when its key has been inactive for more than
10 seconds (cut at the last packet seen), or when its active span would
exceed 30 seconds (the record is emitted and a new one starts with the
arriving packet). Cutting is evaluated lazily when the next packet for a
key is ingested, or on an explicit flush, so replay is deterministic.

The 5-tuple is oriented from the device: for inbound packets, source and
destination are swapped before building the key, so both directions of a
conversation land in the same record and per-direction byte/packet
counters stay meaningful.
"""

from dataclasses import dataclass, field
from typing import Iterable, Optional

INACTIVE_CUTOFF_S = 10.0
ACTIVE_CUTOFF_S = 30.0
FIRST_N_PACKETS = 50

OUTBOUND = "outbound"
INBOUND = "inbound"


class FlowError(ValueError):
    """Raised for malformed packets or out-of-order timestamps."""


@dataclass(frozen=True)
class PacketRecord:
    """One observed packet, labeled with the device MAC it was filtered by."""

    timestamp: float
    device_mac: str
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: int
    size: int
    direction: str  # OUTBOUND or INBOUND relative to the device

    def validate(self):
        if not 0 <= self.src_port <= 65535 or not 0 <= self.dst_port <= 65535:
            raise FlowError(f"port out of range: {self.src_port}/{self.dst_port}")
        if self.size < 0:
            raise FlowError(f"negative packet size: {self.size}")
        if self.direction not in (OUTBOUND, INBOUND):
            raise FlowError(f"bad direction: {self.direction!r}")


@dataclass
class FlowRecord:
    """One cut flow: key, per-direction totals, and first-N packet detail."""

    device_mac: str
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    protocol: int
    start_time: float
    end_time: float
    bytes_out: int = 0
    bytes_in: int = 0
    pkts_out: int = 0
    pkts_in: int = 0
    pkt_sizes: list = field(default_factory=list)
    pkt_gaps: list = field(default_factory=list)
    remote_domain: Optional[str] = None
    device_id: str = ""
    category_id: str = ""
    day_index: int = 1

    @property
    def duration(self) -> float:
        return self.end_time - self.start_time


class DnsTable:
    """IP address -> most recently observed domain. Last writer wins."""

    def __init__(self):
        self._map = {}

    def insert(self, ip: str, domain: str):
        self._map[ip] = domain

    def resolve(self, ip: str) -> Optional[str]:
        return self._map.get(ip)

    def __len__(self):
        return len(self._map)


def sld(domain: str) -> str:
    """Collapse a domain to its last two dot-separated labels, lowercased.

    Inputs with two or fewer labels are returned unchanged (case-folded).
    Public-suffix domains like "example.co.uk" collapse to "co.uk"; the
    naive rule is applied uniformly at train and inference time.
    """
    if not domain:
        raise FlowError("empty domain string")
    labels = domain.lower().split(".")
    if len(labels) <= 2:
        return domain.lower()
    return ".".join(labels[-2:])


class FlowAssembler:
    """Single-writer flow state machine for one capture.

    ingest() returns the records cut by the arriving packet; flush()
    emits all residual flows. Timestamps must be non-decreasing within
    the capture, up to `reorder_tolerance` seconds of slack (default 0).
    """

    def __init__(self, dns: Optional[DnsTable] = None, reorder_tolerance: float = 0.0):
        self.dns = dns if dns is not None else DnsTable()
        self.reorder_tolerance = reorder_tolerance
        self._active = {}  # key -> _FlowState
        self._last_ts = None

    def ingest(self, packet: PacketRecord) -> list:
        packet.validate()
        if self._last_ts is not None and packet.timestamp < self._last_ts - self.reorder_tolerance:
            raise FlowError(
                f"out-of-order packet at t={packet.timestamp}: "
                f"capture already at t={self._last_ts}"
            )
        self._last_ts = max(self._last_ts, packet.timestamp) if self._last_ts is not None else packet.timestamp

        key = self._key_of(packet)
        emitted = []
        state = self._active.get(key)
        if state is not None:
            gap = packet.timestamp - state.last_time
            span = packet.timestamp - state.start_time
            if gap > INACTIVE_CUTOFF_S or span > ACTIVE_CUTOFF_S:
                emitted.append(self._emit(key, state))
                state = None
        if state is None:
            state = _FlowState(packet.timestamp)
            self._active[key] = state
        state.add(packet)
        return emitted

    def flush(self) -> list:
        """Emit every residual flow and reset the table."""
        out = [self._emit(key, state) for key, state in self._active.items()]
        self._active.clear()
        return out

    def _key_of(self, packet: PacketRecord):
        if packet.direction == OUTBOUND:
            return (packet.device_mac, packet.src_ip, packet.src_port,
                    packet.dst_ip, packet.dst_port, packet.protocol)
        return (packet.device_mac, packet.dst_ip, packet.dst_port,
                packet.src_ip, packet.src_port, packet.protocol)

    def _emit(self, key, state) -> FlowRecord:
        mac, src_ip, src_port, dst_ip, dst_port, proto = key
        return FlowRecord(
            device_mac=mac,
            src_ip=src_ip, src_port=src_port,
            dst_ip=dst_ip, dst_port=dst_port,
            protocol=proto,
            start_time=state.start_time,
            end_time=state.last_time,
            bytes_out=state.bytes_out, bytes_in=state.bytes_in,
            pkts_out=state.pkts_out, pkts_in=state.pkts_in,
            pkt_sizes=state.pkt_sizes,
            pkt_gaps=state.pkt_gaps,
            remote_domain=self.dns.resolve(dst_ip),
            device_id=mac,
        )


class _FlowState:
    __slots__ = ("start_time", "last_time", "bytes_out", "bytes_in",
                 "pkts_out", "pkts_in", "pkt_sizes", "pkt_gaps")

    def __init__(self, start_time: float):
        self.start_time = start_time
        self.last_time = start_time
        self.bytes_out = 0
        self.bytes_in = 0
        self.pkts_out = 0
        self.pkts_in = 0
        self.pkt_sizes = []
        self.pkt_gaps = []

    def add(self, packet: PacketRecord):
        n_seen = self.pkts_out + self.pkts_in
        if n_seen > 0 and n_seen < FIRST_N_PACKETS:
            self.pkt_gaps.append(packet.timestamp - self.last_time)
        if n_seen < FIRST_N_PACKETS:
            self.pkt_sizes.append(packet.size)
        if packet.direction == OUTBOUND:
            self.bytes_out += packet.size
            self.pkts_out += 1
        else:
            self.bytes_in += packet.size
            self.pkts_in += 1
        self.last_time = packet.timestamp


def assemble(packets: Iterable[PacketRecord], dns: Optional[DnsTable] = None,
             reorder_tolerance: float = 0.0) -> list:
    """Run a packet iterable through a FlowAssembler, flushing at the end."""
    asm = FlowAssembler(dns=dns, reorder_tolerance=reorder_tolerance)
    records = []
    for packet in packets:
        records.extend(asm.ingest(packet))
    records.extend(asm.flush())
    return records
