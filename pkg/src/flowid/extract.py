"""End-to-end feature extraction from packet or flow-record streams.

Inputs are newline-delimited JSON. A packet line carries the
PacketRecord fields; a flow line carries the FlowRecord fields (for
captures that were already cut by another exporter). DNS observations
(ip -> domain) come from a side stream and feed the resolver table.

Day indices are assigned from each record's start time relative to the
capture origin (the first packet by default), so day 1 covers the first
24 hours.
"""

import json
from typing import Iterable, Optional

from .features import DomainVocab, LabeledDataset, featurize
from .flows import DnsTable, FlowAssembler, FlowRecord, PacketRecord, sld

SECONDS_PER_DAY = 86400.0

PACKET_FIELDS = ("timestamp", "device_mac", "src_ip", "dst_ip",
                 "src_port", "dst_port", "protocol", "size", "direction")


class ExtractError(ValueError):
    pass


def iter_packets_jsonl(path) -> Iterable[PacketRecord]:
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                yield PacketRecord(
                    timestamp=float(obj["timestamp"]),
                    device_mac=str(obj["device_mac"]),
                    src_ip=str(obj["src_ip"]), dst_ip=str(obj["dst_ip"]),
                    src_port=int(obj["src_port"]), dst_port=int(obj["dst_port"]),
                    protocol=int(obj["protocol"]), size=int(obj["size"]),
                    direction=str(obj["direction"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ExtractError(f"{path}: line {lineno}: {exc}") from exc


def iter_flows_jsonl(path) -> Iterable[FlowRecord]:
    """Adapter for pre-extracted flow records in FlowRecord JSONL shape."""
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                yield FlowRecord(
                    device_mac=str(obj["device_mac"]),
                    src_ip=str(obj["src_ip"]), src_port=int(obj["src_port"]),
                    dst_ip=str(obj["dst_ip"]), dst_port=int(obj["dst_port"]),
                    protocol=int(obj["protocol"]),
                    start_time=float(obj["start_time"]), end_time=float(obj["end_time"]),
                    bytes_out=int(obj["bytes_out"]), bytes_in=int(obj["bytes_in"]),
                    pkts_out=int(obj["pkts_out"]), pkts_in=int(obj["pkts_in"]),
                    pkt_sizes=list(obj.get("pkt_sizes", [])),
                    pkt_gaps=list(obj.get("pkt_gaps", [])),
                    remote_domain=obj.get("remote_domain"),
                    device_id=str(obj.get("device_id", obj["device_mac"])),
                    category_id=str(obj.get("category_id", "unknown")),
                    day_index=int(obj.get("day_index", 0)),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ExtractError(f"{path}: line {lineno}: {exc}") from exc


def load_dns_jsonl(path) -> DnsTable:
    """Ordered (ip -> domain) observations; the last one per IP wins."""
    dns = DnsTable()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                dns.insert(str(obj["ip"]), str(obj["domain"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ExtractError(f"{path}: line {lineno}: {exc}") from exc
    return dns


def flows_from_packets(packets: Iterable[PacketRecord], dns: Optional[DnsTable] = None,
                       reorder_tolerance: float = 0.0) -> list:
    asm = FlowAssembler(dns=dns, reorder_tolerance=reorder_tolerance)
    records = []
    for packet in packets:
        records.extend(asm.ingest(packet))
    records.extend(asm.flush())
    return records


def label_flows(flows: list, categories: Optional[dict] = None,
                origin: Optional[float] = None) -> list:
    """Fill day_index and category_id in place; returns the list.

    `categories` maps device id -> category id; unmapped devices get
    "unknown". Day 1 starts at `origin` (default: earliest start time).
    """
    if not flows:
        return flows
    if origin is None:
        origin = min(f.start_time for f in flows)
    for f in flows:
        if f.day_index <= 0:
            f.day_index = int((f.start_time - origin) // SECONDS_PER_DAY) + 1
        if categories is not None:
            f.category_id = categories.get(f.device_id, f.category_id or "unknown")
        elif not f.category_id:
            f.category_id = "unknown"
    return flows


def build_vocab(flows: list) -> DomainVocab:
    """Dense domain codes in order of first appearance in the stream."""
    vocab = DomainVocab()
    for f in flows:
        if f.remote_domain:
            vocab.add(sld(f.remote_domain))
    return vocab


def extract_dataset(flows: list, vocab: Optional[DomainVocab] = None,
                    d_max: Optional[int] = None) -> LabeledDataset:
    """Featurize labeled flows. Without a vocab, one is built from the
    stream itself (training-window semantics); with a vocab, unseen
    domains encode to 0 (inference semantics)."""
    if vocab is None:
        vocab = build_vocab(flows)
    rows = [featurize(f, vocab) for f in flows]
    return LabeledDataset.from_rows(rows, d_max=d_max)


def save_vocab(vocab: DomainVocab, path):
    with open(path, "w") as fh:
        json.dump(vocab.to_list(), fh)


def load_vocab(path) -> DomainVocab:
    with open(path) as fh:
        return DomainVocab.from_list(json.load(fh))
