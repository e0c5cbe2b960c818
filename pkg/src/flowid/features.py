"""Flow features and labeled datasets.

Each flow record is summarized by 19 numeric features, in this fixed
order: the endpoint ports, per-direction byte and packet totals, five
moments of the inter-packet intervals, five moments of the packet
sizes, the record duration, the IP protocol number, and an integer code
for the remote second-level domain.

Moment conventions (used identically at train and inference time):
population moments (divide by n), Fisher skew m3 / m2^1.5, and excess
kurtosis m4 / m2^2 - 3. An empty series yields all zeros, and a
zero-variance series has skew and kurtosis defined as 0 so that feature
vectors are always finite.
"""

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .flows import FlowRecord, sld

FEATURE_NAMES = (
    "src_port", "dest_port", "bytes_out", "bytes_in", "pkts_out", "pkts_in",
    "ipt_mean", "ipt_std", "ipt_var", "ipt_skew", "ipt_kurtosis",
    "b_mean", "b_std", "b_var", "b_skew", "b_kurtosis",
    "duration", "protocol", "domain",
)
N_FEATURES = len(FEATURE_NAMES)

DOMAIN_SLOT = FEATURE_NAMES.index("domain")


class Moments(NamedTuple):
    mean: float
    std: float
    var: float
    skew: float
    kurtosis: float


def moments(values) -> Moments:
    """Population mean/std/var, Fisher skew and excess kurtosis.

    Total by convention: an empty series gives all zeros; a constant
    series gives zero skew and kurtosis.
    """
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n == 0:
        return Moments(0.0, 0.0, 0.0, 0.0, 0.0)
    mean = float(x.mean())
    d = x - mean
    m2 = float(np.mean(d * d))
    # m2**1.5 can underflow to 0 for denormal-scale series; treat as zero variance
    if m2 == 0.0 or m2 ** 1.5 == 0.0 or m2 * m2 == 0.0:
        return Moments(mean, math.sqrt(m2), m2, 0.0, 0.0)
    m3 = float(np.mean(d ** 3))
    m4 = float(np.mean(d ** 4))
    return Moments(mean, math.sqrt(m2), m2, m3 / m2 ** 1.5, m4 / (m2 * m2) - 3.0)


class DomainVocab:
    """Dense integer codes for second-level domains.

    Code 0 is reserved for unknown/absent; real domains get codes from 1
    upward in the order they are added. Encoding an unseen domain at
    inference time returns 0.
    """

    UNKNOWN = 0

    def __init__(self):
        self._code = {}
        self._domain = [None]  # index 0 = unknown

    def add(self, domain: str) -> int:
        """Register a domain (idempotent) and return its code."""
        code = self._code.get(domain)
        if code is None:
            code = len(self._domain)
            self._code[domain] = code
            self._domain.append(domain)
        return code

    def encode(self, domain: Optional[str]) -> int:
        if domain is None:
            return self.UNKNOWN
        return self._code.get(domain, self.UNKNOWN)

    def decode(self, code: int) -> Optional[str]:
        if 0 <= code < len(self._domain):
            return self._domain[code]
        return None

    def __len__(self):
        return len(self._domain) - 1

    def __contains__(self, domain):
        return domain in self._code

    def to_list(self) -> list:
        return self._domain[1:]

    @classmethod
    def from_list(cls, domains: Iterable[str]) -> "DomainVocab":
        vocab = cls()
        for d in domains:
            vocab.add(d)
        return vocab


@dataclass
class FeatureVector:
    """The 19 ordered features plus labels."""

    values: np.ndarray  # shape (19,), float64
    device_id: str
    category_id: str
    day_index: int

    def as_dict(self) -> dict:
        out = {name: float(v) for name, v in zip(FEATURE_NAMES, self.values)}
        out["device_id"] = self.device_id
        out["category_id"] = self.category_id
        out["day_index"] = self.day_index
        return out

    @classmethod
    def from_dict(cls, row: dict) -> "FeatureVector":
        values = np.array([row[name] for name in FEATURE_NAMES], dtype=np.float64)
        return cls(values=values, device_id=str(row["device_id"]),
                   category_id=str(row["category_id"]), day_index=int(row["day_index"]))


def featurize(flow: FlowRecord, vocab: DomainVocab) -> FeatureVector:
    """Extract the 19-feature vector from one flow record.

    The domain slot is the vocab code of the flow's second-level remote
    domain, or 0 when the domain is absent or unseen.
    """
    ipt = moments(flow.pkt_gaps)
    b = moments(flow.pkt_sizes)
    domain_code = vocab.encode(sld(flow.remote_domain)) if flow.remote_domain else DomainVocab.UNKNOWN
    values = np.array([
        flow.src_port, flow.dst_port,
        flow.bytes_out, flow.bytes_in, flow.pkts_out, flow.pkts_in,
        ipt.mean, ipt.std, ipt.var, ipt.skew, ipt.kurtosis,
        b.mean, b.std, b.var, b.skew, b.kurtosis,
        flow.end_time - flow.start_time,
        flow.protocol,
        domain_code,
    ], dtype=np.float64)
    return FeatureVector(values=values, device_id=flow.device_id,
                         category_id=flow.category_id, day_index=flow.day_index)


class LabeledDataset:
    """Feature rows with device/category labels and a day index.

    Rows are held as a dense (n, 19) float64 matrix; device and category
    labels are interned into stable index spaces (order of first
    appearance) shared by every subset taken from this dataset, so class
    indices line up between training and evaluation slices.
    """

    def __init__(self, features: np.ndarray, device_idx: np.ndarray,
                 category_idx: np.ndarray, days: np.ndarray,
                 devices: list, categories: list, d_max: Optional[int] = None):
        self.features = np.asarray(features, dtype=np.float64).reshape(-1, N_FEATURES)
        self.device_idx = np.asarray(device_idx, dtype=np.int64)
        self.category_idx = np.asarray(category_idx, dtype=np.int64)
        self.days = np.asarray(days, dtype=np.int64)
        self.devices = list(devices)
        self.categories = list(categories)
        self.d_max = int(d_max) if d_max is not None else (int(self.days.max()) if len(self.days) else 0)

    def __len__(self):
        return self.features.shape[0]

    @classmethod
    def from_rows(cls, rows: Iterable[FeatureVector], d_max: Optional[int] = None) -> "LabeledDataset":
        rows = list(rows)
        devices, categories = [], []
        dev_code, cat_code = {}, {}
        n = len(rows)
        features = np.empty((n, N_FEATURES), dtype=np.float64)
        device_idx = np.empty(n, dtype=np.int64)
        category_idx = np.empty(n, dtype=np.int64)
        days = np.empty(n, dtype=np.int64)
        for i, row in enumerate(rows):
            features[i] = row.values
            if row.device_id not in dev_code:
                dev_code[row.device_id] = len(devices)
                devices.append(row.device_id)
            if row.category_id not in cat_code:
                cat_code[row.category_id] = len(categories)
                categories.append(row.category_id)
            device_idx[i] = dev_code[row.device_id]
            category_idx[i] = cat_code[row.category_id]
            days[i] = row.day_index
        return cls(features, device_idx, category_idx, days, devices, categories, d_max)

    def rows(self):
        for i in range(len(self)):
            yield FeatureVector(values=self.features[i].copy(),
                                device_id=self.devices[self.device_idx[i]],
                                category_id=self.categories[self.category_idx[i]],
                                day_index=int(self.days[i]))

    def subset(self, mask: np.ndarray) -> "LabeledDataset":
        """Row subset sharing this dataset's device/category index spaces."""
        return LabeledDataset(self.features[mask], self.device_idx[mask],
                              self.category_idx[mask], self.days[mask],
                              self.devices, self.categories, self.d_max)

    def day_slice(self, first_day: int, last_day: int) -> "LabeledDataset":
        mask = (self.days >= first_day) & (self.days <= last_day)
        return self.subset(mask)

    def labels(self, kind: str) -> np.ndarray:
        if kind == "device":
            return self.device_idx
        if kind == "category":
            return self.category_idx
        raise ValueError(f"unknown label kind: {kind!r}")

    def label_names(self, kind: str) -> list:
        if kind == "device":
            return self.devices
        if kind == "category":
            return self.categories
        raise ValueError(f"unknown label kind: {kind!r}")

    def category_of_device(self) -> dict:
        """Map device id -> category id (every device has exactly one)."""
        out = {}
        for dev, cat in zip(self.device_idx, self.category_idx):
            name = self.devices[dev]
            existing = out.setdefault(name, self.categories[cat])
            if existing != self.categories[cat]:
                raise ValueError(f"device {name!r} appears under two categories")
        return out
