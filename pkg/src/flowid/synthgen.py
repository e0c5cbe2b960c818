"""Seeded synthetic traffic for configurable device fleets.

Stands in for private test-bed captures: every device gets a profile
made of a few flow components (background chatter, cloud sync,
interactive use), each with its own port/domain pools, packet-size and
inter-packet-gap distributions, and a flows-per-day rate. Activity
patterns scale the interactive components only, so idle <= light <=
medium <= heavy by construction.

Temporal drift is modeled two ways, both day-indexed and deterministic:
distribution means move geometrically (size, gap, and rate multipliers
compound per day), and domain pools rotate every few days the way CDN
endpoints churn. Generation is a pure function of the spec: the same
seed always yields the same dataset.

Rows are normally emitted at the feature level (fast); a packet-level
mode synthesizes raw packet streams for exercising the flow assembler
end to end.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .features import DomainVocab, FeatureVector, LabeledDataset, moments
from .flows import INBOUND, OUTBOUND, DnsTable, PacketRecord, sld
from .seeds import mix, rng_for

PATTERNS = ("idle", "light", "medium", "heavy")
PATTERN_SCALE = {"idle": 0.0, "light": 1.0, "medium": 2.5, "heavy": 5.0}

CATEGORIES = ("surveillance", "media", "audio", "hub", "appliance", "home_automation")

SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class FlowComponent:
    """One kind of traffic a device produces."""

    name: str
    rate_per_day: float
    interactive: bool
    protocol: int
    dst_ports: tuple
    port_weights: tuple
    domains: tuple
    size_mean: float          # packet-size distribution center (bytes)
    size_cv: float            # coefficient of variation of packet sizes
    gap_mean: float           # mean inter-packet gap (seconds)
    pkt_lo: int
    pkt_hi: int
    out_ratio: float
    rotation_days: int = 0    # rotate the active domain every N days (0 = never)


@dataclass(frozen=True)
class DriftSpec:
    """Per-day multiplicative perturbation rates."""

    size_rate: float = 0.0
    gap_rate: float = 0.0
    rate_rate: float = 0.0


@dataclass(frozen=True)
class DeviceProfile:
    device_id: str
    category_id: str
    components: tuple
    drift: DriftSpec = DriftSpec()


@dataclass(frozen=True)
class EnvironmentSpec:
    name: str
    devices: tuple
    pattern: str = "medium"
    n_days: int = 21
    seed: int = 0

    def validate(self):
        if not self.devices:
            raise ValueError("environment needs at least one device")
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}")


def component_params(comp: FlowComponent, drift: DriftSpec, day: int) -> FlowComponent:
    """The component as it behaves on the given day (1-based)."""
    age = day - 1
    rotated = comp.domains
    if comp.rotation_days > 0 and comp.domains:
        shift = age // comp.rotation_days
        k = shift % len(comp.domains)
        rotated = comp.domains[k:] + comp.domains[:k]
    return replace(
        comp,
        size_mean=comp.size_mean * (1.0 + drift.size_rate) ** age,
        gap_mean=comp.gap_mean * (1.0 + drift.gap_rate) ** age,
        rate_per_day=comp.rate_per_day * (1.0 + drift.rate_rate) ** age,
        domains=rotated,
    )


def _domain_pick(rng, domains) -> Optional[str]:
    # head-heavy pick: rotating the pool shifts which domain dominates
    if not domains:
        return None
    w = 0.6 ** np.arange(len(domains))
    return domains[int(rng.choice(len(domains), p=w / w.sum()))]


def _draw_flow(rng, comp: FlowComponent, vocab: DomainVocab, day: int,
               device_id: str, category_id: str) -> FeatureVector:
    k = int(rng.integers(comp.pkt_lo, comp.pkt_hi + 1))
    sizes = rng.normal(comp.size_mean, comp.size_cv * comp.size_mean, size=k)
    sizes = np.clip(np.round(sizes), 60, 1500)
    gaps = rng.exponential(comp.gap_mean, size=max(k - 1, 0))
    total_gap = gaps.sum()
    if total_gap > 29.5:
        gaps *= 29.5 / total_gap
    ipt = moments(gaps)
    b = moments(sizes)
    total_bytes = int(sizes.sum())
    pkts_out = int(rng.binomial(k, comp.out_ratio)) if k > 0 else 0
    if k > 0 and pkts_out == 0:
        pkts_out = 1  # the device always sends something on its own flow
    bytes_out = int(round(total_bytes * pkts_out / k)) if k else 0
    domain = _domain_pick(rng, comp.domains)
    src_port = int(rng.integers(32768, 61000))
    dst_port = int(comp.dst_ports[rng.choice(len(comp.dst_ports), p=comp.port_weights)])
    values = np.array([
        src_port, dst_port,
        bytes_out, total_bytes - bytes_out, pkts_out, k - pkts_out,
        ipt.mean, ipt.std, ipt.var, ipt.skew, ipt.kurtosis,
        b.mean, b.std, b.var, b.skew, b.kurtosis,
        float(gaps.sum()),
        comp.protocol,
        vocab.add(sld(domain)) if domain else DomainVocab.UNKNOWN,
    ], dtype=np.float64)
    return FeatureVector(values=values, device_id=device_id,
                         category_id=category_id, day_index=day)


def gen_environment(spec: EnvironmentSpec, vocab: Optional[DomainVocab] = None) -> LabeledDataset:
    """Emit labeled feature rows for every device and day of the spec."""
    spec.validate()
    vocab = vocab if vocab is not None else DomainVocab()
    scale = PATTERN_SCALE[spec.pattern]
    rows = []
    for day in range(1, spec.n_days + 1):
        for profile in spec.devices:
            rng = rng_for(spec.seed, spec.name, profile.device_id, day)
            for comp in profile.components:
                today = component_params(comp, profile.drift, day)
                rate = today.rate_per_day * (scale if comp.interactive else 1.0)
                n_flows = int(rng.poisson(rate)) if rate > 0 else 0
                for _ in range(n_flows):
                    rows.append(_draw_flow(rng, today, vocab, day,
                                           profile.device_id, profile.category_id))
    devices = [p.device_id for p in spec.devices]
    categories = list(dict.fromkeys(p.category_id for p in spec.devices))
    data = LabeledDataset.from_rows(rows, d_max=spec.n_days)
    # pin the fleet's label order even if some device emitted nothing
    return _reindex(data, devices, categories)


def _reindex(data: LabeledDataset, devices, categories) -> LabeledDataset:
    dev_map = {d: i for i, d in enumerate(devices)}
    cat_map = {c: i for i, c in enumerate(categories)}
    device_idx = np.array([dev_map[data.devices[i]] for i in data.device_idx], dtype=np.int64)
    category_idx = np.array([cat_map[data.categories[i]] for i in data.category_idx], dtype=np.int64)
    return LabeledDataset(data.features, device_idx, category_idx, data.days,
                          devices, categories, data.d_max)


# ---------------------------------------------------------------------------
# fleet construction

_CATEGORY_TEMPLATES = {
    # ports / domains / size and gap regimes loosely typical of each class
    "surveillance": dict(ports=(443, 8883, 554), domains=("cam-cloud.example", "vidsync.example", "upcam.example"),
                         size=(500, 950), gap=(0.05, 0.25), pkts=(10, 45), out=0.75),
    "media": dict(ports=(443, 8009), domains=("streamcdn.example", "mediacast.example", "vodpool.example"),
                  size=(900, 1350), gap=(0.02, 0.12), pkts=(20, 50), out=0.15),
    "audio": dict(ports=(443, 4070), domains=("voicehub.example", "speechsvc.example", "tunefeed.example"),
                  size=(300, 640), gap=(0.08, 0.4), pkts=(8, 35), out=0.45),
    "hub": dict(ports=(8883, 443), domains=("hubsync.example", "bridgectl.example", "pairlink.example"),
                size=(120, 300), gap=(0.5, 2.0), pkts=(2, 12), out=0.6),
    "appliance": dict(ports=(8886, 443), domains=("applianceiot.example", "cookerapi.example", "kitchenlink.example"),
                      size=(150, 420), gap=(0.3, 1.5), pkts=(2, 14), out=0.65),
    "home_automation": dict(ports=(8883, 5683), domains=("autohome.example", "plugctl.example", "sensornet.example"),
                            size=(90, 260), gap=(0.4, 2.5), pkts=(2, 10), out=0.55),
}


def _lerp(lo, hi, t):
    return lo + (hi - lo) * t


def make_profile(device_id: str, category_id: str, slot: float, seed: int,
                 drift: DriftSpec = DriftSpec(), rotation_days: int = 0,
                 template: Optional[str] = None, vendor: Optional[str] = None) -> DeviceProfile:
    """Build a device profile from its category template.

    `slot` in [0, 1] places the device's continuous parameters inside
    the category's regime so devices are distinguishable but neighbors
    overlap. `template` substitutes another category's traffic shape
    (used for the deliberately misbehaving device); devices sharing a
    `vendor` share their vendor domain, like same-brand twins do.
    """
    t = _CATEGORY_TEMPLATES[template or category_id]
    rng = rng_for(seed, "profile", device_id)
    size0 = _lerp(*t["size"], slot)
    gap0 = _lerp(*t["gap"], slot)
    jitter = lambda v, r: v * float(rng.uniform(1 - r, 1 + r))
    own_domain = f"dev-{vendor or device_id}.example"
    ports = t["ports"]
    components = (
        FlowComponent(
            name="background", rate_per_day=26.0, interactive=False,
            protocol=6, dst_ports=ports, port_weights=_port_weights(len(ports), slot),
            domains=(t["domains"][0], own_domain, t["domains"][1]),
            size_mean=jitter(size0 * 0.8, 0.04), size_cv=0.18,
            gap_mean=jitter(gap0 * 1.2, 0.04), pkt_lo=t["pkts"][0], pkt_hi=(t["pkts"][0] + t["pkts"][1]) // 2,
            out_ratio=t["out"], rotation_days=rotation_days,
        ),
        FlowComponent(
            name="telemetry", rate_per_day=18.0, interactive=False,
            protocol=17, dst_ports=(ports[-1], 123), port_weights=(0.8, 0.2),
            domains=(own_domain, t["domains"][2], t["domains"][0]),
            size_mean=jitter(max(size0 * 0.35, 80.0), 0.04), size_cv=0.15,
            gap_mean=jitter(gap0 * 2.0, 0.04), pkt_lo=2, pkt_hi=max(t["pkts"][0], 4),
            out_ratio=min(t["out"] + 0.2, 0.9),
            rotation_days=rotation_days + 2 if rotation_days else 0,
        ),
        FlowComponent(
            name="interactive", rate_per_day=16.0, interactive=True,
            protocol=6, dst_ports=ports[:2], port_weights=(0.6, 0.4),
            domains=(t["domains"][1], t["domains"][2], own_domain),
            size_mean=jitter(size0 * 1.1, 0.04), size_cv=0.25,
            gap_mean=jitter(gap0 * 0.6, 0.04), pkt_lo=(t["pkts"][0] + t["pkts"][1]) // 2, pkt_hi=t["pkts"][1],
            out_ratio=max(t["out"] - 0.15, 0.1), rotation_days=rotation_days,
        ),
    )
    return DeviceProfile(device_id=device_id, category_id=category_id,
                         components=components, drift=drift)


def _port_weights(n, slot):
    # tilt the port mix per device so the mix, not one port, is informative
    raw = np.array([1.0 + slot * i for i in range(n)])
    w = raw / raw.sum()
    return tuple(float(x) for x in w)


def drift_fleet(seed: int = 0, drift_scale: float = 1.0, rotation_days: int = 5) -> tuple:
    """The default 10-device fleet over the six categories.

    Contains a twin pair in the audio category (near-identical
    profiles) and an appliance-labeled device whose traffic follows the
    media template, for leave-one-device-out experiments.
    """
    rng = rng_for(seed, "fleet-drift")

    def d(rate_lo=0.03, rate_hi=0.055):
        return DriftSpec(
            size_rate=float(rng.uniform(rate_lo, rate_hi)) * drift_scale * float(rng.choice([-1.0, 1.0])),
            gap_rate=float(rng.uniform(rate_lo, rate_hi)) * drift_scale * float(rng.choice([-1.0, 1.0])),
            rate_rate=0.0,
        )

    profiles = [
        make_profile("cam-alpha", "surveillance", 0.2, seed, d(), rotation_days),
        make_profile("cam-beta", "surveillance", 0.7, seed, d(), rotation_days),
        make_profile("tv-main", "media", 0.45, seed, d(), rotation_days),
        make_profile("speaker-east", "audio", 0.35, seed, d(), rotation_days, vendor="speakerco"),
        make_profile("speaker-west", "audio", 0.38, seed, d(), rotation_days, vendor="speakerco"),  # near twin
        make_profile("hub-core", "hub", 0.5, seed, d(), rotation_days),
        make_profile("kettle-one", "appliance", 0.3, seed, d(), rotation_days),
        # appliance-labeled but behaves like a media device, same vendor as tv-main
        make_profile("vac-odd", "appliance", 0.55, seed, d(), rotation_days,
                     template="media", vendor="tv-main"),
        make_profile("bulb-hall", "home_automation", 0.25, seed, d(), rotation_days),
        make_profile("lock-front", "home_automation", 0.75, seed, d(), rotation_days),
    ]
    return tuple(profiles)


def drift_preset(seed: int = 0, n_days: int = 21, pattern: str = "medium") -> EnvironmentSpec:
    """The decay-reproduction preset: 10 drifting devices, 21 days."""
    return EnvironmentSpec(name="drift", devices=drift_fleet(seed),
                           pattern=pattern, n_days=n_days, seed=mix(seed, "drift-env"))


def large_fleet(seed: int = 0) -> tuple:
    """43 devices over the six categories, sized like a large test-bed."""
    counts = {"surveillance": 9, "media": 5, "audio": 6, "hub": 8,
              "appliance": 5, "home_automation": 10}
    rng = rng_for(seed, "fleet-large")
    profiles = []
    for cat, n in counts.items():
        for i in range(n):
            drift = DriftSpec(size_rate=float(rng.uniform(-0.03, 0.03)),
                              gap_rate=float(rng.uniform(-0.03, 0.03)))
            profiles.append(make_profile(f"{cat[:4]}-{i:02d}", cat,
                                         slot=(i + 0.5) / n, seed=seed,
                                         drift=drift, rotation_days=6))
    return tuple(profiles)


# ---------------------------------------------------------------------------
# cross-environment trio

def _morph(profile: DeviceProfile, env_name: str, seed: int, strength: float,
           rate_mult: float = 1.0) -> DeviceProfile:
    """Re-draw a device's behavioral parameters for another environment.

    Every mixture component changes: continuous parameters shift by up
    to `strength` (relative), port mixes re-tilt, and interactive
    components point at environment-specific domains. `rate_mult`
    scales how chatty the environment is overall.
    """
    rng = rng_for(seed, "morph", env_name, profile.device_id)
    comps = []
    for comp in profile.components:
        shift = lambda v: v * float(rng.uniform(1.0 + strength * 0.5, 1.0 + strength)) ** float(rng.choice([-1.0, 1.0]))
        domains = tuple(f"{env_name}-{d}" if i == 0 else d for i, d in enumerate(comp.domains))
        weights = np.asarray(comp.port_weights)[::-1].copy()
        comps.append(replace(
            comp,
            rate_per_day=comp.rate_per_day * rate_mult,
            size_mean=shift(comp.size_mean),
            gap_mean=shift(comp.gap_mean),
            out_ratio=float(np.clip(comp.out_ratio + rng.uniform(-0.2, 0.2), 0.05, 0.95)),
            port_weights=tuple(float(x) for x in weights / weights.sum()),
            domains=domains,
        ))
    return DeviceProfile(device_id=profile.device_id, category_id=profile.category_id,
                         components=tuple(comps), drift=DriftSpec())


def gen_cross_env_pair(base_seed: int = 0, n_days_base: int = 10, n_days_active: int = 7):
    """(base env A, same-device env B, control env C) datasets.

    A is an idle capture used for base-model training. B and C contain
    the same devices as A but with independently morphed behavior; B
    and C also differ from each other, so an update learned from B
    should not transfer to C. The three datasets share one domain
    vocabulary and one device/category index space.
    """
    fleet = tuple(replace(p, drift=DriftSpec()) for p in drift_fleet(base_seed, drift_scale=0.0))
    fleet_b = tuple(_morph(p, "envB", base_seed, strength=0.8, rate_mult=2.0) for p in fleet)
    fleet_c = tuple(_morph(p, "envC", mix(base_seed, 1), strength=0.8, rate_mult=2.0) for p in fleet)

    vocab = DomainVocab()
    env_a = gen_environment(EnvironmentSpec("envA", fleet, "idle", n_days_base,
                                            seed=mix(base_seed, "envA")), vocab)
    env_b = gen_environment(EnvironmentSpec("envB", fleet_b, "heavy", n_days_active,
                                            seed=mix(base_seed, "envB")), vocab)
    env_c = gen_environment(EnvironmentSpec("envC", fleet_c, "heavy", n_days_active,
                                            seed=mix(base_seed, "envC")), vocab)
    return env_a, env_b, env_c


# ---------------------------------------------------------------------------
# declarative environment configs

CONFIG_VERSION = 1


def spec_from_config(path) -> EnvironmentSpec:
    """Build an EnvironmentSpec from a JSON config file.

    Key set (version 1):
      version        required, must be 1
      name           environment name (default "custom")
      pattern        idle | light | medium | heavy (default "medium")
      n_days         capture length in days (default 21)
      seed           integer (default 0)
      devices        list of device entries:
        device_id    required
        category_id  required, one of the six categories
        slot         0..1 position inside the category regime (default 0.5)
        vendor       optional shared vendor name
        template     optional category whose traffic shape to mimic
        rotation_days  domain rotation period, 0 = off (default 0)
        drift        optional {size_rate, gap_rate, rate_rate} per day
    """
    import json

    with open(path) as fh:
        cfg = json.load(fh)
    version = cfg.get("version")
    if version != CONFIG_VERSION:
        raise ValueError(f"{path}: config version {version!r}, expected {CONFIG_VERSION}")
    seed = int(cfg.get("seed", 0))
    devices = []
    for entry in cfg.get("devices", []):
        drift = entry.get("drift", {})
        devices.append(make_profile(
            device_id=str(entry["device_id"]),
            category_id=str(entry["category_id"]),
            slot=float(entry.get("slot", 0.5)),
            seed=seed,
            drift=DriftSpec(size_rate=float(drift.get("size_rate", 0.0)),
                            gap_rate=float(drift.get("gap_rate", 0.0)),
                            rate_rate=float(drift.get("rate_rate", 0.0))),
            rotation_days=int(entry.get("rotation_days", 0)),
            template=entry.get("template"),
            vendor=entry.get("vendor"),
        ))
    return EnvironmentSpec(name=str(cfg.get("name", "custom")), devices=tuple(devices),
                           pattern=str(cfg.get("pattern", "medium")),
                           n_days=int(cfg.get("n_days", 21)),
                           seed=mix(seed, "config-env", str(cfg.get("name", "custom"))))


# ---------------------------------------------------------------------------
# packet-level mode

def gen_packet_day(profile: DeviceProfile, day: int, spec: EnvironmentSpec,
                   dns: DnsTable) -> list:
    """Synthesize raw packets for one device-day, time-sorted.

    Used to exercise the flow assembler end to end; flows get distinct
    ephemeral source ports so concurrent flows don't collide in the
    flow table.
    """
    rng = rng_for(spec.seed, "packets", spec.name, profile.device_id, day)
    scale = PATTERN_SCALE[spec.pattern]
    day_start = (day - 1) * SECONDS_PER_DAY
    packets = []
    for comp in profile.components:
        today = component_params(comp, profile.drift, day)
        rate = today.rate_per_day * (scale if comp.interactive else 1.0)
        n_flows = int(rng.poisson(rate)) if rate > 0 else 0
        starts = np.sort(rng.uniform(0, SECONDS_PER_DAY - 60, size=n_flows))
        for s in starts:
            k = int(rng.integers(today.pkt_lo, today.pkt_hi + 1))
            sizes = np.clip(np.round(rng.normal(today.size_mean, today.size_cv * today.size_mean, k)), 60, 1500)
            gaps = rng.exponential(today.gap_mean, size=max(k - 1, 0))
            total = gaps.sum()
            if total > 29.5:
                gaps *= 29.5 / total
            domain = _domain_pick(rng, today.domains)
            remote_ip = _fake_ip(domain)
            dns.insert(remote_ip, domain)
            src_port = int(rng.integers(32768, 61000))
            dst_port = int(today.dst_ports[rng.choice(len(today.dst_ports), p=today.port_weights)])
            t = day_start + s
            outbound = rng.random(k) < today.out_ratio
            outbound[0] = True
            for j in range(k):
                if j > 0:
                    t += gaps[j - 1]
                if outbound[j]:
                    packets.append(PacketRecord(t, profile.device_id, "192.168.1.2", remote_ip,
                                                src_port, dst_port, today.protocol,
                                                int(sizes[j]), OUTBOUND))
                else:
                    packets.append(PacketRecord(t, profile.device_id, remote_ip, "192.168.1.2",
                                                dst_port, src_port, today.protocol,
                                                int(sizes[j]), INBOUND))
    packets.sort(key=lambda p: p.timestamp)
    return packets


def _fake_ip(domain: str) -> str:
    h = mix("ip", domain)
    return f"203.0.{(h >> 8) % 113}.{h % 251 + 1}"
