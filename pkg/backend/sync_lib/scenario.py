"""
Scenario documents: a topology, lasers, a measurement chain and the pairs to
analyze, as one versioned JSON document.

parse_scenario collects every violation it can find before giving up, so a
broken document is reported in one pass.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Tuple, TypeVar, Union

from kybra_simple_logging import get_logger

from .constants import (
    CLOCK_RATE_HZ,
    COAX_OSCILLATION_HZ,
    COAX_OSCILLATION_PS,
    COAX_WHITE_PM_PS,
    DEFAULT_DURATION_S,
    DEFAULT_TAU0_S,
    MAX_SAMPLES,
    SCENARIO_SCHEMA_VERSION,
)
from .detection import DividerConfig, TaggerConfig
from .errors import SyncError, ValidationError
from .laser import MLLNode, PLLConfig
from .network import ClockNode, LinkSpec, Topology
from .noisegen import DriftTerm, NoiseSpec, drift_to_dict
from .timebase import Frequency

logger = get_logger("sync.scenario")

WR, DIRECT = "wr", "direct"
SYNC_MODES = (WR, DIRECT)
TAG_FORMATS = ("csv", "bin")

T = TypeVar("T")


@dataclass(frozen=True)
class ChannelSpec:
    """Routes one signal to one tagger channel."""

    channel: int
    source: str
    rf_chain: bool = True
    split: bool = False
    divider: bool = False


@dataclass(frozen=True)
class PairSpec:
    """B relative to A; the series analyzed is t_B - t_A."""

    name: str
    a: int
    b: int


@dataclass(frozen=True)
class LaserSpec:
    node: MLLNode
    upstream: str


@dataclass(frozen=True)
class DirectSyncSpec:
    """Both lasers on one clock over short coax."""

    clock: str
    coax_white_pm_ps: float = COAX_WHITE_PM_PS
    oscillation_ps: float = COAX_OSCILLATION_PS
    oscillation_hz: float = COAX_OSCILLATION_HZ

    @property
    def oscillation(self) -> DriftTerm:
        if self.oscillation_ps == 0:
            return DriftTerm()
        return DriftTerm(
            peak_to_peak=2 * self.oscillation_ps, period=1.0 / self.oscillation_hz
        )


@dataclass(frozen=True)
class SweepSpec:
    """Replace the extra loss of one link by each attenuation in turn."""

    link: str
    attenuation_db: Tuple[float, ...]


@dataclass(frozen=True)
class OutputSpec:
    phases: bool = True
    tags: bool = False
    tag_format: str = "csv"


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    topology: Topology
    lasers: Tuple[LaserSpec, ...]
    tagger: TaggerConfig
    divider: DividerConfig
    channels: Tuple[ChannelSpec, ...]
    pairs: Tuple[PairSpec, ...]
    sync_mode: str = WR
    direct: Optional[DirectSyncSpec] = None
    factors: Optional[Tuple[int, ...]] = None
    sweep: Optional[SweepSpec] = None
    outputs: OutputSpec = field(default_factory=OutputSpec)
    description: str = ""

    @property
    def seed(self) -> int:
        return self.topology.seed

    @property
    def tau0_s(self) -> float:
        return self.topology.tau0_s

    @property
    def duration_s(self) -> float:
        return self.topology.duration_s

    @property
    def n_samples(self) -> int:
        return self.topology.n_samples

    def channel(self, number: int) -> ChannelSpec:
        return next(c for c in self.channels if c.channel == number)

    def pair(self, name: str) -> PairSpec:
        return next(p for p in self.pairs if p.name == name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": SCENARIO_SCHEMA_VERSION,
            "name": self.name,
            "description": self.description,
            "duration_s": self.duration_s,
            "tau0_s": self.tau0_s,
            "seed": self.seed,
            "sync_mode": self.sync_mode,
            "topology": {
                "nodes": [_node_to_dict(n) for n in self.topology.nodes],
                "links": [_link_to_dict(k) for k in self.topology.links],
            },
            "lasers": [_laser_to_dict(laser) for laser in self.lasers],
            "direct": None if self.direct is None else _direct_to_dict(self.direct),
            "detection": {
                "tagger": asdict(self.tagger),
                "divider": asdict(self.divider),
                "channels": [asdict(c) for c in self.channels],
            },
            "analysis": {
                "pairs": [asdict(p) for p in self.pairs],
                "factors": None if self.factors is None else list(self.factors),
            },
            "sweep": None
            if self.sweep is None
            else {
                "link": self.sweep.link,
                "attenuation_db": list(self.sweep.attenuation_db),
            },
            "outputs": asdict(self.outputs),
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def with_changes(self, **changes) -> "ScenarioConfig":
        """Re-validated copy with top-level document fields replaced."""
        doc = self.to_dict()
        doc.update(changes)
        return parse_scenario(doc)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return self.with_changes(seed=int(seed))

    def with_duration(self, duration_s: float) -> "ScenarioConfig":
        return self.with_changes(duration_s=float(duration_s))

    def decimated(self, factor: int) -> "ScenarioConfig":
        """Same capture length at a coarser comparison interval."""
        if isinstance(factor, bool) or int(factor) != factor or factor < 1:
            raise ValidationError(
                [f"decimate: factor must be an integer >= 1, got {factor}"]
            )
        if factor == 1:
            return self
        tau0 = Fraction(repr(self.tau0_s)) * int(factor)
        return self.with_changes(tau0_s=float(tau0))

    def with_link_attenuation(
        self, link: str, attenuation_db: float
    ) -> "ScenarioConfig":
        """The same scenario with the extra loss of one link replaced."""
        topo = self.topology
        for k in range(len(topo.links)):
            if topo.link_name(k) == link:
                links = list(topo.links)
                links[k] = replace(links[k], extra_loss_db=float(attenuation_db))
                return replace(self, topology=replace(topo, links=tuple(links)))
        raise ValidationError([f"sweep: unknown link '{link}'"])


def _node_to_dict(node: ClockNode) -> Dict[str, Any]:
    return {
        "name": node.name,
        "role": node.role,
        "servo_bandwidth_hz": node.servo_bandwidth_hz,
        "local_noise": node.local_noise.to_dict(),
    }


def _link_to_dict(link: LinkSpec) -> Dict[str, Any]:
    return {
        "name": link.name,
        "length_km": link.length_km,
        "loss_db_per_km": link.loss_db_per_km,
        "extra_loss_db": link.extra_loss_db,
        "launch_margin_db": link.launch_margin_db,
        "uncompensated_fraction": link.uncompensated_fraction,
        "drift": drift_to_dict(link.drift),
    }


def _laser_to_dict(laser: LaserSpec) -> Dict[str, Any]:
    node = laser.node
    return {
        "name": node.name,
        "upstream": laser.upstream,
        "pll": {
            "loop_bandwidth_hz": node.pll.loop_bandwidth_hz,
            "damping": node.pll.damping,
            "reference_rate_hz": float(node.pll.reference_rate),
            "output_rate_hz": float(node.pll.output_rate),
        },
        "sg_jitter_ps": node.sg_jitter_ps,
        "cavity_noise": node.cavity_noise.to_dict(),
        "lock_noise": node.lock_noise.to_dict(),
    }


def _direct_to_dict(direct: DirectSyncSpec) -> Dict[str, Any]:
    return {
        "clock": direct.clock,
        "coax_white_pm_ps": direct.coax_white_pm_ps,
        "oscillation_ps": direct.oscillation_ps,
        "oscillation_hz": direct.oscillation_hz,
    }


class _Collector:
    """Accumulates violations while building the pieces of a document."""

    def __init__(self):
        self.violations: List[str] = []

    def add(self, message: str) -> None:
        self.violations.append(message)

    def build(self, label: str, fn: Callable[[], T]) -> Optional[T]:
        try:
            return fn()
        except ValidationError as e:
            self.violations.extend(f"{label}: {v}" for v in e.violations)
        except (SyncError, TypeError, ValueError, KeyError) as e:
            self.violations.append(f"{label}: {e}")
        return None

    def unknown(
        self, label: str, data: Dict[str, Any], allowed: Tuple[str, ...]
    ) -> None:
        for key in sorted(set(data) - set(allowed)):
            self.add(f"{label}: unknown field '{key}'")

    def mapping(self, label: str, value: Any) -> Dict[str, Any]:
        if value is None:
            return {}
        if not isinstance(value, dict):
            self.add(f"{label}: expected an object")
            return {}
        return value

    def listing(self, label: str, value: Any) -> List[Any]:
        if value is None:
            return []
        if not isinstance(value, list):
            self.add(f"{label}: expected a list")
            return []
        return value


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


_TOP_FIELDS = (
    "schema",
    "name",
    "description",
    "duration_s",
    "tau0_s",
    "seed",
    "sync_mode",
    "topology",
    "lasers",
    "direct",
    "detection",
    "analysis",
    "sweep",
    "outputs",
)
_LINK_FIELDS = (
    "name",
    "length_km",
    "loss_db_per_km",
    "extra_loss_db",
    "launch_margin_db",
    "uncompensated_fraction",
)
_LASER_FIELDS = (
    "name",
    "upstream",
    "pll",
    "sg_jitter_ps",
    "cavity_noise",
    "lock_noise",
)
_PLL_FIELDS = ("loop_bandwidth_hz", "damping", "reference_rate_hz", "output_rate_hz")
_DIRECT_FIELDS = ("clock", "coax_white_pm_ps", "oscillation_ps", "oscillation_hz")


@dataclass
class _Timing:
    duration_s: float
    tau0_s: float
    seed: int
    n_samples: int
    ok: bool


def _parse_timing(c: _Collector, doc: Dict[str, Any]) -> _Timing:
    duration = doc.get("duration_s", DEFAULT_DURATION_S)
    tau0 = doc.get("tau0_s", DEFAULT_TAU0_S)
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        c.add("scenario: seed must be a non-negative integer")
        seed = 0
    ok = True
    for label, value in (("duration_s", duration), ("tau0_s", tau0)):
        if not _is_number(value) or not value > 0:
            c.add(f"scenario: {label} must be a positive number")
            ok = False
    n_samples = int(round(duration / tau0)) if ok else 0
    if n_samples > MAX_SAMPLES:
        c.add(
            f"scenario: duration_s / tau0_s gives {n_samples} samples, "
            f"more than the {MAX_SAMPLES} limit (use decimation)"
        )
        ok = False
    return _Timing(float(duration) if ok else 0.0, tau0, seed, n_samples, ok)


def _parse_node(c: _Collector, i: int, data: Dict[str, Any]) -> Optional[ClockNode]:
    label = f"nodes[{i}]"
    c.unknown(label, data, ("name", "role", "servo_bandwidth_hz", "local_noise"))
    if not isinstance(data.get("name"), str):
        c.add(f"{label}: name must be a string")
        return None
    label = data["name"]
    noise = c.build(label, lambda: NoiseSpec.from_dict(data.get("local_noise")))
    if noise is None:
        return None
    kwargs = {k: data[k] for k in ("name", "role", "servo_bandwidth_hz") if k in data}
    return c.build(label, lambda: ClockNode(local_noise=noise, **kwargs))


def _parse_link(c: _Collector, i: int, data: Dict[str, Any]) -> Optional[LinkSpec]:
    label = f"links[{i}]"
    c.unknown(label, data, _LINK_FIELDS + ("drift",))
    drift = c.build(label, lambda: DriftTerm(**(data.get("drift") or {})))
    if drift is None:
        return None
    kwargs = {k: data[k] for k in _LINK_FIELDS if k in data}
    return c.build(label, lambda: LinkSpec(drift=drift, **kwargs))


def _parse_pll(c: _Collector, name: str, data: Dict[str, Any]) -> Optional[PLLConfig]:
    c.unknown(f"{name}.pll", data, _PLL_FIELDS)

    def make() -> PLLConfig:
        kwargs = {k: data[k] for k in ("loop_bandwidth_hz", "damping") if k in data}
        if "reference_rate_hz" in data:
            kwargs["reference_rate"] = Frequency.of(data["reference_rate_hz"])
        if "output_rate_hz" in data:
            kwargs["output_rate"] = Frequency.of(data["output_rate_hz"])
        return PLLConfig(**kwargs)

    return c.build(name, make)


def _parse_laser(c: _Collector, i: int, data: Dict[str, Any]) -> Optional[LaserSpec]:
    label = f"lasers[{i}]"
    c.unknown(label, data, _LASER_FIELDS)
    name, upstream = data.get("name"), data.get("upstream")
    if not isinstance(name, str) or not name:
        c.add(f"{label}: name must be a non-empty string")
        return None
    if not isinstance(upstream, str):
        c.add(f"{name}: upstream clock node is required")
        return None

    pll = _parse_pll(c, name, c.mapping(f"{name}.pll", data.get("pll")))
    cavity = c.build(name, lambda: NoiseSpec.from_dict(data.get("cavity_noise")))
    lock = c.build(name, lambda: NoiseSpec.from_dict(data.get("lock_noise")))
    if pll is None or cavity is None or lock is None:
        return None
    extra = {"sg_jitter_ps": data["sg_jitter_ps"]} if "sg_jitter_ps" in data else {}
    node = c.build(
        name,
        lambda: MLLNode(
            name=name, pll=pll, cavity_noise=cavity, lock_noise=lock, **extra
        ),
    )
    return None if node is None else LaserSpec(node, upstream)


def _check_lasers(
    c: _Collector,
    timing: _Timing,
    nodes: List[ClockNode],
    lasers: List[LaserSpec],
) -> None:
    node_names = {n.name for n in nodes}
    laser_names = [laser.node.name for laser in lasers]
    if len(set(laser_names)) != len(laser_names):
        c.add("lasers: names must be unique")
    for name in sorted(set(laser_names) & node_names):
        c.add(f"{name}: laser name collides with a clock node")
    for laser in lasers:
        if laser.upstream not in node_names:
            c.add(f"{laser.node.name}: upstream '{laser.upstream}' is not a clock node")

    if not timing.ok:
        return
    nyquist = 1.0 / (2.0 * timing.tau0_s)
    specs = [(n.name, n.local_noise) for n in nodes]
    for laser in lasers:
        specs.append((f"{laser.node.name}.cavity_noise", laser.node.cavity_noise))
        specs.append((f"{laser.node.name}.lock_noise", laser.node.lock_noise))
    for label, spec in specs:
        for bump in spec.bump_terms:
            if bump.center_frequency >= nyquist:
                c.add(
                    f"{label}: bump center {bump.center_frequency:g} Hz is above "
                    f"Nyquist ({nyquist:g} Hz at tau0={timing.tau0_s:g} s)"
                )
    if lasers:
        cycles = timing.tau0_s * CLOCK_RATE_HZ
        if cycles < 1 - 1e-9 or abs(cycles - round(cycles)) > 1e-6 * cycles:
            c.add("scenario: tau0_s must be a whole number of clock periods")


def _parse_direct(
    c: _Collector,
    doc: Dict[str, Any],
    sync_mode: str,
    node_names: set,
    lasers: List[LaserSpec],
) -> Optional[DirectSyncSpec]:
    data = doc.get("direct")
    if sync_mode != DIRECT:
        if data is not None:
            c.add("direct: only allowed with sync_mode 'direct'")
        return None
    data = c.mapping("direct", data)
    c.unknown("direct", data, _DIRECT_FIELDS)
    direct = c.build("direct", lambda: DirectSyncSpec(**data))
    if direct is None:
        return None
    if direct.clock not in node_names:
        c.add(f"direct: clock '{direct.clock}' is not a clock node")
    if direct.coax_white_pm_ps < 0 or direct.oscillation_ps < 0:
        c.add("direct: amplitudes must be >= 0")
    if direct.oscillation_ps > 0 and not direct.oscillation_hz > 0:
        c.add("direct: oscillation_hz must be > 0")
    for laser in lasers:
        if laser.upstream != direct.clock:
            c.add(f"{laser.node.name}: direct sync needs upstream '{direct.clock}'")
    return direct


def _parse_channels(
    c: _Collector, detection: Dict[str, Any], sources: set
) -> List[ChannelSpec]:
    channels = []
    listed = c.listing("detection.channels", detection.get("channels"))
    for i, data in enumerate(listed):
        label = f"channels[{i}]"
        spec = c.build(label, lambda: ChannelSpec(**c.mapping(label, data)))
        if spec is None:
            continue
        if not isinstance(spec.channel, int) or spec.channel < 0:
            c.add(f"{label}: channel must be a non-negative integer")
        if spec.source not in sources:
            c.add(f"channel {spec.channel}: unknown source '{spec.source}'")
        channels.append(spec)
    numbers = [ch.channel for ch in channels]
    if len(set(numbers)) != len(numbers):
        c.add("detection: channel numbers must be unique")
    return channels


def _parse_pairs(
    c: _Collector, analysis: Dict[str, Any], numbers: List[int]
) -> List[PairSpec]:
    pairs = []
    for i, data in enumerate(c.listing("analysis.pairs", analysis.get("pairs"))):
        label = f"pairs[{i}]"
        pair = c.build(label, lambda: PairSpec(**c.mapping(label, data)))
        if pair is None:
            continue
        for end in (pair.a, pair.b):
            if end not in numbers:
                c.add(f"pair {pair.name}: channel {end} is not routed")
        if pair.a == pair.b:
            c.add(f"pair {pair.name}: needs two different channels")
        pairs.append(pair)
    names = [p.name for p in pairs]
    if len(set(names)) != len(names):
        c.add("analysis: pair names must be unique")
    if not pairs:
        c.add("analysis: at least one pair is required")
    return pairs


def _parse_factors(
    c: _Collector, analysis: Dict[str, Any], timing: _Timing
) -> Optional[Tuple[int, ...]]:
    factors = analysis.get("factors")
    if factors is None:
        return None
    if not isinstance(factors, list) or not all(
        isinstance(m, int) and not isinstance(m, bool) for m in factors
    ):
        c.add("analysis: factors must be a list of integers")
        return None
    limit = timing.n_samples // 3
    for m in factors:
        if timing.ok and not 1 <= m <= limit:
            c.add(f"analysis: averaging factor m={m} out of range [1, {limit}]")
    return tuple(sorted(set(factors)))


def _parse_sweep(
    c: _Collector, doc: Dict[str, Any], topology: Optional[Topology]
) -> Optional[SweepSpec]:
    if doc.get("sweep") is None:
        return None
    data = c.mapping("sweep", doc["sweep"])
    c.unknown("sweep", data, ("link", "attenuation_db"))
    values = c.listing("sweep.attenuation_db", data.get("attenuation_db"))
    if not values:
        c.add("sweep: attenuation_db must list at least one value")
    if not all(_is_number(v) and v >= 0 for v in values):
        c.add("sweep: attenuation values must be numbers >= 0")
        values = []
    link = data.get("link")
    if topology is not None:
        known = [topology.link_name(k) for k in range(len(topology.links))]
        if link not in known:
            c.add(f"sweep: unknown link {link!r}, expected one of {known}")
    return SweepSpec(str(link), tuple(float(v) for v in values))


def parse_scenario(document: Union[str, Dict[str, Any]]) -> ScenarioConfig:
    """Build a ScenarioConfig, or raise ValidationError listing every problem."""
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise ValidationError([f"scenario is not valid JSON: {e}"]) from e
    if not isinstance(document, dict):
        raise ValidationError(["scenario must be a JSON object"])

    c = _Collector()
    c.unknown("scenario", document, _TOP_FIELDS)
    schema = document.get("schema", SCENARIO_SCHEMA_VERSION)
    if schema != SCENARIO_SCHEMA_VERSION:
        c.add(
            f"scenario: unsupported schema {schema!r}, "
            f"expected {SCENARIO_SCHEMA_VERSION}"
        )
    name = document.get("name")
    if not isinstance(name, str) or not name:
        c.add("scenario: name must be a non-empty string")
    timing = _parse_timing(c, document)

    topo = c.mapping("topology", document.get("topology"))
    c.unknown("topology", topo, ("nodes", "links"))
    nodes = [
        _parse_node(c, i, c.mapping(f"nodes[{i}]", n))
        for i, n in enumerate(c.listing("topology.nodes", topo.get("nodes")))
    ]
    links = [
        _parse_link(c, i, c.mapping(f"links[{i}]", k))
        for i, k in enumerate(c.listing("topology.links", topo.get("links")))
    ]
    lasers = [
        _parse_laser(c, i, c.mapping(f"lasers[{i}]", laser))
        for i, laser in enumerate(c.listing("lasers", document.get("lasers")))
    ]
    parts_ok = all(x is not None for x in nodes + links + lasers)
    nodes = [n for n in nodes if n is not None]
    lasers = [laser for laser in lasers if laser is not None]

    topology = None
    if parts_ok and timing.ok:
        topology = c.build(
            "topology",
            lambda: Topology(
                tuple(nodes),
                tuple(links),
                timing.duration_s,
                timing.tau0_s,
                timing.seed,
            ),
        )
    _check_lasers(c, timing, nodes, lasers)

    node_names = {n.name for n in nodes}
    sync_mode = document.get("sync_mode", WR)
    if sync_mode not in SYNC_MODES:
        c.add(f"scenario: sync_mode must be one of {SYNC_MODES}, got {sync_mode!r}")
    direct = _parse_direct(c, document, sync_mode, node_names, lasers)

    detection = c.mapping("detection", document.get("detection"))
    c.unknown("detection", detection, ("tagger", "divider", "channels"))
    tagger_data = c.mapping("tagger", detection.get("tagger"))
    divider_data = c.mapping("divider", detection.get("divider"))
    tagger = c.build("tagger", lambda: TaggerConfig(**tagger_data))
    divider = c.build("divider", lambda: DividerConfig(**divider_data))
    if tagger is not None and timing.ok:
        if timing.tau0_s * 1e9 < tagger.deadtime_ns * (1 - 1e-9):
            c.add(
                f"tagger: deadtime {tagger.deadtime_ns:g} ns is longer than the "
                f"comparison interval tau0_s={timing.tau0_s:g} s"
            )
    sources = node_names | {laser.node.name for laser in lasers}
    channels = _parse_channels(c, detection, sources)

    analysis = c.mapping("analysis", document.get("analysis"))
    c.unknown("analysis", analysis, ("pairs", "factors"))
    pairs = _parse_pairs(c, analysis, [ch.channel for ch in channels])
    factors = _parse_factors(c, analysis, timing)
    sweep = _parse_sweep(c, document, topology)

    outputs_data = c.mapping("outputs", document.get("outputs"))
    outputs = c.build("outputs", lambda: OutputSpec(**outputs_data))
    if outputs is not None and outputs.tag_format not in TAG_FORMATS:
        c.add(f"outputs: tag_format must be one of {TAG_FORMATS}")

    if topology is None and not c.violations:
        c.add("topology: could not be built")
    if c.violations:
        logger.debug(f"Scenario {name!r}: {len(c.violations)} violation(s)")
        raise ValidationError(c.violations)

    config = ScenarioConfig(
        name=name,
        description=str(document.get("description", "")),
        topology=topology,
        lasers=tuple(lasers),
        tagger=tagger,
        divider=divider,
        channels=tuple(channels),
        pairs=tuple(pairs),
        sync_mode=sync_mode,
        direct=direct,
        factors=factors,
        sweep=sweep,
        outputs=outputs,
    )
    logger.debug(f"Parsed scenario {name!r}: {config.n_samples} samples")
    return config


def serialize(config: ScenarioConfig) -> str:
    return json.dumps(config.to_dict(), indent=2)


def normalize(document: Union[str, Dict[str, Any]]) -> Dict[str, Any]:
    """The fully populated form of a document."""
    return parse_scenario(document).to_dict()
