"""
Clock distribution chain: grandmaster -> WR switches over fiber links.

A hop is not simulated at the message level. Each downstream clock is a
low-passed copy of its upstream clock (the discipline servo) plus its own
residual noise, whose transceiver bump grows as the link runs short of optical
power, plus whatever part of the fiber delay drift the two-way exchange leaves
uncompensated.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from kybra_simple_logging import get_logger
from scipy import signal

from .constants import (
    FIBER_LOSS_DB_PER_KM,
    LAUNCH_MARGIN_DB,
    SERVO_BANDWIDTH_HZ,
    UNCOMPENSATED_DRIFT_FRACTION,
)
from .errors import LinkBelowThresholdError, SeriesError, ValidationError
from .noisegen import DriftTerm, NoiseSpec, bump_scale, derive_seed, gen_drift, generate
from .timebase import PhaseSeries

logger = get_logger("sync.network")

GRANDMASTER = "grandmaster"
SWITCH = "switch"
ROLES = (GRANDMASTER, SWITCH)


@dataclass(frozen=True)
class LinkSpec:
    length_km: float = 0.0
    loss_db_per_km: float = FIBER_LOSS_DB_PER_KM
    extra_loss_db: float = 0.0
    launch_margin_db: float = LAUNCH_MARGIN_DB
    drift: DriftTerm = field(default_factory=DriftTerm)
    uncompensated_fraction: float = UNCOMPENSATED_DRIFT_FRACTION
    name: str = ""

    def violations(self) -> Tuple[str, ...]:
        errors = []
        label = self.name or "link"
        if self.length_km < 0:
            errors.append(f"{label}: length_km must be >= 0")
        if self.loss_db_per_km < 0 or self.extra_loss_db < 0:
            errors.append(f"{label}: losses must be >= 0")
        if not 0 <= self.uncompensated_fraction <= 1:
            errors.append(f"{label}: uncompensated_fraction must be in [0, 1]")
        return tuple(errors)


@dataclass(frozen=True)
class ClockNode:
    name: str
    role: str = SWITCH
    local_noise: NoiseSpec = field(default_factory=NoiseSpec)
    servo_bandwidth_hz: float = SERVO_BANDWIDTH_HZ


@dataclass(frozen=True)
class Topology:
    """Linear chain grandmaster -> ... -> follower; links[k] feeds nodes[k + 1]."""

    nodes: Tuple[ClockNode, ...]
    links: Tuple[LinkSpec, ...]
    duration_s: float
    tau0_s: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "links", tuple(self.links))
        errors = list(self.violations())
        if errors:
            raise ValidationError(errors)

    def violations(self) -> Tuple[str, ...]:
        errors = []
        if len(self.nodes) < 2:
            errors.append("topology: chain needs at least 2 nodes")
        if len(self.links) != max(len(self.nodes) - 1, 0):
            errors.append("topology: need exactly one link per downstream node")
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            errors.append("topology: node names must be unique")
        for i, node in enumerate(self.nodes):
            if node.role not in ROLES:
                errors.append(f"{node.name}: unknown role '{node.role}'")
            if (i == 0) != (node.role == GRANDMASTER):
                errors.append(f"{node.name}: only the chain head is a grandmaster")
            if node.role == SWITCH and not node.servo_bandwidth_hz > 0:
                errors.append(f"{node.name}: servo_bandwidth_hz must be > 0")
        for link in self.links:
            errors.extend(link.violations())
        if not self.tau0_s > 0 or not self.duration_s > 0:
            errors.append("topology: duration_s and tau0_s must be > 0")
        elif self.n_samples < 2:
            errors.append("topology: duration_s / tau0_s gives fewer than 2 samples")
        return tuple(errors)

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s / self.tau0_s))

    def link_name(self, k: int) -> str:
        link = self.links[k]
        return link.name or f"{self.nodes[k].name}->{self.nodes[k + 1].name}"

    def node(self, name: str) -> Optional[ClockNode]:
        return next((n for n in self.nodes if n.name == name), None)


def link_margin(link: LinkSpec) -> float:
    """Received power above the lock threshold, dB. May be negative."""
    return link.launch_margin_db - (
        link.length_km * link.loss_db_per_km + link.extra_loss_db
    )


def servo_lowpass(x: np.ndarray, bandwidth_hz: float, tau0: float) -> np.ndarray:
    """First-order tracking of an upstream phase, starting in lock."""
    a = float(np.exp(-2 * np.pi * bandwidth_hz * tau0))
    b, den = [1.0 - a], [1.0, -a]
    zi = signal.lfilter_zi(b, den) * x[0]
    y, _ = signal.lfilter(b, den, x, zi=zi)
    return y


def simulate_chain(topology: Topology) -> Dict[str, PhaseSeries]:
    """Clock error of every node against the grandmaster's own timescale."""
    margins = []
    for k, link in enumerate(topology.links):
        margin = link_margin(link)
        if margin < 0:
            raise LinkBelowThresholdError(topology.link_name(k), margin)
        margins.append(margin)

    n, tau0, seed = topology.n_samples, topology.tau0_s, topology.seed
    logger.info(
        f"Simulating {len(topology.nodes)}-node chain: {n} samples at tau0={tau0:g} s"
    )

    head = topology.nodes[0]
    upstream = generate(head.local_noise, n, tau0, derive_seed(seed, "node", head.name))
    result = {head.name: upstream.with_samples(upstream.samples, head.name)}

    for k, node in enumerate(topology.nodes[1:]):
        link, margin = topology.links[k], margins[k]
        scale = bump_scale(margin, topology.link_name(k))
        local = generate(
            node.local_noise.scaled_bumps(scale),
            n,
            tau0,
            derive_seed(seed, "node", node.name),
        )
        x = servo_lowpass(upstream.samples, node.servo_bandwidth_hz, tau0)
        x = x + local.samples
        if link.uncompensated_fraction > 0 and not link.drift.is_zero:
            drift = gen_drift(
                link.drift, n, tau0, derive_seed(seed, "link", topology.link_name(k))
            )
            x = x + link.uncompensated_fraction * drift.samples
        logger.debug(
            f"{node.name}: margin {margin:.2f} dB, bump scale {scale:.3f}, "
            f"servo {node.servo_bandwidth_hz:g} Hz"
        )
        upstream = PhaseSeries(tau0, x, node.name)
        result[node.name] = upstream

    return result


def pairwise_error(node_a: PhaseSeries, node_b: PhaseSeries) -> PhaseSeries:
    """A - B, sample by sample."""
    if len(node_a) != len(node_b) or not np.isclose(
        node_a.tau0, node_b.tau0, rtol=1e-12, atol=0.0
    ):
        raise SeriesError(
            f"mismatched series: {node_a.origin} ({len(node_a)} @ {node_a.tau0:g} s) "
            f"vs {node_b.origin} ({len(node_b)} @ {node_b.tau0:g} s)"
        )
    return PhaseSeries(
        node_a.tau0, node_a.samples - node_b.samples, f"{node_a.origin}-{node_b.origin}"
    )
