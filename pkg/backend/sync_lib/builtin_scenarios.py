"""
Bundled scenario documents.

Noise amplitudes are calibrations: they are chosen so that the simulated
TDEV curves land on the measured features (ms-scale WR bump, laser locking
features at 1e-4 s and 1e-2 s, tagger white-noise floor), not taken from
datasheets.
"""

import copy
from pathlib import Path
from typing import Any, Dict, List, Union

from .constants import (
    CLOCK_RATE_HZ,
    DEFAULT_DURATION_S,
    DEFAULT_TAU0_S,
    FIBER_LOSS_DB_PER_KM,
    LASER_RATE_HZ,
    MEASURED_IRF_PS,
    SCENARIO_SCHEMA_VERSION,
    WR_BUMP_CENTER_HZ,
    WR_BUMP_RELATIVE_BANDWIDTH,
)
from .errors import ValidationError
from .scenario import ScenarioConfig, parse_scenario

# Per-hop transceiver bump at full optical power. Connector and patch-panel
# losses put the spool and each deployed hop at the same 17.75 dB margin.
HOP_BUMP_RMS_PS = 1.5
SPOOL_EXTRA_LOSS_DB = 2.0
DEPLOYED_EXTRA_LOSS_DB = 7.25

# Daily thermal cycle plus wander of the deployed cable; the two-way exchange
# removes all but half a percent of it
DEPLOYED_DRIFT = {
    "peak_to_peak": 200.0,
    "period": 86_400.0,
    "random_walk_rms_per_sqrt_s": 2.0,
}


def _bump(center_hz: float, rms_ps: float, relative_bandwidth: float = 1.0):
    return {
        "center_frequency": center_hz,
        "relative_bandwidth": relative_bandwidth,
        "rms": rms_ps,
    }


def _wr_noise(bump_rms_ps: float = HOP_BUMP_RMS_PS) -> Dict[str, Any]:
    return {
        "power_law": [{"alpha": 0, "rms_at_tau0": 0.05}],
        "bumps": [_bump(WR_BUMP_CENTER_HZ, bump_rms_ps, WR_BUMP_RELATIVE_BANDWIDTH)],
        "drifts": [],
    }


def _grandmaster_noise() -> Dict[str, Any]:
    return {
        "power_law": [
            {"alpha": 0, "rms_at_tau0": 0.05},
            {"alpha": -2, "rms_at_tau0": 0.01},
        ],
        "bumps": [],
        "drifts": [],
    }


def _node(name: str, role: str, noise: Dict[str, Any]) -> Dict[str, Any]:
    return {"name": name, "role": role, "local_noise": noise}


def _link(length_km: float, extra_loss_db: float, **kwargs) -> Dict[str, Any]:
    link = {
        "length_km": length_km,
        "loss_db_per_km": FIBER_LOSS_DB_PER_KM,
        "extra_loss_db": extra_loss_db,
    }
    link.update(kwargs)
    return link


def _laser(
    name: str, upstream: str, lock_bumps: List[Dict[str, Any]]
) -> Dict[str, Any]:
    return {
        "name": name,
        "upstream": upstream,
        "pll": {
            "loop_bandwidth_hz": 10_000.0,
            "damping": 0.7,
            "reference_rate_hz": float(CLOCK_RATE_HZ),
            "output_rate_hz": float(LASER_RATE_HZ),
        },
        "sg_jitter_ps": 0.1,
        "cavity_noise": {
            "power_law": [
                {"alpha": 0, "rms_at_tau0": 0.2},
                {"alpha": -2, "rms_at_tau0": 0.05},
            ]
        },
        "lock_noise": {"bumps": lock_bumps},
    }


# Locking-electronics features: ~4.2 kHz shows up near 1e-4 s, ~42 Hz near 1e-2 s
def _laser_pair(upstream1: str, upstream2: str) -> List[Dict[str, Any]]:
    return [
        _laser("mll1", upstream1, [_bump(4_200.0, 0.4), _bump(42.0, 0.6)]),
        _laser("mll2", upstream2, [_bump(4_200.0, 2.0), _bump(42.0, 3.8)]),
    ]


def _detection(clock1: str, clock2: str, with_lasers: bool = True) -> Dict[str, Any]:
    channels = [
        {"channel": 1, "source": clock1, "rf_chain": True},
        {"channel": 2, "source": clock2, "rf_chain": True},
    ]
    if with_lasers:
        channels += [
            {"channel": 3, "source": "mll1", "rf_chain": False},
            {"channel": 4, "source": "mll2", "rf_chain": False, "divider": True},
        ]
    return {
        "tagger": {"irf_rms_ps": MEASURED_IRF_PS},
        "divider": {},
        "channels": channels,
    }


def _four_pairs() -> Dict[str, Any]:
    return {
        "pairs": [
            {"name": "clock-clock", "a": 1, "b": 2},
            {"name": "clock1-laser1", "a": 1, "b": 3},
            {"name": "clock2-laser2", "a": 2, "b": 4},
            {"name": "laser-laser", "a": 3, "b": 4},
        ],
        "factors": None,
    }


def _document(name: str, description: str, **body) -> Dict[str, Any]:
    doc = {
        "schema": SCENARIO_SCHEMA_VERSION,
        "name": name,
        "description": description,
        "duration_s": DEFAULT_DURATION_S,
        "tau0_s": DEFAULT_TAU0_S,
        "seed": 0,
        "sync_mode": "wr",
    }
    doc.update(body)
    return doc


SPOOL75 = _document(
    "spool75",
    "Two WR switches over a 75 km fiber spool, one laser locked to each",
    topology={
        "nodes": [
            _node("switch1", "grandmaster", _grandmaster_noise()),
            _node("switch2", "switch", _wr_noise()),
        ],
        "links": [_link(75.0, SPOOL_EXTRA_LOSS_DB)],
    },
    lasers=_laser_pair("switch1", "switch2"),
    detection=_detection("switch1", "switch2"),
    analysis=_four_pairs(),
)

DEPLOYED120RELAY = _document(
    "deployed120relay",
    "Leader, relay and follower over two 60 km hops of deployed fiber",
    topology={
        "nodes": [
            _node("leader", "grandmaster", _grandmaster_noise()),
            _node("relay", "switch", _wr_noise()),
            _node("follower", "switch", _wr_noise()),
        ],
        "links": [
            _link(
                60.0,
                DEPLOYED_EXTRA_LOSS_DB,
                uncompensated_fraction=0.005,
                drift=DEPLOYED_DRIFT,
            ),
            _link(
                60.0,
                DEPLOYED_EXTRA_LOSS_DB,
                uncompensated_fraction=0.005,
                drift=DEPLOYED_DRIFT,
            ),
        ],
    },
    lasers=_laser_pair("leader", "follower"),
    detection=_detection("leader", "follower"),
    analysis=_four_pairs(),
)

DIRECTSYNC = _document(
    "directsync",
    "Both lasers locked to one switch over short coax",
    sync_mode="direct",
    topology={
        "nodes": [
            _node("switch1", "grandmaster", _grandmaster_noise()),
            _node("switch2", "switch", _wr_noise()),
        ],
        "links": [_link(1.0, 0.0)],
    },
    lasers=_laser_pair("switch1", "switch1"),
    direct={"clock": "switch1"},
    detection=_detection("switch1", "switch2"),
    analysis={
        "pairs": [
            {"name": "clock1-laser1", "a": 1, "b": 3},
            {"name": "clock1-laser2", "a": 1, "b": 4},
            {"name": "laser-laser", "a": 3, "b": 4},
        ],
        "factors": None,
    },
)

# Plateau bump sized so the clock-clock ms peak sits near 0.3 ps with ample
# optical power; the attenuator sits in the 1 km patch link
ATTENUATION_SWEEP = _document(
    "attenuation_sweep",
    "Clock-clock TDEV as an optical attenuator approaches the lock threshold",
    topology={
        "nodes": [
            _node("switch1", "grandmaster", _grandmaster_noise()),
            _node("switch2", "switch", _wr_noise(bump_rms_ps=0.29)),
        ],
        "links": [_link(1.0, 0.0, name="patch")],
    },
    lasers=[],
    detection=_detection("switch1", "switch2", with_lasers=False),
    analysis={"pairs": [{"name": "clock-clock", "a": 1, "b": 2}], "factors": None},
    sweep={
        "link": "patch",
        "attenuation_db": [0.0, 10.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.65],
    },
)

ROLESWAP75 = copy.deepcopy(SPOOL75)
ROLESWAP75.update(
    name="roleswap75",
    description="spool75 with leader and follower exchanged; lasers stay put",
    topology={
        "nodes": [
            _node("switch2", "grandmaster", _grandmaster_noise()),
            _node("switch1", "switch", _wr_noise()),
        ],
        "links": [_link(75.0, SPOOL_EXTRA_LOSS_DB)],
    },
)

# Leader emits band-limited noise near 100 kHz: above both the WR servo that
# would let the follower track it and the laser lock bandwidth
HFNOISE50 = _document(
    "hfnoise50",
    "50 km spool with high-frequency noise on the leader that the laser loops reject",
    topology={
        "nodes": [
            _node(
                "switch1",
                "grandmaster",
                {
                    "power_law": [{"alpha": 0, "rms_at_tau0": 0.05}],
                    "bumps": [_bump(100_000.0, 5.0)],
                },
            ),
            _node("switch2", "switch", _wr_noise()),
        ],
        "links": [_link(50.0, SPOOL_EXTRA_LOSS_DB)],
    },
    lasers=_laser_pair("switch1", "switch2"),
    detection=_detection("switch1", "switch2"),
    analysis=_four_pairs(),
)

BUILTINS: Dict[str, Dict[str, Any]] = {
    doc["name"]: doc
    for doc in (
        SPOOL75,
        DEPLOYED120RELAY,
        DIRECTSYNC,
        ATTENUATION_SWEEP,
        ROLESWAP75,
        HFNOISE50,
    )
}


def builtin_names() -> List[str]:
    return sorted(BUILTINS)


def builtin_document(name: str) -> Dict[str, Any]:
    """A private copy of a bundled document."""
    try:
        return copy.deepcopy(BUILTINS[name])
    except KeyError:
        raise ValidationError(
            [f"unknown built-in scenario '{name}', expected one of {builtin_names()}"]
        ) from None


def builtin(name: str) -> ScenarioConfig:
    return parse_scenario(builtin_document(name))


def load_scenario(ref: Union[str, Path]) -> ScenarioConfig:
    """A built-in by name, or a scenario JSON file by path."""
    if isinstance(ref, str) and ref in BUILTINS:
        return builtin(ref)
    path = Path(ref)
    if not path.is_file():
        raise ValidationError(
            [
                f"no built-in scenario or file named '{ref}' "
                f"(built-ins: {builtin_names()})"
            ]
        )
    return parse_scenario(path.read_text())
