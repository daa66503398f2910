"""Shared fixtures for the sync_lib test suite."""

import copy

import numpy as np
import pytest

from backend.sync_lib.builtin_scenarios import builtin
from backend.sync_lib.timebase import PhaseSeries

QUIET_TAGGER = {
    "irf_rms_ps": 0.0,
    "deadtime_ns": 0.0,
    "per_channel_extra_jitter_ps": 0.0,
    "split_jitter_ps": 0.0,
}

_TINY = {
    "schema": 1,
    "name": "tiny",
    "duration_s": 0.003,
    "tau0_s": 1e-6,
    "seed": 7,
    "topology": {
        "nodes": [
            {"name": "gm", "role": "grandmaster"},
            {"name": "sw", "role": "switch"},
        ],
        "links": [{"length_km": 1.0}],
    },
    "lasers": [
        {"name": "mllA", "upstream": "gm", "sg_jitter_ps": 0.0},
        {"name": "mllB", "upstream": "sw", "sg_jitter_ps": 0.0},
    ],
    "detection": {
        "tagger": QUIET_TAGGER,
        "divider": {"added_jitter_ps": 0.0},
        "channels": [
            {"channel": 1, "source": "gm"},
            {"channel": 2, "source": "sw"},
            {"channel": 3, "source": "mllA", "rf_chain": False},
            {"channel": 4, "source": "mllB", "rf_chain": False, "divider": True},
        ],
    },
    "analysis": {
        "pairs": [
            {"name": "clock-clock", "a": 1, "b": 2},
            {"name": "laser-laser", "a": 3, "b": 4},
        ]
    },
}


@pytest.fixture
def tiny_document():
    """A two-switch, two-laser scenario with every noise source switched off."""
    return copy.deepcopy(_TINY)


@pytest.fixture
def noisy_document(tiny_document):
    """The tiny scenario with WR, cavity and tagger noise switched on."""
    doc = tiny_document
    doc["topology"]["nodes"][1]["local_noise"] = {
        "power_law": [{"alpha": 0, "rms_at_tau0": 0.05}],
        "bumps": [{"center_frequency": 3000.0, "relative_bandwidth": 1.0, "rms": 1.0}],
    }
    for laser in doc["lasers"]:
        laser["sg_jitter_ps"] = 0.1
        laser["cavity_noise"] = {"power_law": [{"alpha": 0, "rms_at_tau0": 0.2}]}
    doc["detection"]["tagger"] = {"irf_rms_ps": 1.7}
    doc["detection"]["divider"] = {}
    return doc


@pytest.fixture
def short_spool75():
    """spool75 cut to 20 ms at a 1 us comparison interval."""
    return builtin("spool75").with_duration(0.02).decimated(10)


@pytest.fixture
def white_series():
    def make(n: int, seed: int = 0, sigma: float = 1.0, tau0: float = 1e-7):
        rng = np.random.default_rng(seed)
        return PhaseSeries(tau0, rng.normal(0.0, sigma, n), "white")

    return make
