"""Tests for the PLL model and laser discipline."""

import math

import numpy as np
import pytest

from backend.sync_lib.builtin_scenarios import builtin
from backend.sync_lib.errors import SeriesError, ValidationError
from backend.sync_lib.laser import MLLNode, PLLConfig, discipline, loop_response
from backend.sync_lib.noisegen import NoiseSpec, PowerLawTerm
from backend.sync_lib.runner import run_ensemble
from backend.sync_lib.scenario import parse_scenario
from backend.sync_lib.stability import tdev
from backend.sync_lib.timebase import Frequency, PhaseSeries

QUIET = MLLNode("mll", sg_jitter_ps=0.0)


def test_pll_multiplier():
    assert PLLConfig().multiplier == 8
    with pytest.raises(ValidationError, match="ratio must be an integer"):
        PLLConfig(output_rate=Frequency.of(25_000_000))


def test_pll_rejects_bad_loop():
    with pytest.raises(ValidationError) as info:
        PLLConfig(loop_bandwidth_hz=0.0, damping=-1.0)
    assert len(info.value.violations) == 2


def test_loop_bandwidth_is_the_3db_point():
    pll = PLLConfig(loop_bandwidth_hz=10_000.0, damping=0.7)
    lp, _ = loop_response(pll, 10_000.0)
    assert lp == pytest.approx(1 / math.sqrt(2), rel=1e-6)


def test_loop_response_limits():
    pll = PLLConfig()
    lp, hp = loop_response(pll, np.array([1.0, 1e7]))
    assert lp[0] == pytest.approx(1.0, abs=1e-3)
    assert hp[0] < 1e-3
    assert hp[1] == pytest.approx(1.0, abs=1e-2)
    with pytest.raises(ValidationError, match="f_hz must be > 0"):
        loop_response(pll, 0.0)
    with pytest.raises(ValidationError):
        loop_response(pll, np.array([1.0, -5.0]))


def test_laser_follows_slow_reference():
    t = np.arange(200_000) * 1e-6
    ref = PhaseSeries(1e-6, 10.0 * np.sin(2 * np.pi * 10.0 * t), "clock")
    out = discipline(ref, QUIET, seed=1)
    assert out.origin == "mll"
    assert np.max(np.abs(out.samples - ref.samples)) < 0.05


def test_laser_rejects_fast_reference_noise():
    rng = np.random.default_rng(2)
    x = rng.normal(0.0, 1.0, 100_000)
    x[0] = 0.0
    out = discipline(PhaseSeries(1e-7, x), QUIET, seed=1)
    assert np.std(out.samples) < 0.5


def test_cavity_noise_is_high_passed():
    node = MLLNode(
        "mll",
        sg_jitter_ps=0.0,
        cavity_noise=NoiseSpec((PowerLawTerm(-2, 10.0),)),
    )
    out = discipline(PhaseSeries.zeros(100_000, 1e-6), node, seed=3)
    assert np.std(out.samples) < 2.0


def test_lock_noise_is_not_filtered():
    node = MLLNode(
        "mll",
        sg_jitter_ps=0.0,
        lock_noise=NoiseSpec((PowerLawTerm(-2, 3.0),)),
    )
    out = discipline(PhaseSeries.zeros(50_000, 1e-6), node, seed=3)
    assert np.std(out.samples) == pytest.approx(3.0, rel=1e-9)


def test_reference_grid_must_be_whole_clock_cycles():
    with pytest.raises(SeriesError, match="whole number"):
        discipline(PhaseSeries.zeros(100, 1.5e-7), QUIET, seed=0)


def test_discipline_is_deterministic():
    node = MLLNode("mll", cavity_noise=NoiseSpec((PowerLawTerm(0, 0.2),)))
    ref = PhaseSeries.zeros(10_000, 1e-6)
    a, b = discipline(ref, node, seed=5), discipline(ref, node, seed=5)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, discipline(ref, node, seed=6).samples)


def test_sg_jitter_must_be_non_negative():
    with pytest.raises(ValidationError):
        MLLNode("mll", sg_jitter_ps=-0.1)


def test_output_mean_tracks_reference_mean():
    rng = np.random.default_rng(4)
    x = 3.0 + rng.normal(0.0, 1.0, 200_000)
    x[0] = 3.0
    out = discipline(PhaseSeries(1e-6, x), QUIET, seed=1)
    assert abs(out.samples.mean() - x.mean()) < 0.01


def test_builtin_second_laser_has_the_noisier_lock():
    first, second = (laser.node for laser in builtin("spool75").lasers)
    assert all(
        s.rms > f.rms
        for f, s in zip(first.lock_noise.bump_terms, second.lock_noise.bump_terms)
    )
    ref = PhaseSeries.zeros(100_000, 1e-5)
    factors = [10, 30, 100, 300, 1000]
    quiet = tdev(discipline(ref, first, seed=0), factors).values
    noisy = tdev(discipline(ref, second, seed=0), factors).values
    assert np.all(noisy > quiet)


def test_noisier_lock_leaves_the_partner_laser_alone(short_spool75):
    doc = short_spool75.to_dict()
    for bump in doc["lasers"][1]["lock_noise"]["bumps"]:
        bump["rms"] *= 2
    raised = parse_scenario(doc)
    pairs = ["clock1-laser1", "clock2-laser2"]
    base = run_ensemble(short_spool75, [0], pair_names=pairs)[0]
    changed = run_ensemble(raised, [0], pair_names=pairs)[0]

    np.testing.assert_array_equal(
        changed["clock1-laser1"].values, base["clock1-laser1"].values
    )
    window = (base["clock2-laser2"].taus >= 1e-4) & (
        base["clock2-laser2"].taus <= 1e-2
    )
    assert np.all(
        changed["clock2-laser2"].values[window] > base["clock2-laser2"].values[window]
    )
