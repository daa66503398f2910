"""Tests for exact rates, phase series and the tag / phase file formats."""

from fractions import Fraction

import numpy as np
import pytest

from backend.sync_lib.detection import TaggerConfig, emit_tags
from backend.sync_lib.errors import SeriesError, TagFileError
from backend.sync_lib.timebase import (
    Frequency,
    PhaseSeries,
    TimeTagSeries,
    read_phase_csv,
    read_tag_csv,
    series_from_tags,
    write_phase_csv,
    write_tag_csv,
)


def test_frequency_is_exact():
    laser, clock = Frequency.of(80e6), Frequency.of(10_000_000)
    assert laser.hertz == Fraction(80_000_000)
    assert laser.ratio(clock) == Fraction(8, 1)
    assert clock.period_fs == Fraction(10**8)
    assert str(clock) == "1e+07 Hz"


def test_frequency_must_be_positive():
    with pytest.raises(SeriesError):
        Frequency.of(0)


def test_nominal_offsets_round_to_nearest_femtosecond():
    offsets = Frequency.of(3_000_000).nominal_offsets_fs(4)
    assert offsets.tolist() == [0, 333_333_333, 666_666_667, 1_000_000_000]


def test_nominal_offsets_refuse_int64_overflow():
    with pytest.raises(SeriesError):
        Frequency.of(1).nominal_offsets_fs(10_000)


def test_perfect_clock_gives_zero_series():
    rate = Frequency.of(10_000_000)
    tags = TimeTagSeries(1, rate.nominal_offsets_fs(1000))
    x = series_from_tags(tags, rate)
    assert np.all(x.samples == 0.0)
    assert x.tau0 == pytest.approx(1e-7)


def test_constant_offset_is_removed():
    rate = Frequency.of(10_000_000)
    tags = TimeTagSeries(1, rate.nominal_offsets_fs(100) + 5000)
    assert np.all(series_from_tags(tags, rate).samples == 0.0)


def test_hand_computed_residuals():
    tags = TimeTagSeries(1, np.array([0, 100_001_000_000, 200_003_000_000]))
    x = series_from_tags(tags, Frequency.of(10_000))
    assert x.samples.tolist() == [0.0, 1000.0, 3000.0]

    tags = TimeTagSeries(1, np.array([0, 100_001_000, 200_003_000]))
    x = series_from_tags(tags, Frequency.of(10_000_000))
    assert x.samples.tolist() == [0.0, 1.0, 3.0]


def test_series_from_tags_is_translation_invariant():
    rate = Frequency.of(10_000_000)
    rng = np.random.default_rng(3)
    stamps = rate.nominal_offsets_fs(500) + rng.integers(-2000, 2000, 500)
    a = series_from_tags(TimeTagSeries(1, stamps), rate)
    b = series_from_tags(TimeTagSeries(1, stamps + 123_456_789), rate)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_series_from_tags_errors():
    rate = Frequency.of(10_000_000)
    with pytest.raises(SeriesError, match="empty series"):
        series_from_tags(TimeTagSeries(1, np.array([], dtype=np.int64)), rate)
    with pytest.raises(SeriesError, match="unsorted input"):
        series_from_tags(TimeTagSeries(1, np.array([0, 200, 100])), rate)


def test_phase_series_invariants():
    with pytest.raises(SeriesError):
        PhaseSeries(0.0, [1.0])
    with pytest.raises(SeriesError):
        PhaseSeries(1e-7, [])
    with pytest.raises(SeriesError):
        PhaseSeries(1e-7, [0.0, float("nan")])
    x = PhaseSeries(1e-7, [1.0, 2.0])
    assert not x.samples.flags.writeable
    assert x.duration_s == pytest.approx(2e-7)


def test_time_tags_must_be_integer():
    with pytest.raises(SeriesError):
        TimeTagSeries(1, np.array([0.5, 1.5]))


def test_tag_csv_round_trip(tmp_path):
    a = TimeTagSeries(1, np.array([0, 100, 250]))
    b = TimeTagSeries(2, np.array([50, 100, 400]))
    path = write_tag_csv(tmp_path / "tags.csv", [b, a])

    assert path.read_text().splitlines()[:3] == [
        "channel,timestamp_fs",
        "1,0",
        "2,50",
    ]
    back = read_tag_csv(path)
    assert sorted(back) == [1, 2]
    np.testing.assert_array_equal(back[1].timestamps_fs, a.timestamps_fs)
    np.testing.assert_array_equal(back[2].timestamps_fs, b.timestamps_fs)


def test_tag_csv_reports_line_of_bad_value(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("channel,timestamp_fs\n1,100\n1,abc\n2,300\n")
    with pytest.raises(TagFileError) as info:
        read_tag_csv(path)
    assert info.value.line == 3
    assert "bad.csv:3" in str(info.value)


def test_tag_csv_reports_bad_header(tmp_path):
    path = tmp_path / "header.csv"
    path.write_text("chan,time\n1,100\n")
    with pytest.raises(TagFileError) as info:
        read_tag_csv(path)
    assert info.value.line == 1


def test_phase_csv_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    x = PhaseSeries(1e-6, rng.normal(0.0, 3.0, 200), "pair")
    path = write_phase_csv(tmp_path / "phase.csv", x)
    assert path.read_text().startswith("# tau0_s=1e-06\nindex,x_ps\n")

    back = read_phase_csv(path)
    assert back.tau0 == x.tau0
    np.testing.assert_allclose(back.samples, x.samples, rtol=1e-9, atol=1e-12)
    assert back.origin == "phase"


def test_phase_csv_needs_tau0_line(tmp_path):
    path = tmp_path / "phase.csv"
    path.write_text("index,x_ps\n0,1.0\n")
    with pytest.raises(TagFileError) as info:
        read_phase_csv(path)
    assert info.value.line == 1


@pytest.mark.parametrize("hertz", [10_000_000, 80_000_000])
def test_tags_synthesized_from_a_series_convert_back(hertz):
    rate = Frequency.of(hertz)
    rng = np.random.default_rng(5)
    x = PhaseSeries(rate.period_s, rng.normal(0.0, 50.0, 20_000))
    tags = emit_tags(x, rate, TaggerConfig(0.0, 0.0, 0.0, 0.0), seed=0)
    back = series_from_tags(tags, rate)
    assert len(back) == len(x)
    assert np.max(np.abs(back.samples - (x.samples - x.samples[0]))) < 0.001
