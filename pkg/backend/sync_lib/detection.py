"""
Measurement chain: photodiode pickup, RF conditioning, frequency divider and
the two-channel, dead-time-limited time tagger.

Tagger jitter figures (IRF, RF chain, splitter) are two-channel numbers: they
are what a comparison of one signal split into both inputs reads. Each channel
carries half of the variance. Divider jitter belongs to the one channel the
divider sits on.
"""

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, Union

import numpy as np
from kybra_simple_logging import get_logger

from .constants import (
    DIVIDER_JITTER_PS,
    DIVIDER_RATIO,
    FS_PER_PS,
    MAX_UNMATCHED_FRACTION,
    MEASURED_IRF_PS,
    RF_CHAIN_JITTER_PS,
    SPLIT_JITTER_PS,
    TAGGER_DEADTIME_NS,
    TAGGER_IRF_PS,
)
from .errors import PairingError, SeriesError, TagFileError, ValidationError
from .timebase import Frequency, PhaseSeries, TimeTagSeries

logger = get_logger("sync.detection")

BINARY_RECORD = np.dtype([("channel", "<u4"), ("timestamp_fs", "<i8")])


@dataclass(frozen=True)
class TaggerConfig:
    irf_rms_ps: float = TAGGER_IRF_PS
    deadtime_ns: float = TAGGER_DEADTIME_NS
    # RF chain (inverter, DC block, attenuator) on clock inputs
    per_channel_extra_jitter_ps: float = RF_CHAIN_JITTER_PS
    split_jitter_ps: float = SPLIT_JITTER_PS

    def __post_init__(self):
        for name in (
            "irf_rms_ps",
            "deadtime_ns",
            "per_channel_extra_jitter_ps",
            "split_jitter_ps",
        ):
            if not getattr(self, name) >= 0:
                raise ValidationError([f"tagger: {name} must be >= 0"])

    def channel_sigma_ps(self, rf_chain: bool = True, split: bool = False) -> float:
        """Per-event timing noise of one channel."""
        var = self.irf_rms_ps**2
        if rf_chain:
            var += self.per_channel_extra_jitter_ps**2
        if split:
            var += self.split_jitter_ps**2
        return float(np.sqrt(var / 2.0))

    @property
    def deadtime_fs(self) -> int:
        return int(round(self.deadtime_ns * 1e6))


@dataclass(frozen=True)
class DividerConfig:
    ratio: int = DIVIDER_RATIO
    added_jitter_ps: float = DIVIDER_JITTER_PS

    def __post_init__(self):
        if int(self.ratio) != self.ratio or self.ratio < 1:
            raise ValidationError(["divider: ratio must be an integer >= 1"])
        if not self.added_jitter_ps >= 0:
            raise ValidationError(["divider: added_jitter_ps must be >= 0"])


def jitter_budget(
    tagger: TaggerConfig = TaggerConfig(irf_rms_ps=MEASURED_IRF_PS),
    divider: DividerConfig = DividerConfig(),
) -> Dict[str, float]:
    """Two-channel jitter after each stage of the clock measurement chain."""
    irf = tagger.irf_rms_ps
    rf = float(np.hypot(irf, tagger.per_channel_extra_jitter_ps))
    split = float(np.hypot(rf, tagger.split_jitter_ps))
    divided = float(np.hypot(rf, divider.added_jitter_ps))
    return {"irf": irf, "rf_chain": rf, "split": split, "divider": divided}


def apply_deadtime(timestamps_fs: np.ndarray, deadtime_fs: int) -> np.ndarray:
    """Retain at most one event per dead-time cycle of the channel.

    The cycle is anchored on the first event of a busy stretch. A retained
    event blinds the channel until the next cycle boundary; an event arriving
    a whole cycle after that boundary starts a new stretch. A train faster
    than 1/deadtime therefore yields exactly one tag per cycle.
    """
    t = np.asarray(timestamps_fs, dtype=np.int64)
    if t.size < 2 or deadtime_fs <= 0 or np.all(np.diff(t) >= deadtime_fs):
        return t
    d = int(deadtime_fs)
    keep = []
    i = 0
    anchor = ready = int(t[0])
    while i < t.size:
        ti = int(t[i])
        if ti >= ready + d:
            anchor = ti
        keep.append(i)
        ready = anchor + ((ti - anchor) // d + 1) * d
        i = int(np.searchsorted(t, ready, side="left"))
    return t[np.asarray(keep, dtype=np.int64)]


def _check_rate(series: PhaseSeries, rate: Frequency) -> None:
    if not np.isclose(series.tau0, rate.period_s, rtol=1e-9, atol=0.0):
        raise SeriesError(
            f"rate {rate} does not match series tau0 {series.tau0:g} s"
        )


def emit_tags(
    pulse_timing: PhaseSeries,
    rate: Frequency,
    tagger: TaggerConfig,
    seed: int,
    channel: int = 1,
    rf_chain: bool = True,
    split: bool = False,
) -> TimeTagSeries:
    """Tag stream of a pulse train whose i-th pulse is late by x[i]."""
    _check_rate(pulse_timing, rate)
    n = len(pulse_timing)
    x = pulse_timing.samples
    sigma = tagger.channel_sigma_ps(rf_chain=rf_chain, split=split)
    if sigma > 0:
        rng = np.random.default_rng(seed)
        x = x + rng.normal(0.0, sigma, n)
    t = rate.nominal_offsets_fs(n) + np.rint(x * FS_PER_PS).astype(np.int64)
    t = np.sort(t, kind="stable")
    kept = apply_deadtime(t, tagger.deadtime_fs)
    if kept.size < t.size:
        logger.debug(
            f"Channel {channel}: dead time dropped {t.size - kept.size} of {t.size}"
        )
    return TimeTagSeries(channel, kept)


def divide(tags: TimeTagSeries, div: DividerConfig, seed: int) -> TimeTagSeries:
    """Keep every ratio-th tag from the first, with the divider's own jitter."""
    kept = tags.timestamps_fs[:: div.ratio]
    if div.added_jitter_ps > 0 and kept.size:
        rng = np.random.default_rng(seed)
        noise = rng.normal(0.0, div.added_jitter_ps, kept.size)
        kept = np.sort(kept + np.rint(noise * FS_PER_PS).astype(np.int64))
    return TimeTagSeries(tags.channel, kept)


def _offset_mod(j: np.ndarray, slow: Fraction, fast: Fraction) -> np.ndarray:
    """(j * slow) mod fast, in fs, for periods given as exact fractions."""
    num = slow.numerator * fast.denominator
    mod = fast.numerator * slow.denominator
    den = slow.denominator * fast.denominator
    if num % mod == 0:
        return np.zeros(j.size)
    if j.size and int(j.max()) * num < np.iinfo(np.int64).max:
        return ((j * np.int64(num)) % np.int64(mod)).astype(np.float64) / den
    return np.mod(j * float(slow), float(fast))


def pair_tags(
    chan_a: TimeTagSeries,
    chan_b: TimeTagSeries,
    nominal_a: Frequency,
    nominal_b: Frequency,
) -> PhaseSeries:
    """Time error of channel B relative to channel A, at the slower rate.

    Every slow-channel tag is matched to its nearest fast-channel tag. The
    difference is reduced modulo the fast period after removing the nominal
    offset, then unwrapped so it stays continuous across period boundaries.
    """
    for chan in (chan_a, chan_b):
        if not chan.is_sorted():
            raise SeriesError(f"unsorted input on channel {chan.channel}")
    if len(chan_a) == 0 or len(chan_b) == 0:
        raise PairingError(
            f"channels unpairable: channel {chan_a.channel} has {len(chan_a)} tags, "
            f"channel {chan_b.channel} has {len(chan_b)}"
        )

    a_is_slow = nominal_a.hertz <= nominal_b.hertz
    slow, fast = (chan_a, chan_b) if a_is_slow else (chan_b, chan_a)
    rates = (nominal_a, nominal_b) if a_is_slow else (nominal_b, nominal_a)
    slow_rate, fast_rate = rates
    t_slow, t_fast = slow.timestamps_fs, fast.timestamps_fs
    period_slow, period_fast = slow_rate.period_fs, fast_rate.period_fs

    idx = np.searchsorted(t_fast, t_slow)
    before = t_fast[np.clip(idx - 1, 0, t_fast.size - 1)]
    after = t_fast[np.clip(idx, 0, t_fast.size - 1)]
    d_before, d_after = before - t_slow, after - t_slow
    d = np.where(np.abs(d_before) <= np.abs(d_after), d_before, d_after)

    matched = np.abs(d) <= float(period_slow) / 2
    unmatched = 1.0 - matched.mean()
    if unmatched > MAX_UNMATCHED_FRACTION:
        raise PairingError(
            f"channels unpairable: {unmatched:.1%} of channel {slow.channel} tags "
            f"have no partner on channel {fast.channel}"
        )

    t_slow, d = t_slow[matched], d[matched].astype(np.float64)
    j = np.rint((t_slow - t_slow[0]) / float(period_slow)).astype(np.int64)
    tf = float(period_fast)
    r = d + _offset_mod(j, period_slow, period_fast)
    r = r - tf * np.round(r / tf)
    r = np.unwrap(r, period=tf)
    if not a_is_slow:
        r = -r

    logger.debug(
        f"Paired {r.size} events of channels {chan_a.channel}/{chan_b.channel} "
        f"({unmatched:.2%} unmatched)"
    )
    return PhaseSeries(
        slow_rate.period_s, r / FS_PER_PS, f"ch{chan_b.channel}-ch{chan_a.channel}"
    )


def write_tag_binary(
    path: Union[str, Path], channels: Iterable[TimeTagSeries]
) -> Path:
    """Little-endian (u32 channel, i64 femtoseconds) records, time-ordered."""
    path = Path(path)
    parts = []
    for chan in channels:
        rec = np.empty(len(chan), dtype=BINARY_RECORD)
        rec["channel"] = chan.channel
        rec["timestamp_fs"] = chan.timestamps_fs
        parts.append(rec)
    records = np.concatenate(parts) if parts else np.empty(0, dtype=BINARY_RECORD)
    records = records[np.lexsort((records["channel"], records["timestamp_fs"]))]
    records.tofile(path)
    return path


def read_tag_binary(path: Union[str, Path]) -> Dict[int, TimeTagSeries]:
    path = Path(path)
    size = path.stat().st_size
    if size % BINARY_RECORD.itemsize:
        raise TagFileError(
            str(path),
            f"truncated record {size // BINARY_RECORD.itemsize + 1} "
            f"({size % BINARY_RECORD.itemsize} trailing bytes)",
        )
    records = np.fromfile(path, dtype=BINARY_RECORD)
    result = {}
    for channel in np.unique(records["channel"]):
        sel = records["channel"] == channel
        result[int(channel)] = TimeTagSeries(
            int(channel), records["timestamp_fs"][sel].astype(np.int64)
        )
    return result
