"""
Canonical time, frequency and series types.

Raw tag times are integer femtoseconds; everything derived from them (phase
series, statistics) is double-precision picoseconds.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, NewType, Optional, Union

import numpy as np
import pandas as pd
from kybra_simple_logging import get_logger

from .constants import FLOAT_FORMAT, FS_PER_PS, FS_PER_S
from .errors import SeriesError, TagFileError

logger = get_logger("sync.timebase")

# Femtoseconds since capture start
Timestamp = NewType("Timestamp", int)

TAG_COLUMNS = ["channel", "timestamp_fs"]
PHASE_COLUMNS = ["index", "x_ps"]
TAU0_PREFIX = "# tau0_s="

_INT64_MAX = np.iinfo(np.int64).max


def _as_fraction(value: Union[int, float, str, Fraction]) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        # 80e6 should mean exactly 80 MHz, not its binary neighbour
        return Fraction(repr(value))
    return Fraction(value)


@dataclass(frozen=True)
class Frequency:
    """An exact rational rate in hertz."""

    hertz: Fraction

    def __post_init__(self):
        hz = _as_fraction(self.hertz)
        if hz <= 0:
            raise SeriesError(f"frequency must be positive, got {hz} Hz")
        object.__setattr__(self, "hertz", hz)

    @classmethod
    def of(cls, value: Union[int, float, str, Fraction]) -> "Frequency":
        return cls(_as_fraction(value))

    @property
    def period_fs(self) -> Fraction:
        return Fraction(FS_PER_S) / self.hertz

    @property
    def period_s(self) -> float:
        return float(1 / self.hertz)

    def ratio(self, other: "Frequency") -> Fraction:
        return self.hertz / other.hertz

    def nominal_offsets_fs(self, n: int) -> np.ndarray:
        """Exact i/rate in femtoseconds for i in [0, n), rounded to nearest fs."""
        period = self.period_fs
        whole, rest = divmod(period.numerator, period.denominator)
        if n and whole * (n - 1) > _INT64_MAX:
            raise SeriesError("capture too long for int64 femtosecond timestamps")
        i = np.arange(n, dtype=np.int64)
        offsets = i * np.int64(whole)
        if rest:
            den = period.denominator
            offsets += (i * np.int64(rest) + den // 2) // np.int64(den)
        return offsets

    def __float__(self) -> float:
        return float(self.hertz)

    def __str__(self) -> str:
        return f"{float(self.hertz):g} Hz"


@dataclass(frozen=True)
class PhaseSeries:
    """Uniformly sampled time error x[i] in picoseconds at interval tau0."""

    tau0: float
    samples: np.ndarray
    origin: str = ""

    def __post_init__(self):
        if not self.tau0 > 0:
            raise SeriesError(f"tau0 must be positive, got {self.tau0}")
        x = np.array(self.samples, dtype=np.float64)
        if x.ndim != 1 or x.size < 1:
            raise SeriesError("empty series")
        if not np.all(np.isfinite(x)):
            raise SeriesError(f"non-finite samples in series '{self.origin}'")
        x.setflags(write=False)
        object.__setattr__(self, "tau0", float(self.tau0))
        object.__setattr__(self, "samples", x)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.tau0 * len(self)

    def with_samples(
        self, samples: np.ndarray, origin: Optional[str] = None
    ) -> "PhaseSeries":
        return PhaseSeries(
            self.tau0, samples, self.origin if origin is None else origin
        )

    @classmethod
    def zeros(cls, n: int, tau0: float, origin: str = "") -> "PhaseSeries":
        return cls(tau0, np.zeros(n), origin)


@dataclass(frozen=True)
class TimeTagSeries:
    """Event timestamps of one tagger channel, in integer femtoseconds."""

    channel: int
    timestamps_fs: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.timestamps_fs)
        if t.dtype.kind not in "iu":
            raise SeriesError(
                f"channel {self.channel}: timestamps must be integer femtoseconds"
            )
        t = t.astype(np.int64, copy=True)
        t.setflags(write=False)
        object.__setattr__(self, "channel", int(self.channel))
        object.__setattr__(self, "timestamps_fs", t)

    def __len__(self) -> int:
        return self.timestamps_fs.size

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.timestamps_fs) >= 0))


def series_from_tags(tags: TimeTagSeries, nominal: Frequency) -> PhaseSeries:
    """Time error of a tag stream against an ideal clock at the nominal rate.

    x[i] = t[i] - i/nominal - t[0]. A constant frequency offset is left in the
    series, TDEV does not see it.
    """
    t = tags.timestamps_fs
    if t.size == 0:
        raise SeriesError("empty series")
    if not tags.is_sorted():
        raise SeriesError("unsorted input")

    residual_fs = (t - t[0]) - nominal.nominal_offsets_fs(t.size)
    x = residual_fs.astype(np.float64) / FS_PER_PS
    return PhaseSeries(nominal.period_s, x, f"ch{tags.channel}@{nominal}")


def write_tag_csv(path: Union[str, Path], channels: Iterable[TimeTagSeries]) -> Path:
    """Write one or more channels as a single time-ordered tag CSV."""
    path = Path(path)
    frames = [
        pd.DataFrame(
            {
                "channel": np.full(len(c), c.channel, dtype=np.int64),
                "timestamp_fs": c.timestamps_fs,
            }
        )
        for c in channels
    ]
    if not frames:
        raise SeriesError("no channels to write")
    df = pd.concat(frames, ignore_index=True)
    df = df.sort_values(["timestamp_fs", "channel"], kind="mergesort")
    df.to_csv(path, index=False, columns=TAG_COLUMNS)
    logger.debug(f"Wrote {len(df)} tags to {path}")
    return path


def _locate_bad_tag_row(path: Path) -> TagFileError:
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(raw.columns) != TAG_COLUMNS:
        return TagFileError(
            str(path), f"expected header {','.join(TAG_COLUMNS)}", line=1
        )
    for column in TAG_COLUMNS:
        bad = ~raw[column].str.fullmatch(r"-?\d+")
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            value = raw[column].iloc[row]
            return TagFileError(
                str(path), f"{column} is not an integer: {value!r}", line=row + 2
            )
    return TagFileError(str(path), "unreadable tag file")


def read_tag_csv(path: Union[str, Path]) -> Dict[int, TimeTagSeries]:
    """Read a `channel,timestamp_fs` CSV into per-channel series.

    Each channel keeps the row order of the file.
    """
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype={"channel": np.int64, "timestamp_fs": np.int64})
    except (ValueError, pd.errors.ParserError) as e:
        if isinstance(e, pd.errors.ParserError):
            raise TagFileError(str(path), str(e)) from e
        raise _locate_bad_tag_row(path) from e
    if list(df.columns) != TAG_COLUMNS:
        raise TagFileError(
            str(path), f"expected header {','.join(TAG_COLUMNS)}", line=1
        )

    result = {}
    channels = df["channel"].to_numpy()
    stamps = df["timestamp_fs"].to_numpy()
    for channel in np.unique(channels):
        result[int(channel)] = TimeTagSeries(
            int(channel), stamps[channels == channel]
        )
    logger.debug(f"Read {len(df)} tags on channels {sorted(result)} from {path}")
    return result


def write_phase_csv(path: Union[str, Path], series: PhaseSeries) -> Path:
    path = Path(path)
    df = pd.DataFrame(
        {"index": np.arange(len(series), dtype=np.int64), "x_ps": series.samples}
    )
    with open(path, "w", newline="") as f:
        f.write(f"{TAU0_PREFIX}{series.tau0!r}\n")
        df.to_csv(f, index=False, float_format=FLOAT_FORMAT)
    return path


def read_phase_csv(path: Union[str, Path], origin: str = "") -> PhaseSeries:
    path = Path(path)
    with open(path) as f:
        first = f.readline().strip()
    if not first.startswith(TAU0_PREFIX):
        raise TagFileError(str(path), f"missing '{TAU0_PREFIX}<seconds>' line", 1)
    try:
        tau0 = float(first[len(TAU0_PREFIX) :])
    except ValueError as e:
        raise TagFileError(str(path), f"bad tau0 value {first!r}", 1) from e

    df = pd.read_csv(path, skiprows=1)
    if list(df.columns) != PHASE_COLUMNS:
        raise TagFileError(
            str(path), f"expected header {','.join(PHASE_COLUMNS)}", line=2
        )
    x = pd.to_numeric(df["x_ps"], errors="coerce")
    if x.isna().any():
        row = int(np.flatnonzero(x.isna().to_numpy())[0])
        raise TagFileError(str(path), "x_ps is not a number", line=row + 3)
    return PhaseSeries(tau0, x.to_numpy(), origin or path.stem)
