"""
Noise synthesis for the timing chain.

Every generator returns a PhaseSeries in picoseconds and is a pure function of
(term, n, tau0, seed). Amplitudes are calibrated to the sample standard
deviation of the generated length, since the measurements quote ps RMS values
rather than PSD coefficients.
"""

import zlib
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple, Union

import numpy as np
from kybra_simple_logging import get_logger

from .constants import (
    ATTENUATION_PLATEAU_JITTER_PS,
    ATTENUATION_PLATEAU_MARGIN_DB,
    ATTENUATION_THRESHOLD_JITTER_PS,
    SUPPORTED_ALPHAS,
)
from .errors import LinkBelowThresholdError, NoiseSpecError
from .timebase import PhaseSeries

logger = get_logger("sync.noisegen")

SeedKey = Union[int, str]


@dataclass(frozen=True)
class PowerLawTerm:
    """Phase noise with S_x(f) ~ f**alpha (0 white PM, -2 white FM, -4 RW FM)."""

    alpha: int
    rms_at_tau0: float

    def __post_init__(self):
        if self.alpha not in SUPPORTED_ALPHAS:
            raise NoiseSpecError(f"unsupported exponent: {self.alpha}")
        if not self.rms_at_tau0 >= 0:
            raise NoiseSpecError(f"rms_at_tau0 must be >= 0, got {self.rms_at_tau0}")


@dataclass(frozen=True)
class BumpTerm:
    """Band-limited Gaussian noise around center_frequency (the WR ms bump)."""

    center_frequency: float
    relative_bandwidth: float
    rms: float

    def __post_init__(self):
        if not self.center_frequency > 0:
            raise NoiseSpecError("bump center_frequency must be > 0")
        if not 0 < self.relative_bandwidth <= 2:
            raise NoiseSpecError("bump relative_bandwidth must be in (0, 2]")
        if not self.rms >= 0:
            raise NoiseSpecError("bump rms must be >= 0")


@dataclass(frozen=True)
class DriftTerm:
    """Sinusoidal plus random-walk delay drift of a deployed fiber."""

    peak_to_peak: float = 0.0
    period: float = 0.0
    random_walk_rms_per_sqrt_s: float = 0.0

    def __post_init__(self):
        for name in ("peak_to_peak", "period", "random_walk_rms_per_sqrt_s"):
            if not getattr(self, name) >= 0:
                raise NoiseSpecError(f"drift {name} must be >= 0")
        if self.peak_to_peak > 0 and self.period == 0:
            raise NoiseSpecError("drift with peak_to_peak > 0 needs a period")

    @property
    def is_zero(self) -> bool:
        return self.peak_to_peak == 0 and self.random_walk_rms_per_sqrt_s == 0


@dataclass(frozen=True)
class NoiseSpec:
    power_law_terms: Tuple[PowerLawTerm, ...] = field(default_factory=tuple)
    bump_terms: Tuple[BumpTerm, ...] = field(default_factory=tuple)
    drift_terms: Tuple[DriftTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "power_law_terms", tuple(self.power_law_terms))
        object.__setattr__(self, "bump_terms", tuple(self.bump_terms))
        object.__setattr__(self, "drift_terms", tuple(self.drift_terms))

    @property
    def is_empty(self) -> bool:
        return not (self.power_law_terms or self.bump_terms or self.drift_terms)

    def scaled_bumps(self, factor: float) -> "NoiseSpec":
        return NoiseSpec(
            self.power_law_terms,
            tuple(
                BumpTerm(b.center_frequency, b.relative_bandwidth, b.rms * factor)
                for b in self.bump_terms
            ),
            self.drift_terms,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "power_law": [
                {"alpha": t.alpha, "rms_at_tau0": t.rms_at_tau0}
                for t in self.power_law_terms
            ],
            "bumps": [
                {
                    "center_frequency": b.center_frequency,
                    "relative_bandwidth": b.relative_bandwidth,
                    "rms": b.rms,
                }
                for b in self.bump_terms
            ],
            "drifts": [drift_to_dict(d) for d in self.drift_terms],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NoiseSpec":
        data = data or {}
        return cls(
            tuple(PowerLawTerm(**t) for t in data.get("power_law", [])),
            tuple(BumpTerm(**b) for b in data.get("bumps", [])),
            tuple(DriftTerm(**d) for d in data.get("drifts", [])),
        )


def drift_to_dict(term: DriftTerm) -> Dict[str, float]:
    return {
        "peak_to_peak": term.peak_to_peak,
        "period": term.period,
        "random_walk_rms_per_sqrt_s": term.random_walk_rms_per_sqrt_s,
    }


def derive_seed(parent: int, *keys: SeedKey) -> int:
    """Child seed from a parent seed and a path of indices or names.

    Names go through CRC-32 and the whole path through numpy's SeedSequence,
    so the result is the same on every platform.
    """
    entropy = [int(parent)]
    for key in keys:
        entropy.append(zlib.crc32(key.encode()) if isinstance(key, str) else int(key))
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0])


def _check_grid(n: int, tau0: float) -> None:
    if n < 2:
        raise NoiseSpecError(f"need at least 2 samples, got {n}")
    if not tau0 > 0:
        raise NoiseSpecError(f"tau0 must be positive, got {tau0}")


def _calibrate(x: np.ndarray, rms: float) -> np.ndarray:
    std = float(np.std(x))
    if std == 0.0:
        return np.zeros_like(x)
    return x * (rms / std)


def gen_power_law(term: PowerLawTerm, n: int, tau0: float, seed: int) -> PhaseSeries:
    _check_grid(n, tau0)
    origin = f"power_law(alpha={term.alpha})"
    if term.rms_at_tau0 == 0:
        return PhaseSeries.zeros(n, tau0, origin)

    rng = np.random.default_rng(seed)
    if term.alpha == 0:
        return PhaseSeries(tau0, rng.normal(0.0, term.rms_at_tau0, n), origin)

    # Shape a white spectrum by f**(alpha/2) on a doubled grid, keep the first
    # half so the circular wrap-around of the FFT does not show up
    size = 2 * n
    spectrum = np.fft.rfft(rng.standard_normal(size))
    freqs = np.fft.rfftfreq(size, d=tau0)
    gain = np.zeros_like(freqs)
    gain[1:] = freqs[1:] ** (term.alpha / 2.0)
    x = np.fft.irfft(spectrum * gain, n=size)[:n]
    return PhaseSeries(tau0, _calibrate(x, term.rms_at_tau0), origin)


def gen_bump(term: BumpTerm, n: int, tau0: float, seed: int) -> PhaseSeries:
    _check_grid(n, tau0)
    nyquist = 1.0 / (2.0 * tau0)
    if term.center_frequency >= nyquist:
        raise NoiseSpecError(
            f"bump center {term.center_frequency:g} Hz is above Nyquist "
            f"({nyquist:g} Hz at tau0={tau0:g} s)"
        )
    origin = f"bump({term.center_frequency:g} Hz)"
    if term.rms == 0:
        return PhaseSeries.zeros(n, tau0, origin)

    rng = np.random.default_rng(seed)
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, d=tau0)
    # Gaussian passband, FWHM = relative_bandwidth * center
    fwhm = term.relative_bandwidth * term.center_frequency
    width = fwhm / (2 * np.sqrt(2 * np.log(2)))
    gain = np.exp(-0.5 * ((freqs - term.center_frequency) / width) ** 2)
    if gain.max() < 1e-3:
        logger.warning(
            f"Bump at {term.center_frequency:g} Hz narrower than the "
            f"{freqs[1]:g} Hz frequency grid, using the nearest bin"
        )
        gain = np.zeros_like(freqs)
        # DC carries no fluctuation
        gain[1 + int(np.argmin(np.abs(freqs[1:] - term.center_frequency)))] = 1.0
    x = np.fft.irfft(spectrum * gain, n=n)
    return PhaseSeries(tau0, _calibrate(x, term.rms), origin)


def gen_drift(term: DriftTerm, n: int, tau0: float, seed: int) -> PhaseSeries:
    _check_grid(n, tau0)
    x = np.zeros(n)
    if term.is_zero:
        return PhaseSeries(tau0, x, "drift")

    rng = np.random.default_rng(seed)
    if term.peak_to_peak > 0:
        t = np.arange(n) * tau0
        phase = rng.uniform(0.0, 2 * np.pi)
        x += 0.5 * term.peak_to_peak * np.sin(2 * np.pi * t / term.period + phase)
    if term.random_walk_rms_per_sqrt_s > 0:
        step = term.random_walk_rms_per_sqrt_s * np.sqrt(tau0)
        x += np.cumsum(rng.normal(0.0, step, n))
    return PhaseSeries(tau0, x, "drift")


def generate(spec: NoiseSpec, n: int, tau0: float, seed: int) -> PhaseSeries:
    """Sum of every term of spec, each drawn with its own derived seed."""
    _check_grid(n, tau0)
    total = np.zeros(n)
    for i, term in enumerate(spec.power_law_terms):
        total += gen_power_law(term, n, tau0, derive_seed(seed, "power_law", i)).samples
    for i, term in enumerate(spec.bump_terms):
        total += gen_bump(term, n, tau0, derive_seed(seed, "bump", i)).samples
    for i, term in enumerate(spec.drift_terms):
        total += gen_drift(term, n, tau0, derive_seed(seed, "drift", i)).samples
    logger.debug(
        f"Generated {n} samples from {len(spec.power_law_terms)} power-law, "
        f"{len(spec.bump_terms)} bump and {len(spec.drift_terms)} drift terms"
    )
    return PhaseSeries(tau0, total, "noise")


def attenuation_jitter(
    received_power_margin_db: float, link_name: str = "link"
) -> float:
    """Bump RMS (ps) expected at a given margin above the lock threshold.

    Flat at the plateau value from 20 dB up, rising linearly in dB to 1 ps at
    the threshold.
    """
    margin = float(received_power_margin_db)
    if margin < 0:
        raise LinkBelowThresholdError(link_name, margin)
    if margin >= ATTENUATION_PLATEAU_MARGIN_DB:
        return ATTENUATION_PLATEAU_JITTER_PS
    span = ATTENUATION_THRESHOLD_JITTER_PS - ATTENUATION_PLATEAU_JITTER_PS
    fraction = margin / ATTENUATION_PLATEAU_MARGIN_DB
    return ATTENUATION_THRESHOLD_JITTER_PS - span * fraction


def bump_scale(received_power_margin_db: float, link_name: str = "link") -> float:
    """Factor applied to configured bump amplitudes (1 on the plateau)."""
    return (
        attenuation_jitter(received_power_margin_db, link_name)
        / ATTENUATION_PLATEAU_JITTER_PS
    )
