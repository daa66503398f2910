"""
Signal generator and PLL-disciplined mode-locked laser.

The locking electronics are modelled as a second-order type-2 loop: the laser
follows its 80 MHz reference below the loop bandwidth and free-runs on its own
cavity noise above it. An ideal x8 multiplier preserves time error, so the
reference's phase series is used unchanged at the 80 MHz output.
"""

from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np
from kybra_simple_logging import get_logger
from scipy import signal

from .constants import (
    CLOCK_RATE_HZ,
    LASER_RATE_HZ,
    PLL_DAMPING,
    PLL_LOOP_BANDWIDTH_HZ,
    SG_JITTER_PS,
)
from .errors import SeriesError, ValidationError
from .noisegen import NoiseSpec, derive_seed, generate
from .timebase import Frequency, PhaseSeries

logger = get_logger("sync.laser")

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class PLLConfig:
    loop_bandwidth_hz: float = PLL_LOOP_BANDWIDTH_HZ
    damping: float = PLL_DAMPING
    reference_rate: Frequency = field(
        default_factory=lambda: Frequency.of(CLOCK_RATE_HZ)
    )
    output_rate: Frequency = field(default_factory=lambda: Frequency.of(LASER_RATE_HZ))

    def __post_init__(self):
        errors = []
        if not self.loop_bandwidth_hz > 0:
            errors.append("pll: loop_bandwidth_hz must be > 0")
        if not self.damping > 0:
            errors.append("pll: damping must be > 0")
        if self.output_rate.ratio(self.reference_rate).denominator != 1:
            errors.append("pll: output/reference rate ratio must be an integer")
        if errors:
            raise ValidationError(errors)

    @property
    def multiplier(self) -> int:
        return int(self.output_rate.ratio(self.reference_rate))

    @property
    def natural_frequency_hz(self) -> float:
        """f_n such that the closed-loop response is 3 dB down at loop_bandwidth_hz."""
        z2 = 2 * self.damping**2
        return self.loop_bandwidth_hz / np.sqrt(1 + z2 + np.sqrt((1 + z2) ** 2 + 1))

    def analog_lowpass(self) -> Tuple[np.ndarray, np.ndarray]:
        wn = 2 * np.pi * self.natural_frequency_hz
        zeta = self.damping
        return (
            np.array([2 * zeta * wn, wn**2]),
            np.array([1.0, 2 * zeta * wn, wn**2]),
        )


@dataclass(frozen=True)
class MLLNode:
    name: str
    pll: PLLConfig = field(default_factory=PLLConfig)
    cavity_noise: NoiseSpec = field(default_factory=NoiseSpec)
    sg_jitter_ps: float = SG_JITTER_PS
    # Residual error of the locking electronics, seen at the output unfiltered
    lock_noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        if not self.sg_jitter_ps >= 0:
            raise ValidationError([f"{self.name}: sg_jitter_ps must be >= 0"])


def loop_response(pll: PLLConfig, f_hz: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    """|LP| and |HP| of the closed loop at f_hz, with HP = 1 - LP."""
    f = np.asarray(f_hz, dtype=float)
    if np.any(f <= 0):
        raise ValidationError(["loop_response: f_hz must be > 0"])
    b, a = pll.analog_lowpass()
    _, h = signal.freqs(b, a, worN=2 * np.pi * np.atleast_1d(f))
    lp, hp = np.abs(h), np.abs(1 - h)
    if f.ndim == 0:
        return float(lp[0]), float(hp[0])
    return lp, hp


def _digital_lowpass(pll: PLLConfig, tau0: float) -> Tuple[np.ndarray, np.ndarray]:
    b, a = pll.analog_lowpass()
    return signal.bilinear(b, a, fs=1.0 / tau0)


def _check_reference_grid(reference: PhaseSeries, pll: PLLConfig) -> None:
    cycles = reference.tau0 * float(pll.reference_rate.hertz)
    if cycles < 1 - 1e-9 or abs(cycles - round(cycles)) > 1e-6 * cycles:
        raise SeriesError(
            f"reference tau0 {reference.tau0:g} s is not a whole number of "
            f"{pll.reference_rate} cycles"
        )


def discipline(reference: PhaseSeries, node: MLLNode, seed: int) -> PhaseSeries:
    """Pulse timing error of the laser locked to reference, sampled at its tau0."""
    _check_reference_grid(reference, node.pll)
    n, tau0 = len(reference), reference.tau0
    b, a = _digital_lowpass(node.pll, tau0)
    zi = signal.lfilter_zi(b, a)

    driven = reference.samples.copy()
    if node.sg_jitter_ps > 0:
        rng = np.random.default_rng(derive_seed(seed, node.name, "sg"))
        driven += rng.normal(0.0, node.sg_jitter_ps, n)
    tracked, _ = signal.lfilter(b, a, driven, zi=zi * driven[0])

    output = tracked
    if not node.cavity_noise.is_empty:
        cavity = generate(
            node.cavity_noise, n, tau0, derive_seed(seed, node.name, "cavity")
        ).samples
        cavity_lp, _ = signal.lfilter(b, a, cavity, zi=zi * cavity[0])
        output = output + (cavity - cavity_lp)
    if not node.lock_noise.is_empty:
        output = output + generate(
            node.lock_noise, n, tau0, derive_seed(seed, node.name, "lock")
        ).samples

    logger.debug(
        f"{node.name}: disciplined {n} samples, "
        f"loop {node.pll.loop_bandwidth_hz:g} Hz, "
        f"x{node.pll.multiplier} to {node.pll.output_rate}"
    )
    return PhaseSeries(tau0, output, node.name)
