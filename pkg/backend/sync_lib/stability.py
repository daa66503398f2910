"""
Time-domain stability of phase series: TDEV, overlapping ADEV and MDEV, with
1-sigma confidence intervals.

All estimators work on phase data x in picoseconds. TDEV is returned in
picoseconds, ADEV and MDEV as fractional frequency.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from kybra_simple_logging import get_logger
from scipy import signal, stats

from .constants import (
    FLOAT_FORMAT,
    MAX_NOISE_ID_SAMPLES,
    MIN_NOISE_ID_SAMPLES,
    MIN_SUMMANDS_FOR_CI,
    ONE_SIGMA_HIGH_QUANTILE,
    ONE_SIGMA_LOW_QUANTILE,
    PS_PER_S,
)
from .errors import StabilityError
from .timebase import PhaseSeries

logger = get_logger("sync.stability")

TDEV, ADEV, MDEV = "tdev", "adev", "mdev"

# Largest kernel built directly for the edf computation; longer averaging
# factors are evaluated on a proportionally shrunk problem
_EDF_MAX_FACTOR = 2048


class StabilityPoint(NamedTuple):
    tau_s: float
    value: float
    ci_low: float
    ci_high: float
    n_used: int
    alpha: Optional[int] = None
    edf: Optional[float] = None
    reliable: bool = True


@dataclass(frozen=True)
class StabilityResult:
    points: Tuple[StabilityPoint, ...]
    estimator: str
    tau0: float

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        taus = [p.tau_s for p in self.points]
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise StabilityError("averaging times must be strictly increasing")
        for p in self.points:
            if not 0 <= p.ci_low <= p.value <= p.ci_high:
                raise StabilityError(f"inconsistent bounds at tau={p.tau_s:g} s")

    @property
    def taus(self) -> np.ndarray:
        return np.array([p.tau_s for p in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])

    @property
    def factors(self) -> List[int]:
        return [int(round(p.tau_s / self.tau0)) for p in self.points]

    def at(self, m: int) -> StabilityPoint:
        for p in self.points:
            if int(round(p.tau_s / self.tau0)) == m:
                return p
        raise KeyError(m)


class JitterReading(NamedTuple):
    first_difference_ps: float
    tdev_tau0_ps: Optional[float]


def default_factors(n: int) -> List[int]:
    """1, 2, 4, ... up to floor(n/3)."""
    factors, m = [], 1
    while m <= n // 3:
        factors.append(m)
        m *= 2
    return factors


def _check_factors(n: int, factors: Optional[Sequence[int]]) -> List[int]:
    if factors is None:
        factors = default_factors(n)
    checked = sorted({int(m) for m in factors})
    for m in checked:
        if not 1 <= m <= n // 3:
            raise StabilityError(
                f"averaging factor m={m} out of range [1, {n // 3}] for N={n}"
            )
    if not checked:
        raise StabilityError(f"no usable averaging factor for N={n}")
    return checked


def _second_differences(x: np.ndarray, m: int) -> np.ndarray:
    return x[2 * m :] - 2 * x[m:-m] + x[: -2 * m]


def _window_sums(x: np.ndarray, m: int) -> np.ndarray:
    """Sums of m consecutive second differences, length N - 3m + 1."""
    c = np.concatenate(([0.0], np.cumsum(_second_differences(x, m))))
    return c[m:] - c[:-m]


def tdev(
    x: PhaseSeries, averaging_factors: Optional[Sequence[int]] = None
) -> StabilityResult:
    """Time deviation at tau = m * tau0, bounds not yet filled in."""
    samples = x.samples
    points = []
    for m in _check_factors(len(x), averaging_factors):
        s = _window_sums(samples, m)
        value = math.sqrt(float(np.dot(s, s)) / (6.0 * m * m * s.size))
        points.append(StabilityPoint(m * x.tau0, value, value, value, s.size))
    return StabilityResult(tuple(points), TDEV, x.tau0)


def adev_mdev(
    x: PhaseSeries, factors: Optional[Sequence[int]] = None
) -> Tuple[StabilityResult, StabilityResult]:
    """Overlapping Allan and modified Allan deviations (fractional frequency)."""
    samples = x.samples / PS_PER_S
    adev_points, mdev_points = [], []
    for m in _check_factors(len(x), factors):
        tau = m * x.tau0
        d = _second_differences(samples, m)
        s = _window_sums(samples, m)
        a = math.sqrt(float(np.dot(d, d)) / (2.0 * tau * tau * d.size))
        md = math.sqrt(float(np.dot(s, s)) / (2.0 * m * m * tau * tau * s.size))
        adev_points.append(StabilityPoint(tau, a, a, a, d.size))
        mdev_points.append(StabilityPoint(tau, md, md, md, s.size))
    return (
        StabilityResult(tuple(adev_points), ADEV, x.tau0),
        StabilityResult(tuple(mdev_points), MDEV, x.tau0),
    )


def tdev_naive(x: Sequence[float], m: int) -> float:
    """Definitional triple sum, kept independent of the fast path."""
    x = [float(v) for v in x]
    n = len(x)
    if not 1 <= m <= n // 3:
        raise StabilityError(f"averaging factor m={m} out of range for N={n}")
    count = n - 3 * m + 1
    total = 0.0
    for j in range(count):
        inner = 0.0
        for i in range(j, j + m):
            inner += x[i + 2 * m] - 2 * x[i + m] + x[i]
        total += inner * inner
    return math.sqrt(total / (6.0 * m * m * count))


def adev_naive(x: Sequence[float], m: int, tau0: float) -> float:
    x = [float(v) / PS_PER_S for v in x]
    n = len(x)
    tau = m * tau0
    terms = [x[i + 2 * m] - 2 * x[i + m] + x[i] for i in range(n - 2 * m)]
    return math.sqrt(sum(t * t for t in terms) / (2.0 * tau * tau * len(terms)))


def _lag1_autocorrelation(z: np.ndarray) -> float:
    z = z - z.mean()
    denom = float(np.dot(z, z))
    if denom == 0.0:
        raise StabilityError("degenerate series")
    return float(np.dot(z[:-1], z[1:])) / denom


def noise_id(x: PhaseSeries, m: int) -> int:
    """Dominant power-law exponent of S_x(f) at tau = m * tau0.

    Lag-1 autocorrelation discriminator: decimate the phase by m, remove a
    quadratic trend, then difference until the lag-1 statistic falls below
    0.25 (at most twice). Only the leading MAX_NOISE_ID_SAMPLES decimated
    samples are used. Returns 0 (white PM) ... -4 (random-walk FM).
    """
    if m < 1:
        raise StabilityError(f"averaging factor m={m} must be >= 1")
    z = x.samples[::m][:MAX_NOISE_ID_SAMPLES]
    if z.size < MIN_NOISE_ID_SAMPLES:
        raise StabilityError(
            f"series too short for noise identification at m={m}: "
            f"{z.size} < {MIN_NOISE_ID_SAMPLES} samples"
        )
    t = np.arange(z.size, dtype=float)
    z = z - np.polyval(np.polyfit(t, z, 2), t)

    differences = 0
    while True:
        r1 = _lag1_autocorrelation(z)
        rho = r1 / (1.0 + r1)
        if rho < 0.25 or differences >= 2:
            alpha = -int(round(2 * rho)) - 2 * differences
            return int(min(0, max(-4, alpha)))
        z = np.diff(z)
        differences += 1


def _fractional_difference(e: float, length: int) -> np.ndarray:
    """Coefficients of (1 - B)**e, truncated to length."""
    k = np.arange(1, length)
    return np.concatenate(([1.0], np.cumprod((k - 1 - e) / k)))


def _summand_kernel(estimator: str, m: int, alpha: int) -> np.ndarray:
    """Impulse response from driving white noise to one estimator summand."""
    box = np.ones(m)
    e = 2.0 + alpha / 2.0
    tail = int(e) + 1 if float(e).is_integer() else max(64 * m, 1024)
    kernel = signal.fftconvolve(
        signal.fftconvolve(box, box), _fractional_difference(e, tail)
    )
    if estimator in (TDEV, MDEV):
        kernel = signal.fftconvolve(kernel, box)
    return kernel


def equivalent_dof(estimator: str, n: int, m: int, alpha: int) -> float:
    """Degrees of freedom of the overlapping estimator for power-law noise.

    Exact for Gaussian noise under the chi-square approximation: from the
    autocorrelation of the summands the estimator averages.
    """
    count = n - 2 * m if estimator == ADEV else n - 3 * m + 1
    if count < 1:
        return 0.0
    shrink = max(1, math.ceil(m / _EDF_MAX_FACTOR))
    if shrink > 1:
        m = max(1, round(m / shrink))
        count = max(1, round(count / shrink))

    g = _summand_kernel(estimator, m, alpha)
    acf = signal.fftconvolve(g, g[::-1])[g.size - 1 :]
    rho = acf / acf[0]
    lags = np.arange(1, min(rho.size, count))
    weight = 1.0 - lags / count
    return count / (1.0 + 2.0 * float(np.sum(weight * rho[lags] ** 2)))


def confidence(result: StabilityResult, x: PhaseSeries) -> StabilityResult:
    """Fill 1-sigma chi-square bounds, identifying the noise type per tau."""
    points = []
    last_alpha = None
    for p in result.points:
        m = int(round(p.tau_s / result.tau0))
        if p.n_used < MIN_SUMMANDS_FOR_CI:
            logger.warning(
                f"{result.estimator} at tau={p.tau_s:g} s uses {p.n_used} summands, "
                f"bounds unreliable"
            )
            points.append(p._replace(ci_low=0.0, ci_high=math.inf, reliable=False))
            continue
        if p.value == 0.0:
            points.append(p._replace(ci_low=0.0, ci_high=0.0))
            continue
        try:
            alpha = noise_id(x, m)
            last_alpha = alpha
        except StabilityError as e:
            alpha = last_alpha if last_alpha is not None else 0
            logger.debug(f"noise id at m={m} unavailable ({e}), assuming alpha={alpha}")

        edf = equivalent_dof(result.estimator, len(x), m, alpha)
        low = p.value * math.sqrt(edf / stats.chi2.ppf(ONE_SIGMA_HIGH_QUANTILE, edf))
        high = p.value * math.sqrt(edf / stats.chi2.ppf(ONE_SIGMA_LOW_QUANTILE, edf))
        points.append(p._replace(ci_low=low, ci_high=high, alpha=alpha, edf=edf))
    return StabilityResult(tuple(points), result.estimator, result.tau0)


def adjacent_jitter(x: PhaseSeries) -> JitterReading:
    """Pulse-to-pulse jitter: RMS of first differences over sqrt(2), and TDEV(tau0)."""
    if len(x) < 2:
        raise StabilityError("need at least 2 samples for adjacent jitter")
    first = float(np.std(np.diff(x.samples))) / math.sqrt(2.0)
    leftmost = tdev(x, [1]).points[0].value if len(x) >= 3 else None
    return JitterReading(first, leftmost)


def loglog_slope(result: StabilityResult, tau_min: float, tau_max: float) -> float:
    """Least-squares slope of log(value) vs log(tau) over [tau_min, tau_max]."""
    taus, values = result.taus, result.values
    sel = (taus >= tau_min * (1 - 1e-9)) & (taus <= tau_max * (1 + 1e-9)) & (values > 0)
    if sel.sum() < 2:
        raise StabilityError("fewer than two points in the slope window")
    return float(np.polyfit(np.log10(taus[sel]), np.log10(values[sel]), 1)[0])


def peak(
    result: StabilityResult, tau_min: float = 0.0, tau_max: float = math.inf
) -> Optional[StabilityPoint]:
    """Largest interior local maximum within [tau_min, tau_max], if any."""
    values = result.values
    best = None
    for i in range(1, len(values) - 1):
        p = result.points[i]
        if not tau_min <= p.tau_s <= tau_max:
            continue
        if values[i] > values[i - 1] and values[i] >= values[i + 1]:
            if best is None or p.value > best.value:
                best = p
    return best


def write_stability_csv(path: Union[str, Path], result: StabilityResult) -> Path:
    path = Path(path)
    if result.estimator == TDEV:
        columns = ["tau_s", "tdev_ps", "ci_low_ps", "ci_high_ps", "n_used"]
    else:
        columns = ["tau_s", result.estimator, "ci_low", "ci_high", "n_used"]
    df = pd.DataFrame(
        {
            columns[0]: [p.tau_s for p in result.points],
            columns[1]: [p.value for p in result.points],
            columns[2]: [p.ci_low for p in result.points],
            columns[3]: [p.ci_high for p in result.points],
            columns[4]: [p.n_used for p in result.points],
        }
    )
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path
