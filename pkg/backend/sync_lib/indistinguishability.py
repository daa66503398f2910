"""
Two-photon indistinguishability under relative timing jitter.

For Gaussian wavepackets of RMS width sigma whose arrival times differ by a
Gaussian delay of RMS delta_t:

    I = (1 + delta_t**2 / sigma**2) ** -0.5
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd
from kybra_simple_logging import get_logger

from .constants import (
    FLOAT_FORMAT,
    FWHM_PER_SIGMA,
    QUOTED_VISIBILITY,
    WAVEPACKET_FWHM_PS,
    WAVEPACKET_SIGMA_PS,
)
from .errors import IndistinguishabilityError, ValidationError

logger = get_logger("sync.indistinguishability")

# How a quoted FWHM coherence time turns into the sigma of the formula
SIGMA = "sigma"
HALF_FWHM = "half_fwhm"
SIGMA_CONVENTIONS = (SIGMA, HALF_FWHM)


def sigma_from_fwhm(fwhm_ps: float) -> float:
    if not fwhm_ps > 0:
        raise IndistinguishabilityError(f"fwhm must be > 0, got {fwhm_ps}")
    return fwhm_ps / FWHM_PER_SIGMA


def fwhm_from_sigma(sigma_ps: float) -> float:
    if not sigma_ps > 0:
        raise IndistinguishabilityError(f"sigma must be > 0, got {sigma_ps}")
    return sigma_ps * FWHM_PER_SIGMA


def sigma_for(fwhm_ps: float, convention: str = SIGMA) -> float:
    if convention == SIGMA:
        return sigma_from_fwhm(fwhm_ps)
    if convention == HALF_FWHM:
        if not fwhm_ps > 0:
            raise IndistinguishabilityError(f"fwhm must be > 0, got {fwhm_ps}")
        return fwhm_ps / 2.0
    raise IndistinguishabilityError(
        f"unknown sigma convention '{convention}', expected one of {SIGMA_CONVENTIONS}"
    )


@dataclass(frozen=True)
class WavepacketSpec:
    sigma_ps: float
    fwhm_ps: Optional[float] = None

    def __post_init__(self):
        if not self.sigma_ps > 0:
            raise IndistinguishabilityError(f"sigma must be > 0, got {self.sigma_ps}")
        implied = fwhm_from_sigma(self.sigma_ps)
        if self.fwhm_ps is None:
            object.__setattr__(self, "fwhm_ps", implied)
        elif not math.isclose(self.fwhm_ps, implied, rel_tol=1e-9):
            raise IndistinguishabilityError(
                f"fwhm {self.fwhm_ps} ps does not match sigma {self.sigma_ps} ps"
            )

    @classmethod
    def from_fwhm(cls, fwhm_ps: float, convention: str = SIGMA) -> "WavepacketSpec":
        return cls(sigma_for(fwhm_ps, convention))


@dataclass(frozen=True)
class JitterSpec:
    delta_t_ps: float

    def __post_init__(self):
        if not self.delta_t_ps >= 0:
            raise IndistinguishabilityError(
                f"delta_t must be >= 0, got {self.delta_t_ps}"
            )


def indistinguishability(j: JitterSpec, w: WavepacketSpec) -> float:
    ratio = j.delta_t_ps / w.sigma_ps
    return 1.0 / math.sqrt(1.0 + ratio * ratio)


def required_jitter(target_i: float, w: WavepacketSpec) -> float:
    """Largest relative jitter that still reaches target_i."""
    if not 0 < target_i <= 1:
        raise IndistinguishabilityError(
            f"target indistinguishability must be in (0, 1], got {target_i}"
        )
    return w.sigma_ps * math.sqrt(1.0 / (target_i * target_i) - 1.0)


def predicted_indistinguishability(delta_t_ps: float) -> float:
    """I for the 35 ps (FWHM) source at a given relative jitter."""
    return indistinguishability(
        JitterSpec(delta_t_ps), WavepacketSpec(WAVEPACKET_SIGMA_PS)
    )


class OverlapCurve(NamedTuple):
    t_ps: np.ndarray
    envelope0: np.ndarray
    envelope_dt: np.ndarray
    delay_pdf: np.ndarray


def overlap_curve(
    j: JitterSpec, w: WavepacketSpec, t_ps: Sequence[float]
) -> OverlapCurve:
    """Unit-peak envelopes at 0 and delta_t, and the pdf of the relative delay.

    With delta_t = 0 the delay distribution is a point mass; it is put on the
    grid point nearest 0 with unit area.
    """
    t = np.asarray(t_ps, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise IndistinguishabilityError("delay grid is empty")
    if np.any(np.diff(t) <= 0):
        raise IndistinguishabilityError("delay grid must be strictly ascending")

    sigma, dt = w.sigma_ps, j.delta_t_ps
    env0 = np.exp(-0.5 * (t / sigma) ** 2)
    env_dt = np.exp(-0.5 * ((t - dt) / sigma) ** 2)
    if dt > 0:
        pdf = np.exp(-0.5 * (t / dt) ** 2) / (dt * math.sqrt(2 * math.pi))
    else:
        pdf = np.zeros_like(t)
        k = int(np.argmin(np.abs(t)))
        spacing = float(np.gradient(t)[k]) if t.size > 1 else 1.0
        pdf[k] = 1.0 / spacing
    return OverlapCurve(t, env0, env_dt, pdf)


def visibility_curve(dt_over_sigma: Optional[Sequence[float]] = None) -> pd.DataFrame:
    """I against delta_t / sigma."""
    if dt_over_sigma is None:
        r = np.linspace(0.0, 5.0, 501)
    else:
        r = np.asarray(dt_over_sigma, dtype=float)
    if np.any(r < 0):
        raise IndistinguishabilityError("delta_t / sigma must be >= 0")
    return pd.DataFrame({"dt_over_sigma": r, "I": 1.0 / np.sqrt(1.0 + r * r)})


def write_overlap_csv(path: Union[str, Path], curve: OverlapCurve) -> Path:
    path = Path(path)
    pd.DataFrame(curve._asdict()).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_visibility_csv(path: Union[str, Path], curve: pd.DataFrame) -> Path:
    path = Path(path)
    curve.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def quoted_visibility(delta_t_ps: float, w: WavepacketSpec) -> Optional[float]:
    """Rounded visibility stated in prose for the 35 ps source, if any."""
    if not (
        math.isclose(w.fwhm_ps, WAVEPACKET_FWHM_PS, rel_tol=0.02)
        or math.isclose(w.sigma_ps, WAVEPACKET_SIGMA_PS, rel_tol=0.02)
    ):
        return None
    for dt, value in QUOTED_VISIBILITY.items():
        if math.isclose(delta_t_ps, dt, rel_tol=1e-9):
            return value
    return None


def hom_report(
    delta_t_ps: float,
    sigma_ps: Optional[float] = None,
    fwhm_ps: Optional[float] = None,
    convention: str = SIGMA,
    curves_dir: Optional[Union[str, Path]] = None,
) -> Dict[str, Any]:
    """Indistinguishability under both sigma conventions, plus optional curves."""
    if (sigma_ps is None) == (fwhm_ps is None):
        raise ValidationError(["hom: give exactly one of sigma or fwhm"])
    if convention not in SIGMA_CONVENTIONS:
        raise ValidationError([f"hom: unknown sigma convention '{convention}'"])

    jitter = JitterSpec(delta_t_ps)
    if fwhm_ps is None:
        fwhm_ps = fwhm_from_sigma(sigma_ps)
        by_convention = {SIGMA: WavepacketSpec(sigma_ps)}
        by_convention[HALF_FWHM] = WavepacketSpec.from_fwhm(fwhm_ps, HALF_FWHM)
    else:
        by_convention = {
            c: WavepacketSpec.from_fwhm(fwhm_ps, c) for c in SIGMA_CONVENTIONS
        }

    wavepacket = by_convention[convention]
    report = {
        "delta_t_ps": delta_t_ps,
        "fwhm_ps": fwhm_ps,
        "convention": convention,
        "sigma_ps": wavepacket.sigma_ps,
        "indistinguishability": indistinguishability(jitter, wavepacket),
        "conventions": {
            c: {
                "sigma_ps": w.sigma_ps,
                "indistinguishability": indistinguishability(jitter, w),
            }
            for c, w in by_convention.items()
        },
        "quoted_visibility": quoted_visibility(delta_t_ps, by_convention[SIGMA]),
    }

    if curves_dir is not None:
        out = Path(curves_dir)
        out.mkdir(parents=True, exist_ok=True)
        span = 5.0 * max(wavepacket.sigma_ps, delta_t_ps)
        grid = np.linspace(-span, span + delta_t_ps, 1001)
        overlap = overlap_curve(jitter, wavepacket, grid)
        report["curves"] = [
            str(write_overlap_csv(out / "overlap.csv", overlap)),
            str(write_visibility_csv(out / "visibility.csv", visibility_curve())),
        ]
    logger.info(
        f"HOM: delta_t={delta_t_ps:g} ps, sigma={wavepacket.sigma_ps:g} ps "
        f"-> I={report['indistinguishability']:.6f}"
    )
    return report
