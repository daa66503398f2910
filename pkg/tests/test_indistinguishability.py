"""Tests for the HOM indistinguishability model."""

import math

import numpy as np
import pandas as pd
import pytest

from backend.sync_lib.errors import IndistinguishabilityError, ValidationError
from backend.sync_lib.indistinguishability import (
    HALF_FWHM,
    SIGMA,
    JitterSpec,
    WavepacketSpec,
    fwhm_from_sigma,
    hom_report,
    indistinguishability,
    overlap_curve,
    predicted_indistinguishability,
    quoted_visibility,
    required_jitter,
    sigma_for,
    sigma_from_fwhm,
    visibility_curve,
)


def _i(dt, sigma):
    return indistinguishability(JitterSpec(dt), WavepacketSpec(sigma))


def test_reference_values():
    assert _i(0.0, 15.0) == 1.0
    assert _i(15.0, 15.0) == pytest.approx(0.7071068, abs=2e-6)
    assert _i(4.0, 15.0) == pytest.approx(0.966235, abs=2e-6)
    assert _i(10.0, 15.0) == pytest.approx(0.83205, abs=1e-4)
    assert sigma_from_fwhm(35.0) == pytest.approx(14.86313, abs=1e-5)
    assert sigma_from_fwhm(2.35482) == pytest.approx(1.0, abs=1e-5)


def test_predicted_indistinguishability_uses_fifteen_ps():
    assert predicted_indistinguishability(4.0) == pytest.approx(_i(4.0, 15.0))


def test_sigma_conventions():
    assert sigma_for(35.0, SIGMA) == pytest.approx(14.86313, abs=1e-5)
    assert sigma_for(35.0, HALF_FWHM) == 17.5
    with pytest.raises(IndistinguishabilityError, match="unknown sigma convention"):
        sigma_for(35.0, "fwtm")
    assert fwhm_from_sigma(sigma_from_fwhm(35.0)) == pytest.approx(35.0)


def test_wavepacket_checks_consistency():
    w = WavepacketSpec(15.0)
    assert w.fwhm_ps == pytest.approx(35.32, abs=0.01)
    with pytest.raises(IndistinguishabilityError):
        WavepacketSpec(15.0, fwhm_ps=35.0)
    with pytest.raises(IndistinguishabilityError):
        WavepacketSpec(0.0)
    with pytest.raises(IndistinguishabilityError):
        JitterSpec(-1.0)


def test_required_jitter_inverts_the_formula():
    w = WavepacketSpec(15.0)
    dt = required_jitter(0.9, w)
    assert _i(dt, 15.0) == pytest.approx(0.9)
    assert required_jitter(1.0, w) == 0.0
    with pytest.raises(IndistinguishabilityError):
        required_jitter(0.0, w)


def test_overlap_curve():
    t = np.linspace(-100.0, 100.0, 2001)
    curve = overlap_curve(JitterSpec(10.0), WavepacketSpec(15.0), t)
    assert curve.envelope0.max() == pytest.approx(1.0)
    assert t[np.argmax(curve.envelope_dt)] == pytest.approx(10.0)
    assert curve.delay_pdf.sum() * (t[1] - t[0]) == pytest.approx(1.0, rel=1e-6)


def test_overlap_curve_without_jitter_is_a_point_mass():
    t = np.linspace(-5.0, 5.0, 11)
    curve = overlap_curve(JitterSpec(0.0), WavepacketSpec(15.0), t)
    assert curve.delay_pdf[5] == 1.0
    assert curve.delay_pdf.sum() == 1.0


def test_overlap_curve_grid_checks():
    w, j = WavepacketSpec(15.0), JitterSpec(1.0)
    with pytest.raises(IndistinguishabilityError, match="empty"):
        overlap_curve(j, w, [])
    with pytest.raises(IndistinguishabilityError, match="ascending"):
        overlap_curve(j, w, [0.0, 2.0, 1.0])


def test_visibility_curve():
    curve = visibility_curve()
    assert list(curve.columns) == ["dt_over_sigma", "I"]
    assert len(curve) == 501
    assert curve["I"].iloc[0] == 1.0
    assert curve["I"].is_monotonic_decreasing
    assert visibility_curve([1.0])["I"].iloc[0] == pytest.approx(1 / math.sqrt(2))


def test_quoted_visibility_is_only_an_annotation():
    w = WavepacketSpec.from_fwhm(35.0)
    assert quoted_visibility(4.0, w) == 0.98
    assert quoted_visibility(10.0, w) == 0.90
    assert quoted_visibility(7.0, w) is None
    assert quoted_visibility(4.0, WavepacketSpec(50.0)) is None


def test_hom_report_from_sigma():
    report = hom_report(15.0, sigma_ps=15.0)
    assert report["indistinguishability"] == pytest.approx(0.707107, abs=2e-6)
    assert set(report["conventions"]) == {SIGMA, HALF_FWHM}
    assert report["conventions"][SIGMA]["sigma_ps"] == 15.0
    assert "curves" not in report


def test_hom_report_from_fwhm_reports_both_conventions(tmp_path):
    report = hom_report(4.0, fwhm_ps=35.0, convention=HALF_FWHM, curves_dir=tmp_path)
    assert report["sigma_ps"] == 17.5
    sigma_i = report["conventions"][SIGMA]["indistinguishability"]
    assert sigma_i == pytest.approx(0.965642, abs=2e-6)
    assert report["conventions"][HALF_FWHM]["indistinguishability"] == pytest.approx(
        _i(4.0, 17.5)
    )
    assert report["quoted_visibility"] == 0.98

    overlap = pd.read_csv(tmp_path / "overlap.csv")
    assert list(overlap.columns) == ["t_ps", "envelope0", "envelope_dt", "delay_pdf"]
    assert len(pd.read_csv(tmp_path / "visibility.csv")) == 501
    assert len(report["curves"]) == 2


def test_hom_report_needs_exactly_one_width():
    with pytest.raises(ValidationError, match="exactly one"):
        hom_report(1.0)
    with pytest.raises(ValidationError, match="exactly one"):
        hom_report(1.0, sigma_ps=15.0, fwhm_ps=35.0)
    with pytest.raises(ValidationError, match="convention"):
        hom_report(1.0, sigma_ps=15.0, convention="other")
