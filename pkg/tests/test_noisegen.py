"""Tests for the noise synthesizers and the attenuation model."""

import numpy as np
import pytest

from backend.sync_lib.errors import LinkBelowThresholdError, NoiseSpecError
from backend.sync_lib.noisegen import (
    BumpTerm,
    DriftTerm,
    NoiseSpec,
    PowerLawTerm,
    attenuation_jitter,
    bump_scale,
    derive_seed,
    gen_bump,
    gen_drift,
    gen_power_law,
    generate,
)
from backend.sync_lib.stability import peak, tdev


def test_derive_seed_is_stable_and_key_sensitive():
    assert derive_seed(1, "node", "switch1") == derive_seed(1, "node", "switch1")
    assert derive_seed(1, "node", "switch1") != derive_seed(1, "node", "switch2")
    assert derive_seed(1, "node", 0) != derive_seed(2, "node", 0)


def test_unsupported_exponent():
    with pytest.raises(NoiseSpecError, match="unsupported exponent"):
        PowerLawTerm(1, 1.0)
    with pytest.raises(NoiseSpecError):
        PowerLawTerm(0, -1.0)


def test_white_pm_has_requested_rms():
    x = gen_power_law(PowerLawTerm(0, 2.0), 100_000, 1e-7, seed=1)
    assert np.std(x.samples) == pytest.approx(2.0, rel=0.02)
    assert abs(np.mean(x.samples)) < 0.05


@pytest.mark.parametrize("alpha", [-1, -2, -3, -4])
def test_colored_noise_is_calibrated_to_sample_std(alpha):
    x = gen_power_law(PowerLawTerm(alpha, 0.7), 4096, 1e-7, seed=5)
    assert np.std(x.samples) == pytest.approx(0.7, rel=1e-12)


def test_colored_noise_spectral_slope():
    n = 2**16
    x = gen_power_law(PowerLawTerm(-2, 1.0), n, 1e-7, seed=2).samples
    freqs = np.fft.rfftfreq(n, d=1e-7)[1:]
    power = np.abs(np.fft.rfft(x - x.mean()))[1:] ** 2
    band = (freqs > 1e4) & (freqs < 1e6)
    slope = np.polyfit(np.log10(freqs[band]), np.log10(power[band]), 1)[0]
    assert slope == pytest.approx(-2.0, abs=0.2)


def test_generators_are_deterministic():
    term = PowerLawTerm(-2, 1.0)
    a = gen_power_law(term, 1000, 1e-7, seed=9).samples
    b = gen_power_law(term, 1000, 1e-7, seed=9).samples
    c = gen_power_law(term, 1000, 1e-7, seed=10).samples
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_zero_amplitude_gives_zeros():
    assert np.all(gen_power_law(PowerLawTerm(-2, 0.0), 100, 1e-7, 0).samples == 0)
    assert np.all(gen_bump(BumpTerm(300.0, 1.0, 0.0), 100, 1e-5, 0).samples == 0)


def test_bump_is_band_limited_around_center():
    n, tau0 = 2**16, 1e-5
    x = gen_bump(BumpTerm(300.0, 0.5, 1.5), n, tau0, seed=4).samples
    assert np.std(x) == pytest.approx(1.5, rel=1e-12)

    freqs = np.fft.rfftfreq(n, d=tau0)
    power = np.abs(np.fft.rfft(x)) ** 2
    inside = (freqs > 150.0) & (freqs < 450.0)
    assert power[inside].sum() > 0.95 * power.sum()


def test_bump_above_nyquist_is_rejected():
    with pytest.raises(NoiseSpecError, match="Nyquist"):
        gen_bump(BumpTerm(600_000.0, 1.0, 1.0), 1000, 1e-6, seed=0)


def test_bump_narrower_than_grid_uses_nearest_bin():
    x = gen_bump(BumpTerm(42.0, 0.01, 1.0), 1000, 1e-6, seed=0).samples
    assert np.std(x) == pytest.approx(1.0, rel=1e-12)


def test_drift_sinusoid_amplitude():
    term = DriftTerm(peak_to_peak=200.0, period=1.0)
    x = gen_drift(term, 10_000, 1e-3, seed=3).samples
    assert x.max() - x.min() == pytest.approx(200.0, rel=0.01)
    assert np.all(gen_drift(DriftTerm(), 100, 1e-3, seed=3).samples == 0)


def test_drift_needs_period():
    with pytest.raises(NoiseSpecError):
        DriftTerm(peak_to_peak=1.0)


def test_generate_sums_terms():
    spec = NoiseSpec(
        power_law_terms=(PowerLawTerm(0, 1.0),),
        bump_terms=(BumpTerm(300.0, 1.0, 1.0),),
    )
    total = generate(spec, 4096, 1e-5, seed=8).samples
    white_seed, bump_seed = derive_seed(8, "power_law", 0), derive_seed(8, "bump", 0)
    white = gen_power_law(spec.power_law_terms[0], 4096, 1e-5, white_seed)
    bump = gen_bump(spec.bump_terms[0], 4096, 1e-5, bump_seed)
    np.testing.assert_allclose(total, white.samples + bump.samples)
    assert np.all(generate(NoiseSpec(), 10, 1e-5, seed=8).samples == 0)


def test_noise_spec_dict_round_trip():
    spec = NoiseSpec(
        (PowerLawTerm(-2, 0.05),),
        (BumpTerm(4200.0, 1.0, 0.4),),
        (DriftTerm(200.0, 86400.0, 2.0),),
    )
    assert NoiseSpec.from_dict(spec.to_dict()) == spec
    assert NoiseSpec.from_dict(None).is_empty


def test_scaled_bumps_leave_other_terms():
    spec = NoiseSpec((PowerLawTerm(0, 1.0),), (BumpTerm(300.0, 1.0, 2.0),))
    scaled = spec.scaled_bumps(0.5)
    assert scaled.bump_terms[0].rms == 1.0
    assert scaled.power_law_terms == spec.power_law_terms


def test_attenuation_jitter_curve():
    assert attenuation_jitter(30.0) == 0.3
    assert attenuation_jitter(20.0) == pytest.approx(0.3)
    assert attenuation_jitter(10.0) == pytest.approx(0.65)
    assert attenuation_jitter(0.0) == pytest.approx(1.0)
    assert bump_scale(17.75) == pytest.approx(1.2625)


def test_attenuation_below_threshold():
    with pytest.raises(LinkBelowThresholdError, match="sensitivity threshold") as info:
        attenuation_jitter(-0.5, "patch")
    assert info.value.link_name == "patch"
    assert info.value.margin_db == -0.5


def test_bump_tdev_peaks_at_millisecond_averaging():
    x = gen_bump(BumpTerm(300.0, 1.0, 1.0), 200_000, 1e-5, seed=6)
    result = tdev(x)
    top = peak(result, 1e-4, 1e-2)
    assert top is not None
    assert top.value > result.values[0]


@pytest.mark.parametrize(
    "make",
    [
        lambda seed: gen_power_law(PowerLawTerm(0, 1.0), 1_000_000, 1e-6, seed),
        lambda seed: gen_bump(BumpTerm(100_000.0, 1.0, 1.0), 1_000_000, 1e-6, seed),
    ],
    ids=["white", "bump"],
)
def test_independent_seeds_are_uncorrelated(make):
    a = make(derive_seed(0, "first")).samples
    b = make(derive_seed(0, "second")).samples
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.01


def test_random_walk_grows_as_root_time():
    term = DriftTerm(random_walk_rms_per_sqrt_s=1.0)
    finals = [gen_drift(term, 10_000, 1.0, seed).samples[-1] for seed in range(200)]
    assert np.std(finals) == pytest.approx(100.0, abs=15.0)


def test_white_pm_samples_are_uncorrelated():
    x = gen_power_law(PowerLawTerm(0, 1.0), 100_000, 1e-7, seed=3).samples
    z = x - x.mean()
    lag1 = np.dot(z[:-1], z[1:]) / np.dot(z, z)
    assert abs(lag1) < 5 / np.sqrt(x.size)
