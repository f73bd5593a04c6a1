import math

import numpy as np
import pytest

from specpcm.hdc_core import make_rng
from specpcm.pcm_device import (
    NoiseParams,
    PROFILES,
    SBTE_GST467,
    TITE_GST467,
    apply_noise,
    apply_noise_array,
    ber_from_sigma,
    bit_error_rate,
    drift_resistance,
    endurance_check,
    load_noise_table,
    retention_check,
    sigma_for,
    sigma_for_ber,
)


class TestProfiles:
    def test_sbte_constants(self):
        p = SBTE_GST467
        assert (p.prog_current_ua, p.prog_voltage_v, p.prog_energy_pj) == (80.0, 0.7, 1.12)
        assert (p.retention_105c_hours, p.low_resistance_kohm) == (30.0, 30.0)
        assert (p.on_off_ratio, p.endurance_cycles) == (150.0, 1e8)

    def test_tite_constants(self):
        p = TITE_GST467
        assert (p.prog_current_ua, p.prog_voltage_v, p.prog_energy_pj) == (160.0, 0.9, 2.88)
        assert (p.retention_105c_hours, p.low_resistance_kohm) == (1e5, 10.0)
        assert (p.on_off_ratio, p.endurance_cycles) == (100.0, 1e8)

    def test_energy_ratio_matches_quoted_factor(self):
        ratio = TITE_GST467.prog_energy_pj / SBTE_GST467.prog_energy_pj
        assert ratio == pytest.approx(2.5714285714285716)
        assert round(ratio, 1) == 2.6

    def test_profile_lookup(self):
        assert PROFILES["sbte"] is SBTE_GST467
        assert PROFILES["tite"] is TITE_GST467


class TestSigmaFor:
    def test_zero_cycles_is_sigma0(self, sbte):
        params = NoiseParams(sigma0=0.12, rho=0.55, sigma_min=0.01)
        assert sigma_for(sbte, params, 3, 0) == 0.12

    def test_geometric_formula(self, sbte):
        params = NoiseParams(sigma0=0.12, rho=0.5, sigma_min=0.01)
        assert sigma_for(sbte, params, 3, 3) == pytest.approx(0.015)

    def test_floor(self, sbte):
        params = NoiseParams(sigma0=0.12, rho=0.5, sigma_min=0.01)
        assert sigma_for(sbte, params, 3, 10) == 0.01

    def test_override_precedence(self, sbte):
        params = NoiseParams(table_override={(3, 3): 0.02})
        assert sigma_for(sbte, params, 3, 3) == 0.02
        assert sigma_for(sbte, params, 3, 2) != 0.02

    def test_monotone_non_increasing(self, sbte):
        params = NoiseParams()
        sigmas = [sigma_for(sbte, params, 3, wv) for wv in range(11)]
        assert all(a >= b for a, b in zip(sigmas, sigmas[1:]))

    def test_invalid_inputs(self, sbte):
        with pytest.raises(ValueError):
            sigma_for(sbte, NoiseParams(), 4, 0)
        with pytest.raises(ValueError):
            sigma_for(sbte, NoiseParams(), 3, -1)

    def test_table_loader(self, tmp_path):
        path = tmp_path / "noise.csv"
        path.write_text("mlc_bits,wv_cycles,sigma\n3,0,0.15\n3,1,0.08\n", encoding="utf-8")
        assert load_noise_table(path) == {(3, 0): 0.15, (3, 1): 0.08}


class TestApplyNoise:
    def test_sigma_zero_exact(self, rng):
        assert apply_noise(3.0, 0.0, rng) == 3.0

    def test_zero_weight_stays_zero(self, rng):
        assert apply_noise(0.0, 0.5, rng) == 0.0
        out = apply_noise_array(np.zeros(10), 0.5, rng)
        assert not out.any()

    def test_moments_frozen(self):
        # 100k draws at w=1, sigma=0.1: mean within 1e-3, std within 2e-3
        rng = make_rng(2024)
        samples = apply_noise_array(np.ones(100_000), 0.1, rng)
        assert abs(samples.mean() - 1.0) < 1e-3
        assert abs(samples.std(ddof=1) - 0.1) < 2e-3

    def test_reproducible_bit_for_bit(self):
        a = apply_noise_array(np.full(64, 2.0), 0.2, make_rng(7))
        b = apply_noise_array(np.full(64, 2.0), 0.2, make_rng(7))
        assert np.array_equal(a, b)


class TestBitErrorRate:
    def test_sigma_zero_gives_zero(self, sbte):
        assert bit_error_rate(sbte, NoiseParams.noiseless(), 3, 0) == 0.0

    def test_matches_independent_erfc_formula(self):
        # oracle: the same tail probability via math.erfc
        for sigma in (0.05, 0.1, 0.2):
            for bits in (1, 2, 3):
                expected = math.erfc(0.5 / (bits * sigma * math.sqrt(2)))
                assert ber_from_sigma(sigma, bits) == pytest.approx(expected, rel=1e-12)

    def test_monotone_in_wv_cycles_both_profiles(self):
        params = NoiseParams()
        for profile in (SBTE_GST467, TITE_GST467):
            bers = [bit_error_rate(profile, params, 3, wv) for wv in range(6)]
            assert all(a >= b for a, b in zip(bers, bers[1:]))

    def test_increases_with_mlc_bits(self):
        for sigma in (0.02, 0.1, 0.3):
            assert ber_from_sigma(sigma, 3) >= ber_from_sigma(sigma, 1)

    def test_zero_verify_regime_exceeds_ten_percent(self, sbte):
        # default sigma0 anchors the no-write-verify MLC3 error above 10%
        assert bit_error_rate(sbte, NoiseParams(), 3, 0) > 0.10

    def test_sigma_for_ber_inverse(self):
        for target in (0.01, 0.1, 0.3):
            sigma = sigma_for_ber(target, 3)
            assert ber_from_sigma(sigma, 3) == pytest.approx(target, rel=1e-9)


class TestDrift:
    def test_no_drift_exponent(self):
        assert drift_resistance(10.0, 1e6, 1.0, 0.0) == 10.0

    def test_reference_time(self):
        assert drift_resistance(10.0, 5.0, 5.0, 0.05) == 10.0

    def test_power_law_value(self):
        assert drift_resistance(10.0, 100.0, 1.0, 0.05) == pytest.approx(12.589254, rel=1e-6)

    def test_t_before_t0_rejected(self):
        with pytest.raises(ValueError):
            drift_resistance(10.0, 0.5, 1.0, 0.05)


class TestRetention:
    def test_inside_window(self, sbte):
        report = retention_check(3600.0, sbte)  # one hour vs 30 h
        assert report.within_retention
        assert report.workload_hours == 1.0

    def test_exceeding_window(self, sbte):
        report = retention_check(31 * 3600.0, sbte)
        assert not report.within_retention

    def test_long_retention_device(self):
        assert retention_check(1e6, TITE_GST467).within_retention


class TestEndurance:
    def test_hundred_writes_supports_1e6_processes(self, sbte):
        report = endurance_check(100, sbte)
        assert report.supported_processes == 1e6

    def test_zero_writes_full_budget(self, sbte):
        report = endurance_check(0, sbte)
        assert report.remaining_fraction == 1.0
        assert report.supported_processes == 1e8

    def test_boundary(self, sbte):
        report = endurance_check(1e8, sbte)
        assert report.supported_processes == 1.0
        assert report.remaining_fraction == 0.0
