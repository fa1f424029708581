"""测试自旋回波对比度模型"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from ion_autocorr.contrast import (
    AutocorrParams,
    EchoModelParams,
    autocorr_contrast_curve,
    contrast_from_return,
    displacement_mismatch,
    echo_contrast,
    echo_visibility_from_p2,
    revival_curve,
)
from ion_autocorr.dynamics import interference_profile
from ion_autocorr.errors import ParameterError
from ion_autocorr.motion import IonSpec, lamb_dicke


@pytest.fixture
def echo_params():
    """890 kHz 阱频、C₀ = 0.56、n̄ = 21 的自旋回波实验"""
    return EchoModelParams.from_ion(IonSpec.from_khz(890.0), c0=0.56, nbar=21.0)


class TestEchoModelParams:
    """测试 EchoModelParams"""

    def test_from_ion_units(self, echo_params):
        assert echo_params.nu == pytest.approx(2.0 * math.pi * 0.89, rel=1e-12)
        assert echo_params.eta_ld == pytest.approx(lamb_dicke(IonSpec.from_khz(890.0)))
        assert echo_params.period == pytest.approx(1.0 / 0.89, rel=1e-12)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValidationError):
            EchoModelParams(c0=1.2, nbar=1.0, eta_ld=0.1, nu=1.0)
        with pytest.raises(ValidationError):
            EchoModelParams(c0=0.5, nbar=-1.0, eta_ld=0.1, nu=1.0)
        with pytest.raises(ValidationError):
            EchoModelParams(c0=0.5, nbar=1.0, eta_ld=0.1, nu=0.0)


class TestEchoContrast:
    """测试 echo_contrast 与 displacement_mismatch"""

    def test_maximum_at_revivals(self, echo_params):
        peak = 0.5 * (1.0 + echo_params.c0)
        for m in range(4):
            assert echo_contrast(m * echo_params.period, echo_params) == pytest.approx(peak, abs=1e-12)

    def test_periodic_in_tau(self, echo_params):
        tau = np.linspace(0.0, 3.0, 37)
        shifted = tau + echo_params.period
        assert np.allclose(echo_contrast(tau, echo_params), echo_contrast(shifted, echo_params),
                           atol=1e-12, rtol=0.0)

    def test_bounded_by_peak(self, echo_params):
        tau = np.linspace(0.0, 5.0, 501)
        values = echo_contrast(tau, echo_params)
        assert np.all(values <= 0.5 * (1.0 + echo_params.c0) + 1e-12)
        assert np.all(values >= 0.0)

    def test_thermal_minimum_washes_out(self, echo_params):
        """n̄ = 21 时回复之间的对比度衰减到约 1/2"""
        tau = np.linspace(20.0, 24.5, 91)
        values = echo_contrast(tau, echo_params)
        assert values.max() == pytest.approx(0.78, abs=0.01)
        assert values.min() < 0.505

    def test_mismatch_range(self, echo_params):
        eta2 = echo_params.eta_ld ** 2
        assert displacement_mismatch(0.0, echo_params) == 0.0
        assert displacement_mismatch(0.5 * echo_params.period, echo_params) == pytest.approx(16.0 * eta2)
        values = displacement_mismatch(np.linspace(0.0, 3.0, 301), echo_params)
        assert np.all(values >= 0.0) and np.all(values <= 16.0 * eta2 + 1e-15)

    def test_no_recoil_gives_flat_contrast(self):
        params = EchoModelParams(c0=0.6, nbar=50.0, eta_ld=0.0, nu=5.0)
        values = echo_contrast(np.linspace(0.0, 4.0, 41), params)
        assert np.allclose(values, 0.8, atol=1e-15)

    def test_hotter_ion_decays_faster(self, echo_params):
        tau = 0.3 * echo_params.period
        cold = echo_contrast(tau, echo_params.model_copy(update={"nbar": 1.0}))
        hot = echo_contrast(tau, echo_params)
        assert hot < cold

    def test_scalar_in_scalar_out(self, echo_params):
        assert isinstance(echo_contrast(1.0, echo_params), float)
        assert isinstance(displacement_mismatch(1.0, echo_params), float)

    def test_unvalidated_curve_matches_model(self, echo_params):
        tau = np.linspace(0.0, 30.0, 301)
        expected = echo_contrast(tau, echo_params)
        actual = revival_curve(tau, echo_params.c0, echo_params.nbar, echo_params.eta_ld, echo_params.nu)
        assert np.array_equal(actual, expected)

    def test_unvalidated_curve_accepts_out_of_range_values(self):
        values = revival_curve(np.array([0.0, 0.3]), 1.05, 2.0, 0.2, 1.0)
        assert values[0] == pytest.approx(1.025)

    def test_rejects_negative_delay(self, echo_params):
        with pytest.raises(ParameterError):
            echo_contrast(-1.0, echo_params)
        with pytest.raises(ParameterError):
            displacement_mismatch([0.0, -0.1], echo_params)


class TestVisibility:
    """测试回复概率到条纹可见度的换算"""

    def test_perfect_return(self):
        assert echo_visibility_from_p2(1.0) == (1.0, 0.0)

    def test_partial_return(self):
        visibility, background = echo_visibility_from_p2(0.6)
        assert visibility == pytest.approx(0.6)
        assert background == pytest.approx(0.2)

    def test_phase_jitter_reduces_visibility(self):
        visibility, _ = echo_visibility_from_p2(1.0, phase_jitter_rms=0.5)
        assert visibility == pytest.approx(0.5 * (1.0 + math.exp(-0.5)))

    def test_rejects_bad_input(self):
        with pytest.raises(ParameterError):
            echo_visibility_from_p2(1.5)
        with pytest.raises(ParameterError):
            echo_visibility_from_p2(0.5, phase_jitter_rms=-0.1)

    def test_contrast_from_return(self):
        values = contrast_from_return([1.0, 0.5, 1.2], 0.8)
        assert np.allclose(values, [0.8, 0.4, 0.8])


class TestAutocorrContrastCurve:
    """测试自相关对比度曲线"""

    def test_rejects_non_positive_intensity(self):
        with pytest.raises(ValidationError):
            AutocorrParams(intensity=0.0, sigma=1.5, gdd=5.8)
        with pytest.raises(ValidationError):
            AutocorrParams(intensity=0.5, sigma=1.5, contrast_scale=1.5)

    def test_pulse_intensity(self):
        params = AutocorrParams(intensity=0.5, sigma=1.5, gdd=5.8)
        assert params.pulse().omega_d ** 2 == pytest.approx(0.5, rel=1e-12)

    def test_curve_follows_return_probability(self):
        params = AutocorrParams(intensity=0.5, sigma=1.5, gdd=5.8, contrast_scale=0.79)
        delays = [0.0, 6.0, 20.0]
        curve = autocorr_contrast_curve(params, delays, n_phase=8)
        profile = interference_profile(params.pulse(), delays, n_phase=8)
        for point, p in zip(curve, profile.p_return):
            assert point.contrast == pytest.approx(0.79 * p, abs=1e-12)
            assert point.background == pytest.approx(0.5 * (1.0 - p), abs=1e-12)
        assert [point.delay for point in curve] == delays

    def test_dip_at_zero_delay(self):
        params = AutocorrParams(intensity=0.5, sigma=1.5, gdd=5.8)
        curve = autocorr_contrast_curve(params, [0.0, 30.0], n_phase=8)
        assert curve[0].contrast < curve[1].contrast
