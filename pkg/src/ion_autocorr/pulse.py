"""
线性啁啾高斯脉冲

把未啁啾的高斯脉冲（频域宽度 σ）加上群延迟色散 D，映射为时域啁啾脉冲：
    σ_D² = (σ⁴ + D²)/σ²,  δ² = D/(σ⁴ + D²),  |Ω_D| = Ω₀/(σ⁴ + D²)^{1/4}

单位约定：时间 ps，角频率 rad/ps，GDD ps²。包络在载波 Δ 的旋转坐标系中给出，
实验室坐标系的 e^{-iΔt} 因子从不采样。所有类型不可变，所有函数是纯函数。
"""

import math
from typing import Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import ParameterError

# 2·sqrt(2·ln 2) ≈ 2.3548
FWHM_FACTOR: float = 2.0 * math.sqrt(2.0 * math.log(2.0))

# 真空光速，nm/ps
SPEED_OF_LIGHT_NM_PER_PS: float = 2.99792458e5

ArrayLike = Union[float, np.ndarray]


class PulseSpec(BaseModel):
    """
    用户侧的脉冲定义

    JSON 键为 sigma_ps、gdd_ps2、omega0、wavelength_nm，未知键会被拒绝。
    """

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True,
                              allow_inf_nan=False)

    sigma: float = Field(alias="sigma_ps", gt=0.0, description="未啁啾高斯宽度 σ (ps)")
    gdd: float = Field(default=0.0, alias="gdd_ps2", description="群延迟色散 D (ps²)，可为负")
    omega0: float = Field(default=1.0, alias="omega0", ge=0.0, description="场振幅 Ω₀ (rad/ps)")
    wavelength: float = Field(default=393.0, alias="wavelength_nm", gt=0.0, description="载波波长 (nm)")

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True)

    @classmethod
    def from_json(cls, text: str) -> "PulseSpec":
        return cls.model_validate_json(text)


class ChirpedPulse(BaseModel):
    """由 chirp_transform 导出的啁啾脉冲参数"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma_d: float = Field(gt=0.0)
    chirp_rate: float
    omega_d: float = Field(ge=0.0)
    carrier_phase: float = 0.0
    center_time: float = 0.0

    @property
    def fwhm(self) -> float:
        """包络模 |Ω(t)| 的半高全宽 (ps)"""
        return fwhm_from_width(self.sigma_d)

    def shifted(self, center_time: float, extra_phase: float = 0.0) -> "ChirpedPulse":
        """返回到达时间不同、相位额外偏移的同一脉冲副本"""
        return self.model_copy(update={
            "center_time": center_time,
            "carrier_phase": self.carrier_phase + extra_phase,
        })

    def scaled(self, factor: float) -> "ChirpedPulse":
        return self.model_copy(update={"omega_d": self.omega_d * factor})


def chirp_transform(spec: PulseSpec, center_time: float = 0.0, phase_offset: float = 0.0) -> ChirpedPulse:
    """
    对高斯谱施加二次谱相位 e^{iD(ω-Δ)²/2}，得到时域啁啾脉冲

    参数:
        spec: 脉冲定义
        center_time: 包络峰值到达时间 (ps)
        phase_offset: 额外的脉冲相位（例如传播方向项 ±kx）

    返回:
        ChirpedPulse，carrier_phase 中保留了常数相位 arg(1/√(iD+σ²))
    """
    if spec.sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {spec.sigma}")

    s2 = spec.sigma ** 2
    denom = s2 ** 2 + spec.gdd ** 2
    sigma_d = math.sqrt(denom / s2)
    chirp_rate = spec.gdd / denom
    omega_d = spec.omega0 / denom ** 0.25
    # arg(1/sqrt(σ² + iD)) = -atan2(D, σ²)/2
    constant_phase = -0.5 * math.atan2(spec.gdd, s2)

    return ChirpedPulse(
        sigma_d=sigma_d,
        chirp_rate=chirp_rate,
        omega_d=omega_d,
        carrier_phase=constant_phase + phase_offset,
        center_time=center_time,
    )


def envelope(pulse: ChirpedPulse, t: ArrayLike) -> Union[complex, np.ndarray]:
    """
    旋转坐标系下的复包络 Ω_D·exp(-τ²/2σ_D² - iδ²τ²/2 + iφ)，τ = t - center_time

    t 可以是标量或 numpy 数组。
    """
    tau = np.asarray(t, dtype=float) - pulse.center_time
    tau2 = tau * tau
    value = pulse.omega_d * np.exp(-0.5 * tau2 / pulse.sigma_d ** 2
                                   - 0.5j * pulse.chirp_rate * tau2
                                   + 1j * pulse.carrier_phase)
    if np.ndim(value) == 0:
        return complex(value)
    return value


def instantaneous_frequency(pulse: ChirpedPulse, t: ArrayLike) -> ArrayLike:
    """旋转坐标系中的瞬时频率偏移，线性啁啾 δ²·τ (rad/ps)"""
    return pulse.chirp_rate * (np.asarray(t, dtype=float) - pulse.center_time)


def fwhm_from_width(sigma_d: float) -> float:
    """
    高斯宽度参数 σ_D 对应的半高全宽 2√(2 ln 2)·σ_D

    该系数对应包络模 exp(-τ²/2σ_D²) 降到一半处；按 |Ω|² 计算的宽度要小 √2 倍。
    """
    if sigma_d <= 0:
        raise ParameterError(f"sigma_d must be positive, got {sigma_d}")
    return FWHM_FACTOR * sigma_d


def fwhm_stretch(fwhm0: float, gdd: float) -> float:
    """
    色散 D 作用后的半高全宽

    t(D) = sqrt((t(0)⁴ + 64·D²·ln(2)²) / t(0)²)，对 D 为偶函数。

    常见的 16·D²·ln(2)² 形式针对 |Ω|² 的半高全宽；这里与 fwhm_from_width 使用
    同一个 2√(2 ln 2) 约定，因此系数为 64，保证与 chirp_transform 的 σ_D 一致。
    """
    if fwhm0 <= 0:
        raise ParameterError(f"fwhm0 must be positive, got {fwhm0}")
    ln2 = math.log(2.0)
    return math.sqrt((fwhm0 ** 4 + 64.0 * gdd ** 2 * ln2 ** 2) / fwhm0 ** 2)


def spec_from_intensity(intensity: float, sigma: float, gdd: float, wavelength: float = 393.0) -> PulseSpec:
    """
    由拟合强度 I = |Ω_D|² 反推 PulseSpec

    强度以 (rad/ps)² 为单位，即 I 与 |Ω_D|² 的比例系数取 1。
    """
    if intensity < 0:
        raise ParameterError(f"intensity must be non-negative, got {intensity}")
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    omega0 = math.sqrt(intensity) * (sigma ** 4 + gdd ** 2) ** 0.25
    return PulseSpec(sigma=sigma, gdd=gdd, omega0=omega0, wavelength=wavelength)


def pulse_area(pulse: ChirpedPulse) -> float:
    """包络模的时间积分 |Ω_D|·σ_D·√(2π)，即等效未啁啾脉冲面积"""
    return pulse.omega_d * pulse.sigma_d * math.sqrt(2.0 * math.pi)


def carrier_frequency(wavelength_nm: float) -> float:
    """载波角频率 Δ = 2πc/λ (rad/ps)"""
    if wavelength_nm <= 0:
        raise ParameterError(f"wavelength must be positive, got {wavelength_nm}")
    return 2.0 * math.pi * SPEED_OF_LIGHT_NM_PER_PS / wavelength_nm
