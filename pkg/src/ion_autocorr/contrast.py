"""
自旋回波对比度模型

- 两个 CPP 之间间隔 τ_d 时的对比度 C(τ_d)（热态，闭式）
- 由脉冲对回复概率 p₂ 到条纹可见度/背景的映射
- 自相关测量的前向模型：contrast(T_D) = scale · p₂(T_D)·⟨cos²δξ⟩

τ_d 与 ν 的单位需一致，默认 µs 与 rad/µs；T_D 的单位为 ps。
"""

import logging
import math
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .dynamics import IntegratorConfig, interference_profile
from .errors import ParameterError
from .motion import IonSpec, lamb_dicke
from .pulse import ChirpedPulse, chirp_transform, spec_from_intensity

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


class EchoModelParams(BaseModel):
    """C₀、热态 n̄、Lamb-Dicke 因子 η、久期角频率 ν (rad/µs)"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    c0: float = Field(ge=0.0, le=1.0)
    nbar: float = Field(ge=0.0)
    # η = 0 允许存在，用于检验 n̄ 不可辨识的情形
    eta_ld: float = Field(ge=0.0)
    nu: float = Field(gt=0.0)

    @classmethod
    def from_ion(cls, ion: IonSpec, c0: float, nbar: float) -> "EchoModelParams":
        return cls(c0=c0, nbar=nbar, eta_ld=lamb_dicke(ion), nu=ion.nu * 1e-6)

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.nu


class AutocorrParams(BaseModel):
    """
    自相关前向模型参数

    intensity 即 |Ω_D|²（(rad/ps)²，任意单位意义下），contrast_scale 为
    运动干涉造成的整体对比度损失因子（与 Lamb-Dicke 因子无关）。
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    intensity: float = Field(gt=0.0)
    sigma: float = Field(gt=0.0)
    gdd: float = 0.0
    contrast_scale: float = Field(default=1.0, ge=0.0, le=1.0)
    wavelength: float = Field(default=393.0, gt=0.0)

    def pulse(self) -> ChirpedPulse:
        return chirp_transform(spec_from_intensity(self.intensity, self.sigma, self.gdd, self.wavelength))


class ContrastPoint(NamedTuple):
    delay: float
    contrast: float
    background: float


def _check_tau(tau_d: ArrayLike) -> np.ndarray:
    tau = np.asarray(tau_d, dtype=float)
    if np.any(tau < 0):
        raise ParameterError("tau_d must be non-negative")
    return tau


def _scalar_or_array(value: np.ndarray) -> ArrayLike:
    return float(value) if np.ndim(value) == 0 else value


def _mismatch(tau: np.ndarray, eta_ld: float, nu: float) -> np.ndarray:
    return 8.0 * eta_ld ** 2 * (1.0 - np.cos(nu * tau))


def revival_curve(tau: np.ndarray, c0: float, nbar: float, eta_ld: float, nu: float) -> np.ndarray:
    """C(τ_d) 闭式，不校验参数，供拟合在 EchoModelParams 边界之外求值"""
    damping = np.exp(-_mismatch(tau, eta_ld, nu) ** 2 * (nbar + 0.5))
    fringe = np.cos(4.0 * eta_ld ** 2 * np.sin(nu * tau))
    return 0.5 * (1.0 + c0 * damping * fringe)


def displacement_mismatch(tau_d: ArrayLike, params: EchoModelParams) -> ArrayLike:
    """α(τ_d) = 8η²(1 - cos ντ_d)，取值范围 [0, 16η²]"""
    tau = _check_tau(tau_d)
    return _scalar_or_array(_mismatch(tau, params.eta_ld, params.nu))


def echo_contrast(tau_d: ArrayLike, params: EchoModelParams) -> ArrayLike:
    """
    C(τ_d) = ½(1 + C₀·exp(-|α|²(n̄+½))·cos(4η² sin ντ_d))

    在 τ_d = 2πm/ν 处取最大值 (1+C₀)/2，对 τ_d 以 2π/ν 为周期。
    """
    tau = _check_tau(tau_d)
    return _scalar_or_array(revival_curve(tau, params.c0, params.nbar, params.eta_ld, params.nu))


def echo_visibility_from_p2(p2: float, phase_jitter_rms: float = 0.0) -> Tuple[float, float]:
    """
    由回复概率 p₂ 得到条纹可见度与背景

    可见度 = p₂·E[cos²δξ]，δξ 为零均值高斯相位抖动，E[cos²δξ] = ½(1+e^{-2·rms²})；
    背景 = (1-p₂)/2。

    返回:
        (visibility, background)
    """
    if not 0.0 <= p2 <= 1.0:
        raise ParameterError(f"p2 must lie in [0, 1], got {p2}")
    if phase_jitter_rms < 0:
        raise ParameterError(f"phase_jitter_rms must be non-negative, got {phase_jitter_rms}")
    mean_cos2 = 0.5 * (1.0 + math.exp(-2.0 * phase_jitter_rms ** 2))
    return p2 * mean_cos2, 0.5 * (1.0 - p2)


def contrast_from_return(p_return: Sequence[float], scale: float, phase_jitter_rms: float = 0.0) -> np.ndarray:
    """前向模型的最后一步：对比度 = scale × 可见度"""
    values = np.clip(np.asarray(p_return, dtype=float), 0.0, 1.0)
    mean_cos2 = 0.5 * (1.0 + math.exp(-2.0 * phase_jitter_rms ** 2))
    return scale * values * mean_cos2


def autocorr_contrast_curve(params: AutocorrParams, delays: Sequence[float], n_phase: int = 16,
                            cfg: Optional[IntegratorConfig] = None,
                            phase_jitter_rms: float = 0.0) -> List[ContrastPoint]:
    """
    自旋回波对比度随脉冲对到达时间差 T_D 的变化

    参数:
        params: 脉冲强度、宽度、GDD 与对比度缩放
        delays: T_D 列表 (ps)
        n_phase: 相位平均点数
        cfg: 积分器配置
        phase_jitter_rms: 相对相位抖动的均方根 (rad)

    返回:
        ContrastPoint 列表 (T_D, contrast, background)
    """
    profile = interference_profile(params.pulse(), delays, n_phase, cfg)
    contrast = contrast_from_return(profile.p_return, params.contrast_scale, phase_jitter_rms)
    return [
        ContrastPoint(delay, float(c), 0.5 * (1.0 - min(1.0, max(0.0, p))))
        for delay, c, p in zip(profile.delays, contrast, profile.p_return)
    ]
