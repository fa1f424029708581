"""
反冲与声子数簿记

光子反冲能量、Lamb-Dicke 因子、啁啾脉冲对 (CPP) 动量踢造成的声子数增量，
以及由红/蓝边带激发概率估计热态平均声子数。

模块内部使用 SI 单位（kg、rad/s、J）。常数取 CODATA-2018，集中在下表。

注意：Δn_theo = 0.52 只在 ν = 2π×1 MHz 时成立；自旋回波实验的 2π×890 kHz
给出约 0.58。
"""

import math
from typing import Any, Dict, Optional

from pydantic import BaseModel, ConfigDict, Field

from .errors import EstimatorError, ParameterError

# CODATA-2018
HBAR: float = 1.054571817000e-34          # J·s
ATOMIC_MASS_UNIT: float = 1.66053906660e-27  # kg
SPEED_OF_LIGHT: float = 2.99792458000e8   # m/s


class IonSpec(BaseModel):
    """离子与阱参数：质量 (u)、久期角频率 (rad/s)、跃迁波长 (nm)、初始平均声子数"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    mass: float = Field(default=40.0, gt=0.0)
    nu: float = Field(default=2.0 * math.pi * 890e3, gt=0.0)
    wavelength: float = Field(default=393.0, gt=0.0)
    nbar0: float = Field(default=0.08, ge=0.0)

    @classmethod
    def from_khz(cls, nu_khz: float, mass: float = 40.0, wavelength: float = 393.0,
                 nbar0: float = 0.08) -> "IonSpec":
        return cls(mass=mass, nu=2.0 * math.pi * nu_khz * 1e3, wavelength=wavelength, nbar0=nbar0)

    @property
    def mass_kg(self) -> float:
        return self.mass * ATOMIC_MASS_UNIT

    @property
    def wavenumber(self) -> float:
        """k = 2π/λ (1/m)"""
        return 2.0 * math.pi / (self.wavelength * 1e-9)


def recoil_energy(ion: IonSpec) -> float:
    """单光子反冲能量 E_rec = (ħk)²/(2m)，单位 J"""
    return (HBAR * ion.wavenumber) ** 2 / (2.0 * ion.mass_kg)


def lamb_dicke(ion: IonSpec) -> float:
    """Lamb-Dicke 因子 η = k·sqrt(ħ/(2mν))"""
    return ion.wavenumber * math.sqrt(HBAR / (2.0 * ion.mass_kg * ion.nu))


def delta_n_two_cpp(ion: IonSpec, aligned: bool = True) -> float:
    """
    两个同向 CPP 后的理论声子数增量 16·E_rec/(ħν)

    四个光子动量相干叠加；aligned=False 表示两次踢的符号相反，理想值为 0。
    """
    if not aligned:
        return 0.0
    return 16.0 * recoil_energy(ion) / (HBAR * ion.nu)


def delta_n_cpp_train(ion: IonSpec, n_cpp: int, aligned: bool = True) -> float:
    """
    n_cpp 个 CPP 组成的踢序列的声子数增量

    每个 CPP 把相空间位移 2η；同向时位移相干相加，Δn = (2η·N)²，
    符号交替时偶数个相互抵消，奇数个剩下一次。
    """
    if n_cpp < 0:
        raise ParameterError(f"n_cpp must be non-negative, got {n_cpp}")
    eta = lamb_dicke(ion)
    net_kicks = n_cpp if aligned else n_cpp % 2
    return (2.0 * eta * net_kicks) ** 2


def mean_phonon_from_sidebands(p_red: float, p_blue: float) -> float:
    """
    边带比估计量 ⟨n⟩ = p_red/(p_blue - p_red)

    只对热态成立。p_blue <= p_red 时估计量发散或为负，直接报错而不截断。
    """
    for name, value in (("p_red", p_red), ("p_blue", p_blue)):
        if not 0.0 <= value <= 1.0:
            raise ParameterError(f"{name} must lie in [0, 1], got {value}")
    if p_blue <= p_red:
        raise EstimatorError(
            f"degenerate sideband estimator: p_blue={p_blue} <= p_red={p_red} (infinite or negative nbar)")
    return p_red / (p_blue - p_red)


def phonon_gain_from_sidebands(p_red: float, p_blue: float, nbar0: float) -> float:
    """Δn = ⟨n⟩ - ⟨n⟩₀"""
    return mean_phonon_from_sidebands(p_red, p_blue) - nbar0


def kick_report(ion: IonSpec, p_red: Optional[float] = None, p_blue: Optional[float] = None,
                n_cpp: int = 2, aligned: bool = True) -> Dict[str, Any]:
    """
    kick 子命令的 JSON 报告

    delta_n 固定为两次同向 CPP；delta_n_train 对应 n_cpp 次（aligned=False 时符号交替）。
    给出两个边带概率时附上测得的 ⟨n⟩ 与相对 ion.nbar0 的增量。
    """
    nbar_estimate = None
    delta_n_measured = None
    if p_red is not None and p_blue is not None:
        nbar_estimate = mean_phonon_from_sidebands(p_red, p_blue)
        delta_n_measured = phonon_gain_from_sidebands(p_red, p_blue, ion.nbar0)
    return {
        "e_rec_J": recoil_energy(ion),
        "eta_ld": lamb_dicke(ion),
        "delta_n": delta_n_two_cpp(ion),
        "n_cpp": n_cpp,
        "aligned": aligned,
        "delta_n_train": delta_n_cpp_train(ion, n_cpp, aligned),
        "nbar0": ion.nbar0,
        "nbar_estimate": nbar_estimate,
        "delta_n_measured": delta_n_measured,
    }
