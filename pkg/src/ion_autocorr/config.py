"""
Ion Autocorrelator 配置模块

提供运行配置：并行线程数、输出目录、日志格式，以及一张集中的物理默认参数表。
支持通过环境变量 ION_AUTOCORR_THREADS 和 ION_AUTOCORR_OUT 覆盖默认值。
"""

import logging
import math
import os
from pathlib import Path
from typing import Any, Dict

logger = logging.getLogger(__name__)


def threads_from_env(default: int) -> int:
    """读取 ION_AUTOCORR_THREADS；未设置或不是整数时回退到 default"""
    raw = os.environ.get("ION_AUTOCORR_THREADS")
    if raw is None:
        return default
    try:
        return max(1, int(raw.strip()))
    except ValueError:
        logger.warning(f"ION_AUTOCORR_THREADS={raw!r} 不是整数，使用 {default}")
        return default


class Config:
    """
    Ion Autocorrelator 配置类

    配置项包括：
    - 并行度（扫描点可以并发积分）
    - 输出目录和日志设置
    - 物理默认参数表（全部取自实验文本，均可覆盖）
    """

    # 并行线程数，环境变量 ION_AUTOCORR_THREADS 优先
    THREADS: int = threads_from_env(max(1, os.cpu_count() or 1))

    # 输出目录
    OUTPUT_DIR: Path = Path.cwd() / "ion_autocorr_out"
    if "ION_AUTOCORR_OUT" in os.environ:
        OUTPUT_DIR = Path(os.environ["ION_AUTOCORR_OUT"])

    # 服务器与日志
    SERVER_NAME: str = "ion-autocorrelator"
    LOG_FILE_NAME: str = "ion_autocorr.log"
    LOG_FORMAT: str = "%(asctime)s - %(levelname)s - %(message)s"

    # 物理默认参数表（单位写在键名里）
    # nu_khz=890 对应自旋回波实验；delta_n 的 0.52 需要 1 MHz，见 motion 模块
    DEFAULTS: Dict[str, Any] = {
        # 脉冲
        "sigma_ps": 1.5,
        "gdd_ps2": 5.8,
        "intensity": 0.5,
        "wavelength_nm": 393.0,
        # 离子
        "mass_amu": 40.0,
        "nu_khz": 890.0,
        "nbar": 21.0,
        "nbar0": 0.08,
        # 自旋回波
        "c0": 0.56,
        "contrast_scale": 0.79,
        "phase_jitter_rad": 0.0,
        # 数值积分
        "n_phase": 16,
        "rel_tol": 1e-9,
        "abs_tol": 1e-11,
        "t_span_sigmas": 6.0,
        "max_step_ps": math.inf,
        "chunk_size": 8,
        # 扫描网格
        "omega0_max": 6.0,
        "n_amplitudes": 40,
        # autocorr 附加的凹陷宽度-能量扫描点数，0 表示不扫描
        "n_dip_energies": 0,
        "pair_delay_sigmas": 12.0,
        "delay_max_ps": 30.0,
        "n_delays": 31,
        "tau_start_us": 20.0,
        "tau_stop_us": 24.5,
        "n_taus": 91,
        # 合成数据与拟合
        "noise_rms": 0.04,
        "fit_max_nfev": 200,
        "fixed": "",
        # 边带测温
        "p_red": None,
        "p_blue": None,
        # CPP 踢序列
        "n_cpp": 2,
        "aligned_kicks": True,
    }

    @classmethod
    def validate(cls) -> bool:
        """
        验证配置设置

        返回:
            bool: 线程数为正且输出目录可创建时返回 True
        """
        if cls.THREADS < 1:
            return False

        if cls.OUTPUT_DIR.exists() and not cls.OUTPUT_DIR.is_dir():
            return False

        return True

    @classmethod
    def get_threads(cls) -> int:
        """获取并行线程数上限"""
        return cls.THREADS

    @classmethod
    def set_threads(cls, threads: int) -> None:
        """
        设置并行线程数上限

        参数:
            threads: 新的线程数（至少为 1）
        """
        cls.THREADS = max(1, int(threads))

    @classmethod
    def get_output_dir(cls) -> Path:
        """获取默认输出目录"""
        return cls.OUTPUT_DIR

    @classmethod
    def parameter_names(cls) -> frozenset:
        """可覆盖参数的命名空间"""
        return frozenset(cls.DEFAULTS)
