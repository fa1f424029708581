"""Test configuration and fixtures."""

import pytest

from ion_autocorr.dynamics import IntegratorConfig
from ion_autocorr.fit import FitConfig
from ion_autocorr.pulse import PulseSpec


@pytest.fixture
def experiment_spec():
    """自旋回波实验的脉冲：σ = 1.5 ps，D = 5.8 ps²"""
    return PulseSpec(sigma=1.5, gdd=5.8, omega0=1.0)


@pytest.fixture
def tight_integrator():
    """用于幺正性检查的收紧容差"""
    return IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)


@pytest.fixture
def fast_fit_config():
    """拟合往返测试用的较快配置：8 个相位点、略放宽的积分容差"""
    return FitConfig(n_phase=8, integrator=IntegratorConfig(rel_tol=1e-8, abs_tol=1e-10))


@pytest.fixture
def write_dataset_file(tmp_path):
    """把若干行文本写成 CSV 文件，返回路径"""

    def _write(lines, name="data.csv"):
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return _write
