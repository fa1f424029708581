"""Integration tests for the Ion Autocorrelator MCP Server."""

import json

import numpy as np
import pytest

from ion_autocorr.config import Config
from ion_autocorr.contrast import AutocorrParams, EchoModelParams
from ion_autocorr.fit import generate_synthetic, generate_synthetic_revival
from ion_autocorr.io import write_dataset
from ion_autocorr.motion import IonSpec
from ion_autocorr.server import IonAutocorrServer


def payload(result):
    assert len(result) == 1
    return json.loads(result[0].text)


@pytest.fixture
def server():
    return IonAutocorrServer()


@pytest.fixture
def revival_csv(tmp_path):
    truth = EchoModelParams.from_ion(IonSpec.from_khz(890.0), c0=0.56, nbar=21.0)
    data = generate_synthetic_revival(truth, np.linspace(20.0, 24.5, 91), noise_rms=0.01, seed=2)
    return write_dataset(tmp_path / "revival.csv", data)


@pytest.mark.asyncio
async def test_server_initialization(server):
    """测试服务器初始化"""
    assert server.server is not None
    assert server.server.name == Config.SERVER_NAME


@pytest.mark.asyncio
async def test_chirp_pulse(server):
    """测试 chirp_pulse 工具"""
    data = payload(await server._chirp_pulse(sigma_ps=1.54, gdd_ps2=6.8))
    assert data["fwhm_ps"] == pytest.approx(11.0, abs=0.2)
    assert data["sigma_ps"] == 1.54
    assert data["omega_d"] ** 2 == pytest.approx(Config.DEFAULTS["intensity"], rel=1e-6)


@pytest.mark.asyncio
async def test_rap_scan_without_pair(server):
    """测试 rap_scan 工具（只算单脉冲）"""
    data = payload(await server._rap_scan(omega0_max=2.0, n_amplitudes=3, with_pair=False))
    assert data["columns"] == ["omega0_sq", "p1", "p2"]
    assert len(data["rows"]) == 3
    assert data["rows"][0][1] == 0.0
    assert data["rows"][0][2] is None


@pytest.mark.asyncio
async def test_interference_profile(server):
    """测试 interference_profile 工具"""
    data = payload(await server._interference_profile(intensity=1e-8, n_delays=3, delay_max_ps=10.0, n_phase=8))
    assert data["delays_ps"] == [-10.0, 0.0, 10.0]
    assert all(p == pytest.approx(1.0, abs=1e-6) for p in data["p_return"])
    assert data["dip_fwhm_ps"] is None


@pytest.mark.asyncio
async def test_echo_contrast(server):
    """测试 echo_contrast 工具"""
    data = payload(await server._echo_contrast(n_taus=5))
    assert len(data["contrast"]) == 5
    assert data["eta_ld"] == pytest.approx(0.1905, abs=5e-4)
    assert data["period_us"] == pytest.approx(1.0 / 0.89, rel=1e-6)


@pytest.mark.asyncio
async def test_fit_revival(server, revival_csv):
    """测试 fit_revival 工具"""
    data = payload(await server._fit_revival(input_path=str(revival_csv), c0=0.5, nbar=15.0))
    assert data["nbar"] == pytest.approx(21.0, rel=0.15)
    assert data["fixed_mask"]["eta_ld"] is True


@pytest.mark.asyncio
async def test_fit_requires_path(server):
    """测试空路径"""
    result = await server._fit_autocorrelation(input_path="")
    assert "input_path" in result[0].text
    result = await server._fit_revival(input_path="")
    assert result[0].text.startswith("错误")


@pytest.mark.asyncio
async def test_fit_autocorrelation_scale_only(server, tmp_path):
    """测试 fit_autocorrelation 工具（只拟合对比度缩放）"""
    truth = AutocorrParams(intensity=0.5, sigma=1.5, gdd=5.8, contrast_scale=0.6)
    data = generate_synthetic(truth, np.linspace(0.0, 27.0, 10))
    path = write_dataset(tmp_path / "autocorr.csv", data)
    result = payload(await server._fit_autocorrelation(
        input_path=str(path), intensity=0.5, sigma_ps=1.5, gdd_ps2=5.8, contrast_scale=0.3,
        fixed=["intensity", "sigma", "gdd"]))
    assert result["contrast_scale"] == pytest.approx(0.6, abs=1e-6)
    assert result["n_free"] == 1


@pytest.mark.asyncio
async def test_kick_report(server):
    """测试 kick_report 工具"""
    data = payload(await server._kick_report(nu_khz=1000.0, p_red=0.1, p_blue=0.2))
    assert data["delta_n"] == pytest.approx(0.5167, abs=5e-4)
    assert data["nbar_estimate"] == pytest.approx(1.0)


@pytest.mark.asyncio
async def test_kick_report_train(server):
    """测试 kick_report 工具的踢序列与增量"""
    data = payload(await server._kick_report(nu_khz=1000.0, p_red=0.1, p_blue=0.2, nbar0=0.0, n_cpp=3,
                                             aligned=False))
    assert data["delta_n_train"] == pytest.approx(0.25 * data["delta_n"], rel=1e-9)
    assert data["delta_n_measured"] == pytest.approx(1.0)
