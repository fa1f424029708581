#!/usr/bin/env python3
"""
Ion Autocorrelator MCP Server

这是一个 Model Context Protocol (MCP) 服务器，把离子自相关器的库操作暴露为工具。

提供的工具：
- chirp_pulse: 由 σ、GDD、强度计算啁啾脉冲参数与半高全宽
- rap_scan: 单脉冲/双脉冲激发概率随场振幅的扫描
- interference_profile: 相位平均回复概率随脉冲对延迟的变化
- echo_contrast: CPP 间隔扫描的自旋回波对比度曲线
- fit_autocorrelation: 从 CSV 数据集拟合 I、σ、D 与对比度缩放
- fit_revival: 从 CPP 间隔扫描数据拟合 C₀ 与 n̄
- kick_report: 反冲能量、Lamb-Dicke 因子、CPP 踢序列的声子数增量与边带测温
"""

import asyncio
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from mcp.server import Server
from mcp.server.stdio import stdio_server
from mcp.types import Tool, TextContent
from pydantic import ValidationError

from .config import Config
from .contrast import AutocorrParams, EchoModelParams, echo_contrast
from .dynamics import IntegratorConfig, energy_scan, interference_profile
from .errors import FitConvergenceError, IonAutocorrError
from .fit import FitConfig, fit_autocorrelation, fit_contrast_revival
from .io import normalize_floats, ingest_dataset
from .motion import IonSpec, kick_report
from .pulse import FWHM_FACTOR, chirp_transform, pulse_area, spec_from_intensity

logger = logging.getLogger(__name__)

D = Config.DEFAULTS


def _number(description: str, default: Any = None) -> Dict[str, Any]:
    schema: Dict[str, Any] = {"type": "number", "description": description}
    if default is not None:
        schema["default"] = default
    return schema


PULSE_PROPERTIES = {
    "sigma_ps": _number("未啁啾高斯宽度 σ (ps)", D["sigma_ps"]),
    "gdd_ps2": _number("群延迟色散 D (ps²)，可为负", D["gdd_ps2"]),
    "intensity": _number("强度 I = |Ω_D|² ((rad/ps)²)", D["intensity"]),
    "wavelength_nm": _number("载波波长 (nm)", D["wavelength_nm"]),
}

ION_PROPERTIES = {
    "nu_khz": _number("久期频率 ν/2π (kHz)", D["nu_khz"]),
    "mass_amu": _number("离子质量 (u)", D["mass_amu"]),
    "wavelength_nm": _number("跃迁波长 (nm)", D["wavelength_nm"]),
}


def _text(payload: Any) -> List[TextContent]:
    return [TextContent(type="text", text=json.dumps(normalize_floats(payload), indent=2, ensure_ascii=False))]


class IonAutocorrServer:
    """
    Ion Autocorrelator MCP 服务器

    工具参数缺省时取 Config.DEFAULTS 中的物理默认值。
    """

    def __init__(self):
        logger.info("正在初始化 MCP 服务器...")
        self.server = Server(Config.SERVER_NAME)
        self.setup_handlers()
        logger.info("MCP 服务器初始化完成")

    def setup_handlers(self):
        """设置 MCP 服务器处理程序"""

        @self.server.list_tools()
        async def handle_list_tools() -> List[Tool]:
            """列出可用的工具"""
            return [
                Tool(
                    name="chirp_pulse",
                    description=(
                        "由未啁啾宽度 σ、GDD 和强度计算啁啾脉冲：σ_D、啁啾率 δ²、|Ω_D|、"
                        "载波相位、半高全宽和等效面积。"
                    ),
                    inputSchema={"type": "object", "properties": PULSE_PROPERTIES},
                ),
                Tool(
                    name="rap_scan",
                    description=(
                        "单脉冲激发概率 p₁ 随场振幅 Ω₀ 的扫描（RAP 饱和曲线），"
                        "可选同时给出相位平均的双脉冲激发概率 p₂。"
                    ),
                    inputSchema={
                        "type": "object",
                        "properties": {
                            **PULSE_PROPERTIES,
                            "omega0_max": _number("最大场振幅 Ω₀ (rad/ps)", D["omega0_max"]),
                            "n_amplitudes": {"type": "integer", "default": D["n_amplitudes"]},
                            "with_pair": {"type": "boolean", "default": True,
                                          "description": "是否计算双脉冲激发概率"},
                        },
                    },
                ),
                Tool(
                    name="interference_profile",
                    description="相位平均的 |S⟩ 回复概率随脉冲对到达时间差 T_d 的变化及凹陷半高全宽。",
                    inputSchema={
                        "type": "object",
                        "properties": {
                            **PULSE_PROPERTIES,
                            "delay_max_ps": _number("延迟扫描范围 ±T_max (ps)", D["delay_max_ps"]),
                            "n_delays": {"type": "integer", "default": D["n_delays"]},
                            "n_phase": {"type": "integer", "default": D["n_phase"], "minimum": 8},
                        },
                    },
                ),
                Tool(
                    name="echo_contrast",
                    description="两个 CPP 间隔 τ_d 扫描的自旋回波对比度 C(τ_d)（热态闭式模型）。",
                    inputSchema={
                        "type": "object",
                        "properties": {
                            **ION_PROPERTIES,
                            "c0": _number("无踢时的回波对比度 C₀", D["c0"]),
                            "nbar": _number("热态平均声子数 n̄", D["nbar"]),
                            "tau_start_us": _number("τ_d 起点 (µs)", D["tau_start_us"]),
                            "tau_stop_us": _number("τ_d 终点 (µs)", D["tau_stop_us"]),
                            "n_taus": {"type": "integer", "default": D["n_taus"]},
                        },
                    },
                ),
                Tool(
                    name="fit_autocorrelation",
                    description=(
                        "从 `delay_ps,contrast,sigma_err` 格式的 CSV 拟合强度、σ、GDD 与对比度缩放，"
                        "返回参数、约化 χ²、误差棒和 Hessian 条件数。"
                    ),
                    inputSchema={
                        "type": "object",
                        "properties": {
                            "input_path": {"type": "string", "description": "数据集 CSV 路径"},
                            **PULSE_PROPERTIES,
                            "contrast_scale": _number("对比度缩放初值", D["contrast_scale"]),
                            "fixed": {"type": "array", "items": {"type": "string"},
                                      "description": "冻结的参数：intensity、sigma、gdd、contrast_scale"},
                            "n_phase": {"type": "integer", "default": D["n_phase"], "minimum": 8},
                        },
                        "required": ["input_path"],
                    },
                ),
                Tool(
                    name="fit_revival",
                    description="从 `delay_us,contrast,sigma_err` 格式的 CSV 拟合 C₀ 与 n̄（η、ν 固定）。",
                    inputSchema={
                        "type": "object",
                        "properties": {
                            "input_path": {"type": "string", "description": "数据集 CSV 路径"},
                            **ION_PROPERTIES,
                            "c0": _number("C₀ 初值", D["c0"]),
                            "nbar": _number("n̄ 初值", D["nbar"]),
                        },
                        "required": ["input_path"],
                    },
                ),
                Tool(
                    name="kick_report",
                    description="反冲能量、Lamb-Dicke 因子、两次同向 CPP 的声子数增量，以及可选的边带测温估计。",
                    inputSchema={
                        "type": "object",
                        "properties": {
                            **ION_PROPERTIES,
                            "p_red": _number("红边带激发概率"),
                            "p_blue": _number("蓝边带激发概率"),
                            "nbar0": _number("加踢前的平均声子数", D["nbar0"]),
                            "n_cpp": {"type": "integer", "description": "CPP 个数", "default": D["n_cpp"]},
                            "aligned": {"type": "boolean", "description": "各次踢同向", "default": D["aligned_kicks"]},
                        },
                    },
                ),
            ]

        @self.server.call_tool()
        async def handle_call_tool(name: str, arguments: Any) -> List[TextContent]:
            """处理工具调用"""
            arguments = arguments or {}
            try:
                if name == "chirp_pulse":
                    return await self._chirp_pulse(**arguments)
                elif name == "rap_scan":
                    return await self._rap_scan(**arguments)
                elif name == "interference_profile":
                    return await self._interference_profile(**arguments)
                elif name == "echo_contrast":
                    return await self._echo_contrast(**arguments)
                elif name == "fit_autocorrelation":
                    return await self._fit_autocorrelation(**arguments)
                elif name == "fit_revival":
                    return await self._fit_revival(**arguments)
                elif name == "kick_report":
                    return await self._kick_report(**arguments)
                else:
                    logger.error(f"未知工具: {name}")
                    raise ValueError(f"Unknown tool: {name}")
            except (IonAutocorrError, ValidationError) as e:
                logger.error(f"工具 {name} 参数或数值错误: {e}")
                return [TextContent(type="text", text=f"错误: {e}")]
            except Exception as e:
                logger.error(f"工具 {name} 执行失败: {str(e)}", exc_info=True)
                return [TextContent(type="text", text=f"错误: {str(e)}")]

    async def _chirp_pulse(self, sigma_ps: float = D["sigma_ps"], gdd_ps2: float = D["gdd_ps2"],
                           intensity: float = D["intensity"],
                           wavelength_nm: float = D["wavelength_nm"]) -> List[TextContent]:
        spec = spec_from_intensity(intensity, sigma_ps, gdd_ps2, wavelength_nm)
        pulse = chirp_transform(spec)
        return _text({
            **json.loads(spec.to_json()),
            "sigma_d_ps": pulse.sigma_d,
            "chirp_rate": pulse.chirp_rate,
            "omega_d": pulse.omega_d,
            "carrier_phase": pulse.carrier_phase,
            "fwhm0_ps": FWHM_FACTOR * sigma_ps,
            "fwhm_ps": pulse.fwhm,
            "pulse_area": pulse_area(pulse),
        })

    async def _rap_scan(self, sigma_ps: float = D["sigma_ps"], gdd_ps2: float = D["gdd_ps2"],
                        intensity: float = D["intensity"], wavelength_nm: float = D["wavelength_nm"],
                        omega0_max: float = D["omega0_max"], n_amplitudes: int = D["n_amplitudes"],
                        with_pair: bool = True) -> List[TextContent]:
        spec = spec_from_intensity(intensity, sigma_ps, gdd_ps2, wavelength_nm)
        pair_delay = D["pair_delay_sigmas"] * chirp_transform(spec).sigma_d if with_pair else None
        amplitudes = np.linspace(0.0, omega0_max, n_amplitudes)
        rows = await asyncio.to_thread(energy_scan, spec, amplitudes, IntegratorConfig(), pair_delay)
        return _text({"columns": ["omega0_sq", "p1", "p2"], "rows": [list(r) for r in rows]})

    async def _interference_profile(self, sigma_ps: float = D["sigma_ps"], gdd_ps2: float = D["gdd_ps2"],
                                    intensity: float = D["intensity"], wavelength_nm: float = D["wavelength_nm"],
                                    delay_max_ps: float = D["delay_max_ps"], n_delays: int = D["n_delays"],
                                    n_phase: int = D["n_phase"]) -> List[TextContent]:
        pulse = chirp_transform(spec_from_intensity(intensity, sigma_ps, gdd_ps2, wavelength_nm))
        delays = np.linspace(-delay_max_ps, delay_max_ps, n_delays)
        profile = await asyncio.to_thread(interference_profile, pulse, delays, n_phase)
        return _text({
            "delays_ps": list(profile.delays),
            "p_return": list(profile.p_return),
            "dip_fwhm_ps": profile.dip_fwhm,
            "fwhm_ps": pulse.fwhm,
        })

    async def _echo_contrast(self, nu_khz: float = D["nu_khz"], mass_amu: float = D["mass_amu"],
                             wavelength_nm: float = D["wavelength_nm"], c0: float = D["c0"],
                             nbar: float = D["nbar"], tau_start_us: float = D["tau_start_us"],
                             tau_stop_us: float = D["tau_stop_us"], n_taus: int = D["n_taus"]) -> List[TextContent]:
        ion = IonSpec.from_khz(nu_khz, mass=mass_amu, wavelength=wavelength_nm)
        params = EchoModelParams.from_ion(ion, c0, nbar)
        taus = np.linspace(tau_start_us, tau_stop_us, n_taus)
        return _text({
            "eta_ld": params.eta_ld,
            "period_us": params.period,
            "delays_us": taus.tolist(),
            "contrast": np.atleast_1d(echo_contrast(taus, params)).tolist(),
        })

    async def _fit_autocorrelation(self, input_path: str, sigma_ps: float = D["sigma_ps"],
                                   gdd_ps2: float = D["gdd_ps2"], intensity: float = D["intensity"],
                                   wavelength_nm: float = D["wavelength_nm"],
                                   contrast_scale: float = D["contrast_scale"],
                                   fixed: Optional[List[str]] = None,
                                   n_phase: int = D["n_phase"]) -> List[TextContent]:
        if not input_path:
            return [TextContent(type="text", text="错误: input_path 不能为空")]
        data = ingest_dataset(Path(input_path), "delay_ps")
        init = AutocorrParams(intensity=intensity, sigma=sigma_ps, gdd=gdd_ps2,
                              contrast_scale=contrast_scale, wavelength=wavelength_nm)
        try:
            result = await asyncio.to_thread(fit_autocorrelation, data, init, fixed or [],
                                             FitConfig(n_phase=n_phase))
        except FitConvergenceError as e:
            payload = e.best.model_dump() if e.best is not None else {}
            return _text({"error": str(e), "best": payload})
        return _text(result.model_dump())

    async def _fit_revival(self, input_path: str, nu_khz: float = D["nu_khz"], mass_amu: float = D["mass_amu"],
                           wavelength_nm: float = D["wavelength_nm"], c0: float = D["c0"],
                           nbar: float = D["nbar"]) -> List[TextContent]:
        if not input_path:
            return [TextContent(type="text", text="错误: input_path 不能为空")]
        data = ingest_dataset(Path(input_path), "delay_us")
        ion = IonSpec.from_khz(nu_khz, mass=mass_amu, wavelength=wavelength_nm)
        result = fit_contrast_revival(data, EchoModelParams.from_ion(ion, c0, nbar))
        return _text(result.model_dump())

    async def _kick_report(self, nu_khz: float = D["nu_khz"], mass_amu: float = D["mass_amu"],
                           wavelength_nm: float = D["wavelength_nm"], p_red: Optional[float] = None,
                           p_blue: Optional[float] = None, nbar0: float = D["nbar0"], n_cpp: int = D["n_cpp"],
                           aligned: bool = D["aligned_kicks"]) -> List[TextContent]:
        ion = IonSpec.from_khz(nu_khz, mass=mass_amu, wavelength=wavelength_nm, nbar0=nbar0)
        return _text(kick_report(ion, p_red, p_blue, int(n_cpp), bool(aligned)))

    async def run(self):
        """运行 MCP 服务器"""
        logger.info("启动 MCP 服务器...")
        async with stdio_server() as (read_stream, write_stream):
            await self.server.run(
                read_stream,
                write_stream,
                self.server.create_initialization_options()
            )


async def main():
    """运行 MCP 服务器，日志写入输出目录"""
    out_dir = Config.get_output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=logging.INFO,
        format=Config.LOG_FORMAT,
        handlers=[
            logging.FileHandler(out_dir / Config.LOG_FILE_NAME, encoding='utf-8'),
            logging.StreamHandler()
        ]
    )
    server = IonAutocorrServer()
    await server.run()


if __name__ == "__main__":
    asyncio.run(main())
