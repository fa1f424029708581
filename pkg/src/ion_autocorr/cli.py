"""
命令行流水线

把库操作串成子命令：pulse、rap-scan、autocorr、contrast、fit、fit-revival、kick、synth。
参数解析顺序为 Config.DEFAULTS ← JSON 配置文件 ← --set key=value ← 显式标志（标志优先）。
每次运行写出 CSV/JSON 产物和 run_manifest.json，退出码 0 成功、1 校验错误、2 数值失败。
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from . import __version__
from .config import Config
from .contrast import AutocorrParams, EchoModelParams, autocorr_contrast_curve, echo_contrast
from .dynamics import IntegratorConfig, dip_width_scan, energy_scan, interference_profile
from .errors import ConfigError, FitConvergenceError, IonAutocorrError, ParameterError
from .fit import FitConfig, fit_autocorrelation, fit_contrast_revival, generate_synthetic, generate_synthetic_revival
from .io import RunManifest, ingest_dataset, read_json, sha256_file, write_csv, write_dataset, write_json, write_manifest
from .motion import IonSpec, kick_report
from .pulse import FWHM_FACTOR, carrier_frequency, chirp_transform, fwhm_stretch, pulse_area, spec_from_intensity

logger = logging.getLogger(__name__)

Command = Literal["pulse", "rap-scan", "autocorr", "contrast", "fit", "fit-revival", "kick", "synth"]
COMMANDS = ("pulse", "rap-scan", "autocorr", "contrast", "fit", "fit-revival", "kick", "synth")

# 拟合参数名与参数表键名的对应
FIT_PARAMETER_KEYS = {"intensity": "intensity", "sigma": "sigma_ps", "gdd": "gdd_ps2",
                      "contrast_scale": "contrast_scale"}


class RunConfig(BaseModel):
    """一次 CLI 运行的完整描述"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    command: Command
    output_dir: Path
    input_path: Optional[Path] = None
    config_path: Optional[Path] = None
    overrides: Dict[str, Any] = {}
    flags: Dict[str, Any] = {}
    seed: Optional[int] = None
    revival: bool = False
    verbose: bool = False


def _coerce(key: str, value: Any) -> Any:
    """按默认值的类型转换覆盖值；None 表示未设置"""
    if key not in Config.DEFAULTS:
        raise ConfigError(f"unknown parameter '{key}'", key=key)
    default = Config.DEFAULTS[key]
    if value is None or (isinstance(value, str) and value.lower() in ("none", "null")):
        return default if isinstance(default, float) and math.isinf(default) else None
    try:
        if isinstance(default, bool):
            return str(value).lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, str):
            return str(value)
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value {value!r} for parameter '{key}'", key=key)


def parse_overrides(items: Sequence[str]) -> Dict[str, str]:
    """把 --set key=value 列表转为字典"""
    overrides = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override must look like key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    return overrides


def resolve_parameters(config: RunConfig) -> Dict[str, Any]:
    """
    合并参数表

    配置文件可以是扁平的参数字典，也可以是之前运行写出的 run_manifest.json。
    """
    params = dict(Config.DEFAULTS)
    if config.config_path is not None:
        loaded = read_json(Path(config.config_path))
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {config.config_path} must contain a JSON object")
        if "parameters" in loaded and "command" in loaded:
            loaded = loaded["parameters"]
        for key, value in loaded.items():
            params[key] = _coerce(key, value)
    for layer in (config.overrides, config.flags):
        for key, value in layer.items():
            if layer is config.flags and value is None:
                continue
            params[key] = _coerce(key, value)
    return params


def _manifest_seed(config: RunConfig) -> Optional[int]:
    """配置文件是运行清单时沿用其中记录的种子"""
    if config.config_path is None:
        return None
    loaded = read_json(Path(config.config_path))
    if isinstance(loaded, dict) and "command" in loaded and loaded.get("seed") is not None:
        return int(loaded["seed"])
    return None


def _integrator(params: Dict[str, Any]) -> IntegratorConfig:
    return IntegratorConfig(
        rel_tol=params["rel_tol"],
        abs_tol=params["abs_tol"],
        t_span_sigmas=params["t_span_sigmas"],
        max_step=params["max_step_ps"] if params["max_step_ps"] is not None else math.inf,
        chunk_size=params["chunk_size"],
    )


def _ion(params: Dict[str, Any]) -> IonSpec:
    return IonSpec.from_khz(params["nu_khz"], mass=params["mass_amu"],
                            wavelength=params["wavelength_nm"], nbar0=params["nbar0"])


def _autocorr_params(params: Dict[str, Any]) -> AutocorrParams:
    return AutocorrParams(intensity=params["intensity"], sigma=params["sigma_ps"], gdd=params["gdd_ps2"],
                          contrast_scale=params["contrast_scale"], wavelength=params["wavelength_nm"])


def _delay_grid(params: Dict[str, Any]) -> np.ndarray:
    return np.linspace(-params["delay_max_ps"], params["delay_max_ps"], params["n_delays"])


def _tau_grid(params: Dict[str, Any]) -> np.ndarray:
    return np.linspace(params["tau_start_us"], params["tau_stop_us"], params["n_taus"])


def _fixed_names(params: Dict[str, Any]) -> List[str]:
    return [name.strip() for name in str(params["fixed"] or "").split(",") if name.strip()]


# ---------------------------------------------------------------------------
# 子命令
# ---------------------------------------------------------------------------

def _run_pulse(config: RunConfig, params: Dict[str, Any], out: Path) -> List[Path]:
    spec = spec_from_intensity(params["intensity"], params["sigma_ps"], params["gdd_ps2"], params["wavelength_nm"])
    pulse = chirp_transform(spec)
    fwhm0 = FWHM_FACTOR * spec.sigma
    report = {
        **json.loads(spec.to_json()),
        "intensity": params["intensity"],
        "sigma_d_ps": pulse.sigma_d,
        "chirp_rate": pulse.chirp_rate,
        "omega_d": pulse.omega_d,
        "carrier_phase": pulse.carrier_phase,
        "fwhm0_ps": fwhm0,
        "fwhm_ps": pulse.fwhm,
        "fwhm_stretch_ps": fwhm_stretch(fwhm0, spec.gdd),
        "pulse_area": pulse_area(pulse),
        "carrier_frequency_rad_per_ps": carrier_frequency(spec.wavelength),
    }
    logger.info(f"啁啾脉冲 FWHM = {pulse.fwhm:.4g} ps（未啁啾 {fwhm0:.4g} ps）")
    return [write_json(out / "pulse.json", report)]


def _run_rap_scan(config: RunConfig, params: Dict[str, Any], out: Path) -> List[Path]:
    spec = spec_from_intensity(params["intensity"], params["sigma_ps"], params["gdd_ps2"], params["wavelength_nm"])
    amplitudes = np.linspace(0.0, params["omega0_max"], params["n_amplitudes"])
    pair_delay = params["pair_delay_sigmas"] * chirp_transform(spec).sigma_d
    rows = energy_scan(spec, amplitudes, _integrator(params), pair_delay=pair_delay, n_phase=params["n_phase"])
    return [write_csv(out / "energy_scan.csv", ["omega0_sq", "p1", "p2"], rows)]


def _run_autocorr(config: RunConfig, params: Dict[str, Any], out: Path) -> List[Path]:
    spec = spec_from_intensity(params["intensity"], params["sigma_ps"], params["gdd_ps2"], params["wavelength_nm"])
    pulse = chirp_transform(spec)
    profile = interference_profile(pulse, _delay_grid(params), params["n_phase"], _integrator(params))
    rows = [(d, p, "") for d, p in zip(profile.delays, profile.p_return)]
    # 最后一行为汇总行，只填凹陷半高全宽
    rows.append(("", "", profile.dip_fwhm))
    logger.info(f"凹陷 FWHM = {profile.dip_fwhm:.4g} ps，啁啾脉冲 FWHM = {pulse.fwhm:.4g} ps")
    paths = [write_csv(out / "interference.csv", ["delay_ps", "p_return", "dip_fwhm_ps"], rows)]
    n_energies = params["n_dip_energies"]
    if n_energies > 0:
        amplitudes = np.linspace(params["omega0_max"] / n_energies, params["omega0_max"], n_energies)
        widths = dip_width_scan(spec, amplitudes, _delay_grid(params), params["n_phase"], _integrator(params))
        paths.append(write_csv(out / "dip_width.csv", ["omega0_sq", "dip_fwhm_ps", "chirped_fwhm_ps"], widths))
    return paths


def _run_contrast(config: RunConfig, params: Dict[str, Any], out: Path) -> List[Path]:
    if config.revival:
        echo = EchoModelParams.from_ion(_ion(params), params["c0"], params["nbar"])
        taus = _tau_grid(params)
        contrast = echo_contrast(taus, echo)
        return [
            write_csv(out / "revival.csv", ["delay_us", "contrast"], zip(taus, np.atleast_1d(contrast))),
            write_json(out / "revival_model.json", echo.model_dump()),
        ]
    model = _autocorr_params(params)
    curve = autocorr_contrast_curve(model, _delay_grid(params), params["n_phase"],
                                    _integrator(params), params["phase_jitter_rad"])
    return [
        write_csv(out / "contrast.csv", ["delay_ps", "contrast", "background"], curve),
        write_json(out / "contrast_model.json", {**model.model_dump(), "phase_jitter_rms": params["phase_jitter_rad"],
                                                 "n_phase": params["n_phase"]}),
    ]


def _fit_config(params: Dict[str, Any]) -> FitConfig:
    return FitConfig(n_phase=params["n_phase"], integrator=_integrator(params),
                     max_nfev=params["fit_max_nfev"], phase_jitter_rms=params["phase_jitter_rad"])


def _require_input(config: RunConfig) -> Path:
    if config.input_path is None:
        raise ParameterError(f"command '{config.command}' requires --input")
    return Path(config.input_path)


def _run_fit(config: RunConfig, params: Dict[str, Any], out: Path) -> List[Path]:
    data = ingest_dataset(_require_input(config), "delay_ps")
    fixed = _fixed_names(params)
    unknown = [name for name in fixed if name not in FIT_PARAMETER_KEYS]
    if unknown:
        raise ConfigError(f"unknown fit parameter '{unknown[0]}' in fixed", key="fixed")
    try:
        result = fit_autocorrelation(data, _autocorr_params(params), fixed, _fit_config(params))
    except FitConvergenceError as e:
        if e.best is not None:
            write_json(out / "fit.json", e.best.model_dump())
        raise
    logger.info(f"拟合结果: σ={result.sigma:.4g} ps, D={result.gdd:.4g} ps², "
                f"FWHM={result.fwhm_chirped:.4g} ps, χ²={result.chi2_reduced:.3g}")
    return [write_json(out / "fit.json", result.model_dump())]


def _run_fit_revival(config: RunConfig, params: Dict[str, Any], out: Path) -> List[Path]:
    data = ingest_dataset(_require_input(config), "delay_us")
    init = EchoModelParams.from_ion(_ion(params), params["c0"], params["nbar"])
    fixed = _fixed_names(params) or ["eta_ld", "nu"]
    try:
        result = fit_contrast_revival(data, init, fixed, _fit_config(params))
    except FitConvergenceError as e:
        if e.best is not None:
            write_json(out / "revival_fit.json", e.best.model_dump())
        raise
    logger.info(f"复现拟合结果: C₀={result.c0:.4g}, n̄={result.nbar:.4g}")
    return [write_json(out / "revival_fit.json", result.model_dump())]


def _run_kick(config: RunConfig, params: Dict[str, Any], out: Path) -> List[Path]:
    report = kick_report(_ion(params), params["p_red"], params["p_blue"], params["n_cpp"], params["aligned_kicks"])
    print(json.dumps(report, indent=2, ensure_ascii=False))
    return [write_json(out / "kick.json", report)]


def _run_synth(config: RunConfig, params: Dict[str, Any], out: Path) -> List[Path]:
    if config.revival:
        echo = EchoModelParams.from_ion(_ion(params), params["c0"], params["nbar"])
        data = generate_synthetic_revival(echo, _tau_grid(params), params["noise_rms"], config.seed)
        return [write_dataset(out / "synthetic_revival.csv", data)]
    data = generate_synthetic(_autocorr_params(params), _delay_grid(params), params["noise_rms"],
                              config.seed, _fit_config(params))
    return [write_dataset(out / "synthetic.csv", data)]


PIPELINES: Dict[str, Callable[[RunConfig, Dict[str, Any], Path], List[Path]]] = {
    "pulse": _run_pulse,
    "rap-scan": _run_rap_scan,
    "autocorr": _run_autocorr,
    "contrast": _run_contrast,
    "fit": _run_fit,
    "fit-revival": _run_fit_revival,
    "kick": _run_kick,
    "synth": _run_synth,
}


def setup_logging(out_dir: Path, verbose: bool = False) -> None:
    """日志同时写入 <out>/ion_autocorr.log 与标准错误"""
    out_dir.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=Config.LOG_FORMAT,
        handlers=[
            logging.FileHandler(out_dir / Config.LOG_FILE_NAME, encoding="utf-8"),
            logging.StreamHandler()
        ],
        force=True,
    )


def run(config: RunConfig) -> int:
    """
    执行一条流水线

    参数:
        config: 运行描述

    返回:
        退出码：0 成功，1 校验错误，2 数值失败
    """
    out = Path(config.output_dir)
    try:
        setup_logging(out, config.verbose)
    except OSError as e:
        logging.getLogger(__name__).error(f"输出目录不可写: {out}: {e}")
        return 1

    logger.info(f"运行 {config.command}，输出目录 {out}")
    try:
        params = resolve_parameters(config)
        if config.seed is None:
            config = config.model_copy(update={"seed": _manifest_seed(config)})
        if config.command == "synth" and config.seed is None:
            # 未给种子时生成一个并记入清单
            config = config.model_copy(update={"seed": int(np.random.SeedSequence().entropy % 2 ** 32)})
            logger.info(f"未指定种子，使用 {config.seed}")
        inputs = {}
        if config.input_path is not None and Path(config.input_path).is_file():
            inputs[Path(config.input_path).name] = sha256_file(Path(config.input_path))

        outputs = PIPELINES[config.command](config, params, out)

        manifest = RunManifest(
            command=config.command,
            version=__version__,
            parameters=params,
            inputs=inputs,
            outputs=[p.name for p in outputs],
            seed=config.seed,
        )
        write_manifest(out, manifest)
        for path in outputs:
            print(path)
        return 0
    except ValidationError as e:
        logger.error(f"参数校验失败: {e}")
        return 1
    except IonAutocorrError as e:
        logger.error(f"{config.command} 失败: {e}", exc_info=config.verbose)
        return e.exit_code
    except OSError as e:
        logger.error(f"文件错误: {e}", exc_info=True)
        return 1
