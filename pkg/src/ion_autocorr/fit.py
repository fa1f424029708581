"""
参数反演：从对比度-延迟数据恢复脉冲参数

- fit_autocorrelation: 拟合强度 I、未啁啾宽度 σ、GDD D 与对比度缩放（可冻结任意子集）
- fit_contrast_revival: 由 CPP 间隔扫描拟合 C₀ 与 n̄
- generate_synthetic / generate_synthetic_revival: 前向模型 + 带种子的高斯噪声

优化器为 scipy.optimize.least_squares（有界信赖域反射法，只接受使 χ² 下降的步）。
误差棒由 χ² 在最优点的有限差分 Hessian 给出，Hessian 条件数过大时在结果中
标记 ill_conditioned 并给出警告，不会静默成功。
"""

import logging
import math
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import least_squares

from .contrast import AutocorrParams, EchoModelParams, contrast_from_return, echo_contrast, revival_curve
from .dynamics import IntegratorConfig, TwoLevelState, _phase_grid, _return_probabilities, profile_dip_fwhm
from .errors import FitConvergenceError, ParameterError, UnderdeterminedError
from .pulse import FWHM_FACTOR, chirp_transform, fwhm_stretch, spec_from_intensity

logger = logging.getLogger(__name__)

AUTOCORR_PARAMS: Tuple[str, ...] = ("intensity", "sigma", "gdd", "contrast_scale")
AUTOCORR_BOUNDS: Dict[str, Tuple[float, float]] = {
    "intensity": (1e-8, 100.0),
    "sigma": (0.2, 10.0),
    "gdd": (-30.0, 30.0),
    "contrast_scale": (0.0, 1.0),
}

REVIVAL_PARAMS: Tuple[str, ...] = ("c0", "nbar", "eta_ld", "nu")
REVIVAL_BOUNDS: Dict[str, Tuple[float, float]] = {
    "c0": (0.0, 1.0),
    "nbar": (0.0, 1e4),
    "eta_ld": (0.0, 1.0),
    "nu": (1e-6, 1e3),
}

# 噪声为零时合成数据使用的名义误差
NOMINAL_SIGMA_ERR: float = 0.01
MIN_POINTS: int = 8


class DataPoint(NamedTuple):
    delay: float
    contrast: float
    sigma_err: float


class AutocorrDataset(BaseModel):
    """
    (延迟, 对比度, 误差) 数据点

    自相关数据的延迟单位为 ps，CPP 间隔扫描数据为 µs，由 delay_unit 记录。
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    points: Tuple[DataPoint, ...]
    delay_unit: str = "ps"
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _check_points(self) -> "AutocorrDataset":
        if len(self.points) < MIN_POINTS:
            raise ValueError(f"dataset needs at least {MIN_POINTS} points, got {len(self.points)}")
        for i, point in enumerate(self.points):
            if not all(math.isfinite(v) for v in point):
                raise ValueError(f"point {i} has non-finite values")
            if point.sigma_err <= 0:
                raise ValueError(f"point {i} has non-positive sigma_err {point.sigma_err}")
            if not 0.0 <= point.contrast <= 1.0:
                raise ValueError(f"point {i} has contrast {point.contrast} outside [0, 1]")
            if i and point.delay <= self.points[i - 1].delay:
                raise ValueError(f"delays must be strictly increasing (point {i})")
        return self

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.delay for p in self.points])

    @property
    def contrasts(self) -> np.ndarray:
        return np.array([p.contrast for p in self.points])

    @property
    def errors(self) -> np.ndarray:
        return np.array([p.sigma_err for p in self.points])

    def __len__(self) -> int:
        return len(self.points)


class FitConfig(BaseModel):
    """拟合配置：相位平均点数、积分器、优化器与 Hessian 步长"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_phase: int = Field(default=16, ge=8)
    integrator: IntegratorConfig = IntegratorConfig()
    max_nfev: int = Field(default=200, ge=1)
    diff_step: float = Field(default=1e-3, gt=0.0)
    hessian_step: float = Field(default=1e-3, gt=0.0)
    condition_limit: float = Field(default=1e8, gt=1.0)
    phase_jitter_rms: float = Field(default=0.0, ge=0.0)
    memo_digits: int = Field(default=6, ge=1)


class FitResult(BaseModel):
    """自相关拟合结果"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    intensity: float
    sigma: float = Field(gt=0.0)
    gdd: float
    contrast_scale: float = Field(ge=0.0, le=1.0)
    chi2_reduced: float
    fwhm_chirped: float
    fwhm_profile: Optional[float] = None
    param_errors: Dict[str, float]
    fixed_mask: Dict[str, bool]
    condition_number: float
    ill_conditioned: bool = False
    warnings: List[str] = []
    converged: bool = True
    n_points: int
    n_free: int
    nfev: int = 0
    seed: Optional[int] = None
    curve: List[Tuple[float, float]] = []

    @model_validator(mode="after")
    def _check_fwhm(self) -> "FitResult":
        expected = fwhm_stretch(FWHM_FACTOR * self.sigma, self.gdd)
        if not math.isclose(self.fwhm_chirped, expected, rel_tol=1e-9):
            raise ValueError(f"fwhm_chirped {self.fwhm_chirped} inconsistent with (sigma, gdd) -> {expected}")
        return self

    def params(self) -> AutocorrParams:
        return AutocorrParams(intensity=self.intensity, sigma=self.sigma, gdd=self.gdd,
                              contrast_scale=self.contrast_scale)


class RevivalFitResult(BaseModel):
    """CPP 间隔扫描拟合结果"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    c0: float
    nbar: float
    eta_ld: float
    nu: float
    chi2_reduced: float
    param_errors: Dict[str, float]
    fixed_mask: Dict[str, bool]
    condition_number: float
    ill_conditioned: bool = False
    warnings: List[str] = []
    converged: bool = True
    n_points: int
    n_free: int
    nfev: int = 0
    seed: Optional[int] = None
    curve: List[Tuple[float, float]] = []

    def params(self) -> EchoModelParams:
        return EchoModelParams(c0=self.c0, nbar=self.nbar, eta_ld=self.eta_ld, nu=self.nu)


def chi_squared(model_curve: Sequence[float], data: AutocorrDataset, n_free: int = 0) -> float:
    """
    约化 χ² = Σ((model - y)/σ_err)² / (N - k)

    参数:
        model_curve: 在每个数据延迟处求值的模型
        data: 数据集
        n_free: 自由参数个数 k
    """
    model = np.asarray(model_curve, dtype=float)
    if model.shape != (len(data),):
        raise ParameterError(f"model has {model.size} values but dataset has {len(data)} points")
    dof = len(data) - n_free
    if dof <= 0:
        raise UnderdeterminedError(f"{len(data)} points cannot constrain {n_free} free parameters")
    residuals = (model - data.contrasts) / data.errors
    return float(np.sum(residuals ** 2) / dof)


class ForwardModel:
    """
    自相关前向模型，按 (I, σ, D) 舍入到 memo_digits 位缓存回复概率

    contrast_scale 的变化只需重新缩放，不触发积分。实例不在并发拟合之间共享。
    """

    def __init__(self, delays: Sequence[float], config: FitConfig, wavelength: float = 393.0):
        self.delays = [float(d) for d in delays]
        self.config = config
        self.wavelength = wavelength
        self.phases = _phase_grid(config.n_phase)
        self._cache: Dict[Tuple[float, float, float], np.ndarray] = {}
        self.evaluations = 0

    def p_return(self, intensity: float, sigma: float, gdd: float) -> np.ndarray:
        digits = self.config.memo_digits
        key = (round(intensity, digits), round(sigma, digits), round(gdd, digits))
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        pulse = chirp_transform(spec_from_intensity(max(intensity, 0.0), sigma, gdd, self.wavelength))
        values = _return_probabilities(pulse, self.delays, self.phases, self.config.integrator,
                                       TwoLevelState.ground()).mean(axis=1)
        self._cache[key] = values
        self.evaluations += 1
        logger.debug(f"前向模型求值 #{self.evaluations}: I={intensity:.6g}, σ={sigma:.6g}, D={gdd:.6g}")
        return values

    def contrast(self, intensity: float, sigma: float, gdd: float, scale: float) -> np.ndarray:
        return contrast_from_return(self.p_return(intensity, sigma, gdd), scale, self.config.phase_jitter_rms)


def _split_fixed(names: Tuple[str, ...], fixed: Sequence[str]) -> Tuple[Dict[str, bool], List[str]]:
    unknown = set(fixed) - set(names)
    if unknown:
        raise ParameterError(f"unknown fit parameter(s): {', '.join(sorted(unknown))}")
    mask = {name: name in fixed for name in names}
    return mask, [name for name in names if not mask[name]]


def _check_bounds(values: Dict[str, float], bounds: Dict[str, Tuple[float, float]]) -> None:
    for name, (lo, hi) in bounds.items():
        if not lo <= values[name] <= hi:
            raise ParameterError(f"initial {name}={values[name]} outside bounds [{lo}, {hi}]")


def _hessian(objective: Callable[[np.ndarray], float], x: np.ndarray, step: float) -> np.ndarray:
    """χ² 的中心差分 Hessian，每个参数取相对步长 step"""
    n = x.size
    h = np.where(np.abs(x) > 1e-8, step * np.abs(x), step)
    f0 = objective(x)
    hess = np.zeros((n, n))
    for i in range(n):
        e_i = np.zeros(n)
        e_i[i] = h[i]
        hess[i, i] = (objective(x + e_i) - 2.0 * f0 + objective(x - e_i)) / h[i] ** 2
        for j in range(i + 1, n):
            e_j = np.zeros(n)
            e_j[j] = h[j]
            value = (objective(x + e_i + e_j) - objective(x + e_i - e_j)
                     - objective(x - e_i + e_j) + objective(x - e_i - e_j)) / (4.0 * h[i] * h[j])
            hess[i, j] = hess[j, i] = value
    return hess


def _error_bars(hess: np.ndarray, free: List[str], limit: float) -> Tuple[Dict[str, float], float, List[str]]:
    """由 Hessian 得到 1σ 误差（协方差 = 2·H⁻¹）与条件数"""
    warnings: List[str] = []
    if hess.size == 0:
        return {}, 1.0, warnings
    try:
        condition = float(np.linalg.cond(hess))
    except np.linalg.LinAlgError:
        condition = math.inf
    if not math.isfinite(condition):
        condition = math.inf
    covariance = 2.0 * np.linalg.pinv(hess)
    errors = {}
    for k, name in enumerate(free):
        variance = covariance[k, k]
        errors[name] = math.sqrt(variance) if variance > 0 and math.isfinite(condition) else math.nan
    if condition > limit:
        warnings.append(f"Hessian 条件数 {condition:.3g} 超过 {limit:.3g}：自由参数之间存在简并，误差棒不可信")
    if any(math.isnan(v) for v in errors.values()):
        warnings.append("部分参数的方差非正：该方向上 χ² 平坦，参数不可辨识")
    return errors, condition, warnings


def fit_autocorrelation(data: AutocorrDataset, init: AutocorrParams, fixed: Sequence[str] = (),
                        config: Optional[FitConfig] = None) -> FitResult:
    """
    对自相关数据做非线性最小二乘拟合

    参数:
        data: 对比度-延迟数据 (ps)
        init: 初始猜测（也提供被冻结参数的取值）
        fixed: 冻结的参数名，取自 intensity、sigma、gdd、contrast_scale
        config: 拟合配置

    返回:
        FitResult；不收敛时抛出 FitConvergenceError，其 best 属性为目前最优结果
    """
    config = config or FitConfig()
    mask, free = _split_fixed(AUTOCORR_PARAMS, fixed)
    values = {name: float(getattr(init, name)) for name in AUTOCORR_PARAMS}
    _check_bounds(values, AUTOCORR_BOUNDS)
    if len(data) <= len(free):
        raise UnderdeterminedError(f"{len(data)} points cannot constrain {len(free)} free parameters")

    model = ForwardModel(data.delays, config, init.wavelength)
    y, err = data.contrasts, data.errors

    def unpack(x: np.ndarray) -> Dict[str, float]:
        current = dict(values)
        current.update(zip(free, (float(v) for v in x)))
        return current

    def curve_of(current: Dict[str, float]) -> np.ndarray:
        return model.contrast(current["intensity"], current["sigma"], current["gdd"], current["contrast_scale"])

    def residuals(x: np.ndarray) -> np.ndarray:
        return (curve_of(unpack(x)) - y) / err

    def objective(x: np.ndarray) -> float:
        return float(np.sum(residuals(x) ** 2))

    logger.info(f"开始自相关拟合: {len(data)} 个数据点，自由参数 {free}")
    converged = True
    nfev = 0
    if not free:
        x_best = np.zeros(0)
    elif free == ["contrast_scale"]:
        # 只有缩放自由时是线性子问题
        shape = contrast_from_return(model.p_return(values["intensity"], values["sigma"], values["gdd"]),
                                     1.0, config.phase_jitter_rms)
        weight = 1.0 / err ** 2
        denominator = float(np.sum(weight * shape ** 2))
        scale = float(np.sum(weight * shape * y)) / denominator if denominator > 0 else 0.0
        x_best = np.array([min(1.0, max(0.0, scale))])
        nfev = 1
    else:
        x0 = np.array([values[name] for name in free])
        lower = np.array([AUTOCORR_BOUNDS[name][0] for name in free])
        upper = np.array([AUTOCORR_BOUNDS[name][1] for name in free])
        solution = least_squares(residuals, x0, bounds=(lower, upper), method="trf", x_scale="jac",
                                 diff_step=config.diff_step, max_nfev=config.max_nfev)
        x_best = solution.x
        nfev = int(solution.nfev)
        converged = solution.status > 0
        logger.info(f"优化结束: status={solution.status}, nfev={nfev}, {solution.message}")

    result = _build_autocorr_result(data, model, unpack(x_best), mask, free, x_best, objective,
                                    config, converged, nfev, curve_of)
    if not converged:
        raise FitConvergenceError(f"fit did not converge within {config.max_nfev} evaluations", best=result)
    return result


def _build_autocorr_result(data: AutocorrDataset, model: ForwardModel, best: Dict[str, float],
                           mask: Dict[str, bool], free: List[str], x_best: np.ndarray,
                           objective: Callable[[np.ndarray], float], config: FitConfig,
                           converged: bool, nfev: int, curve_of: Callable) -> FitResult:
    curve = curve_of(best)
    chi2 = chi_squared(curve, data, len(free))
    hess = _hessian(objective, x_best, config.hessian_step) if free else np.zeros((0, 0))
    errors, condition, warnings = _error_bars(hess, free, config.condition_limit)
    for name in AUTOCORR_PARAMS:
        if mask[name]:
            errors[name] = 0.0
    for message in warnings:
        logger.warning(message)

    p_return = model.p_return(best["intensity"], best["sigma"], best["gdd"])
    dip = profile_dip_fwhm(model.delays, p_return)
    sigma = best["sigma"]
    return FitResult(
        intensity=best["intensity"],
        sigma=sigma,
        gdd=best["gdd"],
        contrast_scale=min(1.0, max(0.0, best["contrast_scale"])),
        chi2_reduced=chi2,
        fwhm_chirped=fwhm_stretch(FWHM_FACTOR * sigma, best["gdd"]),
        fwhm_profile=None if math.isnan(dip) else dip,
        param_errors=errors,
        fixed_mask=mask,
        condition_number=condition,
        ill_conditioned=bool(warnings),
        warnings=warnings,
        converged=converged,
        n_points=len(data),
        n_free=len(free),
        nfev=nfev,
        seed=data.seed,
        curve=[(float(d), float(c)) for d, c in zip(model.delays, curve)],
    )


def _noisy_dataset(delays: np.ndarray, clean: np.ndarray, noise_rms: float, seed: Optional[int],
                   delay_unit: str, sigma_err: Optional[float]) -> AutocorrDataset:
    if noise_rms < 0:
        raise ParameterError(f"noise_rms must be non-negative, got {noise_rms}")
    rng = np.random.default_rng(seed)
    noisy = np.clip(clean + noise_rms * rng.standard_normal(clean.size), 0.0, 1.0)
    err = sigma_err if sigma_err is not None else (noise_rms if noise_rms > 0 else NOMINAL_SIGMA_ERR)
    points = tuple(DataPoint(float(d), float(c), float(err)) for d, c in zip(delays, noisy))
    return AutocorrDataset(points=points, delay_unit=delay_unit, seed=seed)


def generate_synthetic(truth: AutocorrParams, delays: Sequence[float], noise_rms: float = 0.0,
                       seed: Optional[int] = None, config: Optional[FitConfig] = None,
                       sigma_err: Optional[float] = None) -> AutocorrDataset:
    """
    前向模型加同方差高斯噪声生成自相关数据

    种子写入数据集以便复现；noise_rms=0 时数据点精确落在前向模型上。
    """
    config = config or FitConfig()
    grid = np.asarray(sorted(float(d) for d in delays))
    model = ForwardModel(grid, config, truth.wavelength)
    clean = model.contrast(truth.intensity, truth.sigma, truth.gdd, truth.contrast_scale)
    logger.info(f"生成合成自相关数据: {grid.size} 个延迟点，噪声 {noise_rms:g}，种子 {seed}")
    return _noisy_dataset(grid, clean, noise_rms, seed, "ps", sigma_err)


def generate_synthetic_revival(truth: EchoModelParams, taus: Sequence[float], noise_rms: float = 0.0,
                               seed: Optional[int] = None, sigma_err: Optional[float] = None) -> AutocorrDataset:
    """由 C(τ_d) 闭式加噪声生成 CPP 间隔扫描数据 (µs)"""
    grid = np.asarray(sorted(float(t) for t in taus))
    clean = np.asarray(echo_contrast(grid, truth), dtype=float)
    return _noisy_dataset(grid, clean, noise_rms, seed, "us", sigma_err)


def fit_contrast_revival(data: AutocorrDataset, init: EchoModelParams,
                         fixed: Sequence[str] = ("eta_ld", "nu"),
                         config: Optional[FitConfig] = None) -> RevivalFitResult:
    """
    用 C(τ_d) 拟合 CPP 间隔扫描数据，默认只放开 C₀ 与 n̄

    收敛约定与 fit_autocorrelation 相同。η = 0 时 n̄ 不可辨识，结果会被标记为病态。
    """
    config = config or FitConfig()
    mask, free = _split_fixed(REVIVAL_PARAMS, fixed)
    values = {name: float(getattr(init, name)) for name in REVIVAL_PARAMS}
    _check_bounds(values, REVIVAL_BOUNDS)
    if len(data) <= len(free):
        raise UnderdeterminedError(f"{len(data)} points cannot constrain {len(free)} free parameters")

    taus, y, err = data.delays, data.contrasts, data.errors

    def unpack(x: np.ndarray) -> Dict[str, float]:
        current = dict(values)
        current.update(zip(free, (float(v) for v in x)))
        return current

    def curve_of(current: Dict[str, float]) -> np.ndarray:
        return revival_curve(taus, current["c0"], current["nbar"], current["eta_ld"], current["nu"])

    def residuals(x: np.ndarray) -> np.ndarray:
        return (curve_of(unpack(x)) - y) / err

    def objective(x: np.ndarray) -> float:
        return float(np.sum(residuals(x) ** 2))

    logger.info(f"开始对比度复现拟合: {len(data)} 个数据点，自由参数 {free}")
    converged = True
    nfev = 0
    x_best = np.zeros(0)
    if free:
        x0 = np.array([values[name] for name in free])
        lower = np.array([REVIVAL_BOUNDS[name][0] for name in free])
        upper = np.array([REVIVAL_BOUNDS[name][1] for name in free])
        solution = least_squares(residuals, x0, bounds=(lower, upper), method="trf", x_scale="jac",
                                 max_nfev=config.max_nfev)
        x_best = solution.x
        nfev = int(solution.nfev)
        converged = solution.status > 0

    best = unpack(x_best)
    curve = curve_of(best)
    hess = _hessian(objective, x_best, config.hessian_step) if free else np.zeros((0, 0))
    errors, condition, warnings = _error_bars(hess, free, config.condition_limit)
    for name in REVIVAL_PARAMS:
        if mask[name]:
            errors[name] = 0.0
    for message in warnings:
        logger.warning(message)

    result = RevivalFitResult(
        c0=best["c0"],
        nbar=best["nbar"],
        eta_ld=best["eta_ld"],
        nu=best["nu"],
        chi2_reduced=chi_squared(curve, data, len(free)),
        param_errors=errors,
        fixed_mask=mask,
        condition_number=condition,
        ill_conditioned=bool(warnings),
        warnings=warnings,
        converged=converged,
        n_points=len(data),
        n_free=len(free),
        nfev=nfev,
        seed=data.seed,
        curve=[(float(t), float(c)) for t, c in zip(taus, curve)],
    )
    if not converged:
        raise FitConvergenceError(f"revival fit did not converge within {config.max_nfev} evaluations", best=result)
    return result
