"""
二能级含时薛定谔方程求解

- 单脉冲：在啁啾坐标系中积分 H_eff = -δ²τ/2·σ^z + Ω_D·w(τ)·σ^x
- 多脉冲（同一脉冲的若干副本，复权重叠加）：在载波旋转坐标系中积分
  H(t) = A(t)σ⁺ + A*(t)σ⁻，A(t) 为各副本包络之和
- 不重叠脉冲对的解析合成律 p₂ = 4cos²(φ/2)·p₁(1-p₁)

态矢量按 (c_S, c_P) 排列，σ^z = |P⟩⟨P| - |S⟩⟨S|，σ^x 取标准泡利矩阵。
积分器为 scipy 的自适应嵌入式 Runge-Kutta（默认 DOP853），可对一批独立成员
向量化积分；批次按固定大小切块，块之间可以并发执行，结果按索引合并。
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .config import Config
from .errors import IntegrationError, ParameterError
from .pulse import ChirpedPulse, PulseSpec, chirp_transform

logger = logging.getLogger(__name__)

# 超过该偏差的态被视为非法（正常积分结果远小于此）
NORM_TOLERANCE: float = 1e-6
# 超过该偏差时记录警告
NORM_WARN: float = 1e-8
# 低于该深度的干涉凹陷视为不存在
DIP_DEPTH_FLOOR: float = 1e-6


class TwoLevelState(BaseModel):
    """离子内态 c_S|S⟩ + c_P|P⟩"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    c_s: complex = 1.0 + 0.0j
    c_p: complex = 0.0j

    @model_validator(mode="after")
    def _check_norm(self) -> "TwoLevelState":
        if abs(self.norm - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"state is not normalized: |c_s|^2 + |c_p|^2 = {self.norm:.12g}")
        return self

    @property
    def norm(self) -> float:
        return abs(self.c_s) ** 2 + abs(self.c_p) ** 2

    @property
    def norm_drift(self) -> float:
        return abs(self.norm - 1.0)

    @classmethod
    def ground(cls) -> "TwoLevelState":
        return cls(c_s=1.0 + 0.0j, c_p=0.0j)

    @classmethod
    def excited(cls) -> "TwoLevelState":
        return cls(c_s=0.0j, c_p=1.0 + 0.0j)


class IntegratorConfig(BaseModel):
    """
    积分器配置

    t_span_sigmas 为积分窗口半宽（以 σ_D 为单位），chunk_size 为每个向量化批次
    包含的延迟点数。
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    rel_tol: float = Field(default=1e-9, gt=0.0, le=1e-3)
    abs_tol: float = Field(default=1e-11, gt=0.0, le=1e-3)
    t_span_sigmas: float = Field(default=6.0, ge=4.0)
    max_step: float = Field(default=math.inf, gt=0.0)
    method: str = "DOP853"
    chunk_size: int = Field(default=8, ge=1)

    @field_validator("method")
    @classmethod
    def _check_method(cls, value: str) -> str:
        if value not in ("DOP853", "RK45"):
            raise ValueError(f"unsupported integrator method: {value}")
        return value

    def halved(self) -> "IntegratorConfig":
        return self.model_copy(update={"rel_tol": self.rel_tol / 2})


class PulsePairConfig(BaseModel):
    """同一啁啾脉冲的两份拷贝，延迟 delay = center_b - center_a，相对相位 φ"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    pulse_a: ChirpedPulse
    pulse_b: ChirpedPulse
    delay: float
    relative_phase: float = 0.0

    @model_validator(mode="after")
    def _check_pair(self) -> "PulsePairConfig":
        a, b = self.pulse_a, self.pulse_b
        for name in ("sigma_d", "chirp_rate", "omega_d"):
            if not math.isclose(getattr(a, name), getattr(b, name), rel_tol=1e-12, abs_tol=1e-15):
                raise ValueError(f"asymmetric pulse pair: {name} differs ({getattr(a, name)} vs {getattr(b, name)})")
        if not math.isclose(b.center_time - a.center_time, self.delay, rel_tol=1e-12, abs_tol=1e-9):
            raise ValueError("delay does not match center_time_b - center_time_a")
        return self

    @classmethod
    def from_template(cls, pulse: ChirpedPulse, delay: float, relative_phase: float = 0.0) -> "PulsePairConfig":
        """以模板脉冲构造关于 t=0 对称放置的脉冲对"""
        return cls(
            pulse_a=pulse.shifted(-0.5 * delay),
            pulse_b=pulse.shifted(0.5 * delay),
            delay=delay,
            relative_phase=relative_phase,
        )


class ScanPoint(NamedTuple):
    omega0_sq: float
    p1: float
    p2: Optional[float] = None


class InterferenceProfile(NamedTuple):
    delays: Tuple[float, ...]
    p_return: Tuple[float, ...]
    dip_fwhm: float


class DipWidthPoint(NamedTuple):
    omega0_sq: float
    dip_fwhm: float
    chirped_fwhm: float


# ---------------------------------------------------------------------------
# 积分核心
# ---------------------------------------------------------------------------

def _solve(rhs: Callable, y0: np.ndarray, t_span: Tuple[float, float], cfg: IntegratorConfig) -> np.ndarray:
    sol = solve_ivp(rhs, t_span, y0, method=cfg.method, rtol=cfg.rel_tol,
                    atol=cfg.abs_tol, max_step=cfg.max_step)
    if not sol.success:
        last = float(sol.t[-1]) if sol.t.size else float(t_span[0])
        raise IntegrationError(f"integration failed: {sol.message}", last)
    return sol.y[:, -1]


def _split(y: np.ndarray, members: int) -> Tuple[np.ndarray, np.ndarray]:
    c_s, c_p = y[:members], y[members:]
    drift = np.max(np.abs(np.abs(c_s) ** 2 + np.abs(c_p) ** 2 - 1.0))
    if drift > NORM_WARN:
        logger.warning(f"积分后范数偏差 {drift:.3g} 超过 {NORM_WARN:g}，请收紧 rel_tol")
    return c_s, c_p


def _initial_vector(initial: TwoLevelState, members: int) -> np.ndarray:
    return np.concatenate([
        np.full(members, initial.c_s, dtype=complex),
        np.full(members, initial.c_p, dtype=complex),
    ])


def _final_state(c_s: complex, c_p: complex, cfg: IntegratorConfig, end_time: float) -> TwoLevelState:
    """
    把积分末端的振幅包装成 TwoLevelState

    范数偏差超过 max(NORM_TOLERANCE, abs_tol) 视为积分失败；未超过但大于
    NORM_TOLERANCE 时重新归一化。
    """
    norm = abs(c_s) ** 2 + abs(c_p) ** 2
    drift = abs(norm - 1.0)
    limit = max(NORM_TOLERANCE, cfg.abs_tol)
    if drift > limit:
        raise IntegrationError(
            f"norm drift {drift:.3g} exceeds {limit:.3g} at rel_tol={cfg.rel_tol:g}, abs_tol={cfg.abs_tol:g}",
            end_time)
    if drift > NORM_TOLERANCE:
        scale = 1.0 / math.sqrt(norm)
        c_s, c_p = c_s * scale, c_p * scale
    return TwoLevelState(c_s=c_s, c_p=c_p)


def _chirp_frame_batch(pulse: ChirpedPulse, omegas: np.ndarray, cfg: IntegratorConfig,
                       initial: TwoLevelState) -> Tuple[np.ndarray, np.ndarray]:
    """啁啾坐标系中对一组振幅 Ω_D 同时积分单脉冲"""
    omegas = np.asarray(omegas, dtype=float)
    members = omegas.size
    half_width = cfg.t_span_sigmas * pulse.sigma_d
    center = pulse.center_time
    inv_two_s2 = 0.5 / pulse.sigma_d ** 2
    half_chirp = 0.5 * pulse.chirp_rate

    def rhs(t, y):
        tau = t - center
        coupling = omegas * math.exp(-tau * tau * inv_two_s2)
        detuning = half_chirp * tau
        c_s, c_p = y[:members], y[members:]
        return np.concatenate([
            -1j * (detuning * c_s + coupling * c_p),
            -1j * (coupling * c_s - detuning * c_p),
        ])

    y = _solve(rhs, _initial_vector(initial, members), (center - half_width, center + half_width), cfg)
    return _split(y, members)


def _superposition_batch(pulse: ChirpedPulse, centers: np.ndarray, weights: np.ndarray,
                         cfg: IntegratorConfig, initial: TwoLevelState) -> Tuple[np.ndarray, np.ndarray]:
    """
    旋转坐标系中对一批成员同时积分

    第 m 个成员的驱动为 A_m(t) = Σ_k weights[m,k]·envelope(pulse, t - centers[m,k])。
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    weights = np.atleast_2d(np.asarray(weights, dtype=complex))
    if centers.shape != weights.shape:
        raise ParameterError(f"centers {centers.shape} and weights {weights.shape} must have the same shape")
    members = centers.shape[0]
    half_width = cfg.t_span_sigmas * pulse.sigma_d
    t_span = (float(centers.min()) - half_width, float(centers.max()) + half_width)

    amplitude = pulse.omega_d * np.exp(1j * pulse.carrier_phase) * weights
    gauss = 0.5 / pulse.sigma_d ** 2
    chirp = 0.5j * pulse.chirp_rate

    def rhs(t, y):
        tau = t - centers
        tau2 = tau * tau
        drive = np.sum(amplitude * np.exp(-gauss * tau2 - chirp * tau2), axis=1)
        c_s, c_p = y[:members], y[members:]
        return np.concatenate([-1j * np.conj(drive) * c_p, -1j * drive * c_s])

    y = _solve(rhs, _initial_vector(initial, members), t_span, cfg)
    return _split(y, members)


def _run_chunks(tasks: Sequence[Callable[[], Tuple[np.ndarray, np.ndarray]]]) -> List[Tuple[np.ndarray, np.ndarray]]:
    """并发执行互相独立的积分块，按提交顺序返回"""
    if len(tasks) <= 1 or Config.get_threads() <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=min(Config.get_threads(), len(tasks))) as pool:
        return list(pool.map(lambda task: task(), tasks))


def _chunks(items: Sequence, size: int) -> List[Sequence]:
    return [items[i:i + size] for i in range(0, len(items), size)]


def _phase_grid(n_phase: int) -> np.ndarray:
    if n_phase < 8:
        raise ParameterError(f"n_phase must be at least 8, got {n_phase}")
    return 2.0 * np.pi * np.arange(n_phase) / n_phase


def _probability(values: np.ndarray) -> np.ndarray:
    return np.clip(np.abs(values) ** 2, 0.0, 1.0)


# ---------------------------------------------------------------------------
# 公共操作
# ---------------------------------------------------------------------------

def propagate_single(pulse: ChirpedPulse, cfg: Optional[IntegratorConfig] = None,
                     initial: Optional[TwoLevelState] = None) -> TwoLevelState:
    """
    单个啁啾脉冲作用后的内态

    参数:
        pulse: 啁啾脉冲
        cfg: 积分器配置（默认容差 1e-9/1e-11）
        initial: 初态，默认 |S⟩

    返回:
        积分窗口 center_time ± t_span_sigmas·σ_D 末端的态（啁啾坐标系）
    """
    cfg = cfg or IntegratorConfig()
    initial = initial or TwoLevelState.ground()
    c_s, c_p = _chirp_frame_batch(pulse, np.array([pulse.omega_d]), cfg, initial)
    end_time = pulse.center_time + cfg.t_span_sigmas * pulse.sigma_d
    return _final_state(complex(c_s[0]), complex(c_p[0]), cfg, end_time)


def excitation_probability(state: TwoLevelState) -> float:
    """|c_P|²，截断到 [0, 1]"""
    return min(1.0, max(0.0, abs(state.c_p) ** 2))


def compose_nonoverlapping(p1: float, phi: float) -> float:
    """
    两个不重叠脉冲的残余激发概率 p₂ = 4cos²(φ/2)·p₁(1-p₁)

    φ 是两次作用之间的总相对相位（包含单脉冲的动力学相位 2·arg⟨S|U|S⟩）。
    """
    if not 0.0 <= p1 <= 1.0:
        raise ParameterError(f"p1 must lie in [0, 1], got {p1}")
    return min(1.0, max(0.0, 4.0 * math.cos(0.5 * phi) ** 2 * p1 * (1.0 - p1)))


def propagate_superposition(pulse: ChirpedPulse, centers: Sequence[float], weights: Sequence[complex],
                            cfg: Optional[IntegratorConfig] = None,
                            initial: Optional[TwoLevelState] = None) -> TwoLevelState:
    """
    同一脉冲若干副本的相干叠加驱动

    centers 为各副本的到达时间，weights 为各副本的复权重；pulse.center_time 被忽略。
    """
    cfg = cfg or IntegratorConfig()
    initial = initial or TwoLevelState.ground()
    c_s, c_p = _superposition_batch(pulse, np.array([centers], dtype=float),
                                    np.array([weights], dtype=complex), cfg, initial)
    end_time = max(float(c) for c in centers) + cfg.t_span_sigmas * pulse.sigma_d
    return _final_state(complex(c_s[0]), complex(c_p[0]), cfg, end_time)


def propagate_pair(pair: PulsePairConfig, cfg: Optional[IntegratorConfig] = None,
                   initial: Optional[TwoLevelState] = None) -> TwoLevelState:
    """
    两个可能重叠的反向传播脉冲，在载波旋转坐标系中积分完整哈密顿量

    relative_phase 即 φ_b - φ_a，不再叠加 pulse_b 自身的 carrier_phase；
    pulse_a 的 carrier_phase 只贡献公共相位。
    """
    a, b = pair.pulse_a, pair.pulse_b
    weight_b = np.exp(1j * pair.relative_phase)
    return propagate_superposition(a, [a.center_time, b.center_time], [1.0, weight_b], cfg, initial)


def _return_probabilities(pulse: ChirpedPulse, delays: Sequence[float], phases: np.ndarray,
                          cfg: IntegratorConfig, initial: TwoLevelState,
                          scales: Optional[Sequence[float]] = None) -> np.ndarray:
    """
    对每个 (延迟, 相位) 成员积分脉冲对，返回形状 (len(delays), len(phases)) 的 |c_S|²

    scales 给出每个延迟点的振幅缩放（能量扫描用），默认为 1。
    """
    delays = np.asarray(delays, dtype=float)
    scales = np.ones_like(delays) if scales is None else np.asarray(scales, dtype=float)
    n_phase = phases.size
    phase_weights = np.exp(1j * phases)

    def make_task(index: np.ndarray):
        chunk_delays = np.repeat(delays[index], n_phase)
        chunk_scales = np.repeat(scales[index], n_phase)
        centers = np.stack([-0.5 * chunk_delays, 0.5 * chunk_delays], axis=1)
        weights = np.stack([chunk_scales + 0j, chunk_scales * np.tile(phase_weights, index.size)], axis=1)
        return lambda: _superposition_batch(pulse, centers, weights, cfg, initial)

    indices = np.arange(delays.size)
    tasks = [make_task(np.asarray(chunk)) for chunk in _chunks(indices, cfg.chunk_size)]
    results = _run_chunks(tasks)
    c_s = np.concatenate([r[0] for r in results]) if results else np.zeros(0, dtype=complex)
    return _probability(c_s).reshape(delays.size, n_phase)


def phase_averaged_return(pulse: ChirpedPulse, delay: float, n_phase: int = 16,
                          cfg: Optional[IntegratorConfig] = None,
                          initial: Optional[TwoLevelState] = None) -> float:
    """
    对相对相位 φ_k = 2πk/n_phase 取平均的 |S⟩ 回复概率

    确定性均匀求积，不使用随机数。
    """
    cfg = cfg or IntegratorConfig()
    initial = initial or TwoLevelState.ground()
    probabilities = _return_probabilities(pulse, [delay], _phase_grid(n_phase), cfg, initial)
    return float(probabilities.mean())


def profile_dip_fwhm(delays: Sequence[float], values: Sequence[float]) -> float:
    """
    干涉曲线凹陷的半高全宽

    以两端较高者为平台、最小值为谷底，在谷底两侧线性插值半深度交点；
    只找到一侧时按偶对称加倍，找不到或凹陷太浅时返回 nan。
    """
    d = np.asarray(delays, dtype=float)
    v = np.asarray(values, dtype=float)
    if d.size < 3:
        return math.nan
    order = np.argsort(d)
    d, v = d[order], v[order]
    i_min = int(np.argmin(v))
    depth = max(v[0], v[-1]) - v[i_min]
    if not np.isfinite(depth) or depth < DIP_DEPTH_FLOOR:
        return math.nan
    half = v[i_min] + 0.5 * depth

    def crossing(xs: np.ndarray, ys: np.ndarray) -> Optional[float]:
        for k in range(1, xs.size):
            if ys[k] >= half:
                x0, x1, y0, y1 = xs[k - 1], xs[k], ys[k - 1], ys[k]
                if y1 == y0:
                    return float(x1)
                return float(x0 + (half - y0) * (x1 - x0) / (y1 - y0))
        return None

    right = crossing(d[i_min:], v[i_min:])
    left = crossing(d[:i_min + 1][::-1], v[:i_min + 1][::-1])
    if right is not None and left is not None:
        return right - left
    one_side = right if right is not None else left
    if one_side is None:
        return math.nan
    return 2.0 * abs(one_side - d[i_min])


def interference_profile(pulse: ChirpedPulse, delays: Sequence[float], n_phase: int = 16,
                         cfg: Optional[IntegratorConfig] = None,
                         initial: Optional[TwoLevelState] = None) -> InterferenceProfile:
    """
    相位平均回复概率随到达时间差 T_d 的变化，并给出凹陷半高全宽

    各延迟点互相独立，按 cfg.chunk_size 切块向量化积分，块之间可并发。
    """
    cfg = cfg or IntegratorConfig()
    initial = initial or TwoLevelState.ground()
    phases = _phase_grid(n_phase)
    delays = [float(d) for d in delays]
    logger.debug(f"计算干涉曲线: {len(delays)} 个延迟点 × {n_phase} 个相位")
    p_return = _return_probabilities(pulse, delays, phases, cfg, initial).mean(axis=1)
    values = tuple(float(p) for p in p_return)
    return InterferenceProfile(delays=tuple(delays), p_return=values,
                               dip_fwhm=profile_dip_fwhm(delays, values))


def _omega_scale(spec: PulseSpec) -> float:
    return (spec.sigma ** 4 + spec.gdd ** 2) ** 0.25


def _check_ascending(amplitudes: Sequence[float]) -> np.ndarray:
    values = np.asarray(amplitudes, dtype=float)
    if values.size and (np.any(np.diff(values) < 0) or values[0] < 0):
        raise ParameterError("amplitudes must be non-negative and sorted ascending")
    return values


def energy_scan(spec: PulseSpec, amplitudes: Sequence[float], cfg: Optional[IntegratorConfig] = None,
                pair_delay: Optional[float] = None, n_phase: int = 16) -> List[ScanPoint]:
    """
    单脉冲激发概率随场振幅 Ω₀ 的扫描

    参数:
        spec: 脉冲定义（其 omega0 被扫描值替代）
        amplitudes: 升序的 Ω₀ 列表
        cfg: 积分器配置
        pair_delay: 若给出，同时计算该延迟下相位平均的双脉冲激发概率
        n_phase: 双脉冲相位平均的点数

    返回:
        ScanPoint 列表 (Ω₀², p₁, p₂)；积分失败的点记为 nan，扫描不中断
    """
    cfg = cfg or IntegratorConfig()
    values = _check_ascending(amplitudes)
    template = chirp_transform(spec.model_copy(update={"omega0": 1.0}))
    omegas = values / _omega_scale(spec)
    ground = TwoLevelState.ground()

    p1 = np.full(values.size, math.nan)
    for chunk in _chunks(np.arange(values.size), cfg.chunk_size):
        chunk = np.asarray(chunk)
        try:
            _, c_p = _chirp_frame_batch(template, omegas[chunk], cfg, ground)
            p1[chunk] = _probability(c_p)
        except IntegrationError:
            for index in chunk:
                try:
                    _, c_p = _chirp_frame_batch(template, omegas[[index]], cfg, ground)
                    p1[index] = _probability(c_p)[0]
                except IntegrationError as e:
                    logger.warning(f"Ω₀={values[index]:.6g} 的单脉冲积分失败: {e}")

    p2: List[Optional[float]] = [None] * values.size
    if pair_delay is not None:
        phases = _phase_grid(n_phase)
        for index in range(values.size):
            try:
                back = _return_probabilities(template, [pair_delay], phases, cfg, ground,
                                             scales=[values[index]])
                p2[index] = float(1.0 - back.mean())
            except IntegrationError as e:
                logger.warning(f"Ω₀={values[index]:.6g} 的双脉冲积分失败: {e}")
                p2[index] = math.nan

    logger.info(f"能量扫描完成: {values.size} 个振幅点")
    return [ScanPoint(float(a * a), float(p), p2[i]) for i, (a, p) in enumerate(zip(values, p1))]


def solve_amplitude(spec: PulseSpec, target_p1: float, cfg: Optional[IntegratorConfig] = None,
                    omega0_max: Optional[float] = None, grid_points: int = 48) -> float:
    """
    求使单脉冲激发概率等于 target_p1 的最小场振幅 Ω₀

    先在 [0, omega0_max] 粗扫定位第一个跨越区间，再用 brentq 精化。
    """
    if not 0.0 < target_p1 < 1.0:
        raise ParameterError(f"target_p1 must lie in (0, 1), got {target_p1}")
    cfg = cfg or IntegratorConfig()
    scale = _omega_scale(spec)
    template = chirp_transform(spec.model_copy(update={"omega0": 1.0}))
    if omega0_max is None:
        # 等效面积约 4π 的振幅，足以越过 RAP 阈值
        omega0_max = 4.0 * math.pi / (template.sigma_d * math.sqrt(2.0 * math.pi)) * scale

    grid = np.linspace(0.0, omega0_max, grid_points)
    _, c_p = _chirp_frame_batch(template, grid / scale, cfg, TwoLevelState.ground())
    excess = _probability(c_p) - target_p1
    crossings = np.nonzero(np.diff(np.sign(excess)) > 0)[0]
    if crossings.size == 0:
        raise ParameterError(f"p1 = {target_p1} is not reached below omega0 = {omega0_max:.6g}")
    lo, hi = grid[crossings[0]], grid[crossings[0] + 1]

    def residual(omega0: float) -> float:
        pulse = template.scaled(omega0)
        return excitation_probability(propagate_single(pulse, cfg)) - target_p1

    return float(brentq(residual, lo, hi, xtol=1e-12, rtol=1e-12))


def dip_width_scan(spec: PulseSpec, amplitudes: Sequence[float], delays: Sequence[float],
                   n_phase: int = 16, cfg: Optional[IntegratorConfig] = None) -> List[DipWidthPoint]:
    """干涉凹陷半高全宽随脉冲能量的变化，同时给出啁啾脉冲本身的半高全宽"""
    cfg = cfg or IntegratorConfig()
    values = _check_ascending(amplitudes)
    rows = []
    for omega0 in values:
        pulse = chirp_transform(spec.model_copy(update={"omega0": float(omega0)}))
        profile = interference_profile(pulse, delays, n_phase, cfg)
        rows.append(DipWidthPoint(float(omega0 ** 2), profile.dip_fwhm, pulse.fwhm))
        logger.info(f"Ω₀={omega0:.4g}: 凹陷 FWHM {profile.dip_fwhm:.4g} ps，脉冲 FWHM {pulse.fwhm:.4g} ps")
    return rows
