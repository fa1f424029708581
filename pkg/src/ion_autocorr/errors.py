"""Exception hierarchy for ion_autocorr.

验证类错误（参数越界、数据集格式、配置键）对应 CLI 退出码 1，
数值失败（积分失败、拟合不收敛、退化估计量）对应退出码 2。
"""

from typing import Any, Optional


class IonAutocorrError(Exception):
    """所有库异常的基类"""

    exit_code: int = 1


class ParameterError(IonAutocorrError, ValueError):
    """参数违反前置条件或越界"""


class ConfigError(IonAutocorrError, ValueError):
    """未知或非法的配置键"""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class DatasetError(IonAutocorrError, ValueError):
    """数据集文件格式错误，尽量携带行号和列名"""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[str] = None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.line = line
        self.column = column


class NumericalError(IonAutocorrError):
    """数值计算失败"""

    exit_code = 2


class IntegrationError(NumericalError):
    """自适应积分失败（步长下溢等）"""

    def __init__(self, message: str, last_time: float):
        super().__init__(f"{message} (last good time {last_time:.6g} ps)")
        self.last_time = last_time


class FitConvergenceError(NumericalError):
    """拟合在最大迭代次数内未收敛，携带目前最优结果"""

    def __init__(self, message: str, best: Any = None):
        super().__init__(message)
        self.best = best


class UnderdeterminedError(NumericalError):
    """数据点数不超过自由参数个数"""


class EstimatorError(NumericalError):
    """边带测温估计量退化（p_blue <= p_red）"""
