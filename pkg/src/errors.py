"""
异常定义 - 历史匹配各模块共用的错误类型
"""


class HistoryMatchingError(Exception):
    """所有历史匹配错误的基类"""


class ConfigError(HistoryMatchingError):
    """运行配置错误"""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"配置项 {field}: {message}")


class GpFitError(HistoryMatchingError):
    """高斯过程拟合失败"""


class KdeError(HistoryMatchingError):
    """核密度估计错误"""


class DegenerateMarginalError(KdeError):
    """某一维的粒子取值过少, 无法拟合边缘分布"""

    def __init__(self, dimension: int):
        self.dimension = dimension
        super().__init__(f"第 {dimension} 维至少需要2个不同取值")


class KdeInversionError(KdeError):
    """分位数求根未收敛"""

    def __init__(self, dimension: int, residual: float):
        self.dimension = dimension
        self.residual = residual
        super().__init__(f"第 {dimension} 维分位数求根未收敛, 残差 {residual:.3e}")


class ProposalError(HistoryMatchingError):
    """MCMC提议分布构建失败"""


class ChainViolationError(HistoryMatchingError):
    """输入粒子不满足当前波次约束"""


class SimulationError(HistoryMatchingError):
    """模拟器输入或输出不合法"""


class SamplerStop(HistoryMatchingError):
    """触发停止规则, 采样器以干净状态结束"""


class NoSurvivorsError(SamplerStop):
    """没有粒子通过截断, 整个空间被判为不可信"""


class DegenerateImplausibilityError(SamplerStop):
    """隐含性取值退化, 无法继续收缩"""


class InsufficientTrainingError(SamplerStop):
    """去重后的训练点不足"""


class LowAcceptanceStop(SamplerStop):
    """MCMC接受率连续过低"""
