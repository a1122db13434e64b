"""
模拟器基类 - 所有模型的统一接口
"""
import threading
from abc import ABC, abstractmethod
from enum import Enum
from typing import Optional

import numpy as np

from src.core.param_space import ParameterSpace
from src.core.parallel import parallel_map
from src.core.rng import RngStreams
from src.emulation.implausibility import ImplausibilityMeasure


class ModelKind(Enum):
    """模型类型"""
    DETERMINISTIC = "deterministic"
    STOCHASTIC = "stochastic"


class OutputSemantics(Enum):
    """训练输出的含义"""
    FUNCTION_VALUE = "function_value"
    DISTANCE = "distance"
    DOUBLE_LOG_NEG_LOGLIK = "double_log_neg_loglik"


class SimulatorModel(ABC):
    """模拟器基类: 参数向量 (+随机数流) -> 标量输出"""

    kind: ModelKind = ModelKind.DETERMINISTIC
    output_semantics: OutputSemantics = OutputSemantics.FUNCTION_VALUE

    def __init__(self, name: str, space: ParameterSpace, replicates: int = 1):
        if replicates < 1:
            raise ValueError(f"重复次数 K 必须 >= 1: {replicates}")
        self.name = name
        self.space = space
        self.replicates = replicates
        self.simulation_count = 0
        self._lock = threading.Lock()

    @property
    def is_deterministic(self) -> bool:
        return self.kind == ModelKind.DETERMINISTIC

    @property
    def has_likelihood(self) -> bool:
        return type(self).log_likelihood is not SimulatorModel.log_likelihood

    @abstractmethod
    def simulate(self, theta: np.ndarray, rng: np.random.Generator) -> float:
        """
        运行一次模拟
        Args:
            theta: 参数向量
            rng: 随机数流, 确定性模型忽略
        Returns:
            原始输出
        """
        pass

    @abstractmethod
    def default_measure(self) -> ImplausibilityMeasure:
        """该模型默认使用的隐含性度量"""
        pass

    def evaluate(self, theta, rng: Optional[np.random.Generator] = None) -> float:
        """随机模型取 K 次模拟的平均; 计数按实际调用 simulate 的次数累加"""
        theta = np.asarray(theta, dtype=float)
        rng = rng if rng is not None else np.random.default_rng(0)
        calls = 1 if self.is_deterministic else self.replicates
        with self._lock:
            self.simulation_count += calls
        if calls == 1:
            return float(self.simulate(theta, rng))
        return float(np.mean([self.simulate(theta, rng) for _ in range(calls)]))

    def evaluate_batch(self, thetas, streams: RngStreams, wave: int,
                       workers: int = 1, tag: str = "simulate") -> np.ndarray:
        """批量模拟, 第 i 行使用 (tag, wave, i) 子流"""
        thetas = np.asarray(thetas, dtype=float)

        def run_one(i: int) -> float:
            return self.evaluate(thetas[i], streams.generator(tag, wave, i))

        return np.asarray(parallel_map(run_one, range(thetas.shape[0]), workers), dtype=float)

    def finalize_outputs(self, raw: np.ndarray, wave: int) -> np.ndarray:
        """把原始输出转换为训练输出, 默认不变"""
        return np.asarray(raw, dtype=float).copy()

    def log_likelihood(self, theta, rng: np.random.Generator) -> float:
        """对数似然, 只有带似然的模型实现"""
        raise NotImplementedError(f"{self.name} 不提供对数似然")

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name}, kind={self.kind.value}, p={self.space.dim})"

