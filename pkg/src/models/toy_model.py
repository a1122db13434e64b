"""
二维测试函数模型
"""
import numpy as np

from config import Config
from src.core.param_space import ParameterSpace
from src.emulation.implausibility import ImplausibilityMeasure
from src.models.base_model import ModelKind, OutputSemantics, SimulatorModel


def toy_function(x1, x2):
    """y = -sin(x1)·sin(x1²/π)² - sin(x2)·sin(2x2²/π)², 支持数组"""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return (-np.sin(x1) * np.sin(x1 ** 2 / np.pi) ** 2
            - np.sin(x2) * np.sin(2.0 * x2 ** 2 / np.pi) ** 2)


def toy_space() -> ParameterSpace:
    return ParameterSpace.box(('x1', 'x2'), (0.0, 0.0), (np.pi, np.pi))


class ToyModel(SimulatorModel):
    """确定性测试函数, 按最小化方向做历史匹配"""

    kind = ModelKind.DETERMINISTIC
    output_semantics = OutputSemantics.FUNCTION_VALUE

    def __init__(self, r: float = Config.EXPLORATION_R):
        super().__init__('toy', toy_space())
        self.r = r

    def simulate(self, theta: np.ndarray, rng: np.random.Generator = None) -> float:
        return float(toy_function(theta[0], theta[1]))

    def evaluate_batch(self, thetas, streams, wave, workers=1, tag="simulate") -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        with self._lock:
            self.simulation_count += thetas.shape[0]
        return toy_function(thetas[:, 0], thetas[:, 1])

    def default_measure(self) -> ImplausibilityMeasure:
        return ImplausibilityMeasure.lcb(self.r)
