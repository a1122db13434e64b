"""
测试辅助对象
"""
import numpy as np

from src.emulation.implausibility import ImplausibilityMeasure, WaveChain, WaveRecord


class AnalyticSurface:
    """用解析函数充当波次模拟器: 预测均值 = fn(θ), 标准差 = 0"""

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def predict_batch(self, thetas):
        X = np.atleast_2d(np.asarray(thetas, dtype=float))
        self.calls += 1
        values = np.asarray(self.fn(X), dtype=float)
        return values, np.zeros_like(values)


def analytic_chain(space, *constraints):
    """把若干 (函数, 截断值) 编码为波次链, 隐含性 = 函数值"""
    measure = ImplausibilityMeasure.lcb(0.0)
    waves = [WaveRecord(i + 1, AnalyticSurface(fn), measure, cutoff)
             for i, (fn, cutoff) in enumerate(constraints)]
    return WaveChain(space, waves)
