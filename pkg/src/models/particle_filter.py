"""
自举粒子滤波 - 用前向模拟作为提议, 无偏估计状态空间模型的似然
"""
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import special, stats

_LOG_TINY = np.log(np.finfo(float).tiny)


@dataclass(frozen=True)
class EarlyTermination:
    """模拟提前终止 (物种数量超限或事件预算耗尽)"""
    reason: str
    time: float = float('nan')


@dataclass(frozen=True)
class SentinelValue:
    """似然无法正常估计时的占位值"""
    reason: str


PropagateFn = Callable[[np.ndarray, int, np.random.Generator], Union[np.ndarray, EarlyTermination]]
LogObsFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def gaussian_log_obs(sigma: float) -> LogObsFn:
    """各分量独立的 N(y; x, σ²) 观测密度"""
    if sigma <= 0:
        raise ValueError(f"观测噪声 σ 必须为正: {sigma}")

    def log_obs(y: np.ndarray, x: np.ndarray) -> np.ndarray:
        return stats.norm.logpdf(y, loc=x, scale=sigma).reshape(x.shape[0], -1).sum(axis=1)

    return log_obs


def bootstrap_log_likelihood(observations, initial_particles, propagate: PropagateFn, log_obs: LogObsFn,
                             propagate_rng: np.random.Generator,
                             resample_rng: np.random.Generator) -> Union[float, SentinelValue]:
    """
    自举粒子滤波
    每个观测时刻: 前向传播 -> 按观测密度加权 -> 累加 log 平均权重 -> 多项重采样
    传播与重采样使用不同的随机数流
    """
    y = np.asarray(observations, dtype=float)
    if y.ndim == 1:
        y = y.reshape(-1, 1)
    particles = np.array(initial_particles, copy=True)
    J = particles.shape[0]
    if J < 2:
        raise ValueError(f"粒子数 J 至少为 2: {J}")

    loglik = 0.0
    for t in range(y.shape[0]):
        particles = propagate(particles, t, propagate_rng)
        if isinstance(particles, EarlyTermination):
            return SentinelValue(f"第 {t} 步模拟提前终止: {particles.reason}")
        log_w = log_obs(y[t], particles)
        if not np.any(np.isfinite(log_w)) or np.max(log_w) < _LOG_TINY:
            return SentinelValue(f"第 {t} 步权重数值为零")
        loglik += float(special.logsumexp(log_w) - np.log(J))
        weights = np.exp(log_w - special.logsumexp(log_w))
        particles = particles[resample_rng.choice(J, size=J, replace=True, p=weights)]
    return loglik
