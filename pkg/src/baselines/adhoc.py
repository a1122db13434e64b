"""
两种临时采样器
把上一波粒子变换到无界空间 (逐分量 logit 或 KDE 边缘 CDF + 正态分位数), 拟合多元正态,
从中抽样并用波次链做拒绝; 所得样本满足链的约束, 但不是 Θ_w 上的均匀分布
"""
from dataclasses import dataclass
from enum import Enum
from typing import List

import numpy as np
from loguru import logger

from config import Config
from src.core.rng import RngStreams
from src.emulation.implausibility import WaveChain
from src.baselines.rejection import (BATCH_SIZE, MAX_PROPOSALS, MIN_ACCEPTANCE_RATE, RejectionResult,
                                     accept_until, rejection_sampler)
from src.sampling.kde_transform import fit_marginals


class AdhocKind(Enum):
    """临时采样器使用的变换"""
    LOGIT = "logit"
    KDE = "kde"


@dataclass
class GaussianFit:
    """变换空间中的多元正态"""
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def fit(cls, z: np.ndarray) -> 'GaussianFit':
        z = np.asarray(z, dtype=float)
        if z.shape[0] < z.shape[1] + 1:
            raise ValueError(f"拟合多元正态至少需要 {z.shape[1] + 1} 个粒子, 实际 {z.shape[0]}")
        cov = np.atleast_2d(np.cov(z, rowvar=False, ddof=1))
        return cls(z.mean(axis=0), cov)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.multivariate_normal(self.mean, self.cov, size=n, method='eigh')


def adhoc_sampler(chain: WaveChain, particles, kind: AdhocKind, n_target: int, rng: np.random.Generator,
                  subset_size: int = Config.KDE_SUBSET_SIZE, batch_size: int = BATCH_SIZE,
                  max_proposals: int = MAX_PROPOSALS,
                  min_rate: float = MIN_ACCEPTANCE_RATE) -> RejectionResult:
    """
    临时采样器
    Args:
        chain: 当前波次链
        particles: 满足上一波约束的粒子
        kind: LOGIT 或 KDE
        n_target: 目标样本数
    """
    kind = AdhocKind(kind)
    space = chain.space
    particles = np.asarray(particles, dtype=float)

    if kind == AdhocKind.LOGIT:
        gaussian = GaussianFit.fit(space.to_unbounded(particles))

        def propose(n: int) -> np.ndarray:
            return space.from_unbounded(gaussian.sample(n, rng))
    else:
        transform = fit_marginals(particles, space, subset_size, rng)
        gaussian = GaussianFit.fit(transform.to_normal(particles))

        def propose(n: int) -> np.ndarray:
            return transform.from_normal(gaussian.sample(n, rng))

    return accept_until(propose, chain, n_target, batch_size, max_proposals, min_rate,
                        label=f"adhoc-{kind.value}")


def run_adhoc_sequence(chain: WaveChain, kind: AdhocKind, n_target: int, streams: RngStreams,
                       store=None) -> List[RejectionResult]:
    """
    逐波应用临时采样器
    第 w 波的提议由第 w-1 波的输出拟合 (第 0 波为先验样本)
    """
    kind = AdhocKind(kind)
    space = chain.space
    particles = space.sample_prior(n_target, streams.generator("prior"))
    results = []
    for record in chain:
        w = record.index
        result = adhoc_sampler(chain.truncated(w), particles, kind, n_target,
                               streams.generator(f"adhoc-{kind.value}", w))
        results.append(result)
        if store is not None:
            store.write_population(w, result.samples, space.names, {
                'wave': w,
                'cutoff': record.cutoff,
                'proposals': result.proposals,
                'acceptance_rate': result.acceptance_rate,
                'samples': int(result.samples.shape[0]),
                'complete': result.complete,
            })
        if result.samples.shape[0] < space.dim + 1:
            logger.warning(f"adhoc-{kind.value} 第 {w} 波只得到 {result.samples.shape[0]} 个样本, 停止")
            break
        particles = result.samples
    return results


def run_rejection_sequence(chain: WaveChain, n_target: int, streams: RngStreams,
                           store=None) -> List[RejectionResult]:
    """逐波运行拒绝采样, 用于和其他采样器逐波对比"""
    space = chain.space
    results = []
    for record in chain:
        w = record.index
        result = rejection_sampler(chain.truncated(w), n_target, streams.generator("rejection", w))
        results.append(result)
        if store is not None:
            store.write_population(w, result.samples, space.names, {
                'wave': w,
                'cutoff': record.cutoff,
                'proposals': result.proposals,
                'acceptance_rate': result.acceptance_rate,
                'samples': int(result.samples.shape[0]),
                'complete': result.complete,
            })
    return results
