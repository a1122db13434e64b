"""
拒绝采样 - 从先验不断抽样, 只保留满足全部波次的点
得到的是 Θ_w 上的精确独立样本, 作为均匀性的参照
"""
from dataclasses import dataclass
from typing import Callable, List

import numpy as np
from loguru import logger

from src.emulation.implausibility import WaveChain

MAX_PROPOSALS = 10 ** 7
MIN_ACCEPTANCE_RATE = 1e-6
BATCH_SIZE = 10000


@dataclass
class RejectionResult:
    """拒绝类采样器的结果"""
    samples: np.ndarray
    proposals: int
    accepted: int
    complete: bool = True

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else 0.0

    @property
    def acceptance_se(self) -> float:
        """接受率的二项标准误"""
        if not self.proposals:
            return float('nan')
        p = self.acceptance_rate
        return float(np.sqrt(p * (1.0 - p) / self.proposals))


def accept_until(propose: Callable[[int], np.ndarray], chain: WaveChain, n_target: int,
                 batch_size: int = BATCH_SIZE, max_proposals: int = MAX_PROPOSALS,
                 min_rate: float = MIN_ACCEPTANCE_RATE, label: str = "rejection") -> RejectionResult:
    """
    反复调用 propose(批大小) 直到攒够 n_target 个满足波次链的点
    提议数超过 max_proposals 且接受率低于 min_rate 时放弃, 返回已接受的部分
    """
    if n_target < 1:
        raise ValueError(f"目标样本数必须为正: {n_target}")
    accepted: List[np.ndarray] = []
    count, proposals = 0, 0
    complete = True
    while count < n_target:
        batch = propose(batch_size)
        proposals += batch.shape[0]
        ok = chain.space.in_support(batch)
        ok[ok] = chain.accepts(batch[ok])
        if ok.any():
            accepted.append(batch[ok])
            count += int(ok.sum())
        if proposals >= max_proposals and count / proposals < min_rate:
            complete = False
            logger.warning(f"{label}: {proposals} 次提议后接受率 {count / proposals:.2e} "
                           f"低于 {min_rate:.0e}, 放弃并返回 {count} 个样本")
            break

    samples = np.vstack(accepted)[:n_target] if accepted else np.empty((0, chain.space.dim))
    result = RejectionResult(samples, proposals, count, complete)
    logger.info(f"{label}: 接受 {count}/{proposals}, 接受率 {result.acceptance_rate:.4%}")
    return result


def rejection_sampler(chain: WaveChain, n_target: int, rng: np.random.Generator,
                      batch_size: int = BATCH_SIZE, max_proposals: int = MAX_PROPOSALS,
                      min_rate: float = MIN_ACCEPTANCE_RATE) -> RejectionResult:
    """从先验抽样的拒绝采样器; 空链时等价于直接从先验抽样"""
    space = chain.space
    return accept_until(lambda n: space.sample_prior(n, rng), chain, n_target,
                        batch_size, max_proposals, min_rate, label="rejection")
