"""
MCMC 移动核 - 在边缘变换后的正态坐标上做多元正态随机游走
先用先验与提议密度提前拒绝, 再按波次顺序检查隐含性
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy import linalg

from config import Config
from src.core.param_space import ParameterSpace
from src.emulation.implausibility import WaveChain
from src.errors import ChainViolationError, ProposalError
from src.sampling.kde_transform import MarginalTransform, TransformKind, fit_transform

_RIDGE = 1e-10


@dataclass
class ProposalState:
    """提议分布: 边缘变换 + 变换坐标下的协方差及其 Cholesky 因子"""
    transform: MarginalTransform
    cov: np.ndarray
    chol: np.ndarray

    @property
    def dim(self) -> int:
        return self.cov.shape[0]


@dataclass
class SweepDiagnostics:
    """一次扫描的统计"""
    proposals: int = 0
    accepts: int = 0
    early_prior_rejects: int = 0
    per_wave_rejects: List[int] = field(default_factory=list)

    @property
    def p_acc(self) -> float:
        return self.accepts / self.proposals if self.proposals else 0.0

    @property
    def rejects(self) -> int:
        return self.early_prior_rejects + sum(self.per_wave_rejects)

    def merge(self, other: 'SweepDiagnostics') -> 'SweepDiagnostics':
        waves = max(len(self.per_wave_rejects), len(other.per_wave_rejects))
        a = self.per_wave_rejects + [0] * (waves - len(self.per_wave_rejects))
        b = other.per_wave_rejects + [0] * (waves - len(other.per_wave_rejects))
        return SweepDiagnostics(self.proposals + other.proposals, self.accepts + other.accepts,
                                self.early_prior_rejects + other.early_prior_rejects,
                                [x + y for x, y in zip(a, b)])

    def to_dict(self) -> Dict:
        return {
            'proposals': self.proposals,
            'accepts': self.accepts,
            'early_prior_rejects': self.early_prior_rejects,
            'per_wave_rejects': list(self.per_wave_rejects),
            'p_acc': self.p_acc,
        }


def build_proposal(particles, space: ParameterSpace, subset_size: int = Config.KDE_SUBSET_SIZE,
                   rng: Optional[np.random.Generator] = None,
                   kind: TransformKind = TransformKind.KDE,
                   scale: float = Config.PROPOSAL_SCALE) -> ProposalState:
    """由重采样后的粒子构建提议分布"""
    X = np.asarray(particles, dtype=float)
    if X.shape[0] < space.dim + 1:
        raise ProposalError(f"粒子数 {X.shape[0]} 不足以估计 {space.dim} 维协方差")

    transform = fit_transform(kind, X, space, subset_size, rng)
    z = transform.to_normal(X)
    if not np.isfinite(z).all():
        raise ProposalError("变换后的粒子包含非有限值")

    cov = np.atleast_2d(np.cov(z, rowvar=False, ddof=1)) * scale
    cov = 0.5 * (cov + cov.T)
    try:
        chol = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        try:
            chol = linalg.cholesky(cov + _RIDGE * np.eye(cov.shape[0]), lower=True)
        except linalg.LinAlgError as exc:
            raise ProposalError(f"提议协方差秩亏, 加岭 {_RIDGE} 后仍无法分解") from exc
    return ProposalState(transform, cov, chol)


def mh_sweep(particles, chain: WaveChain, prop: ProposalState, rng: np.random.Generator,
             space: Optional[ParameterSpace] = None,
             validate: bool = True) -> Tuple[np.ndarray, SweepDiagnostics]:
    """
    对全部粒子做一次 Metropolis-Hastings 移动
    log r = log π(θ*) + J(θ) - log π(θ) - J(θ*), J = log|dz/dθ|
    本次扫描的全部随机数在开始时一次性抽取, 与粒子的处理顺序无关
    """
    space = space or chain.space
    X = np.asarray(particles, dtype=float)
    M, p = X.shape
    if validate:
        bad = np.flatnonzero(chain.first_violation(X))
        if bad.size:
            raise ChainViolationError(f"{bad.size} 个输入粒子不满足当前波次链, 首个位置 {bad[0]}")

    eta = rng.standard_normal((M, p))
    log_u = np.log(rng.random(M))

    z = prop.transform.to_normal(X)
    z_star = z + eta @ prop.chol.T
    theta_star = prop.transform.from_normal(z_star)

    with np.errstate(invalid='ignore'):
        log_r = (space.log_prior_batch(theta_star) + prop.transform.log_density_normal_coords(X, z)
                 - space.log_prior_batch(X) - prop.transform.log_density_normal_coords(theta_star, z_star))
    log_r = np.where(np.isnan(log_r), -np.inf, log_r)

    passed = ~(log_u > log_r)
    candidates = np.flatnonzero(passed)
    violation = np.zeros(M, dtype=int)
    if candidates.size:
        violation[candidates] = chain.first_violation(theta_star[candidates])

    accepted = passed & (violation == 0)
    out = X.copy()
    out[accepted] = theta_star[accepted]

    per_wave = np.bincount(violation[passed], minlength=len(chain) + 1)[1:]
    diagnostics = SweepDiagnostics(
        proposals=M,
        accepts=int(accepted.sum()),
        early_prior_rejects=int((~passed).sum()),
        per_wave_rejects=[int(v) for v in per_wave],
    )
    logger.trace(f"MH 扫描: 接受 {diagnostics.accepts}/{M}, 提前拒绝 {diagnostics.early_prior_rejects}")
    return out, diagnostics
