"""
似然退火的贝叶斯 SMC
目标序列 π(θ)·L(θ)^γ, γ 从 0 自适应增加到 1: 每步用二分法选 γ 使重加权后 ESS 等于目标比例,
然后重采样, 再在无界坐标中做多元正态随机游走移动 (协方差 2.38²/p · Σ̂)
似然可以是粒子滤波估计, 当前粒子沿用已有的估计值
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy import linalg, special

from config import Config
from src.core.param_space import ParameterSpace
from src.core.parallel import parallel_map
from src.core.rng import RngStreams
from src.sampling.smc_engine import adaptive_repeats, effective_sample_size

MIN_TEMPERATURE_INCREMENT = 1e-4
TARGET_ESS_RATIO = 0.5
_BISECTION_STEPS = 100
_BISECTION_TOL = 1e-10
_RIDGE = 1e-10


@dataclass
class AnnealingStep:
    """一个退火步的记录"""
    step: int
    temperature: float
    ess: float
    repeats: int
    p_acc: float
    evaluations: int
    fallback: bool = False

    def to_dict(self) -> Dict:
        return {
            'step': self.step,
            'temperature': self.temperature,
            'ess': self.ess,
            'repeats': self.repeats,
            'p_acc': self.p_acc,
            'evaluations': self.evaluations,
            'fallback': self.fallback,
        }


@dataclass
class BayesSmcResult:
    thetas: np.ndarray
    log_likelihoods: np.ndarray
    temperatures: List[float] = field(default_factory=lambda: [0.0])
    steps: List[AnnealingStep] = field(default_factory=list)
    evaluations: int = 0
    complete: bool = True

    @property
    def intermediate_temperatures(self) -> int:
        """严格位于 (0, 1) 内的温度个数"""
        return sum(1 for g in self.temperatures if 0.0 < g < 1.0)


def tempered_ess(loglik, delta: float) -> float:
    """权重 ∝ L^δ 时的 ESS"""
    ll = np.asarray(loglik, dtype=float)
    log_w = np.where(np.isfinite(ll), delta * ll, -np.inf)
    if not np.isfinite(log_w).any():
        return 0.0
    return effective_sample_size(np.exp(log_w - special.logsumexp(log_w)))


def next_temperature(loglik, gamma: float, target_ess: float,
                     min_increment: float = MIN_TEMPERATURE_INCREMENT) -> Tuple[float, bool]:
    """
    二分法求下一个温度
    返回 (新温度, 是否使用了最小增量)
    """
    remaining = 1.0 - gamma
    if tempered_ess(loglik, remaining) >= target_ess:
        return 1.0, False

    lo, hi = 0.0, remaining
    for _ in range(_BISECTION_STEPS):
        if hi - lo < _BISECTION_TOL:
            break
        mid = 0.5 * (lo + hi)
        if tempered_ess(loglik, mid) >= target_ess:
            lo = mid
        else:
            hi = mid

    if lo <= _BISECTION_TOL:
        step = min(min_increment, remaining)
        logger.warning(f"温度二分失败 (γ={gamma:.6g}), 使用最小增量 {step:g}")
        return gamma + step, True
    return gamma + lo, False


class _LikelihoodEvaluator:
    """并行计算对数似然, 每个粒子使用独立子流"""

    def __init__(self, model, streams: RngStreams, workers: int):
        self.model = model
        self.streams = streams
        self.workers = workers
        self.count = 0

    def __call__(self, thetas: np.ndarray, step: int, sweep: int, mask: Optional[np.ndarray] = None) -> np.ndarray:
        M = thetas.shape[0]
        idx = np.arange(M) if mask is None else np.flatnonzero(mask)
        out = np.full(M, -np.inf)

        def run_one(i: int) -> float:
            return float(self.model.log_likelihood(thetas[i], self.streams.generator("bayes-ll", step, sweep, i)))

        values = parallel_map(run_one, idx.tolist(), self.workers)
        out[idx] = np.asarray(values, dtype=float)
        self.count += idx.size
        return np.where(np.isnan(out), -np.inf, out)


def _rw_sweep(x, log_target_base, ll, gamma, chol, space: ParameterSpace, evaluate: _LikelihoodEvaluator,
              rng: np.random.Generator, step: int, sweep: int):
    """无界坐标中的一次随机游走 MH 扫描, 返回 (x, 基础对数密度, 对数似然, 接受数)"""
    M, p = x.shape
    eta = rng.standard_normal((M, p))
    log_u = np.log(rng.random(M))

    x_star = x + eta @ chol.T
    theta_star = space.from_unbounded(x_star)
    with np.errstate(invalid='ignore'):
        base_star = space.log_prior_batch(theta_star) + space.log_abs_det_jacobian(theta_star)
    base_star = np.where(np.isnan(base_star), -np.inf, base_star)

    ll_star = evaluate(theta_star, step, sweep, mask=np.isfinite(base_star))
    with np.errstate(invalid='ignore'):
        log_r = base_star + gamma * ll_star - log_target_base - gamma * ll
    log_r = np.where(np.isnan(log_r), -np.inf, log_r)
    accepted = log_u <= log_r

    x = np.where(accepted[:, None], x_star, x)
    log_target_base = np.where(accepted, base_star, log_target_base)
    ll = np.where(accepted, ll_star, ll)
    return x, log_target_base, ll, int(accepted.sum())


def bayes_smc_anneal(model, space: ParameterSpace, particles: int, streams: RngStreams,
                     target_ess_ratio: float = TARGET_ESS_RATIO,
                     move_target_c: float = Config.MOVE_TARGET_C, r_max: int = Config.R_MAX,
                     p_floor: float = Config.P_FLOOR, workers: int = 1, max_steps: int = 1000,
                     store=None) -> BayesSmcResult:
    """
    似然退火 SMC
    Args:
        model: 提供 log_likelihood(theta, rng) 的模型
        space: 参数空间 (先验)
        particles: 粒子数 M
        target_ess_ratio: 每步重加权后的目标 ESS 比例
    """
    if not 0 < target_ess_ratio < 1:
        raise ValueError(f"target_ess_ratio 必须在 (0,1) 内: {target_ess_ratio}")
    M, p = particles, space.dim
    if M < p + 2:
        raise ValueError(f"粒子数 {M} 太少")
    evaluate = _LikelihoodEvaluator(model, streams, workers)

    thetas = space.sample_prior(M, streams.generator("prior"))
    ll = evaluate(thetas, 0, 0)
    x = space.to_unbounded(thetas)
    base = space.log_prior_batch(thetas) + space.log_abs_det_jacobian(thetas)
    result = BayesSmcResult(thetas, ll)
    gamma = 0.0
    target_ess = target_ess_ratio * M

    for t in range(1, max_steps + 1):
        if gamma >= 1.0:
            break
        new_gamma, fallback = next_temperature(ll, gamma, target_ess)
        delta = new_gamma - gamma
        log_w = np.where(np.isfinite(ll), delta * ll, -np.inf)
        if not np.isfinite(log_w).any():
            raise ValueError("所有粒子的对数似然均为 -inf, 无法退火")
        weights = np.exp(log_w - special.logsumexp(log_w))
        ess = effective_sample_size(weights)
        gamma = new_gamma

        pick = streams.generator("bayes-resample", t).choice(M, size=M, replace=True, p=weights)
        x, base, ll = x[pick], base[pick], ll[pick]

        cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1)) * (2.38 ** 2 / p)
        cov = 0.5 * (cov + cov.T) + _RIDGE * np.eye(p)
        chol = linalg.cholesky(cov, lower=True)

        x, base, ll, accepts = _rw_sweep(x, base, ll, gamma, chol, space, evaluate,
                                         streams.generator("bayes-move", t, 0), t, 0)
        p_acc = accepts / M
        repeats = adaptive_repeats(p_acc, move_target_c, r_max, p_floor)
        for s in range(1, repeats + 1):
            x, base, ll, _ = _rw_sweep(x, base, ll, gamma, chol, space, evaluate,
                                       streams.generator("bayes-move", t, s), t, s)

        record = AnnealingStep(t, gamma, ess, repeats, p_acc, evaluate.count, fallback)
        result.steps.append(record)
        result.temperatures.append(gamma)
        logger.info(f"bayes-smc step={t} γ={gamma:.6g} ESS={ess:.0f} p_acc={p_acc:.3f} "
                    f"R_t={repeats} evals={evaluate.count}")
        if store is not None:
            store.write_population(t, space.from_unbounded(x), space.names, record.to_dict())
    else:
        if gamma < 1.0:
            result.complete = False
            logger.warning(f"退火在 {max_steps} 步内未达到 γ=1 (当前 γ={gamma:.6g})")

    result.thetas = space.from_unbounded(x)
    result.log_likelihoods = ll
    result.evaluations = evaluate.count
    return result
