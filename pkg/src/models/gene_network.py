"""
基因自调控网络 - 8 个反应的随机动力学模型
精确 Gillespie 模拟, 对粒子批量向量化; 似然由自举粒子滤波估计
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger

from config import Config
from src.core.param_space import ParameterSpace
from src.emulation.implausibility import ImplausibilityMeasure
from src.errors import SimulationError
from src.models.base_model import ModelKind, OutputSemantics, SimulatorModel
from src.models.particle_filter import (EarlyTermination, SentinelValue, bootstrap_log_likelihood,
                                        gaussian_log_obs)

SPECIES = ('DNA', 'RNA', 'P', 'P2')
TRUE_RATES = (0.1, 0.7, 0.35, 0.2, 0.1, 0.9, 0.3, 0.1)
GENE_COPIES = 10
INITIAL_STATE = (5, 8, 8, 8)
OBS_INTERVAL = 0.5
SPECIES_CAP = 100
EVENT_BUDGET = 1_000_000

# 行: 反应, 列: (DNA, RNA, P, P2)
STOICHIOMETRY = np.array([
    [-1, 0, 0, -1],   # DNA + P2 -> DNA·P2
    [1, 0, 0, 1],     # DNA·P2 -> DNA + P2
    [0, 1, 0, 0],     # DNA -> DNA + RNA
    [0, 0, 1, 0],     # RNA -> RNA + P
    [0, 0, -2, 1],    # 2P -> P2
    [0, 0, 2, -1],    # P2 -> 2P
    [0, -1, 0, 0],    # RNA -> ∅
    [0, 0, -1, 0],    # P -> ∅
], dtype=np.int64)


def gene_space() -> ParameterSpace:
    """θ_i = log c_i, c_i 服从尺度 1/2 的半柯西先验"""
    return ParameterSpace.log_half_cauchy(tuple(f"log_c{i}" for i in range(1, 9)))


def hazards(c: np.ndarray, x: np.ndarray, k: int = GENE_COPIES) -> np.ndarray:
    """反应速率, x 形状 (J, 4), 返回 (J, 8)"""
    x = np.asarray(x, dtype=float)
    dna, rna, p, p2 = x[:, 0], x[:, 1], x[:, 2], x[:, 3]
    return np.column_stack([
        c[0] * dna * p2,
        c[1] * (k - dna),
        c[2] * dna,
        c[3] * rna,
        c[4] * p * (p - 1.0) / 2.0,
        c[5] * p2,
        c[6] * rna,
        c[7] * p,
    ])


def advance_ssa(c, x, duration: float, rng: np.random.Generator, k: int = GENE_COPIES,
                cap: Optional[int] = SPECIES_CAP, max_events: int = EVENT_BUDGET):
    """
    把每个粒子独立推进 duration 时间
    返回 (新状态, 提前终止标记, 事件数)
    """
    c = np.asarray(c, dtype=float)
    x = np.array(x, dtype=np.int64, copy=True)
    J = x.shape[0]
    clock = np.zeros(J)
    events = np.zeros(J, dtype=np.int64)
    terminated = np.zeros(J, dtype=bool)
    active = np.ones(J, dtype=bool)
    if cap is not None:
        terminated |= (x >= cap).any(axis=1)
        active &= ~terminated

    while active.any():
        idx = np.flatnonzero(active)
        h = hazards(c, x[idx], k)
        h0 = h.sum(axis=1)
        tau = rng.exponential(1.0, size=idx.size)
        u = 1.0 - rng.random(idx.size)   # (0, 1]

        dead = h0 <= 0
        with np.errstate(divide='ignore'):
            step = np.where(dead, np.inf, tau / np.where(dead, 1.0, h0))
        clock[idx] += step
        fires = clock[idx] <= duration
        active[idx[~fires]] = False

        fire_idx = idx[fires]
        if fire_idx.size == 0:
            continue
        cum = np.cumsum(h[fires], axis=1)
        reaction = (cum < (u[fires] * h0[fires])[:, None]).sum(axis=1)
        reaction = np.minimum(reaction, STOICHIOMETRY.shape[0] - 1)
        x[fire_idx] += STOICHIOMETRY[reaction]
        events[fire_idx] += 1

        over = events[fire_idx] >= max_events
        if cap is not None:
            over |= (x[fire_idx] >= cap).any(axis=1)
        terminated[fire_idx[over]] = True
        active[fire_idx[over]] = False
    return x, terminated, events


@dataclass
class GeneTrajectory:
    times: np.ndarray
    states: np.ndarray   # (len(times), 4)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.states, columns=list(SPECIES))
        frame.insert(0, 'time', self.times)
        return frame


def gene_simulate(c, rng: np.random.Generator, k: int = GENE_COPIES, init=INITIAL_STATE,
                  n_obs: int = 100, dt: float = OBS_INTERVAL, cap: Optional[int] = SPECIES_CAP,
                  max_events: int = EVENT_BUDGET) -> Union[GeneTrajectory, EarlyTermination]:
    """单条轨迹, 在 dt, 2dt, ..., n_obs·dt 处记录状态"""
    init = np.asarray(init, dtype=np.int64)
    if np.any(init < 0) or init[0] > k:
        raise ValueError(f"初始状态不合法: {init.tolist()}, k={k}")
    x = init.reshape(1, -1)
    states = np.empty((n_obs, 4), dtype=np.int64)
    for t in range(n_obs):
        x, terminated, _ = advance_ssa(c, x, dt, rng, k, cap, max_events)
        if terminated[0]:
            return EarlyTermination("物种数量超限或事件预算耗尽", (t + 1) * dt)
        states[t] = x[0]
    return GeneTrajectory(dt * np.arange(1, n_obs + 1), states)


def generate_gene_data(seed: int, n_obs: int = 100, rates=TRUE_RATES, k: int = GENE_COPIES,
                       init=INITIAL_STATE, dt: float = OBS_INTERVAL) -> pd.DataFrame:
    """按真实速率生成无噪声观测"""
    trajectory = gene_simulate(np.asarray(rates, dtype=float), np.random.default_rng(seed), k, init,
                               n_obs, dt, cap=None)
    return trajectory.to_frame()


def write_gene_data(frame: pd.DataFrame, path: Union[str, Path], seed: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        handle.write(f"# seed={seed}\n")
        frame.to_csv(handle, index=False)
    return path


def load_gene_data(path: Union[str, Path]) -> pd.DataFrame:
    frame = pd.read_csv(path, comment='#')
    missing = set(SPECIES) - set(frame.columns)
    if missing:
        raise ValueError(f"基因数据缺少列: {sorted(missing)}")
    return frame


def gene_loglik_pf(c, data, sigma: float, J: int, rng: np.random.Generator, k: int = GENE_COPIES,
                   init=INITIAL_STATE, dt: float = OBS_INTERVAL, cap: Optional[int] = SPECIES_CAP,
                   max_events: int = EVENT_BUDGET) -> Union[float, SentinelValue]:
    """自举粒子滤波估计 log f(y|c)"""
    if J < 2:
        raise ValueError(f"粒子数 J 至少为 2: {J}")
    c = np.asarray(c, dtype=float)
    y = np.asarray(data, dtype=float)
    propagate_rng, resample_rng = rng.spawn(2)

    def propagate(x, t, stream):
        x_new, terminated, _ = advance_ssa(c, x, dt, stream, k, cap, max_events)
        if terminated.any():
            return EarlyTermination(f"{int(terminated.sum())} 个粒子提前终止", (t + 1) * dt)
        return x_new

    particles = np.tile(np.asarray(init, dtype=np.int64), (J, 1))
    return bootstrap_log_likelihood(y, particles, propagate, gaussian_log_obs(sigma),
                                    propagate_rng, resample_rng)


def gene_training_output(loglik: float) -> float:
    """训练输出 log(-log f̂)"""
    if not loglik < 0:
        raise SimulationError(f"对数似然必须为负: {loglik}")
    return float(np.log(-loglik))


class GeneNetworkModel(SimulatorModel):
    """
    基因网络模型
    原始输出为粒子滤波对数似然 (占位值记为 NaN);
    训练输出先把占位值替换为第 0 波最小有限对数似然, 再取两次对数
    """

    kind = ModelKind.STOCHASTIC
    output_semantics = OutputSemantics.DOUBLE_LOG_NEG_LOGLIK

    def __init__(self, data, sigma: float = 0.6, particles: int = 6000, k: int = GENE_COPIES,
                 init: Sequence[int] = INITIAL_STATE, dt: float = OBS_INTERVAL,
                 cap: Optional[int] = SPECIES_CAP, max_events: int = EVENT_BUDGET,
                 replicates: int = 1, r: float = Config.EXPLORATION_R):
        super().__init__('gene', gene_space(), replicates)
        frame = data if isinstance(data, pd.DataFrame) else None
        self.data = frame[list(SPECIES)].to_numpy(float) if frame is not None else np.asarray(data, float)
        if sigma <= 0:
            raise ValueError(f"σ 必须为正: {sigma}")
        self.sigma = sigma
        self.particles = particles
        self.k = k
        self.init = tuple(init)
        self.dt = dt
        self.cap = cap
        self.max_events = max_events
        self.r = r
        self.sentinel: Optional[float] = None
        self.sentinel_count = 0

    def log_likelihood(self, theta, rng: np.random.Generator) -> float:
        """伪边际对数似然; 占位情况返回冻结的占位值, 尚未冻结时返回 -inf"""
        value = gene_loglik_pf(np.exp(np.asarray(theta, dtype=float)), self.data, self.sigma,
                               self.particles, rng, self.k, self.init, self.dt, self.cap, self.max_events)
        if isinstance(value, SentinelValue):
            return self.sentinel if self.sentinel is not None else -np.inf
        return value

    def simulate(self, theta: np.ndarray, rng: np.random.Generator) -> float:
        value = gene_loglik_pf(np.exp(theta), self.data, self.sigma, self.particles, rng,
                               self.k, self.init, self.dt, self.cap, self.max_events)
        if isinstance(value, SentinelValue):
            logger.debug(f"粒子滤波占位: {value.reason}")
            return float('nan')
        return value

    def finalize_outputs(self, raw: np.ndarray, wave: int) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        bad = ~np.isfinite(raw)
        if self.sentinel is None:
            finite = raw[~bad]
            if finite.size == 0:
                raise SimulationError("第 0 波没有任何有效的对数似然估计, 无法确定占位值")
            self.sentinel = float(finite.min())
            logger.info(f"占位对数似然冻结为 {self.sentinel:.4f} (第 {wave} 波)")
        if bad.any():
            self.sentinel_count += int(bad.sum())
            logger.warning(f"第 {wave} 波有 {int(bad.sum())} 个训练点使用占位对数似然")
        filled = np.where(bad, self.sentinel, raw)
        return np.array([gene_training_output(v) for v in filled])

    def default_measure(self) -> ImplausibilityMeasure:
        return ImplausibilityMeasure.lcb(self.r)
