"""
SMC 历史匹配引擎
每一波: 用上一波的模拟器评估隐含性 -> 按 α 分位数选截断 -> 重采样 -> MCMC 多样化
-> 抽训练集 -> 运行模拟器 -> 拟合新的模拟器
"""
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from config import Config
from src.core.param_space import DesignScheme, DesignSpec, ParameterSpace
from src.core.rng import RngStreams
from src.emulation.gp_emulator import GpEmulator, GpFitConfig, GpTrainingSet
from src.emulation.implausibility import ImplausibilityMeasure, WaveChain, WaveRecord
from src.errors import (DegenerateImplausibilityError, InsufficientTrainingError,
                        LowAcceptanceStop, NoSurvivorsError, SamplerStop)
from src.sampling.kde_transform import TransformKind
from src.sampling.mcmc_kernel import SweepDiagnostics, build_proposal, mh_sweep


class RunStatus(Enum):
    """运行终止状态"""
    COMPLETED = "completed"
    STOPPED = "stopped"
    FAILED = "failed"


@dataclass
class ParticlePopulation:
    """加权粒子群"""
    thetas: np.ndarray
    weights: Optional[np.ndarray] = None
    wave: int = 0
    stream_keys: Optional[np.ndarray] = None

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=float)
        m = self.thetas.shape[0]
        if self.weights is None:
            self.weights = np.full(m, 1.0 / m)
        if self.stream_keys is None:
            self.stream_keys = np.arange(m)
        if np.any(self.weights < 0) or not np.isclose(self.weights.sum(), 1.0):
            raise ValueError("粒子权重必须非负且和为 1")

    @property
    def size(self) -> int:
        return self.thetas.shape[0]

    @property
    def ess(self) -> float:
        return effective_sample_size(self.weights)

    def unique_count(self) -> int:
        return int(np.unique(self.thetas, axis=0).shape[0])


@dataclass
class StoppingRules:
    """停止规则, 0 表示关闭对应规则"""
    min_cutoff_improvement: float = Config.MIN_CUTOFF_IMPROVEMENT
    min_acceptance: float = Config.MIN_ACCEPTANCE


@dataclass
class SmcConfig:
    """SMC 参数"""
    particles: int = Config.PARTICLES
    training_size: int = Config.TRAINING_SIZE
    alpha: float = Config.ALPHA
    move_target_c: float = Config.MOVE_TARGET_C
    max_waves: int = Config.MAX_WAVES
    r_max: int = Config.R_MAX
    p_floor: float = Config.P_FLOOR
    kde_subset_size: int = Config.KDE_SUBSET_SIZE
    transform_kind: TransformKind = TransformKind.KDE
    proposal_scale: float = Config.PROPOSAL_SCALE
    design_scheme: DesignScheme = DesignScheme.SOBOL
    workers: int = 1
    stopping: StoppingRules = field(default_factory=StoppingRules)
    gp: GpFitConfig = field(default_factory=GpFitConfig)

    def __post_init__(self):
        self.transform_kind = TransformKind(self.transform_kind)
        self.design_scheme = DesignScheme(self.design_scheme)
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha 必须在 (0,1) 内: {self.alpha}")
        if not 0 < self.move_target_c < 1:
            raise ValueError(f"move_target_c 必须在 (0,1) 内: {self.move_target_c}")
        if self.training_size > self.particles:
            raise ValueError(f"训练集大小 N={self.training_size} 不能超过粒子数 M={self.particles}")
        if self.training_size < 2:
            raise ValueError(f"训练集大小至少为 2: {self.training_size}")
        if self.max_waves < 0:
            raise ValueError(f"max_waves 不能为负: {self.max_waves}")


@dataclass
class WaveSummary:
    """一波的摘要"""
    wave: int
    cutoff: Optional[float] = None
    ess: Optional[float] = None
    survivors: Optional[int] = None
    repeats: int = 0
    p_acc: Optional[float] = None
    mean_p_acc: Optional[float] = None
    unique_particles: int = 0
    simulations: int = 0
    training_size: int = 0
    output_quantiles: Dict[str, float] = field(default_factory=dict)
    sweep: Optional[SweepDiagnostics] = None

    def to_dict(self) -> Dict:
        data = {
            'wave': self.wave,
            'cutoff': self.cutoff,
            'ess': self.ess,
            'survivors': self.survivors,
            'repeats': self.repeats,
            'p_acc': self.p_acc,
            'mean_p_acc': self.mean_p_acc,
            'unique_particles': self.unique_particles,
            'simulations': self.simulations,
            'training_size': self.training_size,
            'output_quantiles': dict(self.output_quantiles),
        }
        if self.sweep is not None:
            data['sweep'] = self.sweep.to_dict()
        return data

    def log_line(self) -> str:
        cutoff = '-' if self.cutoff is None else f"{self.cutoff:.6g}"
        ess = '-' if self.ess is None else f"{self.ess:.0f}"
        p_acc = '-' if self.p_acc is None else f"{self.p_acc:.3f}"
        return (f"wave={self.wave} cutoff={cutoff} ESS={ess} p_acc={p_acc} "
                f"R_t={self.repeats} sims={self.simulations}")


@dataclass
class RunResult:
    """运行结果, 无论成功与否都带回已构建的波次链"""
    status: RunStatus
    chain: WaveChain
    population: Optional[ParticlePopulation]
    summaries: List[WaveSummary]
    simulations: int = 0
    stop_reason: str = ""
    emulator: Optional[GpEmulator] = None

    @property
    def waves_completed(self) -> int:
        return len(self.chain)


# ----------------------------------------------------------------------
# 引擎代数
# ----------------------------------------------------------------------
def effective_sample_size(weights) -> float:
    """ESS = 1/Σ W², W 为归一化权重"""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        return 0.0
    w = w / total
    return float(1.0 / np.sum(w ** 2))


def select_cutoff(values, alpha: float) -> Tuple[float, np.ndarray]:
    """
    截断取升序第 ⌈αM⌉ 个次序统计量
    ℐ <= 截断的粒子全部保留, 包括并列值
    """
    values = np.asarray(values, dtype=float)
    values = np.where(np.isnan(values), np.inf, values)
    m = values.size
    if m == 0:
        raise ValueError("隐含性数组为空")
    if np.all(values == values[0]):
        raise DegenerateImplausibilityError("隐含性全部相等, 无法继续收缩")
    rank = max(1, math.ceil(round(alpha * m, 9)))
    cutoff = float(np.partition(values, rank - 1)[rank - 1])
    if not np.isfinite(cutoff):
        raise DegenerateImplausibilityError(f"第 {rank} 个次序统计量不是有限值 ({cutoff}), "
                                            f"{int(np.isinf(values).sum())}/{m} 个隐含性为 NaN 或无穷")
    return cutoff, values <= cutoff


def reweight_and_resample(pop: ParticlePopulation, survivor_mask,
                          rng: np.random.Generator) -> ParticlePopulation:
    """幸存者原位保留, 其余位置从幸存者中多项重采样补满"""
    mask = np.asarray(survivor_mask, dtype=bool)
    survivors = np.flatnonzero(mask)
    if survivors.size == 0:
        raise NoSurvivorsError("没有粒子通过截断, 整个空间被判为不可信")

    thetas = pop.thetas.copy()
    dead = np.flatnonzero(~mask)
    if dead.size:
        thetas[dead] = pop.thetas[rng.choice(survivors, size=dead.size, replace=True)]
    return ParticlePopulation(thetas, wave=pop.wave, stream_keys=pop.stream_keys.copy())


def adaptive_repeats(p_acc: float, move_target_c: float = Config.MOVE_TARGET_C,
                     r_max: int = Config.R_MAX, p_floor: float = Config.P_FLOOR) -> int:
    """R_t = ⌈log c / log(1 - p_acc)⌉, 上限 R_max"""
    if not 0 < move_target_c < 1:
        raise ValueError(f"move_target_c 必须在 (0,1) 内: {move_target_c}")
    if p_acc >= 1.0 - 1e-12:
        return 1
    if p_acc <= p_floor:
        logger.warning(f"MCMC 接受率 {p_acc:.2e} 低于下限 {p_floor:.0e}, 重复次数取上限 {r_max}")
        return r_max
    repeats = math.ceil(math.log(move_target_c) / math.log(1.0 - p_acc))
    if repeats > r_max:
        logger.warning(f"重复次数 {repeats} 超过上限, 截为 {r_max}")
        return r_max
    return max(1, repeats)


def subsample_training(thetas, n: int, deterministic: bool,
                       rng: np.random.Generator) -> np.ndarray:
    """无放回抽取训练点; 确定性模型先去重"""
    X = np.asarray(thetas, dtype=float)
    if deterministic:
        X = np.unique(X, axis=0)
        if X.shape[0] < 2:
            raise InsufficientTrainingError(f"去重后只剩 {X.shape[0]} 个不同粒子")
        if X.shape[0] < n:
            logger.warning(f"去重后仅有 {X.shape[0]} 个不同粒子, 少于训练集大小 {n}")
    size = min(n, X.shape[0])
    return X[rng.choice(X.shape[0], size=size, replace=False)]


def output_quantiles(outputs) -> Dict[str, float]:
    values = np.asarray(outputs, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return {}
    q = np.percentile(values, [0, 25, 50, 75, 100])
    return dict(zip(['min', 'q1', 'median', 'q3', 'max'], (float(v) for v in q)))


def diversify(thetas: np.ndarray, chain: WaveChain, config: SmcConfig, streams: RngStreams,
              wave: int, tag: str = "sweep") -> Tuple[np.ndarray, int, SweepDiagnostics, SweepDiagnostics]:
    """
    构建提议分布, 先做一次试探扫描, 再按接受率做 R_t 次扫描
    返回 (粒子, R_t, 试探诊断, 全部扫描合计诊断)
    """
    prop = build_proposal(thetas, chain.space, config.kde_subset_size,
                          streams.generator("subset", wave), config.transform_kind, config.proposal_scale)
    thetas, probe = mh_sweep(thetas, chain, prop, streams.generator(tag, wave, 0), validate=True)
    repeats = adaptive_repeats(probe.p_acc, config.move_target_c, config.r_max, config.p_floor)
    total = probe
    for s in range(1, repeats + 1):
        thetas, diag = mh_sweep(thetas, chain, prop, streams.generator(tag, wave, s), validate=False)
        total = total.merge(diag)
    return thetas, repeats, probe, total


# ----------------------------------------------------------------------
# 引擎
# ----------------------------------------------------------------------
class SmcHistoryMatcher:
    """SMC 历史匹配"""

    def __init__(self, model, space: ParameterSpace, measure: ImplausibilityMeasure,
                 config: SmcConfig, streams: RngStreams, store=None,
                 on_wave: Optional[Callable[[WaveSummary], None]] = None):
        self.model = model
        self.space = space
        self.measure = measure
        self.config = config
        self.streams = streams
        self.store = store
        self.on_wave = on_wave
        self.gp_config = replace(config.gp, learn_noise=not model.is_deterministic)

    def _simulate_and_fit(self, inputs: np.ndarray, wave: int) -> Tuple[np.ndarray, np.ndarray, GpEmulator]:
        raw = self.model.evaluate_batch(inputs, self.streams, wave, self.config.workers)
        outputs = self.model.finalize_outputs(raw, wave)
        training = GpTrainingSet.build(inputs, outputs, deduplicate=self.model.is_deterministic)
        emulator = GpEmulator.fit(training, self.gp_config, self.streams.generator("gp", wave))
        return raw, outputs, emulator

    def _record(self, summary: WaveSummary, population: ParticlePopulation, inputs, raw, outputs,
                emulator: GpEmulator, chain: WaveChain, summaries: List[WaveSummary]):
        summaries.append(summary)
        logger.info(summary.log_line())
        if self.store is not None:
            self.store.write_wave(summary.wave, population.thetas, self.space.names,
                                  inputs, raw, outputs, summary.to_dict(), emulator)
            self.store.write_chain(chain)
        if self.on_wave is not None:
            self.on_wave(summary)

    def run(self) -> RunResult:
        cfg = self.config
        chain = WaveChain(self.space)
        summaries: List[WaveSummary] = []
        population: Optional[ParticlePopulation] = None
        emulator: Optional[GpEmulator] = None
        status, reason = RunStatus.COMPLETED, ""
        low_acceptance_waves = 0

        try:
            # 第 0 波: 先验粒子 + 空间填充设计
            population = ParticlePopulation(self.space.sample_prior(cfg.particles, self.streams.generator("prior")))
            design = self.space.initial_design(
                DesignSpec(cfg.training_size, cfg.design_scheme, self.streams.integer_seed("design")))
            raw, outputs, emulator = self._simulate_and_fit(design, 0)
            summary = WaveSummary(wave=0, ess=population.ess, survivors=population.size,
                                  unique_particles=population.unique_count(),
                                  simulations=self.model.simulation_count,
                                  training_size=design.shape[0], output_quantiles=output_quantiles(outputs))
            self._record(summary, population, design, raw, outputs, emulator, chain, summaries)

            for w in range(1, cfg.max_waves + 1):
                values = self.measure.evaluate(*emulator.predict_batch(population.thetas))
                cutoff, mask = select_cutoff(values, cfg.alpha)

                improvement = cfg.stopping.min_cutoff_improvement
                if improvement > 0 and len(chain) >= 1 and chain.cutoffs[-1] - cutoff < improvement:
                    raise SamplerStop(f"截断值改进 {chain.cutoffs[-1] - cutoff:.3g} 低于阈值 {improvement}")

                chain.append(WaveRecord(w, emulator, self.measure, cutoff))
                ess = effective_sample_size(mask.astype(float))
                population = reweight_and_resample(population, mask, self.streams.generator("resample", w))

                thetas, repeats, probe, total = diversify(population.thetas, chain, cfg, self.streams, w)
                population = ParticlePopulation(thetas, wave=w, stream_keys=population.stream_keys)

                inputs = subsample_training(population.thetas, cfg.training_size,
                                            self.model.is_deterministic, self.streams.generator("training", w))
                raw, outputs, emulator = self._simulate_and_fit(inputs, w)

                summary = WaveSummary(wave=w, cutoff=cutoff, ess=ess, survivors=int(mask.sum()),
                                      repeats=repeats, p_acc=probe.p_acc, mean_p_acc=total.p_acc,
                                      unique_particles=population.unique_count(),
                                      simulations=self.model.simulation_count,
                                      training_size=inputs.shape[0],
                                      output_quantiles=output_quantiles(outputs), sweep=total)
                self._record(summary, population, inputs, raw, outputs, emulator, chain, summaries)

                if cfg.stopping.min_acceptance > 0:
                    low_acceptance_waves = low_acceptance_waves + 1 if probe.p_acc < cfg.stopping.min_acceptance else 0
                    if low_acceptance_waves >= 2:
                        raise LowAcceptanceStop(f"连续两波接受率低于 {cfg.stopping.min_acceptance}")

        except SamplerStop as stop:
            status, reason = RunStatus.STOPPED, str(stop)
            logger.warning(f"采样器停止: {reason}")
        except Exception as exc:
            status, reason = RunStatus.FAILED, f"{type(exc).__name__}: {exc}"
            logger.exception(f"运行失败: {reason}")

        result = RunResult(status, chain, population, summaries, self.model.simulation_count, reason, emulator)
        if self.store is not None:
            self.store.write_result(result)
        return result


def smc_sample_sequence(chain: WaveChain, config: SmcConfig, streams: RngStreams,
                        store=None) -> Tuple[List[ParticlePopulation], List[WaveSummary]]:
    """
    在固定的波次链上运行 SMC 采样, 截断值沿用链中给定的值
    返回每一波结束后的粒子群
    """
    space = chain.space
    population = ParticlePopulation(space.sample_prior(config.particles, streams.generator("prior")))
    populations, summaries = [], []
    for record in chain:
        w = record.index
        mask = record.evaluate(population.thetas) <= record.cutoff
        ess = effective_sample_size(mask.astype(float))
        population = reweight_and_resample(population, mask, streams.generator("resample", w))
        thetas, repeats, probe, total = diversify(population.thetas, chain.truncated(w), config, streams, w)
        population = ParticlePopulation(thetas, wave=w)
        summary = WaveSummary(wave=w, cutoff=record.cutoff, ess=ess, survivors=int(mask.sum()),
                              repeats=repeats, p_acc=probe.p_acc, mean_p_acc=total.p_acc,
                              unique_particles=population.unique_count(), sweep=total)
        logger.info(summary.log_line())
        populations.append(population)
        summaries.append(summary)
        if store is not None:
            store.write_population(w, population.thetas, space.names, summary.to_dict())
    return populations, summaries
