"""
SMC 优化 (不使用模拟器)
与历史匹配引擎相同的循环, 但隐含性直接取模拟输出 (距离),
因此每个 MCMC 提议都需要运行一次模拟器
"""
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
from loguru import logger

from src.core.param_space import ParameterSpace
from src.core.rng import RngStreams
from src.emulation.implausibility import ImplausibilityMeasure, WaveChain, WaveRecord
from src.errors import SamplerStop
from src.sampling.smc_engine import (ParticlePopulation, SmcConfig, WaveSummary, diversify,
                                     effective_sample_size, output_quantiles, reweight_and_resample,
                                     select_cutoff)


class SimulatorOracle:
    """
    以模拟器代替模拟器替身的预测对象: predict_batch 返回 (模拟输出, 0)
    同一参数点只模拟一次
    """

    def __init__(self, model, streams: RngStreams, workers: int = 1, tag: str = "smc-opt"):
        self.model = model
        self.streams = streams
        self.workers = workers
        self.tag = tag
        self.calls = 0
        self._cache: Dict[bytes, float] = {}
        self._lock = threading.Lock()

    @property
    def simulations(self) -> int:
        return self.model.simulation_count

    def predict_batch(self, thetas) -> Tuple[np.ndarray, np.ndarray]:
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(thetas, dtype=float)))
        keys = [row.tobytes() for row in X]
        with self._lock:
            missing = [i for i, key in enumerate(keys) if key not in self._cache]
            call = self.calls
            self.calls += 1
        if missing:
            unique_missing, order = [], {}
            for i in missing:
                if keys[i] not in order:
                    order[keys[i]] = len(unique_missing)
                    unique_missing.append(i)
            raw = self.model.evaluate_batch(X[unique_missing], self.streams, call, self.workers, tag=self.tag)
            values = self.model.finalize_outputs(raw, call)
            with self._lock:
                for i, value in zip(unique_missing, values):
                    self._cache[keys[i]] = float(value)
        means = np.array([self._cache[key] for key in keys])
        return means, np.zeros_like(means)

    def retain(self, thetas):
        """只保留给定粒子的缓存"""
        X = np.ascontiguousarray(np.asarray(thetas, dtype=float))
        keep = {row.tobytes() for row in X}
        with self._lock:
            self._cache = {k: v for k, v in self._cache.items() if k in keep}


@dataclass
class SmcOptimisationResult:
    chain: WaveChain
    populations: List[ParticlePopulation] = field(default_factory=list)
    summaries: List[WaveSummary] = field(default_factory=list)
    simulations: int = 0
    stop_reason: str = ""

    @property
    def cutoffs(self) -> List[float]:
        return self.chain.cutoffs


def smc_optimisation(model, space: ParameterSpace, config: SmcConfig, streams: RngStreams,
                     waves: int = None, store=None) -> SmcOptimisationResult:
    """
    SMC 优化
    截断取当前粒子距离的 α 分位数, 隐含性 = 距离 (LCB, r=0)
    """
    waves = config.max_waves if waves is None else waves
    measure = ImplausibilityMeasure.lcb(0.0)
    oracle = SimulatorOracle(model, streams, config.workers)
    result = SmcOptimisationResult(WaveChain(space))

    population = ParticlePopulation(space.sample_prior(config.particles, streams.generator("prior")))
    result.populations.append(population)
    try:
        for w in range(1, waves + 1):
            distances, _ = oracle.predict_batch(population.thetas)
            cutoff, mask = select_cutoff(distances, config.alpha)
            result.chain.append(WaveRecord(w, oracle, measure, cutoff))
            ess = effective_sample_size(mask.astype(float))
            population = reweight_and_resample(population, mask, streams.generator("resample", w))

            thetas, repeats, probe, total = diversify(population.thetas, result.chain, config, streams, w)
            population = ParticlePopulation(thetas, wave=w)
            oracle.retain(population.thetas)
            current, _ = oracle.predict_batch(population.thetas)

            summary = WaveSummary(wave=w, cutoff=cutoff, ess=ess, survivors=int(mask.sum()),
                                  repeats=repeats, p_acc=probe.p_acc, mean_p_acc=total.p_acc,
                                  unique_particles=population.unique_count(),
                                  simulations=oracle.simulations,
                                  output_quantiles=output_quantiles(current), sweep=total)
            logger.info(f"smc-opt {summary.log_line()}")
            result.populations.append(population)
            result.summaries.append(summary)
            if store is not None:
                store.write_population(w, population.thetas, space.names, summary.to_dict())
    except SamplerStop as stop:
        result.stop_reason = str(stop)
        logger.warning(f"SMC 优化停止: {stop}")

    result.simulations = oracle.simulations
    return result
