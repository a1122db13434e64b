"""
暴力历史匹配 - 在大规模 Sobol 点集上逐波筛选
每一波的模拟器只用当前幸存点中均匀抽取的训练集拟合, 由此得到的波次链作为其他采样器的参照
"""
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from loguru import logger

from src.core.param_space import DesignScheme, DesignSpec, ParameterSpace
from src.core.parallel import parallel_map
from src.core.rng import RngStreams
from src.emulation.gp_emulator import GpEmulator, GpFitConfig, GpTrainingSet
from src.emulation.implausibility import ImplausibilityMeasure, WaveChain, WaveRecord
from src.errors import SamplerStop
from src.sampling.smc_engine import output_quantiles, select_cutoff

_EVAL_CHUNK = 65536


@dataclass
class BruteForceResult:
    """暴力求解结果: 冻结的波次链与每一波的幸存点索引"""
    chain: WaveChain
    points: np.ndarray
    survivors: List[np.ndarray] = field(default_factory=list)   # survivors[0] 为全部点
    simulations: int = 0
    complete: bool = True
    stop_reason: str = ""

    @property
    def cutoffs(self) -> List[float]:
        return self.chain.cutoffs

    def survivor_points(self, w: int) -> np.ndarray:
        return self.points[self.survivors[w]]

    def survivor_fractions(self) -> List[float]:
        total = self.points.shape[0]
        return [idx.size / total for idx in self.survivors]


def evaluate_points(emulator, measure: ImplausibilityMeasure, points: np.ndarray,
                    workers: int = 1) -> np.ndarray:
    """对大点集分块计算隐含性, 分块结果按顺序拼接"""
    chunks = [points[i:i + _EVAL_CHUNK] for i in range(0, points.shape[0], _EVAL_CHUNK)]
    if not chunks:
        return np.empty(0)
    return np.concatenate(parallel_map(lambda X: measure.evaluate(*emulator.predict_batch(X)), chunks, workers))


def brute_force_history_match(model, space: ParameterSpace, n_qmc: int, training_size: int,
                              alpha: float, waves: int, streams: RngStreams,
                              measure: Optional[ImplausibilityMeasure] = None,
                              gp_config: Optional[GpFitConfig] = None, workers: int = 1,
                              store=None) -> BruteForceResult:
    """
    暴力历史匹配
    Args:
        model: 模拟器
        space: 参数空间, 必须是有界盒子
        n_qmc: Sobol 点数 (建议 2 的幂)
        training_size: 每一波训练点数 N
        alpha: 每一波保留比例
        waves: 波数
    """
    if not space.is_box:
        raise ValueError("暴力求解只支持有界盒子参数空间")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha 必须在 (0,1) 内: {alpha}")
    measure = measure or model.default_measure()
    gp_config = replace(gp_config or GpFitConfig(), learn_noise=not model.is_deterministic)

    points = space.initial_design(DesignSpec(n_qmc, DesignScheme.SOBOL, streams.integer_seed("oracle-qmc")))
    result = BruteForceResult(WaveChain(space), points, [np.arange(points.shape[0])])
    logger.info(f"暴力求解: {points.shape[0]} 个 Sobol 点, {waves} 波, α={alpha}")

    current = result.survivors[0]
    for w in range(1, waves + 1):
        if current.size < training_size:
            result.complete = False
            result.stop_reason = f"第 {w} 波幸存点 {current.size} 少于训练集大小 {training_size}"
            logger.warning(f"暴力求解提前结束: {result.stop_reason}")
            break

        pick = streams.generator("oracle-training", w).choice(current.size, size=training_size, replace=False)
        inputs = points[current[np.sort(pick)]]
        raw = model.evaluate_batch(inputs, streams, w - 1, workers, tag="oracle-simulate")
        outputs = model.finalize_outputs(raw, w - 1)
        training = GpTrainingSet.build(inputs, outputs, deduplicate=model.is_deterministic)
        emulator = GpEmulator.fit(training, gp_config, streams.generator("oracle-gp", w))

        values = evaluate_points(emulator, measure, points[current], workers)
        try:
            cutoff, mask = select_cutoff(values, alpha)
        except SamplerStop as stop:
            result.complete = False
            result.stop_reason = str(stop)
            logger.warning(f"暴力求解提前结束: {stop}")
            break

        record = WaveRecord(w, emulator, measure, cutoff)
        result.chain.append(record)
        current = current[mask]
        result.survivors.append(current)
        result.simulations = model.simulation_count

        fraction = current.size / points.shape[0]
        logger.info(f"oracle wave={w} cutoff={cutoff:.6g} survivors={current.size} "
                    f"fraction={fraction:.4%} sims={result.simulations}")
        if store is not None:
            summary = {
                'wave': w,
                'cutoff': cutoff,
                'survivors': int(current.size),
                'survivor_fraction': fraction,
                'simulations': result.simulations,
                'training_size': int(inputs.shape[0]),
                'output_quantiles': output_quantiles(outputs),
            }
            store.write_training(w - 1, inputs, space.names, raw, outputs)
            store.write_emulator(w - 1, emulator)
            store.write_population(w, points[current], space.names, summary)
            store.write_chain(result.chain)

    result.simulations = model.simulation_count
    return result