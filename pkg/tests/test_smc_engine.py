"""
SMC 引擎测试
"""
import math

import numpy as np
import pytest

from src.emulation.gp_emulator import GpFitConfig
from src.emulation.implausibility import ImplausibilityMeasure
from src.errors import DegenerateImplausibilityError, InsufficientTrainingError, NoSurvivorsError
from src.models.toy_model import ToyModel
from src.sampling.smc_engine import (ParticlePopulation, RunStatus, SmcConfig, SmcHistoryMatcher, WaveSummary,
                                     adaptive_repeats, effective_sample_size, output_quantiles,
                                     reweight_and_resample, select_cutoff, smc_sample_sequence,
                                     subsample_training)


@pytest.fixture
def desk_config():
    """桌面规模的小参数"""
    return SmcConfig(particles=400, training_size=20, max_waves=3, kde_subset_size=400,
                     gp=GpFitConfig(restarts=2))


def test_select_cutoff_rank():
    """测试截断取 ⌈αM⌉ 次序统计量"""
    cutoff, mask = select_cutoff([4.0, 1.0, 3.0, 2.0], 0.5)
    assert cutoff == 2.0
    np.testing.assert_array_equal(mask, [False, True, False, True])


def test_select_cutoff_ties_kept():
    """测试并列值全部保留"""
    cutoff, mask = select_cutoff([5.0, 5.0, 5.0, 1.0], 0.5)
    assert cutoff == 5.0
    assert mask.all()


def test_select_cutoff_nan_is_worst():
    """测试 NaN 排在最后"""
    cutoff, mask = select_cutoff([np.nan, 1.0, 2.0, 3.0], 0.5)
    assert cutoff == 2.0
    assert not mask[0]


def test_select_cutoff_degenerate():
    """测试全部相等时停止"""
    with pytest.raises(DegenerateImplausibilityError):
        select_cutoff([1.0, 1.0, 1.0], 0.5)


def test_select_cutoff_must_be_finite():
    """测试 NaN 过多导致截断值落在无穷处时停止"""
    with pytest.raises(DegenerateImplausibilityError):
        select_cutoff([np.nan, np.nan, np.nan, 1.0], 0.5)
    with pytest.raises(DegenerateImplausibilityError):
        select_cutoff([np.inf, np.inf, 2.0, 1.0], 0.75)
    cutoff, mask = select_cutoff([np.inf, np.inf, 2.0, 1.0], 0.5)
    assert cutoff == 2.0
    assert mask.sum() == 2


def test_select_cutoff_uniform_fraction():
    """测试连续取值时保留比例约为 α"""
    values = np.random.default_rng(0).random(10_000)
    cutoff, mask = select_cutoff(values, 0.5)
    assert cutoff == pytest.approx(0.5, abs=0.02)
    assert mask.sum() == 5000


def test_effective_sample_size():
    """测试 ESS"""
    assert effective_sample_size(np.full(10, 0.1)) == pytest.approx(10.0)
    assert effective_sample_size([1.0, 1.0, 0.0, 0.0]) == pytest.approx(2.0)
    assert effective_sample_size(np.zeros(3)) == 0.0


def test_resample_keeps_survivors_in_place():
    """测试幸存者原位保留, 其余从幸存者补满"""
    thetas = np.arange(20, dtype=float).reshape(10, 2)
    mask = np.zeros(10, dtype=bool)
    mask[[1, 4, 7]] = True
    pop = reweight_and_resample(ParticlePopulation(thetas), mask, np.random.default_rng(0))
    assert pop.size == 10
    np.testing.assert_array_equal(pop.thetas[mask], thetas[mask])
    survivors = {tuple(row) for row in thetas[mask]}
    assert all(tuple(row) in survivors for row in pop.thetas)
    assert pop.ess == pytest.approx(10.0)


def test_resample_without_survivors():
    """测试没有幸存者时报错"""
    with pytest.raises(NoSurvivorsError):
        reweight_and_resample(ParticlePopulation(np.zeros((4, 1))), np.zeros(4, bool), np.random.default_rng(0))


def test_population_weights_validated():
    """测试非法权重"""
    with pytest.raises(ValueError):
        ParticlePopulation(np.zeros((2, 1)), weights=np.array([0.7, 0.7]))


def test_adaptive_repeats():
    """测试自适应重复次数"""
    assert adaptive_repeats(0.5, 0.01) == 7
    assert adaptive_repeats(0.5, 0.01) == math.ceil(math.log(0.01) / math.log(0.5))
    assert adaptive_repeats(1.0, 0.01) == 1
    assert adaptive_repeats(1e-4, 0.01, r_max=100, p_floor=1e-3) == 100
    assert adaptive_repeats(0.01, 0.01, r_max=50, p_floor=1e-3) == 50
    with pytest.raises(ValueError):
        adaptive_repeats(0.5, 1.5)


def test_subsample_training_deterministic_dedup():
    """测试确定性模型去重后不足时全部使用"""
    X = np.repeat(np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]]), 4, axis=0)
    picked = subsample_training(X, 5, True, np.random.default_rng(0))
    assert picked.shape == (3, 2)
    assert np.unique(picked, axis=0).shape[0] == 3
    with pytest.raises(InsufficientTrainingError):
        subsample_training(np.ones((5, 2)), 3, True, np.random.default_rng(0))


def test_subsample_training_stochastic_keeps_duplicates():
    """测试随机模型保留重复粒子"""
    X = np.repeat(np.array([[0.1], [0.3]]), 5, axis=0)
    picked = subsample_training(X, 6, False, np.random.default_rng(0))
    assert picked.shape == (6, 1)


def test_output_quantiles():
    """测试训练输出五数概括"""
    q = output_quantiles([1.0, 2.0, 3.0, 4.0, 5.0, np.nan])
    assert q == {'min': 1.0, 'q1': 2.0, 'median': 3.0, 'q3': 4.0, 'max': 5.0}
    assert output_quantiles([np.nan]) == {}


def test_config_validation():
    """测试 SMC 参数校验"""
    with pytest.raises(ValueError):
        SmcConfig(alpha=1.0)
    with pytest.raises(ValueError):
        SmcConfig(particles=10, training_size=20)
    with pytest.raises(ValueError):
        SmcConfig(max_waves=-1)


def test_zero_waves_returns_initial_emulator(streams):
    """测试 max_waves = 0 时只有第 0 波"""
    config = SmcConfig(particles=100, training_size=10, max_waves=0, gp=GpFitConfig(restarts=1))
    model = ToyModel()
    result = SmcHistoryMatcher(model, model.space, ImplausibilityMeasure.lcb(3.0), config, streams).run()
    assert result.status == RunStatus.COMPLETED
    assert result.waves_completed == 0
    assert len(result.summaries) == 1
    assert result.emulator is not None
    assert result.simulations == 10


def test_toy_run(desk_config, streams):
    """测试桌面规模的测试函数运行"""
    model = ToyModel()
    seen = []
    result = SmcHistoryMatcher(model, model.space, ImplausibilityMeasure.lcb(3.0), desk_config, streams,
                               on_wave=seen.append).run()
    assert result.status == RunStatus.COMPLETED, result.stop_reason
    assert result.waves_completed == 3
    assert [s.wave for s in seen] == [0, 1, 2, 3]
    assert result.simulations == 20 * 4
    assert result.population.size == 400
    assert result.chain.accepts(result.population.thetas).all()
    for summary in result.summaries[1:]:
        assert summary.survivors >= 200
        assert summary.repeats >= 1
        assert 0 <= summary.p_acc <= 1
    assert 'cutoff=' in result.summaries[1].log_line()


def test_toy_run_reproducible(desk_config):
    """测试相同种子完全复现"""
    from src.core.rng import RngStreams

    runs = []
    for _ in range(2):
        model = ToyModel()
        runs.append(SmcHistoryMatcher(model, model.space, ImplausibilityMeasure.lcb(3.0), desk_config,
                                      RngStreams(5)).run())
    assert runs[0].chain.cutoffs == runs[1].chain.cutoffs
    np.testing.assert_array_equal(runs[0].population.thetas, runs[1].population.thetas)


def test_sample_sequence_on_fixed_chain(disc_chain, streams):
    """测试在固定波次链上采样"""
    config = SmcConfig(particles=500, training_size=10, kde_subset_size=500)
    populations, summaries = smc_sample_sequence(disc_chain, config, streams)
    assert len(populations) == 1
    assert disc_chain.accepts(populations[0].thetas).all()
    assert isinstance(summaries[0], WaveSummary)
    # 圆盘面积 π·0.09 ≈ 0.283
    assert summaries[0].survivors / 500 == pytest.approx(np.pi * 0.09, abs=0.07)
