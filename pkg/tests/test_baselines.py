"""
对比采样器测试: 暴力求解, 拒绝采样, 临时采样器, SMC 优化, 贝叶斯 SMC, 均匀性度量
"""
import numpy as np
import pytest
from scipy import stats

from src.baselines import (AdhocKind, adhoc_sampler, bayes_smc_anneal, brute_force_history_match,
                           chi_square_uniformity, grid_occupancy_tv, next_temperature, rejection_sampler,
                           run_adhoc_sequence, run_rejection_sequence, smc_optimisation, tempered_ess)
from src.core.param_space import ParameterSpace
from src.core.rng import RngStreams
from src.emulation.gp_emulator import GpFitConfig
from src.emulation.implausibility import ImplausibilityMeasure, WaveChain
from src.models.base_model import ModelKind, SimulatorModel
from src.models.toy_model import ToyModel
from src.sampling.smc_engine import SmcConfig
from tests.helpers import analytic_chain


class GaussianLikelihood(SimulatorModel):
    """一维 N(y; θ, s²) 似然, 用于共轭对照"""

    kind = ModelKind.STOCHASTIC

    def __init__(self, space, y=1.0, s=0.5):
        super().__init__('gauss', space)
        self.y, self.s = y, s

    def simulate(self, theta, rng):
        return float(theta[0])

    def log_likelihood(self, theta, rng):
        return float(stats.norm.logpdf(self.y, theta[0], self.s))

    def default_measure(self):
        return ImplausibilityMeasure.lcb(0.0)


class FlatLikelihood(GaussianLikelihood):
    def log_likelihood(self, theta, rng):
        return 0.0


class ConvexQuadratic(SimulatorModel):
    """单位正方形上的凸二次函数, 最小值 0 在 (0.3, 0.7)"""

    minimum = np.array([0.3, 0.7])

    def __init__(self, space):
        super().__init__('quadratic', space)

    def simulate(self, theta, rng=None):
        d = np.asarray(theta) - self.minimum
        return float(d[0] ** 2 + 2.0 * d[1] ** 2)

    def evaluate_batch(self, thetas, streams, wave, workers=1, tag="simulate"):
        d = np.asarray(thetas, dtype=float) - self.minimum
        with self._lock:
            self.simulation_count += d.shape[0]
        return d[:, 0] ** 2 + 2.0 * d[:, 1] ** 2

    def default_measure(self):
        return ImplausibilityMeasure.lcb(0.0)


# ----------------------------------------------------------------------
# 暴力求解
# ----------------------------------------------------------------------
def small_oracle(seed, n_qmc=4096, waves=2, training=20):
    model = ToyModel()
    return brute_force_history_match(model, model.space, n_qmc, training, 0.5, waves, RngStreams(seed),
                                      ImplausibilityMeasure.lcb(3.0), GpFitConfig(restarts=2))


def test_brute_force_nested_survivors():
    """测试各波幸存点逐波嵌套且数量按 α 收缩"""
    result = small_oracle(3)
    assert result.complete
    assert len(result.chain) == 2
    assert result.survivors[0].size == 4096
    for w in (1, 2):
        previous, current = result.survivors[w - 1], result.survivors[w]
        assert set(current) <= set(previous)
        assert current.size >= int(np.ceil(0.5 * previous.size))
        assert result.chain.truncated(w).accepts(result.survivor_points(w)).all()
    assert result.simulations == 40
    assert result.survivor_fractions()[0] == 1.0


def test_brute_force_reproducible():
    """测试相同种子给出相同截断值"""
    assert small_oracle(4).cutoffs == small_oracle(4).cutoffs


def test_brute_force_stops_when_survivors_run_out():
    """测试幸存点少于训练集时提前结束"""
    result = small_oracle(5, n_qmc=64, waves=4)
    assert not result.complete
    assert len(result.chain) < 4
    assert result.stop_reason


def test_brute_force_requires_box():
    """测试非盒子空间报错"""
    space = ParameterSpace.log_half_cauchy(('t',))
    with pytest.raises(ValueError):
        brute_force_history_match(ToyModel(), space, 64, 10, 0.5, 1, RngStreams(1))


# ----------------------------------------------------------------------
# 拒绝采样与临时采样器
# ----------------------------------------------------------------------
def test_rejection_on_empty_chain(unit_square, streams):
    """测试空链时全部接受"""
    result = rejection_sampler(WaveChain(unit_square), 500, streams.generator("rej"))
    assert result.acceptance_rate == 1.0
    assert result.samples.shape == (500, 2)


def test_rejection_half_box_rate(half_box_chain, streams):
    """测试左半边的接受率约为 0.5"""
    result = rejection_sampler(half_box_chain, 5000, streams.generator("rej"), batch_size=1000)
    assert abs(result.acceptance_rate - 0.5) < 3 * result.acceptance_se + 1e-3
    assert (result.samples[:, 0] <= 0.5).all()


def test_rejection_samples_uniform(half_box_chain, streams):
    """测试拒绝采样的样本通过均匀性检验"""
    result = rejection_sampler(half_box_chain, 5000, streams.generator("rej"))
    test = chi_square_uniformity(result.samples, (0, 0), (1, 1), bins=10)
    assert test.cells == 50
    assert test.pvalue > 0.01


def test_rejection_gives_up(unit_square, streams):
    """测试接受率过低时放弃"""
    chain = analytic_chain(unit_square, (lambda X: X[:, 0], -1.0))
    result = rejection_sampler(chain, 10, streams.generator("rej"), batch_size=1000, max_proposals=5000)
    assert not result.complete
    assert result.samples.shape == (0, 2)
    assert result.proposals == 5000


@pytest.mark.parametrize('kind', [AdhocKind.LOGIT, AdhocKind.KDE])
def test_adhoc_samples_valid(disc_chain, streams, kind):
    """测试临时采样器的样本全部满足约束, 质心位于圆心附近"""
    particles = rejection_sampler(disc_chain, 1000, streams.generator("seed")).samples
    result = adhoc_sampler(disc_chain, particles, kind, 2000, streams.generator("adhoc"))
    assert result.complete
    assert result.samples.shape == (2000, 2)
    assert disc_chain.accepts(result.samples).all()
    np.testing.assert_allclose(result.samples.mean(axis=0), [0.5, 0.5], atol=0.02)
    assert result.acceptance_rate > 0.1


def test_sequences_follow_chain(unit_square, streams):
    """测试逐波序列"""
    chain = analytic_chain(unit_square, (lambda X: X[:, 0], 0.5), (lambda X: X[:, 1], 0.5))
    rejection = run_rejection_sequence(chain, 300, streams)
    assert [r.samples.shape[0] for r in rejection] == [300, 300]
    assert rejection[1].acceptance_rate == pytest.approx(0.25, abs=0.05)
    adhoc = run_adhoc_sequence(chain, AdhocKind.KDE, 300, streams)
    assert len(adhoc) == 2
    assert chain.accepts(adhoc[1].samples).all()


# ----------------------------------------------------------------------
# SMC 优化
# ----------------------------------------------------------------------
def test_smc_optimisation(streams):
    """测试截断值单调不增且模拟次数远多于历史匹配"""
    model = ToyModel()
    config = SmcConfig(particles=200, training_size=10, max_waves=3, kde_subset_size=200)
    result = smc_optimisation(model, model.space, config, streams)
    assert not result.stop_reason
    assert len(result.cutoffs) == 3
    assert all(b <= a for a, b in zip(result.cutoffs, result.cutoffs[1:]))
    assert result.simulations > 10 * 4 * 10
    final = result.populations[-1].thetas
    assert (model.evaluate_batch(final, streams, 0) <= result.cutoffs[-1]).all()


def test_smc_optimisation_contracts_on_quadratic(unit_square, streams):
    """测试凸二次函数上截断值逐波收缩, 粒子集中到最小值附近"""
    model = ConvexQuadratic(unit_square)
    config = SmcConfig(particles=400, training_size=10, max_waves=6, kde_subset_size=400)
    result = smc_optimisation(model, unit_square, config, streams)
    assert not result.stop_reason
    cutoffs = result.cutoffs
    assert len(cutoffs) == 6
    assert all(b <= a for a, b in zip(cutoffs, cutoffs[1:]))
    assert cutoffs[-1] < cutoffs[0] / 8

    final = result.populations[-1].thetas
    distance = np.abs(final - ConvexQuadratic.minimum)
    assert (distance[:, 0] <= np.sqrt(cutoffs[-1]) + 1e-12).all()
    assert (distance[:, 1] <= np.sqrt(cutoffs[-1] / 2.0) + 1e-12).all()
    np.testing.assert_allclose(final.mean(axis=0), ConvexQuadratic.minimum, atol=0.03)


# ----------------------------------------------------------------------
# 贝叶斯 SMC
# ----------------------------------------------------------------------
def test_tempered_ess():
    """测试退火权重的 ESS"""
    assert tempered_ess(np.zeros(10), 0.7) == pytest.approx(10.0)
    assert tempered_ess(np.array([0.0, -np.inf]), 1.0) == pytest.approx(1.0)


def test_next_temperature_reaches_one():
    """测试似然平坦时一步到 1"""
    assert next_temperature(np.zeros(50), 0.0, 25.0) == (1.0, False)


def test_next_temperature_hits_target():
    """测试二分结果使 ESS 等于目标"""
    ll = -np.random.default_rng(0).exponential(50.0, 200)
    gamma, fallback = next_temperature(ll, 0.0, 100.0)
    assert not fallback
    assert 0 < gamma < 1
    assert tempered_ess(ll, gamma) == pytest.approx(100.0, rel=1e-6)


def test_next_temperature_fallback():
    """测试二分失败时取最小增量"""
    ll = np.array([0.0, -1e12, -1e12, -1e12])
    gamma, fallback = next_temperature(ll, 0.2, 2.0)
    assert fallback
    assert gamma == pytest.approx(0.2 + 1e-4)


def test_flat_likelihood_single_step(unit_square, streams):
    """测试平坦似然时温度序列为 [0, 1]"""
    result = bayes_smc_anneal(FlatLikelihood(unit_square), unit_square, 200, streams)
    assert result.temperatures == [0.0, 1.0]
    assert result.intermediate_temperatures == 0
    assert result.complete
    assert unit_square.in_support(result.thetas).all()


def test_gaussian_posterior(streams):
    """测试宽均匀先验下的后验近似 N(1, 0.5²)"""
    space = ParameterSpace.box(('theta',), (-10.0,), (10.0,))
    result = bayes_smc_anneal(GaussianLikelihood(space), space, 1000, streams)
    assert result.complete
    assert result.temperatures[-1] == 1.0
    assert all(b > a for a, b in zip(result.temperatures, result.temperatures[1:]))
    assert result.intermediate_temperatures >= 1
    assert result.thetas[:, 0].mean() == pytest.approx(1.0, abs=0.1)
    assert result.thetas[:, 0].std() == pytest.approx(0.5, abs=0.1)
    assert result.evaluations >= 1000


# ----------------------------------------------------------------------
# 均匀性度量
# ----------------------------------------------------------------------
def test_grid_tv_distance():
    """测试总变差距离"""
    rng = np.random.default_rng(0)
    left = rng.random((1000, 2)) * [0.4, 1.0]
    right = left + [0.5, 0.0]
    assert grid_occupancy_tv(left, left, (0, 0), (1, 1)) == 0.0
    assert grid_occupancy_tv(left, right, (0, 0), (1, 1)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        grid_occupancy_tv(np.empty((0, 2)), left, (0, 0), (1, 1))


def test_chi_square_detects_clustering():
    """测试集中分布被卡方检验拒绝"""
    rng = np.random.default_rng(1)
    uniform = rng.random((5000, 2))
    assert chi_square_uniformity(uniform, (0, 0), (1, 1), bins=10).pvalue > 0.01
    clustered = np.clip(rng.normal(0.5, 0.15, (5000, 2)), 0, 1)
    test = chi_square_uniformity(clustered, (0, 0), (1, 1), occupied=np.ones((10, 10), bool), bins=10)
    assert test.pvalue < 1e-6
    assert test.cells == 100
