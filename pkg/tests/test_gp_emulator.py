"""
高斯过程模拟器测试
"""
import numpy as np
import pytest

from src.emulation.gp_emulator import (GpEmulator, GpFitConfig, GpHyperparameters, GpTrainingSet, _factorize,
                                       se_ard_kernel)
from src.errors import GpFitError


@pytest.fixture
def sine_training():
    """一维光滑函数的训练集"""
    X = np.linspace(0.0, 3.0, 12).reshape(-1, 1)
    y = np.sin(2.0 * X[:, 0]) + 0.5 * X[:, 0]
    return GpTrainingSet.build(X, y)


@pytest.fixture
def fitted(sine_training):
    return GpEmulator.fit(sine_training, GpFitConfig(restarts=4), np.random.default_rng(5))


def test_interpolates_training_points(fitted, sine_training):
    """测试确定性模拟器在训练点处插值"""
    means, sds = fitted.predict_batch(sine_training.inputs)
    np.testing.assert_allclose(means, sine_training.outputs, atol=1e-3 * sine_training.output_sd)
    assert np.all(sds < 1e-2 * sine_training.output_sd)


def test_mean_matches_direct_inverse(sine_training):
    """测试后验均值与直接求逆一致"""
    hyper = GpHyperparameters(1.3, np.array([0.7]), 1e-4)
    emulator = GpEmulator.from_hyperparameters(sine_training, hyper)

    Z = sine_training.standardized_inputs
    y = sine_training.standardized_outputs
    K = se_ard_kernel(Z, Z, 1.3, np.array([0.7])) + 1e-4 * np.eye(Z.shape[0])
    X_new = np.array([[0.37], [1.11], [2.9]])
    k_star = se_ard_kernel(sine_training.standardize_inputs(X_new), Z, 1.3, np.array([0.7]))
    expected = k_star @ np.linalg.inv(K) @ y * sine_training.output_sd + sine_training.output_mean
    expected_var = 1.3 - np.einsum('ij,jk,ik->i', k_star, np.linalg.inv(K), k_star)

    means, sds = emulator.predict_batch(X_new)
    np.testing.assert_allclose(means, expected, atol=1e-8)
    np.testing.assert_allclose(sds, np.sqrt(np.maximum(expected_var, 0)) * sine_training.output_sd, atol=1e-6)


def test_fitted_lml_beats_random_hyperparameters(fitted):
    """测试拟合的边际似然不低于随机超参数"""
    rng = np.random.default_rng(11)
    best = fitted.diagnostics.best_log_marginal_likelihood
    assert fitted.log_marginal_likelihood() == pytest.approx(best, rel=1e-6, abs=1e-6)
    for _ in range(20):
        hyper = GpHyperparameters(float(np.exp(rng.uniform(np.log(0.1), np.log(10.0)))),
                                  np.exp(rng.uniform(np.log(0.05), np.log(5.0), 1)),
                                  fitted.hyper.noise_variance)
        assert fitted.log_marginal_likelihood(hyper) <= best + 1e-6


def test_batch_matches_single_predictions(fitted):
    """测试批量预测与逐点预测一致"""
    X = np.linspace(-0.5, 3.5, 9).reshape(-1, 1)
    means, sds = fitted.predict_batch(X)
    for i, x in enumerate(X):
        m, s = fitted.predict(x)
        assert m == pytest.approx(means[i], abs=1e-12)
        assert s == pytest.approx(sds[i], abs=1e-12)


def test_training_order_does_not_matter(sine_training):
    """测试训练点顺序不影响拟合结果"""
    perm = np.random.default_rng(2).permutation(sine_training.size)
    shuffled = GpTrainingSet.build(sine_training.inputs[perm], sine_training.outputs[perm])
    a = GpEmulator.fit(sine_training, GpFitConfig(restarts=3), np.random.default_rng(1))
    b = GpEmulator.fit(shuffled, GpFitConfig(restarts=3), np.random.default_rng(1))
    X = np.array([[0.25], [1.75]])
    np.testing.assert_allclose(a.predict_batch(X)[0], b.predict_batch(X)[0], rtol=1e-8)


def test_constant_outputs():
    """测试常数输出时预测为该常数"""
    X = np.linspace(0, 1, 6).reshape(-1, 1)
    training = GpTrainingSet.build(X, np.full(6, 2.5))
    emulator = GpEmulator.fit(training, GpFitConfig(restarts=2), np.random.default_rng(0))
    means, _ = emulator.predict_batch(np.array([[0.33], [0.9]]))
    np.testing.assert_allclose(means, 2.5, atol=1e-10)


def test_duplicates_are_averaged():
    """测试重复输入合并且输出取平均"""
    X = np.array([[0.0], [0.5], [0.5], [1.0]])
    training = GpTrainingSet.build(X, np.array([1.0, 2.0, 4.0, 0.0]))
    assert training.size == 3
    assert training.outputs[1] == pytest.approx(3.0)
    with pytest.raises(GpFitError):
        GpTrainingSet.build(np.array([[0.5], [0.5]]), np.array([1.0, 2.0]))


def test_non_finite_outputs_rejected():
    """测试非有限训练输出"""
    with pytest.raises(GpFitError):
        GpTrainingSet.build(np.array([[0.0], [1.0]]), np.array([1.0, np.nan]))


def test_jitter_escalation():
    """测试不定矩阵时逐级增加抖动, 超过上限报错"""
    K = np.array([[1.0, 1.0 + 1e-9], [1.0 + 1e-9, 1.0]])
    L, jitter = _factorize(K, 1.0, 1e-4)
    assert jitter > 0
    np.testing.assert_allclose(L @ L.T, K + jitter * np.eye(2), atol=1e-12)
    with pytest.raises(GpFitError):
        _factorize(K, 1.0, 1e-12)


def test_dimension_mismatch(fitted):
    """测试预测维数不匹配"""
    with pytest.raises(ValueError):
        fitted.predict_batch(np.zeros((2, 3)))


def test_save_and_load(fitted, tmp_path):
    """测试保存后重新加载预测不变"""
    path = fitted.save(tmp_path / 'emulator.json')
    loaded = GpEmulator.load(path)
    X = np.linspace(0, 3, 7).reshape(-1, 1)
    for a, b in zip(fitted.predict_batch(X), loaded.predict_batch(X)):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_random_sets_match_dense_solve():
    """测试 200 组随机训练集 (N<=50, p<=7) 的均值方差与稠密求解一致, 近无噪时在训练点插值"""
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(2, 51))
        p = int(rng.integers(1, 8))
        X = rng.uniform(-2.0, 5.0, (n, p))
        y = np.sin(X @ rng.normal(size=p)) + rng.normal(scale=0.1, size=n)
        training = GpTrainingSet.build(X, y)
        hyper = GpHyperparameters(float(rng.uniform(0.5, 2.0)), rng.uniform(0.5, 3.0, p),
                                  float(10 ** rng.uniform(-4, -2)))
        emulator = GpEmulator.from_hyperparameters(training, hyper)

        Z = training.standardized_inputs
        K = se_ard_kernel(Z, Z, hyper.signal_variance, emulator.hyper.lengthscales)
        K += (hyper.noise_variance + emulator.jitter) * np.eye(training.size)
        X_new = rng.uniform(-3.0, 6.0, (5, p))
        k_star = se_ard_kernel(training.standardize_inputs(X_new), Z, hyper.signal_variance,
                               emulator.hyper.lengthscales)
        expected = k_star @ np.linalg.solve(K, training.standardized_outputs)
        expected_var = hyper.signal_variance - np.einsum('ij,ji->i', k_star, np.linalg.solve(K, k_star.T))

        means, sds = emulator.predict_batch(X_new)
        np.testing.assert_allclose((means - training.output_mean) / training.output_sd, expected, atol=1e-6)
        np.testing.assert_allclose((sds / training.output_sd) ** 2, np.maximum(expected_var, 0.0), atol=1e-6)

    X = np.random.default_rng(8).uniform(0.0, 1.0, (10, 3))
    training = GpTrainingSet.build(X, X.sum(axis=1) ** 2)
    emulator = GpEmulator.from_hyperparameters(training, GpHyperparameters(1.0, np.ones(3), 1e-10))
    means, _ = emulator.predict_batch(X)
    np.testing.assert_allclose(means, training.outputs, atol=1e-3 * training.output_sd)


def test_far_prediction_reverts_to_prior(fitted, sine_training):
    """测试远离训练数据处均值回到输出均值, 标准差回到先验"""
    far = np.array([[sine_training.input_center[0] + 1e6 * sine_training.input_scale[0]]])
    mean, sd = fitted.predict(far[0])
    assert mean == pytest.approx(sine_training.output_mean, abs=1e-9 * sine_training.output_sd)
    assert sd == pytest.approx(np.sqrt(fitted.hyper.signal_variance) * sine_training.output_sd, rel=1e-9)


def test_fit_is_deterministic_given_seed(sine_training):
    """测试相同随机数种子得到相同的超参数与预测"""
    a = GpEmulator.fit(sine_training, GpFitConfig(restarts=3), np.random.default_rng(17))
    b = GpEmulator.fit(sine_training, GpFitConfig(restarts=3), np.random.default_rng(17))
    assert a.hyper.signal_variance == b.hyper.signal_variance
    np.testing.assert_array_equal(a.hyper.lengthscales, b.hyper.lengthscales)
    X = np.array([[0.4], [2.2]])
    np.testing.assert_array_equal(a.predict_batch(X)[0], b.predict_batch(X)[0])
