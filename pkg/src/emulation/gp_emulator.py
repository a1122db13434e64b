"""
高斯过程模拟器 - SE-ARD 核, 标准化输入输出, 多起点最大化边际似然
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
from loguru import logger
from scipy import linalg, optimize

from config import Config
from src.errors import GpFitError

FORMAT_VERSION = 1
_PREDICT_CHUNK = 4096
_LML_FAILURE = 1e25


@dataclass
class GpTrainingSet:
    """训练集: 原始输入输出及标准化参数"""
    inputs: np.ndarray
    outputs: np.ndarray
    input_center: np.ndarray
    input_scale: np.ndarray
    output_mean: float
    output_sd: float

    @classmethod
    def build(cls, inputs, outputs, deduplicate: bool = True, min_points: int = 2) -> 'GpTrainingSet':
        """
        构建训练集
        deduplicate 为 True 时, 相同输入行合并为一行, 输出取平均
        """
        X = np.asarray(inputs, dtype=float)
        y = np.asarray(outputs, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[0] != y.size:
            raise ValueError(f"训练输入 {X.shape} 与输出 {y.shape} 不匹配")
        if not np.isfinite(y).all():
            raise GpFitError(f"训练输出包含非有限值: {int((~np.isfinite(y)).sum())} 个")
        if not np.isfinite(X).all():
            raise GpFitError("训练输入包含非有限值")

        if deduplicate:
            X, inverse = np.unique(X, axis=0, return_inverse=True)
            inverse = inverse.reshape(-1)
            y = np.bincount(inverse, weights=y) / np.bincount(inverse)

        if X.shape[0] < min_points:
            raise GpFitError(f"训练点不足: {X.shape[0]} < {min_points}")

        center = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale <= 0] = 1.0
        out_mean = float(y.mean())
        out_sd = float(y.std())
        if out_sd <= 0:
            out_sd = 1.0
        return cls(X, y, center, scale, out_mean, out_sd)

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def standardize_inputs(self, X: np.ndarray) -> np.ndarray:
        return (X - self.input_center) / self.input_scale

    @property
    def standardized_inputs(self) -> np.ndarray:
        return self.standardize_inputs(self.inputs)

    @property
    def standardized_outputs(self) -> np.ndarray:
        return (self.outputs - self.output_mean) / self.output_sd

    def input_range(self) -> np.ndarray:
        """标准化尺度下每一维的取值跨度"""
        Z = self.standardized_inputs
        span = Z.max(axis=0) - Z.min(axis=0)
        span[span <= 0] = 1.0
        return span


@dataclass(frozen=True)
class GpHyperparameters:
    """核超参数, 均在标准化尺度上"""
    signal_variance: float
    lengthscales: np.ndarray
    noise_variance: float

    def to_dict(self) -> Dict:
        return {
            'signal_variance': float(self.signal_variance),
            'lengthscales': [float(v) for v in np.atleast_1d(self.lengthscales)],
            'noise_variance': float(self.noise_variance),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'GpHyperparameters':
        return cls(float(data['signal_variance']),
                   np.asarray(data['lengthscales'], dtype=float),
                   float(data['noise_variance']))


@dataclass
class GpFitConfig:
    """拟合配置"""
    restarts: int = Config.GP_RESTARTS
    lengthscale_range: Tuple[float, float] = Config.GP_LENGTHSCALE_RANGE
    signal_range: Tuple[float, float] = Config.GP_SIGNAL_RANGE
    noise_range: Tuple[float, float] = Config.GP_NOISE_RANGE
    learn_noise: bool = False          # 随机模型学习噪声, 确定性模型固定为 fixed_noise
    fixed_noise: float = Config.GP_DETERMINISTIC_NOISE
    max_jitter_ratio: float = Config.GP_MAX_JITTER_RATIO
    predict_noisy: bool = False
    seed: int = 0

    # 优化边界
    signal_bounds: Tuple[float, float] = (1e-3, 1e3)
    lengthscale_bounds: Tuple[float, float] = (1e-3, 1e2)
    noise_bounds: Tuple[float, float] = (1e-8, 10.0)


@dataclass
class FitDiagnostics:
    """拟合诊断信息"""
    restarts_tried: int = 0
    restarts_failed: int = 0
    best_log_marginal_likelihood: float = -np.inf
    jitter: float = 0.0
    jitter_escalated: bool = False

    def to_dict(self) -> Dict:
        return {
            'restarts_tried': self.restarts_tried,
            'restarts_failed': self.restarts_failed,
            'best_log_marginal_likelihood': float(self.best_log_marginal_likelihood),
            'jitter': float(self.jitter),
            'jitter_escalated': bool(self.jitter_escalated),
        }


def se_ard_kernel(A: np.ndarray, B: np.ndarray, signal_variance: float,
                  lengthscales: np.ndarray) -> np.ndarray:
    """平方指数 ARD 核矩阵"""
    A = A / lengthscales
    B = B / lengthscales
    sq = (A ** 2).sum(axis=1)[:, None] + (B ** 2).sum(axis=1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    return signal_variance * np.exp(-0.5 * sq)


def _factorize(K: np.ndarray, signal_variance: float, max_jitter_ratio: float,
               initial_jitter: float = 0.0) -> Tuple[np.ndarray, float]:
    """Cholesky 分解, 失败时逐级增加对角抖动"""
    eye = np.eye(K.shape[0])
    try:
        return linalg.cholesky(K + initial_jitter * eye, lower=True), initial_jitter
    except linalg.LinAlgError:
        pass

    jitter = max(1e-10 * signal_variance, 10.0 * initial_jitter)
    limit = max_jitter_ratio * signal_variance * (1 + 1e-9)
    while jitter <= limit:
        try:
            L = linalg.cholesky(K + jitter * eye, lower=True)
            logger.debug(f"Cholesky 需要抖动 {jitter:.3e}")
            return L, jitter
        except linalg.LinAlgError:
            jitter *= 10.0
    raise GpFitError(f"Cholesky 分解失败, 抖动已达 {max_jitter_ratio:.1e}·sf2, "
                     f"条件数约 {np.linalg.cond(K):.3e}")


def _negative_lml(log_params: np.ndarray, Z: np.ndarray, y: np.ndarray,
                  learn_noise: bool, fixed_noise: float) -> Tuple[float, np.ndarray]:
    """负对数边际似然及其对 log 超参数的梯度"""
    p = Z.shape[1]
    sf2 = np.exp(log_params[0])
    ls = np.exp(log_params[1:1 + p])
    sn2 = np.exp(log_params[-1]) if learn_noise else fixed_noise
    n = Z.shape[0]

    Kf = se_ard_kernel(Z, Z, sf2, ls)
    K = Kf + sn2 * np.eye(n)
    try:
        L = linalg.cholesky(K, lower=True)
    except linalg.LinAlgError:
        return _LML_FAILURE, np.zeros_like(log_params)

    alpha = linalg.cho_solve((L, True), y)
    lml = -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * np.log(2 * np.pi)

    W = np.outer(alpha, alpha) - linalg.cho_solve((L, True), np.eye(n))
    grad = np.empty_like(log_params)
    grad[0] = 0.5 * np.sum(W * Kf)
    for k in range(p):
        diff = (Z[:, k][:, None] - Z[:, k][None, :]) ** 2 / ls[k] ** 2
        grad[1 + k] = 0.5 * np.sum(W * Kf * diff)
    if learn_noise:
        grad[-1] = 0.5 * sn2 * np.trace(W)
    return -lml, -grad


class GpEmulator:
    """
    已拟合的高斯过程模拟器
    对象不可变, 可在多个线程中共享调用 predict
    """

    def __init__(self, training: GpTrainingSet, hyper: GpHyperparameters,
                 chol_factor: np.ndarray, alpha: np.ndarray, jitter: float = 0.0,
                 predict_noisy: bool = False, diagnostics: Optional[FitDiagnostics] = None):
        self.training = training
        self.hyper = hyper
        self.chol_factor = chol_factor
        self.alpha = alpha
        self.jitter = jitter
        self.predict_noisy = predict_noisy
        self.diagnostics = diagnostics or FitDiagnostics(jitter=jitter, jitter_escalated=jitter > 0)
        self._Z = training.standardized_inputs

    # ------------------------------------------------------------------
    # 构建
    # ------------------------------------------------------------------
    @classmethod
    def from_hyperparameters(cls, training: GpTrainingSet, hyper: GpHyperparameters,
                             predict_noisy: bool = False,
                             max_jitter_ratio: float = Config.GP_MAX_JITTER_RATIO,
                             diagnostics: Optional[FitDiagnostics] = None,
                             jitter: float = 0.0) -> 'GpEmulator':
        """按给定超参数直接构建, 不做优化; jitter 为初始对角抖动"""
        lengthscales = np.broadcast_to(np.asarray(hyper.lengthscales, dtype=float), (training.dim,)).copy()
        hyper = GpHyperparameters(float(hyper.signal_variance), lengthscales, float(hyper.noise_variance))
        Z = training.standardized_inputs
        K = se_ard_kernel(Z, Z, hyper.signal_variance, hyper.lengthscales)
        K[np.diag_indices_from(K)] += hyper.noise_variance
        L, jitter = _factorize(K, hyper.signal_variance, max_jitter_ratio, jitter)
        alpha = linalg.cho_solve((L, True), training.standardized_outputs)
        if diagnostics is not None:
            diagnostics.jitter = jitter
            diagnostics.jitter_escalated = jitter > 0
        return cls(training, hyper, L, alpha, jitter, predict_noisy, diagnostics)

    @classmethod
    def fit(cls, training: GpTrainingSet, config: Optional[GpFitConfig] = None,
            rng: Optional[np.random.Generator] = None) -> 'GpEmulator':
        """多起点 L-BFGS-B 最大化对数边际似然"""
        config = config or GpFitConfig()
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        Z = training.standardized_inputs
        y = training.standardized_outputs
        p = training.dim
        span = training.input_range()

        bounds = [tuple(np.log(config.signal_bounds))]
        bounds += [(np.log(config.lengthscale_bounds[0] * s), np.log(config.lengthscale_bounds[1] * s))
                   for s in span]
        if config.learn_noise:
            bounds.append(tuple(np.log(config.noise_bounds)))
        lo = np.array([b[0] for b in bounds])
        hi = np.array([b[1] for b in bounds])

        diagnostics = FitDiagnostics()
        best_x, best_value = None, np.inf
        for _ in range(max(1, config.restarts)):
            x0 = [rng.uniform(*np.log(config.signal_range))]
            x0 += list(rng.uniform(np.log(config.lengthscale_range[0] * span),
                                   np.log(config.lengthscale_range[1] * span)))
            if config.learn_noise:
                x0.append(rng.uniform(*np.log(config.noise_range)))
            x0 = np.clip(np.array(x0), lo, hi)

            diagnostics.restarts_tried += 1
            result = optimize.minimize(_negative_lml, x0, jac=True, method='L-BFGS-B', bounds=bounds,
                                       args=(Z, y, config.learn_noise, config.fixed_noise))
            if not np.isfinite(result.fun) or result.fun >= _LML_FAILURE:
                diagnostics.restarts_failed += 1
                continue
            if result.fun < best_value:
                best_x, best_value = result.x, float(result.fun)

        if best_x is None:
            raise GpFitError(f"{config.restarts} 次起点全部失败, 训练点数 {training.size}")

        hyper = GpHyperparameters(
            signal_variance=float(np.exp(best_x[0])),
            lengthscales=np.exp(best_x[1:1 + p]),
            noise_variance=float(np.exp(best_x[-1])) if config.learn_noise else config.fixed_noise,
        )
        diagnostics.best_log_marginal_likelihood = -best_value
        emulator = cls.from_hyperparameters(training, hyper, config.predict_noisy,
                                            config.max_jitter_ratio, diagnostics)
        logger.debug(f"GP 拟合完成: N={training.size}, sf2={hyper.signal_variance:.3g}, "
                     f"sn2={hyper.noise_variance:.3g}, lml={diagnostics.best_log_marginal_likelihood:.3f}")
        return emulator

    # ------------------------------------------------------------------
    # 评估
    # ------------------------------------------------------------------
    def log_marginal_likelihood(self, hyper: Optional[GpHyperparameters] = None) -> float:
        """在本训练集上计算给定超参数的对数边际似然"""
        hyper = hyper or self.hyper
        lengthscales = np.broadcast_to(np.asarray(hyper.lengthscales, dtype=float), (self.training.dim,))
        log_params = np.concatenate([[np.log(hyper.signal_variance)], np.log(lengthscales),
                                     [np.log(hyper.noise_variance)]])
        value, _ = _negative_lml(log_params, self._Z, self.training.standardized_outputs,
                                 True, hyper.noise_variance)
        return -value if value < _LML_FAILURE else -np.inf

    def predict_batch(self, thetas) -> Tuple[np.ndarray, np.ndarray]:
        """批量预测, 返回 (均值, 标准差)"""
        X = np.asarray(thetas, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.training.dim:
            raise ValueError(f"预测输入维数 {X.shape[1]} 与训练维数 {self.training.dim} 不一致")

        means = np.empty(X.shape[0])
        sds = np.empty(X.shape[0])
        sf2 = self.hyper.signal_variance
        for start in range(0, X.shape[0], _PREDICT_CHUNK):
            block = self.training.standardize_inputs(X[start:start + _PREDICT_CHUNK])
            k_star = se_ard_kernel(block, self._Z, sf2, self.hyper.lengthscales)
            mean = k_star @ self.alpha
            v = linalg.solve_triangular(self.chol_factor, k_star.T, lower=True)
            var = sf2 - np.einsum('ij,ij->j', v, v)
            if self.predict_noisy:
                var = var + self.hyper.noise_variance
            np.maximum(var, 0.0, out=var)
            means[start:start + block.shape[0]] = mean * self.training.output_sd + self.training.output_mean
            sds[start:start + block.shape[0]] = np.sqrt(var) * self.training.output_sd
        return means, sds

    def predict(self, theta) -> Tuple[float, float]:
        means, sds = self.predict_batch(np.asarray(theta, dtype=float).reshape(1, -1))
        return float(means[0]), float(sds[0])

    # ------------------------------------------------------------------
    # 持久化
    # ------------------------------------------------------------------
    def to_dict(self) -> Dict:
        return {
            'format_version': FORMAT_VERSION,
            'hyperparameters': self.hyper.to_dict(),
            'jitter': float(self.jitter),
            'predict_noisy': bool(self.predict_noisy),
            'training': {
                'inputs': self.training.inputs.tolist(),
                'outputs': self.training.outputs.tolist(),
            },
            'diagnostics': self.diagnostics.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'GpEmulator':
        version = data.get('format_version')
        if version != FORMAT_VERSION:
            raise GpFitError(f"不支持的模拟器文件版本: {version}")
        training = GpTrainingSet.build(data['training']['inputs'], data['training']['outputs'],
                                       deduplicate=False, min_points=1)
        hyper = GpHyperparameters.from_dict(data['hyperparameters'])
        return cls.from_hyperparameters(training, hyper, bool(data.get('predict_noisy', False)),
                                        jitter=float(data.get('jitter', 0.0)))

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1), encoding='utf-8')
        return path

    @classmethod
    def load(cls, path) -> 'GpEmulator':
        return cls.from_dict(json.loads(Path(path).read_text(encoding='utf-8')))

    def __repr__(self) -> str:
        return (f"GpEmulator(N={self.training.size}, p={self.training.dim}, "
                f"sf2={self.hyper.signal_variance:.3g}, sn2={self.hyper.noise_variance:.3g})")
