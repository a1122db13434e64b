"""
边缘变换 - 把粒子的每一维映射到近似标准正态坐标
KDE 变换用 Epanechnikov 核密度估计的 CDF 与正态分位数复合;
logistic 变换先做 logit/log 去边界, 再按粒子均值方差标准化
"""
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Protocol

import numpy as np
from loguru import logger
from scipy import special

from config import Config
from src.core.param_space import ParameterSpace
from src.errors import DegenerateMarginalError, KdeInversionError

_BISECTION_STEPS = 80
_NEWTON_STEPS = 3
_INVERSION_TOL = 1e-9
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class TransformKind(Enum):
    """边缘变换类型"""
    KDE = "kde"
    LOGISTIC = "logistic"


class MarginalTransform(Protocol):
    """MCMC 核使用的边缘变换接口"""

    def to_normal(self, thetas) -> np.ndarray:
        ...

    def from_normal(self, z) -> np.ndarray:
        ...

    def log_density_normal_coords(self, thetas, z) -> np.ndarray:
        ...


def silverman_bandwidth(points: np.ndarray) -> float:
    """Silverman 经验带宽 0.9·min(sd, IQR/1.34)·m^(-1/5)"""
    m = points.size
    sd = float(np.std(points, ddof=1)) if m > 1 else 0.0
    q75, q25 = np.percentile(points, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * m ** (-0.2)


class MarginalKde:
    """
    一维 Epanechnikov 核密度估计
    half_width 为核的半宽 a, 有限边界处做反射
    CDF/PDF 借助排序后的核中心与幂次前缀和, 每次查询 O(log m)
    """

    def __init__(self, points, half_width: float, lower: float = -np.inf, upper: float = np.inf):
        points = np.sort(np.asarray(points, dtype=float).reshape(-1))
        if points.size == 0:
            raise ValueError("KDE 至少需要一个支撑点")
        if not half_width > 0:
            raise ValueError(f"核半宽必须为正: {half_width}")
        if not lower < upper:
            raise ValueError(f"KDE 支撑需要 lower < upper: [{lower}, {upper}]")

        self.points = points
        self.lower = float(lower)
        self.upper = float(upper)
        if np.isfinite(lower) and np.isfinite(upper):
            half_width = min(half_width, 0.5 * (upper - lower))
        self.half_width = float(half_width)
        self.bandwidth = self.half_width / np.sqrt(5.0)

        centers = [points]
        if np.isfinite(lower):
            centers.append(2.0 * lower - points)
        if np.isfinite(upper):
            centers.append(2.0 * upper - points)
        centers = np.sort(np.concatenate(centers))

        # 标准化坐标: 核半宽为 1
        self._shift = float(np.median(points))
        s = (centers - self._shift) / self.half_width
        self._centers = s
        self._prefix = np.zeros((4, s.size + 1))
        for power in range(4):
            self._prefix[power, 1:] = np.cumsum(s ** power)

        self._count = points.size
        self._norm = 1.0
        lo, hi = self.support
        self._norm = float(self._raw_cdf(np.array([hi]))[0] - self._raw_cdf(np.array([lo]))[0])

    @classmethod
    def fit(cls, points, lower: float = -np.inf, upper: float = np.inf) -> 'MarginalKde':
        """按 Silverman 规则选带宽, 半宽取 √5·h"""
        points = np.asarray(points, dtype=float).reshape(-1)
        h = silverman_bandwidth(points)
        if not h > 0:
            raise ValueError("带宽为零, 取值退化")
        return cls(points, np.sqrt(5.0) * h, lower, upper)

    @property
    def support(self):
        """有效支撑: 边界与数据范围外扩一个核半宽的交集"""
        return (max(self.lower, self.points[0] - self.half_width),
                min(self.upper, self.points[-1] + self.half_width))

    def _window(self, t: np.ndarray):
        lo = np.searchsorted(self._centers, t - 1.0, side='right')
        hi = np.searchsorted(self._centers, t + 1.0, side='left')
        sums = self._prefix[:, hi] - self._prefix[:, lo]
        return lo, sums

    def _raw_cdf(self, x: np.ndarray) -> np.ndarray:
        t = (x - self._shift) / self.half_width
        full, (s0, s1, s2, s3) = self._window(t)
        # Σ [0.5 + 0.75u - 0.25u³], u = t - s
        lin = t * s0 - s1
        cub = t ** 3 * s0 - 3.0 * t ** 2 * s1 + 3.0 * t * s2 - s3
        partial = 0.5 * s0 + 0.75 * lin - 0.25 * cub
        return (full + partial) / self._count

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        value = (self._raw_cdf(np.clip(x, lo, hi)) - self._raw_cdf(np.array([lo]))) / self._norm
        value = np.clip(value, 0.0, 1.0)
        return np.where(x <= lo, 0.0, np.where(x >= hi, 1.0, value))

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = (x - self._shift) / self.half_width
        _, (s0, s1, s2, _) = self._window(t)
        # Σ 0.75(1 - u²)
        quad = t ** 2 * s0 - 2.0 * t * s1 + s2
        dens = 0.75 * (s0 - quad) / (self._count * self.half_width * self._norm)
        dens = np.maximum(dens, 0.0)
        inside = (x >= self.lower) & (x <= self.upper)
        return np.where(inside, dens, 0.0)

    def logpdf(self, x) -> np.ndarray:
        with np.errstate(divide='ignore'):
            return np.log(self.pdf(x))

    def ppf(self, u, dimension: int = 0) -> np.ndarray:
        """分位数函数: 向量化二分后做牛顿修正"""
        u = np.asarray(u, dtype=float)
        if u.size == 0:
            return u.copy()
        lo, hi = self.support
        left = np.full(u.shape, lo)
        right = np.full(u.shape, hi)
        scale = hi - lo
        for _ in range(_BISECTION_STEPS):
            mid = 0.5 * (left + right)
            below = self.cdf(mid) < u
            left = np.where(below, mid, left)
            right = np.where(below, right, mid)
            if np.max(right - left) <= 1e-15 * scale:
                break
        x = 0.5 * (left + right)

        for _ in range(_NEWTON_STEPS):
            dens = self.pdf(x)
            step = np.where(dens > 0, (self.cdf(x) - u) / np.where(dens > 0, dens, 1.0), 0.0)
            candidate = x - step
            ok = (candidate >= left) & (candidate <= right)
            x = np.where(ok, candidate, x)

        residual = np.abs(self.cdf(x) - u)
        if np.max(residual) > _INVERSION_TOL:
            raise KdeInversionError(dimension, float(np.max(residual)))
        return x

    def median(self) -> float:
        return float(self.ppf(np.array([0.5]))[0])

    def __repr__(self) -> str:
        return f"MarginalKde(m={self._count}, h={self.bandwidth:.4g}, support=[{self.lower}, {self.upper}])"


class KdeMarginalTransform:
    """逐维 KDE 边缘变换 z = Φ⁻¹(F̂(θ))"""

    kind = TransformKind.KDE

    def __init__(self, kdes: List[MarginalKde], clamp_eps: float = Config.KDE_CLAMP_EPS):
        if not kdes:
            raise ValueError("至少需要一维")
        self.kdes = kdes
        self.clamp_eps = clamp_eps

    @property
    def dim(self) -> int:
        return len(self.kdes)

    def _check(self, arr) -> np.ndarray:
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.shape[1] != self.dim:
            raise ValueError(f"维数不匹配: 期望 {self.dim}, 实际 {arr.shape[1]}")
        return arr

    def to_normal(self, thetas) -> np.ndarray:
        X = self._check(thetas)
        z = np.empty_like(X)
        for k, kde in enumerate(self.kdes):
            u = np.clip(kde.cdf(X[:, k]), self.clamp_eps, 1.0 - self.clamp_eps)
            z[:, k] = special.ndtri(u)
        return z

    def from_normal(self, z) -> np.ndarray:
        Z = self._check(z)
        X = np.empty_like(Z)
        for k, kde in enumerate(self.kdes):
            u = np.clip(special.ndtr(Z[:, k]), self.clamp_eps, 1.0 - self.clamp_eps)
            X[:, k] = kde.ppf(u, dimension=k)
        return X

    def log_density_normal_coords(self, thetas, z) -> np.ndarray:
        """Σ log f̂_k(θ_k) - Σ log φ(z_k), 即 log|dz/dθ|"""
        X = self._check(thetas)
        Z = self._check(z)
        total = np.zeros(X.shape[0])
        for k, kde in enumerate(self.kdes):
            total += kde.logpdf(X[:, k])
        total -= (-0.5 * Z ** 2 - _LOG_SQRT_2PI).sum(axis=1)
        return total

    def medians(self) -> np.ndarray:
        return np.array([kde.median() for kde in self.kdes])


class LogisticTransform:
    """logit/log 去边界后按粒子均值与标准差标准化"""

    kind = TransformKind.LOGISTIC

    def __init__(self, space: ParameterSpace, center: np.ndarray, scale: np.ndarray):
        self.space = space
        self.center = np.asarray(center, dtype=float)
        self.scale = np.asarray(scale, dtype=float)

    @classmethod
    def fit(cls, particles, space: ParameterSpace) -> 'LogisticTransform':
        x = space.to_unbounded(particles)
        center = np.empty(space.dim)
        scale = np.empty(space.dim)
        for k in range(space.dim):
            col = x[:, k][np.isfinite(x[:, k])]
            if np.unique(col).size < 2:
                raise DegenerateMarginalError(k)
            center[k] = col.mean()
            scale[k] = col.std(ddof=1)
        return cls(space, center, scale)

    @property
    def dim(self) -> int:
        return self.space.dim

    def to_normal(self, thetas) -> np.ndarray:
        return (self.space.to_unbounded(thetas) - self.center) / self.scale

    def from_normal(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return self.space.from_unbounded(z * self.scale + self.center)

    def log_density_normal_coords(self, thetas, z=None) -> np.ndarray:
        """log|dz/dθ| = -Σ log s_k - log|dθ/dx|"""
        return -np.log(self.scale).sum() - self.space.log_abs_det_jacobian(thetas)


def fit_marginals(particles, space: ParameterSpace, subset_size: int = Config.KDE_SUBSET_SIZE,
                  rng: Optional[np.random.Generator] = None) -> KdeMarginalTransform:
    """
    在粒子的随机子集上逐维拟合 KDE, 有限边界处反射
    子集之外落在核覆盖范围外的粒子也并入核中心, 保证全部粒子 f̂ > 0
    """
    X = np.asarray(particles, dtype=float)
    if X.ndim != 2 or X.shape[1] != space.dim:
        raise ValueError(f"粒子维数不匹配: {X.shape}, 期望 p={space.dim}")
    rng = rng if rng is not None else np.random.default_rng(0)
    m = min(subset_size, X.shape[0])
    subset = X[rng.choice(X.shape[0], size=m, replace=False)] if m < X.shape[0] else X

    kdes = []
    for k in range(space.dim):
        col = subset[:, k]
        if np.unique(col).size < 2:
            raise DegenerateMarginalError(k)
        kde = MarginalKde.fit(col, space.lower[k], space.upper[k])
        # 子集核覆盖不到的粒子补作核中心 (带宽不变), 每个当前粒子的密度都为正
        uncovered = np.unique(X[:, k][kde.pdf(X[:, k]) <= 0])
        if uncovered.size:
            kde = MarginalKde(np.concatenate([col, uncovered]), kde.half_width, space.lower[k], space.upper[k])
            logger.debug(f"{space.names[k]}: {uncovered.size} 个子集外粒子补为核中心")
        kdes.append(kde)
    logger.debug("KDE 带宽: " + ", ".join(f"{n}={kde.bandwidth:.4g}" for n, kde in zip(space.names, kdes)))
    return KdeMarginalTransform(kdes)


def fit_transform(kind: TransformKind, particles, space: ParameterSpace,
                  subset_size: int = Config.KDE_SUBSET_SIZE,
                  rng: Optional[np.random.Generator] = None) -> MarginalTransform:
    """按类型拟合边缘变换"""
    kind = TransformKind(kind)
    if kind == TransformKind.KDE:
        return fit_marginals(particles, space, subset_size, rng)
    return LogisticTransform.fit(particles, space)
