"""
参数空间 - 参数定义域、先验密度、空间填充设计与边界变换
"""
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from scipy import special, stats
from scipy.stats import qmc

HALF_CAUCHY_SCALE = 0.5   # 密度 ∝ 1/(1 + 4c²)
_LOG_HALF_CAUCHY_NORM = np.log(2.0 / (np.pi * HALF_CAUCHY_SCALE))
_U_CLIP = 1e-16


class PriorKind(Enum):
    """每一维的先验类型"""
    UNIFORM = "uniform"
    HALF_CAUCHY = "half_cauchy"
    LOG_HALF_CAUCHY = "log_half_cauchy"


class DesignScheme(Enum):
    """初始设计方案"""
    SOBOL = "sobol"
    RANDOM = "random"


@dataclass(frozen=True)
class DesignSpec:
    """空间填充设计参数"""
    count: int
    scheme: DesignScheme = DesignScheme.SOBOL
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"设计点数必须 >= 1: {self.count}")


@dataclass(frozen=True, eq=False)
class ParameterSpace:
    """
    参数空间
    每一维是均匀盒子、半柯西尺度参数 (c >= 0) 或对数尺度上的半柯西参数 (θ = log c)
    """
    names: Tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    priors: Tuple[PriorKind, ...] = field(default=())

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        priors = tuple(PriorKind(p) for p in self.priors) or (PriorKind.UNIFORM,) * len(names)

        if not names:
            raise ValueError("参数空间至少需要一维")
        if not (len(names) == lower.size == upper.size == len(priors)):
            raise ValueError("names/lower/upper/priors 维数不一致")

        for k, kind in enumerate(priors):
            if not lower[k] < upper[k]:
                raise ValueError(f"第 {k} 维 ({names[k]}) 需要 lower < upper")
            if kind == PriorKind.UNIFORM and not (np.isfinite(lower[k]) and np.isfinite(upper[k])):
                raise ValueError(f"均匀先验维度 {names[k]} 必须有限")
            if kind == PriorKind.HALF_CAUCHY and (lower[k] != 0.0 or np.isfinite(upper[k])):
                raise ValueError(f"半柯西维度 {names[k]} 的支撑必须是 [0, +inf)")
            if kind == PriorKind.LOG_HALF_CAUCHY and (np.isfinite(lower[k]) or np.isfinite(upper[k])):
                raise ValueError(f"对数半柯西维度 {names[k]} 的支撑必须是整个实轴")

        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, 'names', names)
        object.__setattr__(self, 'lower', lower)
        object.__setattr__(self, 'upper', upper)
        object.__setattr__(self, 'priors', priors)

    # ------------------------------------------------------------------
    # 构造
    # ------------------------------------------------------------------
    @classmethod
    def box(cls, names: Sequence[str], lower: Sequence[float], upper: Sequence[float]) -> 'ParameterSpace':
        """均匀盒子先验"""
        return cls(tuple(names), np.asarray(lower, float), np.asarray(upper, float),
                   (PriorKind.UNIFORM,) * len(names))

    @classmethod
    def log_half_cauchy(cls, names: Sequence[str]) -> 'ParameterSpace':
        """θ = log c, c 服从尺度 1/2 的半柯西先验"""
        p = len(names)
        return cls(tuple(names), np.full(p, -np.inf), np.full(p, np.inf),
                   (PriorKind.LOG_HALF_CAUCHY,) * p)

    @classmethod
    def from_records(cls, records: List[Dict[str, Any]]) -> 'ParameterSpace':
        """从配置记录构造: [{name, prior, lower, upper}, ...]"""
        names, lower, upper, priors = [], [], [], []
        for rec in records:
            kind = PriorKind(rec.get('prior', 'uniform'))
            names.append(rec['name'])
            priors.append(kind)
            if kind == PriorKind.UNIFORM:
                lower.append(float(rec['lower']))
                upper.append(float(rec['upper']))
            elif kind == PriorKind.HALF_CAUCHY:
                lower.append(0.0)
                upper.append(np.inf)
            else:
                lower.append(-np.inf)
                upper.append(np.inf)
        return cls(tuple(names), np.array(lower), np.array(upper), tuple(priors))

    def to_records(self) -> List[Dict[str, Any]]:
        records = []
        for k, name in enumerate(self.names):
            rec = {'name': name, 'prior': self.priors[k].value}
            if self.priors[k] == PriorKind.UNIFORM:
                rec['lower'] = float(self.lower[k])
                rec['upper'] = float(self.upper[k])
            records.append(rec)
        return records

    # ------------------------------------------------------------------
    # 基本属性
    # ------------------------------------------------------------------
    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def is_box(self) -> bool:
        return all(kind == PriorKind.UNIFORM for kind in self.priors)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def _as_matrix(self, thetas) -> np.ndarray:
        arr = np.asarray(thetas, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2 or arr.shape[1] != self.dim:
            raise ValueError(f"参数维数不匹配: 期望 {self.dim}, 实际 {arr.shape}")
        return arr

    def in_support(self, thetas) -> np.ndarray:
        """逐行判断是否位于先验支撑内"""
        arr = self._as_matrix(thetas)
        finite = np.isfinite(arr).all(axis=1)
        inside = ((arr >= self.lower) & (arr <= self.upper)).all(axis=1)
        return finite & inside

    # ------------------------------------------------------------------
    # 先验密度
    # ------------------------------------------------------------------
    def log_prior_batch(self, thetas) -> np.ndarray:
        """逐行 log π(θ), 支撑外为 -inf"""
        arr = self._as_matrix(thetas)
        total = np.zeros(arr.shape[0])
        with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
            for k, kind in enumerate(self.priors):
                x = arr[:, k]
                if kind == PriorKind.UNIFORM:
                    total += stats.uniform.logpdf(x, loc=self.lower[k], scale=self.width[k])
                elif kind == PriorKind.HALF_CAUCHY:
                    total += stats.halfcauchy.logpdf(x, scale=HALF_CAUCHY_SCALE)
                else:
                    # log c 的密度 = p(c)·c, 用 logaddexp 保持数值稳定
                    total += _LOG_HALF_CAUCHY_NORM + x - np.logaddexp(0.0, 2.0 * (x - np.log(HALF_CAUCHY_SCALE)))
        total[~np.isfinite(arr).all(axis=1)] = -np.inf
        total[np.isnan(total)] = -np.inf
        return total

    def log_prior_density(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 1 or theta.size != self.dim:
            raise ValueError(f"参数维数不匹配: 期望 {self.dim}, 实际 {theta.shape}")
        return float(self.log_prior_batch(theta.reshape(1, -1))[0])

    # ------------------------------------------------------------------
    # 采样
    # ------------------------------------------------------------------
    def ppf(self, u) -> np.ndarray:
        """把 (0,1)^p 中的均匀点逐维映射到先验分位数"""
        u = np.clip(self._as_matrix(u), _U_CLIP, 1.0 - _U_CLIP)
        out = np.empty_like(u)
        for k, kind in enumerate(self.priors):
            if kind == PriorKind.UNIFORM:
                out[:, k] = self.lower[k] + u[:, k] * self.width[k]
            elif kind == PriorKind.HALF_CAUCHY:
                out[:, k] = stats.halfcauchy.ppf(u[:, k], scale=HALF_CAUCHY_SCALE)
            else:
                out[:, k] = np.log(HALF_CAUCHY_SCALE) + np.log(np.tan(0.5 * np.pi * u[:, k]))
        return out

    def initial_design(self, spec: DesignSpec) -> np.ndarray:
        """空间填充初始设计 (N×p)"""
        if spec.scheme == DesignScheme.SOBOL:
            sampler = qmc.Sobol(d=self.dim, scramble=True, seed=spec.seed)
            n = spec.count
            if n & (n - 1) == 0:
                u = sampler.random_base2(int(np.log2(n)))
            else:
                with warnings.catch_warnings():
                    # 非2的幂时 scipy 提示平衡性, 对设计无影响
                    warnings.simplefilter('ignore', UserWarning)
                    u = sampler.random(n)
        elif spec.scheme == DesignScheme.RANDOM:
            u = np.random.default_rng(spec.seed).random((spec.count, self.dim))
        else:
            raise ValueError(f"不支持的设计方案: {spec.scheme}")
        return self.ppf(u)

    def sample_prior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """从先验独立采样 n 个点"""
        if n < 1:
            raise ValueError(f"采样数必须 >= 1: {n}")
        return self.ppf(rng.random((n, self.dim)))

    # ------------------------------------------------------------------
    # 有界 <-> 无界变换
    # ------------------------------------------------------------------
    def to_unbounded(self, thetas) -> np.ndarray:
        """盒子维度取 logit, 半柯西维度取 log, 实轴维度不变"""
        arr = self._as_matrix(thetas)
        out = np.empty_like(arr)
        with np.errstate(divide='ignore'):
            for k, kind in enumerate(self.priors):
                if kind == PriorKind.UNIFORM:
                    out[:, k] = special.logit((arr[:, k] - self.lower[k]) / self.width[k])
                elif kind == PriorKind.HALF_CAUCHY:
                    out[:, k] = np.log(arr[:, k])
                else:
                    out[:, k] = arr[:, k]
        return out

    def from_unbounded(self, x) -> np.ndarray:
        arr = self._as_matrix(x)
        out = np.empty_like(arr)
        for k, kind in enumerate(self.priors):
            if kind == PriorKind.UNIFORM:
                out[:, k] = self.lower[k] + self.width[k] * special.expit(arr[:, k])
            elif kind == PriorKind.HALF_CAUCHY:
                out[:, k] = np.exp(arr[:, k])
            else:
                out[:, k] = arr[:, k]
        return out

    def log_abs_det_jacobian(self, thetas) -> np.ndarray:
        """逐行 log|dθ/dx|, x 为无界坐标"""
        arr = self._as_matrix(thetas)
        total = np.zeros(arr.shape[0])
        with np.errstate(divide='ignore', invalid='ignore'):
            for k, kind in enumerate(self.priors):
                if kind == PriorKind.UNIFORM:
                    s = (arr[:, k] - self.lower[k]) / self.width[k]
                    total += np.log(self.width[k]) + np.log(s) + np.log1p(-s)
                elif kind == PriorKind.HALF_CAUCHY:
                    total += np.log(arr[:, k])
        total[np.isnan(total)] = -np.inf
        return total

    def __repr__(self) -> str:
        dims = ', '.join(f"{n}:{k.value}" for n, k in zip(self.names, self.priors))
        return f"ParameterSpace({dims})"
