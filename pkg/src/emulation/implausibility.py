"""
隐含性度量与波次链 - 判定参数是否位于非隐含区域
"""
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterator, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from loguru import logger

from config import Config
from src.core.param_space import ParameterSpace


class MeasureKind(Enum):
    """隐含性度量类型"""
    RATIO = "ratio"   # |m - y| / sqrt(s_m² + s_e² + s_d²)
    LCB = "lcb"       # m - r·s_e


class PredictiveModel(Protocol):
    """任何能批量给出 (均值, 标准差) 的对象都可作为波次模拟器"""

    def predict_batch(self, thetas) -> Tuple[np.ndarray, np.ndarray]:
        ...


@dataclass(frozen=True)
class ImplausibilityMeasure:
    """隐含性度量参数"""
    kind: MeasureKind
    y_obs: float = 0.0
    s_m: float = 0.0
    s_d: float = 0.0
    r: float = Config.EXPLORATION_R
    use_variance: bool = False   # LCB 使用 r·s² 而不是 r·s

    def __post_init__(self):
        object.__setattr__(self, 'kind', MeasureKind(self.kind))
        if self.s_m < 0 or self.s_d < 0:
            raise ValueError(f"s_m 与 s_d 必须非负: s_m={self.s_m}, s_d={self.s_d}")
        if self.r < 0:
            raise ValueError(f"探索参数 r 必须非负: {self.r}")

    @classmethod
    def ratio(cls, y_obs: float, s_m: float = 0.0, s_d: float = 0.0) -> 'ImplausibilityMeasure':
        return cls(MeasureKind.RATIO, y_obs=y_obs, s_m=s_m, s_d=s_d)

    @classmethod
    def lcb(cls, r: float = Config.EXPLORATION_R, use_variance: bool = False) -> 'ImplausibilityMeasure':
        return cls(MeasureKind.LCB, r=r, use_variance=use_variance)

    def evaluate(self, means, sds) -> np.ndarray:
        """按预测均值与标准差逐点计算隐含性"""
        means = np.asarray(means, dtype=float)
        sds = np.asarray(sds, dtype=float)
        if np.any(sds < 0):
            raise ValueError("预测标准差不能为负")

        if self.kind == MeasureKind.RATIO:
            denom = np.sqrt(self.s_m ** 2 + sds ** 2 + self.s_d ** 2)
            if np.any(denom <= 0):
                raise ValueError("ratio 隐含性分母为零: s_m, s_d 与预测标准差同时为 0")
            return np.abs(means - self.y_obs) / denom

        spread = sds ** 2 if self.use_variance else sds
        return means - self.r * spread

    def to_dict(self) -> Dict:
        return {
            'kind': self.kind.value,
            'y_obs': float(self.y_obs),
            's_m': float(self.s_m),
            's_d': float(self.s_d),
            'r': float(self.r),
            'use_variance': bool(self.use_variance),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'ImplausibilityMeasure':
        return cls(MeasureKind(data['kind']), float(data.get('y_obs', 0.0)), float(data.get('s_m', 0.0)),
                   float(data.get('s_d', 0.0)), float(data.get('r', Config.EXPLORATION_R)),
                   bool(data.get('use_variance', False)))


def implausibility(measure: ImplausibilityMeasure, mean: float, sd: float) -> float:
    """单点隐含性"""
    return float(measure.evaluate(np.array([mean]), np.array([sd]))[0])


@dataclass(frozen=True)
class WaveRecord:
    """一个波次: 冻结的模拟器, 度量与截断值"""
    index: int
    emulator: PredictiveModel
    measure: ImplausibilityMeasure
    cutoff: float

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"波次编号从 1 开始: {self.index}")
        if not np.isfinite(self.cutoff):
            raise ValueError(f"第 {self.index} 波截断值必须有限: {self.cutoff}")

    def evaluate(self, thetas) -> np.ndarray:
        means, sds = self.emulator.predict_batch(thetas)
        return self.measure.evaluate(means, sds)

    def to_dict(self) -> Dict:
        return {
            'index': self.index,
            'cutoff': float(self.cutoff),
            'measure': self.measure.to_dict(),
            'emulator': f"wave_{self.index - 1:03d}/emulator.json",
        }


class WaveChain:
    """
    波次链
    Θ_w = {θ : 对所有 j <= w, ℐ_j(θ) <= c_j}, 按波次顺序检查并在首个违反处提前退出
    """

    def __init__(self, space: ParameterSpace, waves: Optional[Sequence[WaveRecord]] = None):
        self.space = space
        self.waves: List[WaveRecord] = []
        for record in waves or []:
            self.append(record)

    def append(self, record: WaveRecord):
        """追加波次, 编号必须连续"""
        expected = len(self.waves) + 1
        if record.index != expected:
            raise ValueError(f"波次编号不连续: 期望 {expected}, 实际 {record.index}")
        self.waves.append(record)
        logger.debug(f"波次链追加第 {record.index} 波, 截断值 {record.cutoff:.6g}")

    def __len__(self) -> int:
        return len(self.waves)

    def __iter__(self) -> Iterator[WaveRecord]:
        return iter(self.waves)

    @property
    def cutoffs(self) -> List[float]:
        return [w.cutoff for w in self.waves]

    def truncated(self, w: int) -> 'WaveChain':
        """只保留前 w 波"""
        if w < 0 or w > len(self.waves):
            raise ValueError(f"截取波数越界: {w}")
        return WaveChain(self.space, self.waves[:w])

    def first_violation(self, thetas) -> np.ndarray:
        """
        批量检查
        返回每行首个违反的波次编号, 0 表示全部满足
        """
        X = np.asarray(thetas, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        result = np.zeros(X.shape[0], dtype=int)
        alive = np.arange(X.shape[0])
        for record in self.waves:
            if alive.size == 0:
                break
            values = record.evaluate(X[alive])
            failed = ~(values <= record.cutoff)
            result[alive[failed]] = record.index
            alive = alive[~failed]
        return result

    def accepts(self, thetas) -> np.ndarray:
        return self.first_violation(thetas) == 0

    def is_non_implausible(self, theta) -> Tuple[bool, Optional[int]]:
        """单点检查, 返回 (是否接受, 拒绝的波次)"""
        violation = int(self.first_violation(np.asarray(theta, dtype=float).reshape(1, -1))[0])
        return (True, None) if violation == 0 else (False, violation)

    def to_records(self) -> List[Dict]:
        return [record.to_dict() for record in self.waves]

    @classmethod
    def from_records(cls, space: ParameterSpace, records: List[Dict],
                     emulators: Sequence[PredictiveModel]) -> 'WaveChain':
        """按记录与对应模拟器重建波次链"""
        if len(records) != len(emulators):
            raise ValueError("波次记录与模拟器数量不一致")
        waves = [WaveRecord(int(rec['index']), em, ImplausibilityMeasure.from_dict(rec['measure']),
                            float(rec['cutoff']))
                 for rec, em in zip(records, emulators)]
        return cls(space, waves)

    def __repr__(self) -> str:
        return f"WaveChain(waves={len(self.waves)}, cutoffs={[round(c, 4) for c in self.cutoffs]})"
