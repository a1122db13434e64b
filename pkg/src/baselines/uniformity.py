"""
均匀性度量 - 网格占据的总变差距离与卡方均匀性检验
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats

GRID_BINS = 50
MIN_EXPECTED = 5.0


def grid_counts(samples, lower: Sequence[float], upper: Sequence[float], bins: int = GRID_BINS,
                dims: Tuple[int, int] = (0, 1)) -> np.ndarray:
    """两个维度上的 bins×bins 网格计数"""
    X = np.asarray(samples, dtype=float)
    i, j = dims
    counts, _, _ = np.histogram2d(X[:, i], X[:, j], bins=bins,
                                  range=[[lower[i], upper[i]], [lower[j], upper[j]]])
    return counts


def grid_occupancy_tv(samples, reference, lower: Sequence[float], upper: Sequence[float],
                      bins: int = GRID_BINS, dims: Tuple[int, int] = (0, 1)) -> float:
    """网格占据频率之间的总变差距离 ½·Σ|p - q|"""
    p = grid_counts(samples, lower, upper, bins, dims)
    q = grid_counts(reference, lower, upper, bins, dims)
    if p.sum() == 0 or q.sum() == 0:
        raise ValueError("样本为空, 无法计算总变差距离")
    return float(0.5 * np.abs(p / p.sum() - q / q.sum()).sum())


@dataclass
class UniformityTest:
    statistic: float
    pvalue: float
    cells: int
    groups: int


def chi_square_uniformity(samples, lower: Sequence[float], upper: Sequence[float],
                          occupied: Optional[np.ndarray] = None, bins: int = GRID_BINS,
                          dims: Tuple[int, int] = (0, 1),
                          min_expected: float = MIN_EXPECTED) -> UniformityTest:
    """
    被占据网格上的卡方均匀性检验
    occupied 为 bins×bins 布尔掩码 (缺省取样本自身占据的格子);
    期望计数不足 min_expected 时按格子顺序合并为组
    """
    counts = grid_counts(samples, lower, upper, bins, dims)
    mask = counts > 0 if occupied is None else np.asarray(occupied, dtype=bool)
    if mask.shape != counts.shape:
        raise ValueError(f"占据掩码形状 {mask.shape} 与网格 {counts.shape} 不符")
    observed = counts[mask]
    n_cells = observed.size
    total = observed.sum()
    if n_cells < 2 or total == 0:
        raise ValueError("被占据的格子太少, 无法检验")

    per_cell = total / n_cells
    group_size = max(1, int(np.ceil(min_expected / per_cell)))
    n_groups = n_cells // group_size
    if n_groups < 2:
        raise ValueError(f"样本量 {int(total)} 不足以在 {n_cells} 个格子上做卡方检验")
    # 余下不足一组的格子并入最后一组
    edges = np.arange(n_groups) * group_size
    grouped = np.add.reduceat(observed, edges)
    sizes = np.diff(np.append(edges, n_cells))
    expected = total * sizes / n_cells
    statistic, pvalue = stats.chisquare(grouped, expected)
    return UniformityTest(float(statistic), float(pvalue), int(n_cells), int(n_groups))
