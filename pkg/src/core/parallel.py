"""
并行执行 - 保序的线程池映射
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar('T')
R = TypeVar('R')


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """按输入顺序返回结果; 每个任务自带随机数流, 所以结果与线程数无关"""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
