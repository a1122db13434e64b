"""
随机数流 - 基于计数器的可复现随机数生成
所有随机性都由一个64位种子派生, 通过 (种子, 用途标签, 序号) 定位子流,
因此结果与执行顺序和线程数无关
"""
import zlib
from typing import Tuple

import numpy as np


def tag_code(tag: str) -> int:
    """用途标签的稳定整数编码"""
    return zlib.crc32(tag.encode('utf-8'))


class RngStreams:
    """命名随机数流工厂"""

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError(f"种子必须非负: {seed}")
        self.seed = int(seed)

    def key(self, tag: str, *index: int) -> Tuple[int, ...]:
        return (tag_code(tag),) + tuple(int(i) for i in index)

    def generator(self, tag: str, *index: int) -> np.random.Generator:
        """返回 (tag, index...) 对应的独立 Philox 生成器"""
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key(tag, *index))
        return np.random.Generator(np.random.Philox(seq))

    def integer_seed(self, tag: str, *index: int) -> int:
        """派生一个整数种子, 供只接受整数种子的库使用"""
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key(tag, *index))
        return int(seq.generate_state(1, dtype=np.uint32)[0])

    def __repr__(self) -> str:
        return f"RngStreams(seed={self.seed})"
