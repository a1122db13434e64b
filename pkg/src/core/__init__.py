# 基础设施: 参数空间、随机数流、并行
from .param_space import ParameterSpace, PriorKind, DesignSpec, DesignScheme
from .rng import RngStreams
from .parallel import parallel_map

__all__ = [
    'ParameterSpace',
    'PriorKind',
    'DesignSpec',
    'DesignScheme',
    'RngStreams',
    'parallel_map'
]
