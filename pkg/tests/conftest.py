"""
测试公共夹具
"""
import pytest

from src.core.param_space import ParameterSpace
from src.core.rng import RngStreams
from src.models.toy_model import toy_space
from tests.helpers import analytic_chain


@pytest.fixture
def streams():
    """固定种子的随机数流"""
    return RngStreams(20240601)


@pytest.fixture
def unit_square():
    return ParameterSpace.box(('a', 'b'), (0.0, 0.0), (1.0, 1.0))


@pytest.fixture
def toy_box():
    return toy_space()


@pytest.fixture
def disc_chain(unit_square):
    """单位正方形中心半径 0.3 的圆盘"""
    return analytic_chain(unit_square, (lambda X: (X[:, 0] - 0.5) ** 2 + (X[:, 1] - 0.5) ** 2, 0.09))


@pytest.fixture
def half_box_chain(unit_square):
    """左半边 a <= 0.5"""
    return analytic_chain(unit_square, (lambda X: X[:, 0], 0.5))
