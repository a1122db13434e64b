"""
隐含性度量与波次链测试
"""
import numpy as np
import pytest

from src.emulation.implausibility import ImplausibilityMeasure, WaveChain, WaveRecord, implausibility
from tests.helpers import AnalyticSurface, analytic_chain


def test_ratio_measure():
    """测试 ratio 度量: |8-5| / sqrt(1+4+4) = 1"""
    measure = ImplausibilityMeasure.ratio(5.0, s_m=1.0, s_d=2.0)
    assert implausibility(measure, 8.0, 2.0) == pytest.approx(1.0)


def test_lcb_measure():
    """测试 LCB 度量: 2 - 3·0.5 = 0.5"""
    assert implausibility(ImplausibilityMeasure.lcb(3.0), 2.0, 0.5) == pytest.approx(0.5)
    assert implausibility(ImplausibilityMeasure.lcb(3.0, use_variance=True), 2.0, 0.5) == pytest.approx(1.25)


def test_ratio_zero_denominator():
    """测试 ratio 分母为零"""
    with pytest.raises(ValueError):
        implausibility(ImplausibilityMeasure.ratio(0.0), 1.0, 0.0)


def test_invalid_measure_parameters():
    """测试非法参数"""
    with pytest.raises(ValueError):
        ImplausibilityMeasure.lcb(-1.0)
    with pytest.raises(ValueError):
        ImplausibilityMeasure.ratio(0.0, s_m=-1.0)


def test_measure_round_trip():
    """测试度量的字典往返"""
    measure = ImplausibilityMeasure.ratio(5.0, 1.0, 2.0)
    assert ImplausibilityMeasure.from_dict(measure.to_dict()) == measure


def test_empty_chain_accepts_everything(unit_square):
    """测试空链接受全部支撑"""
    chain = WaveChain(unit_square)
    assert chain.accepts(np.random.default_rng(0).random((20, 2))).all()
    assert chain.is_non_implausible(np.array([0.3, 0.3])) == (True, None)


def test_cutoff_below_range_rejects_everything(unit_square):
    """测试截断值低于全部隐含性时全部拒绝"""
    chain = analytic_chain(unit_square, (lambda X: X[:, 0], -1.0))
    assert not chain.accepts(np.random.default_rng(0).random((20, 2))).any()


def test_boundary_is_included(unit_square):
    """测试恰好等于截断值时接受"""
    chain = analytic_chain(unit_square, (lambda X: X[:, 0], 0.25))
    assert chain.is_non_implausible(np.array([0.25, 0.9])) == (True, None)
    assert chain.is_non_implausible(np.array([0.2500001, 0.9])) == (False, 1)


def test_nan_value_is_rejected(unit_square):
    """测试 NaN 隐含性视为违反"""
    chain = analytic_chain(unit_square, (lambda X: np.full(X.shape[0], np.nan), 10.0))
    assert not chain.accepts(np.array([[0.5, 0.5]])).any()


def test_first_violation_short_circuits(unit_square):
    """测试首个违反的波次编号, 且后续波次不再计算"""
    chain = analytic_chain(unit_square, (lambda X: X[:, 0], 0.5), (lambda X: X[:, 1], 0.5))
    X = np.array([[0.1, 0.1], [0.9, 0.1], [0.1, 0.9], [0.9, 0.9]])
    np.testing.assert_array_equal(chain.first_violation(X), [0, 1, 2, 1])
    surface = chain.waves[1].emulator
    surface.calls = 0
    chain.first_violation(np.array([[0.9, 0.9]]))
    assert surface.calls == 0


def test_chain_indices_must_be_consecutive(unit_square):
    """测试波次编号必须连续"""
    chain = WaveChain(unit_square)
    with pytest.raises(ValueError):
        chain.append(WaveRecord(2, AnalyticSurface(lambda X: X[:, 0]), ImplausibilityMeasure.lcb(0.0), 0.5))
    with pytest.raises(ValueError):
        WaveRecord(1, AnalyticSurface(lambda X: X[:, 0]), ImplausibilityMeasure.lcb(0.0), np.nan)


def test_truncated_chain(unit_square):
    """测试截取前 w 波"""
    chain = analytic_chain(unit_square, (lambda X: X[:, 0], 0.5), (lambda X: X[:, 1], 0.5))
    assert len(chain.truncated(1)) == 1
    assert chain.truncated(1).accepts(np.array([[0.1, 0.9]])).all()
    with pytest.raises(ValueError):
        chain.truncated(3)


@pytest.mark.parametrize('cutoff', [np.nan, np.inf, -np.inf])
def test_non_finite_cutoff_rejected(unit_square, cutoff):
    """测试截断值必须有限"""
    with pytest.raises(ValueError):
        WaveRecord(1, AnalyticSurface(lambda X: X[:, 0]), ImplausibilityMeasure.lcb(0.0), cutoff)
