"""
降雨径流模型 - 截留/非饱和/快速/慢速四个水库的概念模型
逐日显式欧拉积分, 可细分子步长, 对一批参数向量同时计算
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from loguru import logger

from config import Config
from src.core.param_space import ParameterSpace
from src.emulation.implausibility import ImplausibilityMeasure
from src.errors import SimulationError
from src.models.base_model import ModelKind, OutputSemantics, SimulatorModel

ALPHA_S = 1e-6
BURN_IN_DAYS = 100
OBS_FLOOR = 1e-3
_LINEAR_LIMIT = 1e-12
_BATCH = 256

PARAMETER_NAMES = ('I_max', 'U_max', 'Qs_max', 'alpha_E', 'alpha_F', 'K_F', 'K_S')
PARAMETER_RANGES = {
    'I_max': (1.0, 10.0),
    'U_max': (10.0, 1000.0),
    'Qs_max': (0.0, 100.0),
    'alpha_E': (1e-6, 100.0),
    'alpha_F': (-10.0, 10.0),
    'K_F': (0.0, 10.0),
    'K_S': (0.0, 150.0),
}
REFERENCE_PARAMS = (3.0, 300.0, 5.0, 2.0, 1.0, 0.5, 0.05)
COLUMN_ALIASES = {'time': 'date', 'rain': 'precip'}


def hydrology_space() -> ParameterSpace:
    lower = [PARAMETER_RANGES[n][0] for n in PARAMETER_NAMES]
    upper = [PARAMETER_RANGES[n][1] for n in PARAMETER_NAMES]
    return ParameterSpace.box(PARAMETER_NAMES, lower, upper)


def sigmoid_flux(u, alpha):
    """f(u; α) = (1 - e^{-αu}) / (1 - e^{-α}), |α| 极小时取线性极限 u"""
    u = np.asarray(u, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    linear = np.abs(alpha) < _LINEAR_LIMIT
    safe = np.where(linear, 1.0, alpha)
    with np.errstate(over='ignore', invalid='ignore'):
        value = np.expm1(-safe * u) / np.expm1(-safe)
    return np.where(linear, u, value)


@dataclass
class RrmParams:
    """模型参数, 各字段可以是标量或长度 B 的数组"""
    I_max: np.ndarray
    U_max: np.ndarray
    Qs_max: np.ndarray
    alpha_E: np.ndarray
    alpha_F: np.ndarray
    K_F: np.ndarray
    K_S: np.ndarray
    alpha_S: float = ALPHA_S

    @classmethod
    def from_matrix(cls, thetas) -> 'RrmParams':
        X = np.atleast_2d(np.asarray(thetas, dtype=float))
        if X.shape[1] != len(PARAMETER_NAMES):
            raise ValueError(f"需要 {len(PARAMETER_NAMES)} 个参数, 实际 {X.shape[1]}")
        return cls(*(X[:, k] for k in range(X.shape[1])))

    @property
    def batch(self) -> int:
        return np.atleast_1d(self.I_max).size


@dataclass
class RrmState:
    """四个水库的蓄水量 (mm)"""
    I: np.ndarray
    U: np.ndarray
    F: np.ndarray
    S: np.ndarray

    @classmethod
    def initial(cls, params: RrmParams) -> 'RrmState':
        b = params.batch
        return cls(np.zeros(b), 0.5 * np.broadcast_to(params.U_max, (b,)).astype(float),
                   np.zeros(b), np.zeros(b))

    def total(self) -> np.ndarray:
        return self.I + self.U + self.F + self.S

    def copy(self) -> 'RrmState':
        return RrmState(self.I.copy(), self.U.copy(), self.F.copy(), self.S.copy())


@dataclass
class RrmResult:
    """模拟结果与水量平衡诊断"""
    flow: np.ndarray              # (B, T) 逐日径流
    state: RrmState
    inflow: np.ndarray
    evaporation: np.ndarray
    outflow: np.ndarray
    storage_change: np.ndarray
    clamp_adjust: np.ndarray      # 截断带来的净水量修正
    clamp_fired: np.ndarray

    @property
    def mass_residual(self) -> np.ndarray:
        """入流 - 蒸发 - 出流 - 蓄量变化 + 截断修正, 理论上恒为 0"""
        return self.inflow - self.evaporation - self.outflow - self.storage_change + self.clamp_adjust


def normalise_columns(frame: pd.DataFrame) -> pd.DataFrame:
    """列名转小写并替换别名"""
    renamed = {c: COLUMN_ALIASES.get(str(c).strip().lower(), str(c).strip().lower()) for c in frame.columns}
    return frame.rename(columns=renamed)


@dataclass
class HydrologyForcing:
    """逐日降水与潜在蒸散发"""
    precip: np.ndarray
    pet: np.ndarray
    dates: Optional[pd.DatetimeIndex] = None

    def __post_init__(self):
        self.precip = np.asarray(self.precip, dtype=float)
        self.pet = np.asarray(self.pet, dtype=float)
        if self.precip.shape != self.pet.shape or self.precip.ndim != 1:
            raise ValueError("降水与蒸散发序列长度必须一致")
        if np.any(self.precip < 0) or np.any(self.pet < 0):
            raise ValueError("驱动数据必须非负")

    @property
    def days(self) -> int:
        return self.precip.size

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> 'HydrologyForcing':
        """
        由数据表构建驱动
        列名不区分大小写, time/rain 视为 date/precip; 日期列为数值 (日序号) 时不保留日期
        """
        df = normalise_columns(frame)
        missing = {'date', 'precip', 'pet'} - set(df.columns)
        if missing:
            raise ValueError(f"驱动数据缺少列: {sorted(missing)}")
        dates = None
        if not pd.api.types.is_numeric_dtype(df['date']):
            dates = pd.DatetimeIndex(pd.to_datetime(df['date']))
        return cls(df['precip'].to_numpy(), df['pet'].to_numpy(), dates)

    @classmethod
    def synthetic(cls, days: int, rng: np.random.Generator, start: str = '2000-01-01') -> 'HydrologyForcing':
        """
        合成驱动
        降水: 干湿两状态马尔可夫链 + gamma 雨量; 蒸散发: 季节正弦
        """
        wet = np.zeros(days, dtype=bool)
        u = rng.random(days)
        for d in range(1, days):
            wet[d] = u[d] < (0.6 if wet[d - 1] else 0.3)
        amounts = rng.gamma(0.8, 8.0, size=days)
        precip = np.where(wet, amounts, 0.0)
        doy = np.arange(days)
        pet = np.maximum(0.0, 3.0 + 2.0 * np.sin(2.0 * np.pi * (doy - 80) / 365.25))
        return cls(precip, pet, pd.date_range(start, periods=days, freq='D'))

    def to_frame(self) -> pd.DataFrame:
        dates = self.dates if self.dates is not None else pd.date_range('2000-01-01', periods=self.days, freq='D')
        return pd.DataFrame({'date': dates.strftime('%Y-%m-%d'), 'precip': self.precip, 'pet': self.pet})


def rrm_simulate(params: RrmParams, forcing: HydrologyForcing, substeps: int = 1,
                 initial: Optional[RrmState] = None) -> RrmResult:
    """对一批参数积分整个驱动序列"""
    if substeps < 1:
        raise ValueError(f"子步数必须 >= 1: {substeps}")
    b = params.batch
    T = forcing.days
    dt = 1.0 / substeps

    def vec(x):
        return np.broadcast_to(np.asarray(x, dtype=float), (b,))

    I_max, U_max, Qs_max = vec(params.I_max), vec(params.U_max), vec(params.Qs_max)
    a_E, a_F, a_S = vec(params.alpha_E), vec(params.alpha_F), vec(params.alpha_S)
    K_F, K_S = vec(params.K_F), vec(params.K_S)

    state = (initial or RrmState.initial(params)).copy()
    start_total = state.total()
    flow = np.zeros((b, T))
    inflow = np.zeros(b)
    evaporation = np.zeros(b)
    clamp_adjust = np.zeros(b)
    clamp_fired = np.zeros(b, dtype=bool)

    for t in range(T):
        P, Ep = forcing.precip[t], forcing.pet[t]
        for _ in range(substeps):
            I, U, F, S = state.I, state.U, state.F, state.S
            E_I = np.minimum(Ep, I / dt)
            P_e = np.maximum(0.0, P - (I_max - I) / dt)
            u = np.clip(U / U_max, 0.0, 1.0)
            Q_f = P_e * sigmoid_flux(u, a_F)
            E_a = (Ep - E_I) * sigmoid_flux(u, a_E)
            Q_s = Qs_max * sigmoid_flux(u, a_S)
            Q_F = K_F * F
            Q_S = K_S * S

            raw = RrmState(I + dt * (P - E_I - P_e),
                           U + dt * (P_e - Q_f - E_a - Q_s),
                           F + dt * (Q_f - Q_F),
                           S + dt * (Q_s - Q_S))
            clamped = RrmState(np.clip(raw.I, 0.0, I_max), np.clip(raw.U, 0.0, U_max),
                               np.maximum(raw.F, 0.0), np.maximum(raw.S, 0.0))
            adjust = clamped.total() - raw.total()
            clamp_adjust += adjust
            clamp_fired |= ((raw.I != clamped.I) | (raw.U != clamped.U)
                            | (raw.F != clamped.F) | (raw.S != clamped.S))

            inflow += dt * P
            evaporation += dt * (E_I + E_a)
            flow[:, t] += dt * (Q_F + Q_S)
            state = clamped

    outflow = flow.sum(axis=1)
    return RrmResult(flow, state, inflow, evaporation, outflow,
                     state.total() - start_total, clamp_adjust, clamp_fired)


def rrm_distance(sim, obs) -> float:
    """相对距离 ρ = Σ (y_obs - y_sim)² / y_obs"""
    sim = np.asarray(sim, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if sim.shape != obs.shape:
        raise ValueError(f"模拟与观测长度不一致: {sim.shape} vs {obs.shape}")
    if np.any(obs <= 0):
        raise SimulationError("观测径流必须严格为正")
    return float(np.sum((obs - sim) ** 2 / obs))


def rrm_distance_batch(flows: np.ndarray, obs: np.ndarray) -> np.ndarray:
    obs = np.asarray(obs, dtype=float)
    if np.any(obs <= 0):
        raise SimulationError("观测径流必须严格为正")
    return np.sum((obs - flows) ** 2 / obs, axis=-1)


def reference_flow(forcing: HydrologyForcing, reference=REFERENCE_PARAMS, substeps: int = 1) -> np.ndarray:
    """参考参数下的逐日径流, 下限截为 OBS_FLOOR"""
    result = rrm_simulate(RrmParams.from_matrix(np.asarray(reference, dtype=float)), forcing, substeps)
    return np.maximum(result.flow[0], OBS_FLOOR)


def generate_hydrology_data(days: int, seed: int, burn_in: int = BURN_IN_DAYS,
                            reference=REFERENCE_PARAMS, substeps: int = 1) -> pd.DataFrame:
    """合成驱动 + 参考参数下的观测径流 (下限截为 1e-3)"""
    forcing = HydrologyForcing.synthetic(days + burn_in, np.random.default_rng(seed))
    frame = forcing.to_frame()
    frame['flow'] = reference_flow(forcing, reference, substeps)
    return frame


class RainfallRunoffModel(SimulatorModel):
    """
    降雨径流模型
    训练输出为预热期之后的相对距离 ρ, 按最小化方向做历史匹配
    """

    kind = ModelKind.DETERMINISTIC
    output_semantics = OutputSemantics.DISTANCE

    def __init__(self, forcing: HydrologyForcing, observed, burn_in: int = BURN_IN_DAYS,
                 substeps: int = 1, r: float = Config.EXPLORATION_R,
                 space: Optional[ParameterSpace] = None):
        super().__init__('hydrology', space or hydrology_space())
        observed = np.asarray(observed, dtype=float)
        if observed.size != forcing.days:
            raise ValueError(f"观测长度 {observed.size} 与驱动长度 {forcing.days} 不一致")
        if burn_in >= forcing.days:
            raise ValueError(f"预热期 {burn_in} 不短于序列长度 {forcing.days}")
        if np.any(observed[burn_in:] <= 0):
            raise SimulationError("观测径流必须严格为正")
        self.forcing = forcing
        self.observed = observed
        self.burn_in = burn_in
        self.substeps = substeps
        self.r = r
        self.clamp_events = 0

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, reference=REFERENCE_PARAMS, **kwargs) -> 'RainfallRunoffModel':
        """
        由数据表构建模型
        只有驱动三列 (没有 flow 列) 时, 观测径流取参考参数下的模拟结果
        """
        forcing = HydrologyForcing.from_frame(frame)
        df = normalise_columns(frame)
        if 'flow' in df.columns:
            observed = df['flow'].to_numpy(dtype=float)
        else:
            observed = reference_flow(forcing, reference, kwargs.get('substeps', 1))
            logger.info(f"数据没有 flow 列, 用参考参数 {tuple(reference)} 生成 {forcing.days} 天观测径流")
        return cls(forcing, observed, **kwargs)

    def simulate_flows(self, thetas) -> RrmResult:
        return rrm_simulate(RrmParams.from_matrix(thetas), self.forcing, self.substeps)

    def distances(self, thetas) -> np.ndarray:
        X = np.atleast_2d(np.asarray(thetas, dtype=float))
        out = np.empty(X.shape[0])
        for start in range(0, X.shape[0], _BATCH):
            result = self.simulate_flows(X[start:start + _BATCH])
            self.clamp_events += int(result.clamp_fired.sum())
            out[start:start + _BATCH] = rrm_distance_batch(result.flow[:, self.burn_in:],
                                                           self.observed[self.burn_in:])
        return out

    def simulate(self, theta: np.ndarray, rng: np.random.Generator = None) -> float:
        return float(self.distances(theta)[0])

    def evaluate_batch(self, thetas, streams, wave, workers=1, tag="simulate") -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        with self._lock:
            self.simulation_count += thetas.shape[0]
        values = self.distances(thetas)
        if not np.isfinite(values).all():
            logger.warning(f"{int((~np.isfinite(values)).sum())} 个降雨径流模拟给出非有限距离")
        return values

    def default_measure(self) -> ImplausibilityMeasure:
        return ImplausibilityMeasure.lcb(self.r)
