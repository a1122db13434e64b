"""
运行配置 - YAML 文件解析为数据类
优先级: 命令行参数 > 环境变量 > YAML > Config 默认值
未知配置项与缺少 model 段都会抛出 ConfigError, 并给出带点号的字段路径
"""
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Type, TypeVar, Union

import yaml
from loguru import logger

from config import Config
from src.core.param_space import DesignScheme
from src.emulation.gp_emulator import GpFitConfig
from src.emulation.implausibility import ImplausibilityMeasure, MeasureKind
from src.errors import ConfigError
from src.sampling.kde_transform import TransformKind
from src.sampling.smc_engine import SmcConfig, StoppingRules

MODEL_NAMES = ('toy', 'hydrology', 'gene')

T = TypeVar('T')


@dataclass
class ModelSection:
    """模型选择与模型参数"""
    name: str = ''
    data: Optional[str] = None          # 数据文件, 缺省时按 data_seed 生成合成数据
    data_seed: int = 1
    # 降雨径流
    days: int = 365
    burn_in: int = 100
    substeps: int = 1
    # 基因网络
    n_obs: int = 20
    sigma: float = 0.6
    pf_particles: int = 200
    replicates: int = 1
    species_cap: Optional[int] = 100


@dataclass
class MeasureSection:
    """隐含性度量"""
    kind: str = MeasureKind.LCB.value
    r: float = Config.EXPLORATION_R
    use_variance: bool = False
    y_obs: Optional[float] = None
    s_m: float = 0.0
    s_d: float = 0.0

    def build(self) -> ImplausibilityMeasure:
        kind = MeasureKind(self.kind)
        if kind == MeasureKind.RATIO:
            if self.y_obs is None:
                raise ConfigError('measure.y_obs', "ratio 度量需要观测值 y_obs")
            return ImplausibilityMeasure.ratio(self.y_obs, self.s_m, self.s_d)
        return ImplausibilityMeasure.lcb(self.r, self.use_variance)


@dataclass
class SmcSection:
    particles: int = Config.PARTICLES
    training_size: int = Config.TRAINING_SIZE
    alpha: float = Config.ALPHA
    move_target_c: float = Config.MOVE_TARGET_C
    max_waves: int = Config.MAX_WAVES
    r_max: int = Config.R_MAX
    p_floor: float = Config.P_FLOOR
    kde_subset_size: int = Config.KDE_SUBSET_SIZE
    transform: str = TransformKind.KDE.value
    proposal_scale: float = Config.PROPOSAL_SCALE
    design: str = DesignScheme.SOBOL.value
    min_cutoff_improvement: float = Config.MIN_CUTOFF_IMPROVEMENT
    min_acceptance: float = Config.MIN_ACCEPTANCE


@dataclass
class GpSection:
    restarts: int = Config.GP_RESTARTS
    max_jitter_ratio: float = Config.GP_MAX_JITTER_RATIO
    predict_noisy: bool = False
    fixed_noise: float = Config.GP_DETERMINISTIC_NOISE


@dataclass
class OracleSection:
    qmc_log2: int = Config.ORACLE_QMC_LOG2
    waves: int = Config.ORACLE_WAVES


@dataclass
class BaselineSection:
    samples: int = Config.PARTICLES             # 拒绝类采样器的目标样本数
    target_ess_ratio: float = 0.5
    bayes_particles: int = 1000
    max_temperature_steps: int = 1000


@dataclass
class RunConfig:
    model: ModelSection
    measure: MeasureSection = field(default_factory=MeasureSection)
    smc: SmcSection = field(default_factory=SmcSection)
    gp: GpSection = field(default_factory=GpSection)
    oracle: OracleSection = field(default_factory=OracleSection)
    baseline: BaselineSection = field(default_factory=BaselineSection)
    seed: int = Config.DEFAULT_SEED
    output_dir: str = Config.OUTPUT_DIR
    workers: int = Config.WORKERS

    def smc_config(self, workers: int = 1) -> SmcConfig:
        """转换为引擎参数; 数值越界在这里变成 ConfigError"""
        s, g = self.smc, self.gp
        try:
            gp = GpFitConfig(restarts=g.restarts, max_jitter_ratio=g.max_jitter_ratio,
                             predict_noisy=g.predict_noisy, fixed_noise=g.fixed_noise)
            return SmcConfig(particles=s.particles, training_size=s.training_size, alpha=s.alpha,
                             move_target_c=s.move_target_c, max_waves=s.max_waves, r_max=s.r_max,
                             p_floor=s.p_floor, kde_subset_size=s.kde_subset_size,
                             transform_kind=TransformKind(s.transform), proposal_scale=s.proposal_scale,
                             design_scheme=DesignScheme(s.design), workers=workers,
                             stopping=StoppingRules(s.min_cutoff_improvement, s.min_acceptance), gp=gp)
        except ValueError as exc:
            raise ConfigError('smc', str(exc)) from exc

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _build(cls: Type[T], data: Any, prefix: str) -> T:
    """按数据类字段构建, 拒绝未知键并做基本类型转换"""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(prefix, f"应为映射, 实际为 {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{prefix}.{key}", "未知配置项")
    kwargs = {}
    for name, value in data.items():
        default = known[name].default
        if value is not None and isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{prefix}.{name}", f"应为布尔值: {value!r}")
        elif value is not None and isinstance(default, (int, float)) and not isinstance(default, bool):
            try:
                value = type(default)(value)
            except (TypeError, ValueError):
                raise ConfigError(f"{prefix}.{name}", f"无法解析为 {type(default).__name__}: {value!r}")
        kwargs[name] = value
    return cls(**kwargs)


def parse_run_config(data: Dict[str, Any]) -> RunConfig:
    """从字典解析并校验"""
    if not isinstance(data, dict):
        raise ConfigError('<root>', "配置文件顶层应为映射")
    sections = {'model': ModelSection, 'measure': MeasureSection, 'smc': SmcSection, 'gp': GpSection,
                'oracle': OracleSection, 'baseline': BaselineSection}
    scalars = ('seed', 'output_dir', 'workers')
    for key in data:
        if key not in sections and key not in scalars:
            raise ConfigError(key, "未知配置项")
    if 'model' not in data or data['model'] is None:
        raise ConfigError('model', "缺少 model 段")

    parts = {name: _build(cls, data.get(name), name) for name, cls in sections.items()}
    model = parts['model']
    if model.name not in MODEL_NAMES:
        raise ConfigError('model.name', f"必须是 {'/'.join(MODEL_NAMES)} 之一, 实际为 {model.name!r}")

    try:
        MeasureKind(parts['measure'].kind)
    except ValueError:
        raise ConfigError('measure.kind', f"不支持的度量: {parts['measure'].kind!r}")
    try:
        TransformKind(parts['smc'].transform)
    except ValueError:
        raise ConfigError('smc.transform', f"不支持的变换: {parts['smc'].transform!r}")
    try:
        DesignScheme(parts['smc'].design)
    except ValueError:
        raise ConfigError('smc.design', f"不支持的设计方案: {parts['smc'].design!r}")

    config = RunConfig(**parts)
    if 'seed' in data:
        config.seed = _int_field(data['seed'], 'seed')
    if 'workers' in data:
        config.workers = _int_field(data['workers'], 'workers')
    if 'output_dir' in data:
        config.output_dir = str(data['output_dir'])
    if config.seed < 0:
        raise ConfigError('seed', f"种子必须非负: {config.seed}")
    return config


def _int_field(value, name: str) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"应为整数: {value!r}")


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """读取 YAML 运行配置"""
    path = Path(path)
    if not path.exists():
        raise ConfigError('<file>', f"配置文件不存在: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding='utf-8'))
    except yaml.YAMLError as exc:
        mark = getattr(exc, 'problem_mark', None)
        where = f"第 {mark.line + 1} 行" if mark is not None else "未知位置"
        raise ConfigError('<file>', f"YAML 解析失败 ({where}): {exc}") from exc
    config = parse_run_config(data or {})
    logger.debug(f"读取运行配置 {path}: 模型 {config.model.name}")
    return config


def apply_overrides(config: RunConfig, seed: Optional[int] = None, output_dir: Optional[str] = None,
                    workers: Optional[int] = None, max_waves: Optional[int] = None,
                    env: Optional[Dict[str, str]] = None) -> RunConfig:
    """
    按优先级合并: 命令行 > 环境变量 > YAML
    env 缺省时读取 os.environ
    """
    env = os.environ if env is None else env
    if env.get('HM_OUTPUT_DIR'):
        config.output_dir = env['HM_OUTPUT_DIR']
    if env.get('HM_THREADS'):
        config.workers = _int_field(env['HM_THREADS'], 'HM_THREADS')
    if seed is not None:
        if seed < 0:
            raise ConfigError('--seed', f"种子必须非负: {seed}")
        config.seed = seed
    if output_dir is not None:
        config.output_dir = output_dir
    if workers is not None:
        config.workers = workers
    if max_waves is not None:
        if max_waves < 0:
            raise ConfigError('--max-waves', f"不能为负: {max_waves}")
        config.smc.max_waves = max_waves
    return config


def gene_species_cap(section: ModelSection) -> Optional[int]:
    cap = section.species_cap
    return None if cap is None or cap <= 0 else int(cap)
