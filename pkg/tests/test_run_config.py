"""
运行配置测试
"""
from pathlib import Path

import pytest

from src.errors import ConfigError
from src.run_config import apply_overrides, gene_species_cap, load_run_config, parse_run_config

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def test_missing_model_section():
    """测试缺少 model 段"""
    with pytest.raises(ConfigError) as info:
        parse_run_config({'seed': 1})
    assert info.value.field == 'model'


def test_unknown_keys_report_path():
    """测试未知配置项给出带点号的路径"""
    with pytest.raises(ConfigError) as info:
        parse_run_config({'model': {'name': 'toy'}, 'smc': {'partciles': 10}})
    assert info.value.field == 'smc.partciles'
    with pytest.raises(ConfigError) as info:
        parse_run_config({'model': {'name': 'toy'}, 'extra': 1})
    assert info.value.field == 'extra'


def test_invalid_values():
    """测试非法取值"""
    with pytest.raises(ConfigError) as info:
        parse_run_config({'model': {'name': 'weather'}})
    assert info.value.field == 'model.name'
    with pytest.raises(ConfigError) as info:
        parse_run_config({'model': {'name': 'toy'}, 'measure': {'kind': 'bogus'}})
    assert info.value.field == 'measure.kind'
    with pytest.raises(ConfigError):
        parse_run_config({'model': {'name': 'toy'}, 'smc': {'particles': 'many'}})
    with pytest.raises(ConfigError):
        parse_run_config({'model': {'name': 'toy'}, 'gp': {'predict_noisy': 'yes'}})
    with pytest.raises(ConfigError):
        parse_run_config({'model': {'name': 'toy'}, 'seed': -1})


def test_defaults_and_conversion():
    """测试默认值与类型转换"""
    config = parse_run_config({'model': {'name': 'toy'}, 'smc': {'particles': '300', 'alpha': 0.25}})
    assert config.smc.particles == 300
    smc = config.smc_config(workers=2)
    assert smc.alpha == 0.25
    assert smc.workers == 2
    assert config.measure.build().r == 3.0


def test_engine_validation_becomes_config_error():
    """测试引擎参数越界转换为配置错误"""
    config = parse_run_config({'model': {'name': 'toy'}, 'smc': {'alpha': 1.5}})
    with pytest.raises(ConfigError) as info:
        config.smc_config()
    assert info.value.field == 'smc'


def test_ratio_measure_needs_observation():
    """测试 ratio 度量缺少观测值"""
    config = parse_run_config({'model': {'name': 'toy'}, 'measure': {'kind': 'ratio'}})
    with pytest.raises(ConfigError):
        config.measure.build()


def test_override_precedence():
    """测试 命令行 > 环境变量 > YAML"""
    config = parse_run_config({'model': {'name': 'toy'}, 'output_dir': 'from_yaml', 'workers': 2})
    apply_overrides(config, env={'HM_OUTPUT_DIR': 'from_env', 'HM_THREADS': '6'})
    assert config.output_dir == 'from_env'
    assert config.workers == 6
    apply_overrides(config, output_dir='from_cli', workers=1, max_waves=0, seed=9, env={'HM_OUTPUT_DIR': 'x'})
    assert config.output_dir == 'from_cli'
    assert config.workers == 1
    assert config.smc.max_waves == 0
    assert config.seed == 9
    with pytest.raises(ConfigError):
        apply_overrides(config, max_waves=-1, env={})


def test_load_yaml(tmp_path):
    """测试读取 YAML 文件与解析错误"""
    good = tmp_path / 'good.yaml'
    good.write_text("model:\n  name: gene\n  species_cap: 0\nseed: 4\n", encoding='utf-8')
    config = load_run_config(good)
    assert config.seed == 4
    assert gene_species_cap(config.model) is None

    bad = tmp_path / 'bad.yaml'
    bad.write_text("model: [unclosed\n", encoding='utf-8')
    with pytest.raises(ConfigError):
        load_run_config(bad)
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / 'absent.yaml')


def test_shipped_configs_parse():
    """测试仓库自带的配置文件"""
    for name in ('toy', 'hydrology', 'gene'):
        config = load_run_config(CONFIG_DIR / f"{name}.yaml")
        assert config.model.name == name
        config.smc_config()
