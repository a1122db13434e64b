"""
运行目录 - 每一波的粒子, 训练集, 摘要与模拟器
目录结构:
    run_dir/
        run_config.yaml
        wave_chain.json
        result.json
        wave_000/particles.csv, training.csv, summary.json, emulator.json
        wave_001/...
"""
import json
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import yaml
from loguru import logger

from src.core.param_space import ParameterSpace
from src.emulation.gp_emulator import GpEmulator
from src.emulation.implausibility import WaveChain

PARTICLES_FILE = 'particles.csv'
TRAINING_FILE = 'training.csv'
SUMMARY_FILE = 'summary.json'
EMULATOR_FILE = 'emulator.json'
CHAIN_FILE = 'wave_chain.json'
RESULT_FILE = 'result.json'
CONFIG_FILE = 'run_config.yaml'


def _plain(value: Any) -> Any:
    """把 numpy 标量/数组和枚举转换为 JSON 可写的值"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Enum):
        return value.value
    return value


def dump_json(data: Any) -> str:
    """键排序且不含时间戳, 同样的数据得到逐字节相同的文本"""
    return json.dumps(_plain(data), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


class RunStore:
    """运行目录的唯一写入者"""

    def __init__(self, root: Union[str, Path], create: bool = True):
        self.root = Path(root)
        if create:
            self.root.mkdir(parents=True, exist_ok=True)

    def wave_dir(self, w: int) -> Path:
        path = self.root / f"wave_{w:03d}"
        path.mkdir(parents=True, exist_ok=True)
        return path

    def child(self, name: str) -> 'RunStore':
        """子目录, 用于 oracle/ 与 baseline_{name}/"""
        return RunStore(self.root / name)

    # ------------------------------------------------------------------
    # 写入
    # ------------------------------------------------------------------
    def write_particles(self, w: int, thetas, names: Sequence[str]) -> Path:
        frame = pd.DataFrame(np.asarray(thetas, dtype=float), columns=list(names))
        frame.insert(0, 'slot', np.arange(frame.shape[0]))
        path = self.wave_dir(w) / PARTICLES_FILE
        frame.to_csv(path, index=False, float_format='%.17g')
        return path

    def write_training(self, w: int, inputs, names: Sequence[str], raw, outputs) -> Path:
        frame = pd.DataFrame(np.asarray(inputs, dtype=float), columns=list(names))
        frame['raw_output'] = np.asarray(raw, dtype=float)
        frame['output'] = np.asarray(outputs, dtype=float)
        path = self.wave_dir(w) / TRAINING_FILE
        frame.to_csv(path, index=False, float_format='%.17g')
        return path

    def write_summary(self, w: int, summary: Dict) -> Path:
        path = self.wave_dir(w) / SUMMARY_FILE
        path.write_text(dump_json(summary), encoding='utf-8')
        return path

    def write_emulator(self, w: int, emulator: GpEmulator) -> Path:
        return emulator.save(self.wave_dir(w) / EMULATOR_FILE)

    def write_wave(self, w: int, thetas, names: Sequence[str], inputs, raw, outputs,
                   summary: Dict, emulator: Optional[GpEmulator]):
        """历史匹配一波的全部产物"""
        self.write_particles(w, thetas, names)
        self.write_training(w, inputs, names, raw, outputs)
        if emulator is not None:
            self.write_emulator(w, emulator)
        self.write_summary(w, summary)
        logger.debug(f"第 {w} 波产物写入 {self.wave_dir(w)}")

    def write_population(self, w: int, thetas, names: Sequence[str], summary: Dict):
        """只有粒子与摘要 (固定波次链上的采样与对比采样器)"""
        self.write_particles(w, thetas, names)
        self.write_summary(w, summary)

    def write_chain(self, chain: WaveChain) -> Path:
        path = self.root / CHAIN_FILE
        path.write_text(dump_json({'space': chain.space.to_records(), 'waves': chain.to_records()}),
                        encoding='utf-8')
        return path

    def write_result(self, result) -> Path:
        data = {
            'status': result.status.value,
            'stop_reason': result.stop_reason,
            'waves_completed': result.waves_completed,
            'simulations': result.simulations,
            'cutoffs': result.chain.cutoffs,
        }
        path = self.root / RESULT_FILE
        path.write_text(dump_json(data), encoding='utf-8')
        logger.info(f"运行结束 ({result.status.value}), 结果写入 {self.root}")
        return path

    def write_json(self, name: str, data: Dict) -> Path:
        path = self.root / name
        path.write_text(dump_json(data), encoding='utf-8')
        return path

    def write_config(self, config: Dict) -> Path:
        path = self.root / CONFIG_FILE
        path.write_text(yaml.safe_dump(_plain(config), sort_keys=True, allow_unicode=True), encoding='utf-8')
        return path

    # ------------------------------------------------------------------
    # 读取
    # ------------------------------------------------------------------
    def waves(self) -> List[int]:
        """已有摘要的波次编号 (升序)"""
        found = []
        for path in sorted(self.root.glob('wave_*')):
            if (path / SUMMARY_FILE).exists():
                try:
                    found.append(int(path.name.split('_')[1]))
                except ValueError:
                    continue
        return sorted(found)

    def read_summary(self, w: int) -> Dict:
        return json.loads((self.root / f"wave_{w:03d}" / SUMMARY_FILE).read_text(encoding='utf-8'))

    def read_particles(self, w: int) -> pd.DataFrame:
        return pd.read_csv(self.root / f"wave_{w:03d}" / PARTICLES_FILE)

    def read_training(self, w: int) -> pd.DataFrame:
        return pd.read_csv(self.root / f"wave_{w:03d}" / TRAINING_FILE)

    def read_result(self) -> Optional[Dict]:
        path = self.root / RESULT_FILE
        return json.loads(path.read_text(encoding='utf-8')) if path.exists() else None

    def load_chain(self) -> WaveChain:
        """按 wave_chain.json 与各波 emulator.json 重建波次链"""
        data = json.loads((self.root / CHAIN_FILE).read_text(encoding='utf-8'))
        space = ParameterSpace.from_records(data['space'])
        emulators = [GpEmulator.load(self.root / rec['emulator']) for rec in data['waves']]
        return WaveChain.from_records(space, data['waves'], emulators)
