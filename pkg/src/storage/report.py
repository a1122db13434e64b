"""
报告导出 - 把一个或多个运行目录汇总为可直接作图的 CSV
    acceptance_trace.csv    每一波的 MCMC 接受率, 重复次数, 截断值
    output_quantiles.csv    每一波训练输出的五数概括
    bivariate_wave_{w}.csv  每一波的粒子 (散点图数据)
多个运行合并时以 run_id 列区分
"""
from pathlib import Path
from typing import Dict, List, Sequence, Union

import pandas as pd
from loguru import logger

from src.storage.run_store import RunStore

TRACE_COLUMNS = ['run_id', 'wave', 'cutoff', 'ess', 'survivors', 'p_acc', 'mean_p_acc', 'repeats',
                 'unique_particles', 'simulations']
QUANTILE_COLUMNS = ['run_id', 'wave', 'min', 'q1', 'median', 'q3', 'max']


def _run_ids(run_dirs: Sequence[Path]) -> List[str]:
    """目录名作为 run_id, 重名时追加序号"""
    ids, seen = [], {}
    for path in run_dirs:
        name = path.name or str(path)
        count = seen.get(name, 0)
        seen[name] = count + 1
        ids.append(name if count == 0 else f"{name}_{count}")
    return ids


def collect_run(store: RunStore, run_id: str) -> Dict[str, pd.DataFrame]:
    """读取一个运行目录, 返回 trace / quantiles / 各波粒子"""
    trace_rows, quantile_rows, particles = [], [], {}
    for w in store.waves():
        summary = store.read_summary(w)
        if w >= 1:
            row = {col: summary.get(col) for col in TRACE_COLUMNS[1:]}
            row.update(run_id=run_id, wave=w)
            trace_rows.append(row)
        quantiles = summary.get('output_quantiles') or {}
        if quantiles:
            quantile_rows.append({'run_id': run_id, 'wave': w, **quantiles})
        try:
            frame = store.read_particles(w)
        except FileNotFoundError:
            continue
        frame.insert(0, 'wave', w)
        frame.insert(0, 'run_id', run_id)
        particles[w] = frame
    return {
        'trace': pd.DataFrame(trace_rows, columns=TRACE_COLUMNS),
        'quantiles': pd.DataFrame(quantile_rows, columns=QUANTILE_COLUMNS),
        'particles': particles,
    }


def is_complete(store: RunStore) -> bool:
    return store.read_result() is not None and bool(store.waves())


def build_report(run_dirs: Sequence[Union[str, Path]], out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    汇总运行目录并写出 CSV
    不完整的目录 (缺少 result.json 或没有任何一波) 跳过并给出警告
    Returns:
        文件名 -> 路径
    """
    paths = [Path(p) for p in run_dirs]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    traces, quantiles = [], []
    bivariate: Dict[int, List[pd.DataFrame]] = {}
    used = 0
    for path, run_id in zip(paths, _run_ids(paths)):
        store = RunStore(path, create=False)
        if not path.is_dir() or not is_complete(store):
            logger.warning(f"跳过不完整的运行目录: {path}")
            continue
        data = collect_run(store, run_id)
        traces.append(data['trace'])
        quantiles.append(data['quantiles'])
        for w, frame in data['particles'].items():
            bivariate.setdefault(w, []).append(frame)
        used += 1

    if used == 0:
        raise ValueError("没有可用的完整运行目录")

    written = {}
    trace = pd.concat(traces, ignore_index=True)
    written['acceptance_trace.csv'] = _write(trace, out / 'acceptance_trace.csv')
    quant = pd.concat(quantiles, ignore_index=True)
    written['output_quantiles.csv'] = _write(quant, out / 'output_quantiles.csv')
    for w, frames in sorted(bivariate.items()):
        name = f"bivariate_wave_{w}.csv"
        written[name] = _write(pd.concat(frames, ignore_index=True), out / name)
    logger.info(f"报告: {used} 个运行, {len(written)} 个文件写入 {out}")
    return written


def _write(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format='%.17g')
    return path
