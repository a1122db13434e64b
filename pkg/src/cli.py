"""
命令行入口
    run        SMC 历史匹配
    oracle     暴力求解参照 (大规模 Sobol 点集)
    baseline   对比采样器: rejection / adhoc-logit / adhoc-kde / smc-opt / bayes-smc
    report     汇总运行目录为 CSV
    gen-data   生成合成数据
退出码: 0 成功, 1 运行失败, 2 配置错误
"""
import argparse
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
from loguru import logger

from config import Config
from src.baselines import (AdhocKind, bayes_smc_anneal, brute_force_history_match, run_adhoc_sequence,
                           run_rejection_sequence, smc_optimisation)
from src.core.rng import RngStreams
from src.errors import ConfigError, HistoryMatchingError
from src.models import GeneNetworkModel, RainfallRunoffModel, ToyModel
from src.models.gene_network import generate_gene_data, load_gene_data, write_gene_data
from src.models.rainfall_runoff import generate_hydrology_data
from src.run_config import RunConfig, apply_overrides, gene_species_cap, load_run_config
from src.sampling.smc_engine import RunStatus, SmcHistoryMatcher
from src.storage import RunStore, build_report

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

BASELINES = ('rejection', 'adhoc-logit', 'adhoc-kde', 'smc-opt', 'bayes-smc')


def setup_logging(level: str = Config.LOG_LEVEL, log_file: Optional[Path] = None):
    """stderr 按给定级别输出, 文件记录 DEBUG 及以上并按大小轮转"""
    logger.remove()
    logger.add(sys.stderr, level=level.upper(),
               format="<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {message}")
    if log_file is not None:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        logger.add(str(log_file), level='DEBUG', rotation='10 MB', encoding='utf-8')


# ----------------------------------------------------------------------
# 模型构建
# ----------------------------------------------------------------------
def build_model(config: RunConfig):
    """按配置构建模拟器; 未给数据文件时按 data_seed 生成合成数据"""
    section = config.model
    r = config.measure.r
    if section.name == 'toy':
        return ToyModel(r=r)

    if section.name == 'hydrology':
        if section.data:
            frame = pd.read_csv(section.data, comment='#')
        else:
            frame = generate_hydrology_data(section.days, section.data_seed, section.burn_in,
                                            substeps=section.substeps)
        try:
            return RainfallRunoffModel.from_frame(frame, burn_in=section.burn_in, substeps=section.substeps, r=r)
        except ValueError as exc:
            raise ConfigError('model.data', str(exc)) from exc

    if section.data:
        frame = load_gene_data(section.data)
    else:
        frame = generate_gene_data(section.data_seed, section.n_obs)
    return GeneNetworkModel(frame, sigma=section.sigma, particles=section.pf_particles,
                            cap=gene_species_cap(section), replicates=section.replicates, r=r)


def _prepare(args) -> tuple:
    """读取配置, 合并覆盖项, 建立输出目录与日志"""
    config = load_run_config(args.config)
    apply_overrides(config, seed=args.seed, output_dir=args.output_dir, workers=args.workers,
                    max_waves=args.max_waves)
    out = Path(config.output_dir)
    setup_logging(args.log_level or Config.LOG_LEVEL, out / Config.LOG_FILE)
    workers = Config.resolve_workers(config.workers)
    logger.info(f"模型 {config.model.name}, 种子 {config.seed}, 线程 {workers}, 输出 {out}")
    return config, out, workers


# ----------------------------------------------------------------------
# 子命令
# ----------------------------------------------------------------------
def cmd_run(args) -> int:
    config, out, workers = _prepare(args)
    model = build_model(config)
    smc = config.smc_config(workers)
    store = RunStore(out)
    store.write_config(config.to_dict())
    matcher = SmcHistoryMatcher(model, model.space, config.measure.build(), smc, RngStreams(config.seed), store)
    result = matcher.run()
    if result.status == RunStatus.FAILED:
        logger.error(f"运行失败: {result.stop_reason}")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_oracle(args) -> int:
    config, out, workers = _prepare(args)
    model = build_model(config)
    store = RunStore(out).child('oracle')
    store.write_config(config.to_dict())
    result = brute_force_history_match(model, model.space, 2 ** config.oracle.qmc_log2,
                                       config.smc.training_size, config.smc.alpha, config.oracle.waves,
                                       RngStreams(config.seed), config.measure.build(),
                                       config.smc_config(workers).gp, workers, store)
    store.write_json('result.json', {
        'status': RunStatus.COMPLETED.value if result.complete else RunStatus.STOPPED.value,
        'stop_reason': result.stop_reason,
        'waves_completed': len(result.chain),
        'simulations': result.simulations,
        'cutoffs': result.cutoffs,
        'survivors': [int(idx.size) for idx in result.survivors],
    })
    return EXIT_OK


def cmd_baseline(args) -> int:
    config, out, workers = _prepare(args)
    which = args.which
    streams = RngStreams(config.seed)
    store = RunStore(out).child(f"baseline_{which}")
    store.write_config(config.to_dict())
    n_target = config.baseline.samples

    if which in ('rejection', 'adhoc-logit', 'adhoc-kde'):
        chain_dir = Path(args.chain_dir) if args.chain_dir else out / 'oracle'
        if not (chain_dir / 'wave_chain.json').exists():
            raise ConfigError('--chain-dir', f"找不到波次链: {chain_dir / 'wave_chain.json'}")
        chain = RunStore(chain_dir, create=False).load_chain()
        if which == 'rejection':
            results = run_rejection_sequence(chain, n_target, streams, store)
        else:
            kind = AdhocKind.LOGIT if which == 'adhoc-logit' else AdhocKind.KDE
            results = run_adhoc_sequence(chain, kind, n_target, streams, store)
        store.write_json('result.json', {
            'status': RunStatus.COMPLETED.value if all(r.complete for r in results) else RunStatus.STOPPED.value,
            'waves_completed': len(results),
            'acceptance_rates': [r.acceptance_rate for r in results],
            'proposals': [r.proposals for r in results],
        })
        return EXIT_OK

    model = build_model(config)
    if which == 'smc-opt':
        result = smc_optimisation(model, model.space, config.smc_config(workers), streams, store=store)
        store.write_json('result.json', {
            'status': RunStatus.STOPPED.value if result.stop_reason else RunStatus.COMPLETED.value,
            'stop_reason': result.stop_reason,
            'waves_completed': len(result.chain),
            'simulations': result.simulations,
            'cutoffs': result.cutoffs,
        })
        return EXIT_OK

    if not model.has_likelihood:
        raise ConfigError('model.name', f"bayes-smc 需要提供对数似然的模型, {model.name} 不支持")
    smc = config.smc
    result = bayes_smc_anneal(model, model.space, config.baseline.bayes_particles, streams,
                              config.baseline.target_ess_ratio, smc.move_target_c, smc.r_max, smc.p_floor,
                              workers, config.baseline.max_temperature_steps, store)
    store.write_json('result.json', {
        'status': RunStatus.COMPLETED.value if result.complete else RunStatus.STOPPED.value,
        'temperatures': result.temperatures,
        'intermediate_temperatures': result.intermediate_temperatures,
        'evaluations': result.evaluations,
        'posterior_mean': np.mean(result.thetas, axis=0),
    })
    return EXIT_OK


def cmd_report(args) -> int:
    setup_logging(args.log_level or Config.LOG_LEVEL)
    written = build_report(args.run_dirs, args.out)
    for name in sorted(written):
        logger.info(f"写出 {written[name]}")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    setup_logging(args.log_level or Config.LOG_LEVEL)
    seed = args.seed if args.seed is not None else Config.DEFAULT_SEED
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.kind == 'hydrology':
        frame = generate_hydrology_data(args.days, seed)
        with open(out, 'w', encoding='utf-8', newline='') as handle:
            handle.write(f"# seed={seed}\n")
            frame.to_csv(handle, index=False, float_format='%.17g')
    else:
        write_gene_data(generate_gene_data(seed, args.n_obs), out, seed)
    logger.info(f"{args.kind} 数据写入 {out} (种子 {seed})")
    return EXIT_OK


# ----------------------------------------------------------------------
# 参数解析
# ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--output-dir', default=None, help='输出目录 (覆盖配置文件与 HM_OUTPUT_DIR)')
    common.add_argument('--workers', type=int, default=None, help='线程数, 0 表示全部核心')
    common.add_argument('--log-level', default=None, help='日志级别')
    common.add_argument('--seed', type=int, default=None, help='随机种子')
    common.add_argument('--max-waves', type=int, default=None, help='最大波数')

    parser = argparse.ArgumentParser(prog='history-matching', description='SMC 历史匹配')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('run', parents=[common], help='运行 SMC 历史匹配')
    p.add_argument('--config', required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser('oracle', parents=[common], help='暴力求解参照')
    p.add_argument('--config', required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser('baseline', parents=[common], help='对比采样器')
    p.add_argument('which', choices=BASELINES)
    p.add_argument('--config', required=True)
    p.add_argument('--chain-dir', default=None, help='含 wave_chain.json 的目录, 默认 <输出目录>/oracle')
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser('report', parents=[common], help='汇总运行目录')
    p.add_argument('run_dirs', nargs='+')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser('gen-data', parents=[common], help='生成合成数据')
    p.add_argument('kind', choices=('hydrology', 'gene'))
    p.add_argument('--out', required=True)
    p.add_argument('--days', type=int, default=365)
    p.add_argument('--n-obs', type=int, default=100)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        logger.error(f"配置错误: {exc}")
        return EXIT_CONFIG
    except HistoryMatchingError as exc:
        logger.error(f"运行失败: {exc}")
        return EXIT_FAILURE
    except Exception as exc:
        logger.exception(f"运行失败: {type(exc).__name__}: {exc}")
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
