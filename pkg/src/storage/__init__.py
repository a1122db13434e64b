"""
存储模块 - 运行目录读写与报告导出
"""
from .report import build_report, collect_run
from .run_store import RunStore, dump_json

__all__ = [
    'RunStore',
    'dump_json',
    'build_report',
    'collect_run',
]
