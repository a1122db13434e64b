"""
模拟器模块 - 高斯过程代理模型与隐含性度量
"""
from .gp_emulator import FitDiagnostics, GpEmulator, GpFitConfig, GpHyperparameters, GpTrainingSet
from .implausibility import (ImplausibilityMeasure, MeasureKind, WaveChain, WaveRecord,
                             implausibility)

__all__ = [
    'GpTrainingSet',
    'GpHyperparameters',
    'GpFitConfig',
    'GpEmulator',
    'FitDiagnostics',
    'MeasureKind',
    'ImplausibilityMeasure',
    'WaveRecord',
    'WaveChain',
    'implausibility',
]
