"""
模拟器模块 - 测试函数、降雨径流模型、基因网络模型
"""
from .base_model import ModelKind, OutputSemantics, SimulatorModel
from .gene_network import GeneNetworkModel, gene_loglik_pf, gene_simulate, gene_space, gene_training_output
from .particle_filter import EarlyTermination, SentinelValue, bootstrap_log_likelihood
from .rainfall_runoff import (HydrologyForcing, RainfallRunoffModel, RrmParams, RrmState, hydrology_space,
                              rrm_distance, rrm_simulate, sigmoid_flux)
from .toy_model import ToyModel, toy_function, toy_space

__all__ = [
    'ModelKind',
    'OutputSemantics',
    'SimulatorModel',
    'ToyModel',
    'toy_function',
    'toy_space',
    'RainfallRunoffModel',
    'HydrologyForcing',
    'RrmParams',
    'RrmState',
    'hydrology_space',
    'rrm_simulate',
    'rrm_distance',
    'sigmoid_flux',
    'GeneNetworkModel',
    'gene_space',
    'gene_simulate',
    'gene_loglik_pf',
    'gene_training_output',
    'EarlyTermination',
    'SentinelValue',
    'bootstrap_log_likelihood',
]
