"""
参照与对比采样器 - 暴力求解, 拒绝采样, 临时采样器, SMC 优化, 似然退火 SMC
"""
from .adhoc import AdhocKind, adhoc_sampler, run_adhoc_sequence, run_rejection_sequence
from .bayes_smc import BayesSmcResult, bayes_smc_anneal, next_temperature, tempered_ess
from .brute_force import BruteForceResult, brute_force_history_match
from .rejection import RejectionResult, rejection_sampler
from .smc_optimisation import SimulatorOracle, SmcOptimisationResult, smc_optimisation
from .uniformity import UniformityTest, chi_square_uniformity, grid_occupancy_tv

__all__ = [
    'BruteForceResult',
    'brute_force_history_match',
    'RejectionResult',
    'rejection_sampler',
    'AdhocKind',
    'adhoc_sampler',
    'run_adhoc_sequence',
    'run_rejection_sequence',
    'SimulatorOracle',
    'SmcOptimisationResult',
    'smc_optimisation',
    'BayesSmcResult',
    'bayes_smc_anneal',
    'next_temperature',
    'tempered_ess',
    'UniformityTest',
    'chi_square_uniformity',
    'grid_occupancy_tv',
]
