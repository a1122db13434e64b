"""
采样模块 - 边缘变换、MCMC 移动核与 SMC 引擎
"""
from .kde_transform import (KdeMarginalTransform, LogisticTransform, MarginalKde, TransformKind,
                            fit_marginals, fit_transform)
from .mcmc_kernel import ProposalState, SweepDiagnostics, build_proposal, mh_sweep
from .smc_engine import (ParticlePopulation, RunResult, RunStatus, SmcConfig, SmcHistoryMatcher,
                         StoppingRules, WaveSummary, adaptive_repeats, effective_sample_size,
                         reweight_and_resample, select_cutoff, smc_sample_sequence, subsample_training)

__all__ = [
    'MarginalKde',
    'KdeMarginalTransform',
    'LogisticTransform',
    'TransformKind',
    'fit_marginals',
    'fit_transform',
    'ProposalState',
    'SweepDiagnostics',
    'build_proposal',
    'mh_sweep',
    'ParticlePopulation',
    'SmcConfig',
    'StoppingRules',
    'WaveSummary',
    'RunStatus',
    'RunResult',
    'SmcHistoryMatcher',
    'select_cutoff',
    'effective_sample_size',
    'reweight_and_resample',
    'adaptive_repeats',
    'subsample_training',
    'smc_sample_sequence',
]
