# 配置文件
import os

from dotenv import load_dotenv

load_dotenv()


class Config:
    # 输出配置
    OUTPUT_DIR = os.getenv('HM_OUTPUT_DIR', 'runs')
    WORKERS = int(os.getenv('HM_THREADS', '0') or 0)  # 0 表示使用全部可用核心

    # 随机数配置
    DEFAULT_SEED = 1

    # SMC参数
    PARTICLES = 5000          # 粒子数 M
    TRAINING_SIZE = 50        # 每一波训练样本数 N
    ALPHA = 0.5               # 每一波保留比例
    MOVE_TARGET_C = 0.01      # 粒子不移动的概率上界 c
    MAX_WAVES = 9
    R_MAX = 100               # MCMC 重复次数上限
    P_FLOOR = 1e-3            # 接受率下限, 低于此值直接取 R_MAX
    MIN_ACCEPTANCE = 0.0      # 连续两波低于该接受率则停止 (0 表示关闭)
    MIN_CUTOFF_IMPROVEMENT = 0.0
    PROPOSAL_SCALE = 1.0

    # 隐含性参数
    EXPLORATION_R = 3.0       # 探索参数 r

    # KDE参数
    KDE_SUBSET_SIZE = 1000
    KDE_CLAMP_EPS = 1e-12

    # 高斯过程参数
    GP_RESTARTS = 5
    GP_LENGTHSCALE_RANGE = (0.05, 5.0)
    GP_SIGNAL_RANGE = (0.1, 10.0)
    GP_NOISE_RANGE = (1e-6, 1.0)
    GP_DETERMINISTIC_NOISE = 1e-8
    GP_MAX_JITTER_RATIO = 1e-4

    # 暴力求解参数
    ORACLE_QMC_LOG2 = 20
    ORACLE_WAVES = 9

    # 日志配置
    LOG_LEVEL = os.getenv('HM_LOG_LEVEL', 'INFO')
    LOG_FILE = 'logs/history_matching.log'

    @classmethod
    def resolve_workers(cls, requested: int = None) -> int:
        """返回实际使用的线程数"""
        workers = requested if requested is not None else cls.WORKERS
        if not workers or workers < 1:
            workers = os.cpu_count() or 1
        return int(workers)
