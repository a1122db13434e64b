#!/usr/bin/env python3
"""
SMC 历史匹配 - 启动脚本
用法: python run.py run --config configs/toy.yaml --seed 1
"""
import sys
from pathlib import Path

# 添加项目根目录到Python路径
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))


def check_environment():
    """检查Python版本与必要的包"""
    if sys.version_info < (3, 8):
        print("❌ Python版本需要3.8或更高")
        sys.exit(1)

    required_packages = ['numpy', 'scipy', 'pandas', 'loguru', 'yaml', 'dotenv']
    missing_packages = []
    for package in required_packages:
        try:
            __import__(package)
        except ImportError:
            missing_packages.append(package)

    if missing_packages:
        print(f"❌ 缺少依赖包: {' '.join(missing_packages)}")
        print("请运行: pip install -r requirements.txt")
        sys.exit(1)

    import numpy as np
    major, minor = (int(v) for v in np.__version__.split('.')[:2])
    if (major, minor) < (1, 25):
        print(f"❌ numpy 版本需要 1.25 或更高, 当前 {np.__version__}")
        sys.exit(1)


def main():
    check_environment()
    from src.cli import main as cli_main
    sys.exit(cli_main())


if __name__ == '__main__':
    main()
