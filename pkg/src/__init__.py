# 历史匹配核心模块
