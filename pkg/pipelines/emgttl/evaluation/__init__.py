"""
EMGTTL 评估模块：分类 / 信号指标与不变量校验套件
"""
