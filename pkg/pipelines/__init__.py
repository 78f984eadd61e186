"""
管道模块
包含 EMGTTL（sEMG 日常活动分类与跨数据集迁移学习）管道
"""
