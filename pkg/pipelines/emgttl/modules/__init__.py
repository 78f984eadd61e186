"""
EMGTTL 子模块：信号预处理、数据集、自动微分、模型与训练
"""
