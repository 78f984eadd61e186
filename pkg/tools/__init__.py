"""
通用分析、调试工具模块
"""

from tools.timer import timer, Timer

__all__ = ['timer', 'Timer']




