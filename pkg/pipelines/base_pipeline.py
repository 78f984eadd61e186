# -*- coding: utf-8 -*-
"""
Pipeline 基础类
定义所有管道的通用接口和共享功能
"""

from abc import ABC, abstractmethod
import logging
import os


class BasePipeline(ABC):
    """
    管道基类

    具体的 Pipeline（EMGTTLPipeline）必须继承此类并实现 run() 方法。
    提供统一的接口规范和共享的工具方法。
    """

    def __init__(self):
        """
        初始化 Pipeline

        设置日志记录器和 pipeline_type（子类需覆盖）
        """
        self.logger = logging.getLogger(self.__class__.__name__)
        self.pipeline_type = "base"  # 子类需覆盖
        self.logger.debug(f"{self.__class__.__name__} initialized")

    @abstractmethod
    def run(self, **kwargs) -> dict:
        """
        执行管道主流程（抽象方法，子类必须实现）

        Returns:
            dict: 运行结果摘要

        Raises:
            NotImplementedError: 子类未实现此方法
        """
        raise NotImplementedError("Subclass must implement run() method")

    def _require_file(self, path: str, description: str) -> str:
        """
        检查输入文件存在

        Args:
            path: 文件路径
            description: 出错时用于定位的描述（如配置字段路径）

        Returns:
            str: 原路径

        Raises:
            FileNotFoundError: 文件不存在
        """
        if not os.path.isfile(path):
            self.logger.error(f"{description}: file not found: {path}")
            raise FileNotFoundError(f"{description}: file not found: {path}")
        return path

    def _log_step(self, step_name: str, message: str = ""):
        """
        统一的步骤日志记录

        Args:
            step_name: 步骤名称
            message: 附加信息（可选）

        Note:
            - 使用统一的日志格式：[pipeline_type] step_name: message
        """
        log_msg = f"[{self.pipeline_type}] {step_name}"
        if message:
            log_msg += f": {message}"
        self.logger.info(log_msg)
