"""
异常定义
"""
from typing import Optional


class VischeckError(Exception):
    """所有检查器异常的基类"""


class HistoryParseError(VischeckError, ValueError):
    """历史文件某一行无法解析"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"第 {line} 行: {message}"
        super().__init__(message)


class WellFormednessError(VischeckError, ValueError):
    """历史结构不合法"""


class DomainError(VischeckError, ValueError):
    """参数不在操作的定义域内"""


class ContractViolation(VischeckError):
    """调用方违反了前置条件"""


class SearchBudgetExceeded(VischeckError):
    """穷举搜索超过状态上限"""

    def __init__(self, explored: int):
        self.explored = explored
        super().__init__(f"搜索超过状态上限 ({explored} 个状态)")
