"""
vischeck - 复制数据类型的可见性一致性度量
在六个可见性级别上检查历史，回溯搜索证书执行，用剪枝谓词缩小搜索空间
"""

__version__ = "0.1.0"
__author__ = "vischeck"
