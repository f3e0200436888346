"""
检查入口：按选项构建剪枝器，再交给顺序或并行搜索
"""
import logging
from dataclasses import dataclass
from typing import Optional

from src.config import CLUSTER_SIZE_CAP, CLUSTER_STATE_BUDGET, DEFAULT_BUDGET, PARALLEL_BACKEND, SELF_CHECK_INTERVAL
from src.datatypes import DataTypeSpec
from src.history import History
from src.parallel import run_parallel
from src.pruning import Pruner
from src.search import CheckResult, check
from src.visibility import Level

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckOptions:
    prune: bool = True
    budget: Optional[int] = DEFAULT_BUDGET
    workers: int = 1
    self_check_interval: int = SELF_CHECK_INTERVAL
    backend: str = PARALLEL_BACKEND
    cluster_size_cap: int = CLUSTER_SIZE_CAP
    cluster_budget: Optional[int] = CLUSTER_STATE_BUDGET


def build_pruner(h: History, spec: DataTypeSpec, level: Level, options: CheckOptions) -> Optional[Pruner]:
    if not options.prune:
        return None
    return Pruner(h, spec, level, options.cluster_size_cap, options.cluster_budget)


def check_history(
    h: History,
    spec: DataTypeSpec,
    level: Level,
    options: Optional[CheckOptions] = None,
    pruner: Optional[Pruner] = None
) -> CheckResult:
    """
    判断历史是否满足一致性级别

    Args:
        h: 历史
        spec: 数据类型
        level: 一致性级别
        options: 检查选项，默认开启剪枝、单 worker
        pruner: 已构建好的剪枝器（为空时按 options 构建）

    Returns:
        CheckResult
    """
    options = options or CheckOptions()
    if pruner is None:
        pruner = build_pruner(h, spec, level, options)
    if options.workers <= 1:
        return check(h, spec, level, pruner, options.budget)
    return run_parallel(
        h, spec, level, options.workers,
        pruner=pruner,
        budget=options.budget,
        self_check_interval=options.self_check_interval,
        backend=options.backend
    )
