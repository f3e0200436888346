"""
配置模块 - 包含检查器、并行搜索、模拟器与度量流程的全部配置
"""
import os
from dotenv import load_dotenv

# 加载环境变量
load_dotenv()


def _get_env_int(key: str, default: int) -> int:
    """获取整数环境变量，处理空字符串情况"""
    value = os.getenv(key)
    if value is None or value == "":
        return default
    return int(value)


# ============================================================================
# 搜索配置
# ============================================================================
DEFAULT_BUDGET = _get_env_int("VISCHECK_BUDGET", 5_000_000)  # 每个 (history, level) 的状态上限

# ============================================================================
# 剪枝配置
# ============================================================================
CLUSTER_SIZE_CAP = _get_env_int("VISCHECK_CLUSTER_SIZE_CAP", 8)  # 查询簇事件数上限
CLUSTER_STATE_BUDGET = _get_env_int("VISCHECK_CLUSTER_STATE_BUDGET", 20_000)

# ============================================================================
# 并行搜索配置
# ============================================================================
DEFAULT_WORKERS = _get_env_int("VISCHECK_WORKERS", os.cpu_count() or 1)
SELF_CHECK_INTERVAL = _get_env_int("VISCHECK_SELF_CHECK_INTERVAL", 1000)
SELF_CHECK_JITTER = 0.1  # ±10% 随机扰动
FRONTIER_FACTOR = 4  # 初始前沿至少 4k 个状态
PARALLEL_BACKEND = os.getenv("VISCHECK_PARALLEL_BACKEND", "process")  # process / thread
IDLE_POLL_SECONDS = 0.02

# ============================================================================
# 度量配置
# ============================================================================
ROUND_SIZE = _get_env_int("VISCHECK_ROUND_SIZE", 1000)  # 桌面规模：每轮 1000 条 trace
STABLE_ROUNDS = 3

# ============================================================================
# 日志配置
# ============================================================================
LOG_LEVEL = os.getenv("VISCHECK_LOG_LEVEL", "WARNING")

# ============================================================================
# 六个一致性级别（由强到弱的表格列顺序）
# ============================================================================
LEVEL_META = {
    "complete": {
        "abbr": "Co",
        "description": "每个操作看到仲裁序中在它之前的全部操作"
    },
    "causal": {
        "abbr": "Ca",
        "description": "可见关系对传递闭包封闭，且包含会话序"
    },
    "peer": {
        "abbr": "P",
        "description": "单调可见，且看到的每个操作的会话前驱也可见"
    },
    "monotonic": {
        "abbr": "M",
        "description": "会话内前驱看到的操作，后继也必须看到"
    },
    "basic": {
        "abbr": "B",
        "description": "会话内的前驱操作必须可见"
    },
    "weak": {
        "abbr": "W",
        "description": "对可见关系没有约束"
    }
}

# ============================================================================
# 工作负载的方法配比（约 60% 更新，40% 查询）
# ============================================================================
WORKLOAD_MIXES = {
    "set": {
        "add": 0.4,
        "remove": 0.2,
        "contains": 0.2,
        "size": 0.2
    },
    "map": {
        "put": 0.4,
        "delete": 0.2,
        "get": 0.3,
        "size": 0.1
    },
    "pqueue": {
        "insert": 0.3,
        "inc": 0.3,
        "get_pri": 0.2,
        "get_max": 0.2
    }
}

DEFAULT_OP_COUNT = (15, 17)
DEFAULT_SESSION_COUNT = (3, 5)
DEFAULT_ARG_RANGE = (0, 5)
DEFAULT_MAX_IN_FLIGHT = 15
DELIVERY_PROBABILITY = 0.5

# ============================================================================
# 剪枝率分档（按无剪枝时的探索状态数）
# ============================================================================
PRUNING_BUCKETS = (
    ("small", 1, 30),
    ("moderate", 31, 300),
    ("large", 301, 3000),
    ("huge", 3001, None),
)


def get_level_meta(level_name: str) -> dict:
    """获取一致性级别的元信息"""
    return LEVEL_META[level_name]


def get_mix(type_name: str) -> dict:
    """获取数据类型的默认方法配比"""
    return dict(WORKLOAD_MIXES[type_name])
