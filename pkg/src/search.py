"""
非递归回溯搜索
用双端队列保存搜索状态，先扩展仲裁序再扩展可见关系，
按顺序语义校验，判断是否存在证书抽象执行
"""
import enum
import logging
from collections import deque
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

from src.config import DEFAULT_BUDGET
from src.datatypes import DataTypeSpec, OpKind, matches_return
from src.errors import SearchBudgetExceeded
from src.history import Event, History
from src.visibility import Level, PartialExecution, bits, required_mask

logger = logging.getLogger(__name__)

QueryCheck = Callable[[DataTypeSpec, Sequence[Event], Event], bool]


class Verdict(enum.Enum):
    SATISFIED = "satisfied"
    VIOLATED = "violated"
    BUDGET_EXCEEDED = "budget-exceeded"

    @property
    def exit_code(self) -> int:
        return {
            Verdict.SATISFIED: 0,
            Verdict.VIOLATED: 1,
            Verdict.BUDGET_EXCEEDED: 2,
        }[self]


@dataclass
class SearchStats:
    """搜索统计（剪枝率用 states_explored 计算）"""
    states_explored: int = 0
    states_pruned: int = 0
    states_generated: int = 0
    max_deque_depth: int = 0

    def merge(self, other: "SearchStats") -> "SearchStats":
        return SearchStats(
            states_explored=self.states_explored + other.states_explored,
            states_pruned=self.states_pruned + other.states_pruned,
            states_generated=self.states_generated + other.states_generated,
            max_deque_depth=max(self.max_deque_depth, other.max_deque_depth),
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SearchState:
    """双端队列中的一个搜索状态；不引用任何 worker 私有数据，可以转交"""
    execution: PartialExecution

    @property
    def depth(self) -> int:
        return len(self.execution.lin)


@dataclass
class CheckResult:
    verdict: Verdict
    stats: SearchStats = field(default_factory=SearchStats)
    certificate: Optional[PartialExecution] = None

    def certificate_dump(self, h: History) -> Optional[dict]:
        """证书的扁平输出：lin 加 vis 对"""
        if self.certificate is None:
            return None
        return {
            "lin": [list(eid) for eid in self.certificate.lin_ids(h)],
            "vis": [[list(x), list(y)] for x, y in sorted(self.certificate.vis_pairs(h))],
        }


@lru_cache(maxsize=8192)
def _submasks_largest_first(free: int) -> Tuple[int, ...]:
    """free 的全部子集，元素多的在前；同样大小时按数值降序"""
    subsets = []
    sub = free
    while True:
        subsets.append(sub)
        if sub == 0:
            break
        sub = (sub - 1) & free
    subsets.sort(key=int.bit_count, reverse=True)
    return tuple(subsets)


def lin_extend(state: SearchState, h: History) -> List[SearchState]:
    """
    仲裁序扩展：每个还有未放置事件的会话产生一个后继

    后继按会话号升序排列；可见关系不变。
    """
    execution = state.execution
    successors = []
    for positions, mask in zip(h.session_positions, h.session_masks):
        count = (execution.placed & mask).bit_count()
        if count < len(positions):
            successors.append(SearchState(execution.place(positions[count])))
    return successors


def _closed_submasks(order: Sequence[int], need: Dict[int, int], mandatory: int = 0) -> List[int]:
    """
    order 中事件对 need 封闭的子集，元素多的在前；同样大小时按数值降序

    need[x] 是选中 x 时还必须选中的事件；order 按 lin 排列，
    need[x] 只涉及 order 中排在 x 之前的事件，所以逐个决定即可。
    """
    subsets = [0]
    for x in order:
        bit = 1 << x
        subsets += [s | bit for s in subsets if need[x] & ~s == 0]
    if mandatory:
        subsets = [s for s in subsets if mandatory & ~s == 0]
    subsets.sort(key=lambda s: (s.bit_count(), s), reverse=True)
    return subsets


def _dependency_masks(level: Level, execution: PartialExecution, base: int, free: int, h: History):
    """
    Peer / Causal 下可见集的封闭条件

    Causal 要求可见集对可见关系封闭；Peer 要求看到某事件时也看到它的会话前驱。
    返回 (order, need, mandatory)，mandatory 是 base 本身带来的额外要求。
    """
    order = [p for p in execution.lin if free >> p & 1]
    if level is Level.CAUSAL:
        return order, {x: execution.vis[x] & ~base for x in order}, 0
    mandatory = 0
    for x in bits(base):
        mandatory |= h.hb_masks[x]
    return order, {x: h.hb_masks[x] & ~base for x in order}, mandatory & ~base


def vis_extend(state: SearchState, level: Level, h: History) -> List[SearchState]:
    """
    可见性扩展：为刚放置的事件 o 选择已放置事件中对它可见的合法子集

    每个满足 vis_choice_valid 的子集产生一个后继，超集在前。
    Peer / Causal 只生成封闭的子集，不先枚举全部子集再过滤。
    """
    execution = state.execution
    o = execution.newest
    before = execution.placed & ~(1 << o)
    base = required_mask(level, execution, 0, o, h)
    free = before & ~base

    if level in (Level.PEER, Level.CAUSAL):
        order, need, mandatory = _dependency_masks(level, execution, base, free, h)
        if mandatory & ~free:
            return []
        subsets = _closed_submasks(order, need, mandatory)
    else:
        subsets = _submasks_largest_first(free)
    return [SearchState(execution.with_visibility(o, base | sub)) for sub in subsets]


def query_context(execution: PartialExecution, pos: int, h: History, spec: DataTypeSpec) -> List[Event]:
    """对 pos 可见的更新，按 lin 排序"""
    visible = execution.vis[pos]
    return [
        h.events[p] for p in execution.lin
        if visible >> p & 1 and spec.methods[h.events[p].method].kind is OpKind.UPDATE
    ]


def is_valid(state: SearchState, spec: DataTypeSpec, h: History, query_check: Optional[QueryCheck] = None) -> bool:
    """所有已放置查询的返回值都符合顺序语义"""
    query_check = query_check or matches_return
    execution = state.execution
    for pos in execution.lin:
        event = h.events[pos]
        if spec.methods[event.method].kind is OpKind.QUERY:
            if not query_check(spec, query_context(execution, pos, h, spec), event):
                return False
    return True


class Searcher:
    """
    一次 (history, level) 检查的搜索器

    单线程；并行搜索的每个 worker 持有自己的 Searcher。
    """

    def __init__(
        self,
        h: History,
        spec: DataTypeSpec,
        level: Level,
        pruner=None,
        query_check: Optional[QueryCheck] = None
    ):
        self.h = h
        self.spec = spec
        self.level = level
        self.pruner = pruner
        self.query_check = query_check or matches_return
        self._is_query = tuple(spec.methods[e.method].kind is OpKind.QUERY for e in h)

    def root(self) -> SearchState:
        return SearchState(PartialExecution.empty(self.h))

    def newest_valid(self, state: SearchState) -> bool:
        """
        增量校验：只检查最新放置的事件

        更早查询的上下文不会再变（可见对只会指向最新事件），
        所以沿搜索路径逐个检查等价于 is_valid。
        """
        execution = state.execution
        if not execution.lin:
            return True
        o = execution.newest
        if not self._is_query[o]:
            return True
        return self.query_check(self.spec, query_context(execution, o, self.h, self.spec), self.h.events[o])

    def refuted(self) -> bool:
        return self.pruner is not None and self.pruner.refutes

    def is_complete(self, state: SearchState) -> bool:
        return state.execution.placed == self.h.full_mask

    def expand(self, state: SearchState, stats: SearchStats) -> List[SearchState]:
        """先 lin 扩展再 vis 扩展，剪枝在入队之前进行"""
        successors = []
        for lin_state in lin_extend(state, self.h):
            for vis_state in vis_extend(lin_state, self.level, self.h):
                stats.states_generated += 1
                if self.pruner is not None and self.pruner.violated(vis_state.execution, vis_state.execution.newest):
                    stats.states_pruned += 1
                    continue
                successors.append(vis_state)
        return successors

    def run(self, budget: Optional[int] = DEFAULT_BUDGET, start: Optional[Sequence[SearchState]] = None) -> CheckResult:
        """
        深度优先搜索证书执行

        Args:
            budget: 探索状态上限，None 表示不限
            start: 起始状态（默认从空执行开始）

        Returns:
            CheckResult
        """
        stats = SearchStats()
        if self.refuted():
            return CheckResult(Verdict.VIOLATED, stats)
        dq = deque(start if start is not None else [self.root()])
        while dq:
            if budget is not None and stats.states_explored >= budget:
                logger.info(f"⚠️ 达到状态上限 {budget}，停止搜索")
                return CheckResult(Verdict.BUDGET_EXCEEDED, stats)
            state = dq.popleft()
            stats.states_explored += 1
            if not self.newest_valid(state):
                continue
            if self.is_complete(state):
                return CheckResult(Verdict.SATISFIED, stats, state.execution)
            successors = self.expand(state, stats)
            dq.extendleft(reversed(successors))
            if len(dq) > stats.max_deque_depth:
                stats.max_deque_depth = len(dq)
        return CheckResult(Verdict.VIOLATED, stats)

    def iter_certificates(self, budget: Optional[int] = None) -> Iterator[PartialExecution]:
        """穷举全部合法的完整执行；超过上限时抛出 SearchBudgetExceeded"""
        if self.refuted():
            return
        explored = 0
        dq = deque([self.root()])
        scratch = SearchStats()
        while dq:
            if budget is not None and explored >= budget:
                raise SearchBudgetExceeded(explored)
            state = dq.popleft()
            explored += 1
            if not self.newest_valid(state):
                continue
            if self.is_complete(state):
                yield state.execution
                continue
            dq.extendleft(reversed(self.expand(state, scratch)))


def check(
    h: History,
    spec: DataTypeSpec,
    level: Level,
    pruner=None,
    budget: Optional[int] = DEFAULT_BUDGET
) -> CheckResult:
    """
    判断历史是否满足一致性级别

    Args:
        h: 结构合法的历史
        spec: 数据类型
        level: 一致性级别
        pruner: 剪枝器（可选）
        budget: 探索状态上限

    Returns:
        CheckResult（Satisfied / Violated / BudgetExceeded 加上统计）
    """
    result = Searcher(h, spec, level, pruner).run(budget)
    logger.debug(
        f"🔍 {level.label}: {result.verdict.value}，"
        f"探索 {result.stats.states_explored} 个状态，剪枝 {result.stats.states_pruned} 个"
    )
    return result


def iter_certificates(
    h: History,
    spec: DataTypeSpec,
    level: Level,
    query_check: Optional[QueryCheck] = None,
    budget: Optional[int] = None
) -> Iterator[PartialExecution]:
    """枚举 h 在该级别下的全部合法完整执行（不剪枝）"""
    return Searcher(h, spec, level, query_check=query_check).iter_certificates(budget)
