"""
剪枝谓词
按元素构建查询簇，穷举每个簇的合法抽象执行，
提取仲裁、可见、不可见三类谓词，并在搜索状态上求值
"""
import enum
import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx

from src.config import CLUSTER_SIZE_CAP, CLUSTER_STATE_BUDGET
from src.datatypes import DataTypeSpec, OpKind, replay, same_value
from src.errors import SearchBudgetExceeded
from src.history import Event, EventId, History
from src.search import SearchState, iter_certificates
from src.visibility import Level, PartialExecution

logger = logging.getLogger(__name__)

Pair = Tuple[EventId, EventId]


class PredicateKind(enum.Enum):
    ARB = "arb"
    VIS = "vis"
    NOTVIS = "notvis"


@dataclass(frozen=True)
class QueryCluster:
    """
    一个查询加上同一元素上的全部更新

    necessary_only 为 True 时（get_max 返回了某个元素），
    簇里的更新只构成返回值的必要条件。
    """
    element: Any
    dictated_query: EventId
    dictating_updates: FrozenSet[EventId]
    sub_session_order: Tuple[Tuple[EventId, ...], ...]
    necessary_only: bool = False

    @property
    def size(self) -> int:
        return 1 + len(self.dictating_updates)

    def history(self, h: History) -> History:
        """投影到簇上的子历史（保留原事件 id）"""
        sessions = {ids[0][0]: ids for ids in self.sub_session_order}
        events = [h.event(eid) for ids in self.sub_session_order for eid in ids]
        return History(events, sessions)


@dataclass(frozen=True)
class PruningPredicate:
    kind: PredicateKind
    x: EventId
    y: EventId
    slin: FrozenSet[Pair] = frozenset()

    def participants(self) -> FrozenSet[EventId]:
        ids = {self.x, self.y}
        for a, b in self.slin:
            ids.update((a, b))
        return frozenset(ids)

    def holds_in(self, lin_pairs: FrozenSet[Pair], vis: FrozenSet[Pair]) -> bool:
        """在一个完整执行上是否成立（模板的全称量词）"""
        if self.kind is PredicateKind.ARB:
            return (self.x, self.y) in lin_pairs
        premise = self.slin <= lin_pairs and (self.x, self.y) in lin_pairs
        if not premise:
            return True
        if self.kind is PredicateKind.VIS:
            return (self.x, self.y) in vis
        return (self.x, self.y) not in vis

    def sort_key(self):
        return (self.kind.value, self.x, self.y, sorted(self.slin))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "x": list(self.x),
            "y": list(self.y),
            "slin": [[list(a), list(b)] for a, b in sorted(self.slin)]
        }

    def __str__(self) -> str:
        if self.kind is PredicateKind.ARB:
            return f"Arb({self.x}, {self.y})"
        name = "Vis" if self.kind is PredicateKind.VIS else "NotVis"
        return f"{name}({sorted(self.slin)}, {self.x}, {self.y})"


@dataclass(frozen=True)
class ClusterExecution:
    lin: Tuple[EventId, ...]
    vis: FrozenSet[Pair]
    lin_pairs: FrozenSet[Pair]

    @classmethod
    def of(cls, sub: History, execution: PartialExecution) -> "ClusterExecution":
        lin = tuple(execution.lin_ids(sub))
        pairs = frozenset((a, b) for i, a in enumerate(lin) for b in lin[i + 1:])
        return cls(lin, frozenset(execution.vis_pairs(sub)), pairs)

    @property
    def notvis(self) -> FrozenSet[Pair]:
        return self.lin_pairs - self.vis


def build_clusters(h: History, spec: DataTypeSpec) -> List[QueryCluster]:
    """
    为每个只涉及单个元素的查询构建查询簇

    size()、返回 Nil 的 get_max() 等多元素查询不产生簇。
    """
    updates_by_element: Dict[Any, List[EventId]] = defaultdict(list)
    for event in h:
        if spec.methods[event.method].kind is OpKind.UPDATE:
            updates_by_element[spec.element_of(event)].append(event.id)

    clusters = []
    for query in h:
        if spec.methods[query.method].kind is not OpKind.QUERY:
            continue
        element = spec.element_of(query)
        necessary_only = False
        if element is None:
            if query.method == "get_max" and isinstance(query.ret, tuple):
                element = query.ret[0]
                necessary_only = True
            else:
                continue

        members = set(updates_by_element.get(element, ())) | {query.id}
        order = tuple(
            tuple(eid for eid in ids if eid in members)
            for ids in h.sessions.values()
        )
        clusters.append(QueryCluster(
            element=element,
            dictated_query=query.id,
            dictating_updates=frozenset(updates_by_element.get(element, ())),
            sub_session_order=tuple(ids for ids in order if ids),
            necessary_only=necessary_only
        ))
    return clusters


def _has_returned_priority(element, priority, spec: DataTypeSpec, context: Sequence[Event], q: Event) -> bool:
    """get_max 的必要条件：元素在上下文中的优先级等于返回值"""
    return same_value(replay(spec, context).get(element), priority)


def enumerate_cluster_executions(
    c: QueryCluster,
    spec: DataTypeSpec,
    level: Level,
    h: History,
    size_cap: int = CLUSTER_SIZE_CAP,
    budget: Optional[int] = CLUSTER_STATE_BUDGET
) -> Optional[List[ClusterExecution]]:
    """
    穷举簇在同一级别下的全部合法完整执行

    Returns:
        执行列表；簇过大或超过状态上限时返回 None（跳过该簇，剪枝仍然安全）
    """
    if c.size > size_cap:
        logger.debug(f"⏭️ 簇 {c.dictated_query} 有 {c.size} 个事件，超过上限 {size_cap}，跳过")
        return None

    sub = c.history(h)
    query_check = None
    if c.necessary_only:
        query_check = partial(_has_returned_priority, c.element, h.event(c.dictated_query).ret[1])

    try:
        return [
            ClusterExecution.of(sub, execution)
            for execution in iter_certificates(sub, spec, level, query_check, budget)
        ]
    except SearchBudgetExceeded as e:
        logger.debug(f"⏭️ 簇 {c.dictated_query} 穷举超过上限（{e.explored} 个状态），跳过")
        return None


def _is_session_pair(pair: Pair) -> bool:
    (a, b) = pair
    return a[0] == b[0]


def extract_tarb(execs: Sequence[ClusterExecution]) -> List[PruningPredicate]:
    """
    所有线性化的交集给出仲裁谓词

    会话序以及经由会话序、其他仲裁谓词传递可得的对不再输出（取传递规约）。
    """
    common = frozenset.intersection(*(e.lin_pairs for e in execs))
    graph = nx.DiGraph()
    graph.add_nodes_from(execs[0].lin)
    graph.add_edges_from(common)
    reduced = nx.transitive_reduction(graph)
    return sorted(
        (PruningPredicate(PredicateKind.ARB, x, y) for x, y in reduced.edges if not _is_session_pair((x, y))),
        key=PruningPredicate.sort_key
    )


def _strip(s_arb: FrozenSet[Pair], pair: Pair) -> FrozenSet[Pair]:
    return frozenset(p for p in s_arb if p != pair and not _is_session_pair(p))


def _extract_conditional(execs: Sequence[ClusterExecution], kind: PredicateKind) -> List[PruningPredicate]:
    relation = (lambda e: e.vis) if kind is PredicateKind.VIS else (lambda e: e.notvis)
    union = frozenset().union(*(relation(e) for e in execs))
    predicates = []
    for pair in sorted(union):
        s_arb = frozenset.intersection(*(e.lin_pairs for e in execs if pair in relation(e)))
        counterexample = any(
            s_arb <= e.lin_pairs for e in execs if pair not in relation(e)
        )
        if not counterexample:
            predicates.append(PruningPredicate(kind, pair[0], pair[1], _strip(s_arb, pair)))
    return predicates


def extract_tvis(execs: Sequence[ClusterExecution]) -> List[PruningPredicate]:
    """可见谓词：某些仲裁对出现时可见对必然出现"""
    return _extract_conditional(execs, PredicateKind.VIS)


def extract_tnotvis(execs: Sequence[ClusterExecution]) -> List[PruningPredicate]:
    """不可见谓词：某些仲裁对出现时可见对必然不出现"""
    return _extract_conditional(execs, PredicateKind.NOTVIS)


def _ranks(execution: PartialExecution) -> Dict[int, int]:
    return {pos: i for i, pos in enumerate(execution.lin)}


def _evaluate(kind: PredicateKind, x: int, y: int, slin: Iterable[Tuple[int, int]],
              execution: PartialExecution, rank: Dict[int, int]) -> bool:
    if kind is PredicateKind.ARB:
        return rank[y] < rank[x]
    if not all(rank[a] < rank[b] for a, b in slin):
        return False
    visible = execution.vis[y] >> x & 1
    if kind is PredicateKind.VIS:
        return rank[x] < rank[y] and not visible
    return bool(visible)


def predicate_violated(p: PruningPredicate, state: SearchState, h: History) -> bool:
    """
    谓词在搜索状态上是否已被违反

    涉及的事件只要有一个未放置，谓词就不确定，按未违反处理。
    """
    execution = state.execution
    positions = {eid: h.position(eid) for eid in p.participants()}
    if any(not execution.placed >> pos & 1 for pos in positions.values()):
        return False
    slin = [(positions[a], positions[b]) for a, b in p.slin]
    return _evaluate(p.kind, positions[p.x], positions[p.y], slin, execution, _ranks(execution))


class Pruner:
    """
    一个 (history, level) 的剪枝器

    谓词按参与事件建立索引；新放置事件时只检查以它为最后一个参与者的谓词，
    每个谓词沿一条搜索路径恰好求值一次。
    """

    def __init__(
        self,
        h: History,
        spec: DataTypeSpec,
        level: Level,
        size_cap: int = CLUSTER_SIZE_CAP,
        cluster_budget: Optional[int] = CLUSTER_STATE_BUDGET
    ):
        self.level = level
        self.clusters = build_clusters(h, spec)
        self.skipped: List[QueryCluster] = []
        # 第一个没有合法执行的簇；非空时该级别下不存在证书
        self.unsatisfiable: Optional[QueryCluster] = None

        found = set()
        for cluster in self.clusters:
            execs = enumerate_cluster_executions(cluster, spec, level, h, size_cap, cluster_budget)
            if execs is None:
                self.skipped.append(cluster)
                continue
            if not execs:
                if self.unsatisfiable is None:
                    self.unsatisfiable = cluster
                    logger.info(f"🚫 {level.label}: 查询 {cluster.dictated_query} 所在的簇没有合法执行")
                continue
            found.update(extract_tarb(execs))
            found.update(extract_tvis(execs))
            found.update(extract_tnotvis(execs))
        self.predicates: List[PruningPredicate] = sorted(found, key=PruningPredicate.sort_key)

        self._index: Dict[int, List[tuple]] = defaultdict(list)
        for p in self.predicates:
            positions = {eid: h.position(eid) for eid in p.participants()}
            need = 0
            for pos in positions.values():
                need |= 1 << pos
            compiled = (
                p.kind,
                positions[p.x],
                positions[p.y],
                tuple((positions[a], positions[b]) for a, b in p.slin),
                need
            )
            for pos in positions.values():
                self._index[pos].append(compiled)
        self._index = dict(self._index)

        logger.info(
            f"✂️ {level.label}: {len(self.clusters)} 个查询簇，跳过 {len(self.skipped)} 个，"
            f"提取 {len(self.predicates)} 个剪枝谓词"
        )

    def __len__(self) -> int:
        return len(self.predicates)

    @property
    def refutes(self) -> bool:
        """某个簇单独就无法满足，整个历史在该级别下必然违反"""
        return self.unsatisfiable is not None

    def violated(self, execution: PartialExecution, pos: int) -> bool:
        """以 pos 为最后放置参与者的谓词中是否有被违反的"""
        entries = self._index.get(pos)
        if not entries:
            return False
        rank = None
        for kind, x, y, slin, need in entries:
            if need & ~execution.placed:
                continue
            if rank is None:
                rank = _ranks(execution)
            if _evaluate(kind, x, y, slin, execution, rank):
                return True
        return False

    def to_json(self) -> List[Dict[str, Any]]:
        return [p.to_dict() for p in self.predicates]

    def dump(self, path: Union[str, Path]) -> Path:
        """把提取的谓词写成 JSON 文件"""
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
        logger.info(f"💾 剪枝谓词已写入 {path}")
        return path
