"""
可见性谱
六个一致性级别、（部分）抽象执行，以及新放置操作必须看到的操作集合
"""
import enum
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Iterator, List, Set, Tuple

from src.config import LEVEL_META
from src.errors import DomainError
from src.history import Event, EventId, History

Pair = Tuple[EventId, EventId]


class Level(enum.IntEnum):
    """一致性级别，数值越大越强"""
    WEAK = 0
    BASIC = 1
    MONOTONIC = 2
    PEER = 3
    CAUSAL = 4
    COMPLETE = 5

    @property
    def label(self) -> str:
        return self.name.lower()

    @property
    def abbr(self) -> str:
        return LEVEL_META[self.label]["abbr"]

    @classmethod
    def parse(cls, name: str) -> "Level":
        """按名称或表格缩写（Co/Ca/P/M/B/W）解析级别"""
        key = name.strip().lower()
        for level in cls:
            if key in (level.label, level.abbr.lower()):
                return level
        raise DomainError(f"未知的一致性级别: {name}（可选: {', '.join(l.label for l in cls)}）")


STRONGEST_FIRST: Tuple[Level, ...] = tuple(sorted(Level, reverse=True))


def bits(mask: int) -> Iterator[int]:
    """依次给出掩码中置位的位置"""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass(frozen=True)
class PartialExecution:
    """
    (lin, vis)：仲裁序前缀加上已放置事件之间的可见关系

    位置是 History 中的规范位置；vis[y] 是对 y 可见的事件位置掩码，
    自反对不存储。
    """
    lin: Tuple[int, ...]
    vis: Tuple[int, ...]
    placed: int = 0

    @classmethod
    def empty(cls, h: History) -> "PartialExecution":
        return cls((), (0,) * len(h), 0)

    @classmethod
    def from_ids(cls, h: History, lin_ids: Iterable[EventId], vis_pairs: Iterable[Pair]) -> "PartialExecution":
        lin = tuple(h.position(eid) for eid in lin_ids)
        vis = [0] * len(h)
        for x, y in vis_pairs:
            vis[h.position(y)] |= 1 << h.position(x)
        placed = 0
        for pos in lin:
            placed |= 1 << pos
        return cls(lin, tuple(vis), placed)

    @property
    def newest(self) -> int:
        return self.lin[-1]

    def place(self, pos: int) -> "PartialExecution":
        return PartialExecution(self.lin + (pos,), self.vis, self.placed | (1 << pos))

    def with_visibility(self, pos: int, mask: int) -> "PartialExecution":
        vis = list(self.vis)
        vis[pos] = mask
        return PartialExecution(self.lin, tuple(vis), self.placed)

    def is_complete(self, h: History) -> bool:
        return self.placed == h.full_mask

    def lin_ids(self, h: History) -> List[EventId]:
        return [h.events[pos].id for pos in self.lin]

    def placed_ids(self, h: History) -> Set[EventId]:
        return {h.events[pos].id for pos in self.lin}

    def vis_pairs(self, h: History) -> Set[Pair]:
        return {
            (h.events[x].id, h.events[y].id)
            for y in self.lin for x in bits(self.vis[y])
        }


def required_mask(level: Level, execution: PartialExecution, candidate: int, o: int, h: History) -> int:
    """
    位掩码版本的 required_vis

    Args:
        level: 一致性级别
        execution: o 已追加到 lin、尚未选择可见集的执行
        candidate: 候选可见集（位掩码）
        o: 新放置事件的位置
        h: 历史

    Returns:
        o 必须看到的事件集合 M
    """
    before = execution.placed & ~(1 << o)
    if level is Level.WEAK:
        return 0
    if level is Level.COMPLETE:
        return before

    hb = h.hb_masks[o] & before
    if level is Level.BASIC:
        return hb

    vis = execution.vis
    if level is Level.CAUSAL:
        required = hb
        pending = candidate | hb
        seen = 0
        while pending:
            seen |= pending
            grown = 0
            for y in bits(pending):
                grown |= vis[y]
            required |= grown
            pending = grown & ~seen
        return required

    required = hb
    for p in bits(hb):
        required |= vis[p]
    if level is Level.PEER:
        for x in bits(candidate):
            required |= h.hb_masks[x]
    return required


def mask_choice_valid(level: Level, execution: PartialExecution, candidate: int, o: int, h: History) -> bool:
    return required_mask(level, execution, candidate, o, h) & ~candidate == 0


def _candidate_mask(h: History, candidate_vis: Iterable[Pair], o: Event) -> int:
    mask = 0
    for x, y in candidate_vis:
        if y != o.id:
            raise DomainError(f"候选可见对 {(x, y)} 的终点不是新放置的事件 {o.id}")
        mask |= 1 << h.position(x)
    return mask


def required_vis(level: Level, state: PartialExecution, candidate_vis: Iterable[Pair], o: Event, h: History) -> Set[EventId]:
    """o 在该级别下必须看到的事件 id 集合"""
    candidate_vis = list(candidate_vis)
    mask = required_mask(level, state, _candidate_mask(h, candidate_vis, o), h.position(o.id), h)
    return {h.events[p].id for p in bits(mask)}


def vis_choice_valid(level: Level, state: PartialExecution, candidate_vis: Iterable[Pair], o: Event, h: History) -> bool:
    """候选可见集是否包含 required_vis 的全部事件"""
    candidate_vis = list(candidate_vis)
    return mask_choice_valid(level, state, _candidate_mask(h, candidate_vis, o), h.position(o.id), h)


def full_execution_satisfies(level: Level, execution: PartialExecution, h: History) -> bool:
    """
    直接在每个事件上求值级别的一阶谓词

    与增量构造无关的独立实现，用于交叉验证。
    """
    lin = execution.lin_ids(h)
    if len(lin) != len(h) or set(lin) != {e.id for e in h}:
        raise DomainError("执行没有覆盖历史中的全部事件")

    rank = {eid: i for i, eid in enumerate(lin)}
    vis: Dict[EventId, Set[EventId]] = {eid: set() for eid in lin}
    for x, y in execution.vis_pairs(h):
        if rank[x] >= rank[y]:
            return False
        vis[y].add(x)

    hb: Dict[EventId, FrozenSet[EventId]] = {}
    for ids in h.sessions.values():
        for i, eid in enumerate(ids):
            hb[eid] = frozenset(ids[:i])

    def basic(o):
        return hb[o] <= vis[o]

    def monotonic(o):
        return basic(o) and all(vis[p] <= vis[o] for p in hb[o])

    def peer(o):
        return monotonic(o) and all(hb[p] <= vis[o] for p in vis[o])

    def causal(o):
        return basic(o) and all(vis[p] <= vis[o] for p in vis[o])

    def complete(o):
        return basic(o) and vis[o] == set(lin[:rank[o]])

    predicate = {
        Level.WEAK: lambda o: True,
        Level.BASIC: basic,
        Level.MONOTONIC: monotonic,
        Level.PEER: peer,
        Level.CAUSAL: causal,
        Level.COMPLETE: complete,
    }[level]
    return all(predicate(o) for o in lin)
