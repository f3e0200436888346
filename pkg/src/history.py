"""
历史模型
负责事件、会话序以及磁盘上的历史格式（每行一个 JSON 对象）
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple, Union

from src import datatypes
from src.errors import DomainError, HistoryParseError, WellFormednessError

logger = logging.getLogger(__name__)

EventId = Tuple[int, int]
Scalar = Union[int, str]

RECORD_FIELDS = ("session", "index", "method", "args", "ret")
CORPUS_SEPARATOR = "---"
HISTORY_SUFFIX = ".hist"

_INT64_MIN = -(2 ** 63)
_INT64_MAX = 2 ** 63 - 1


@dataclass(frozen=True)
class Event:
    """一次调用：方法、参数、返回值，以及所在会话和会话内序号"""
    session: int
    index: int
    method: str
    args: Tuple[Scalar, ...] = ()
    ret: Any = None

    @property
    def id(self) -> EventId:
        return (self.session, self.index)

    def to_record(self) -> Dict[str, Any]:
        ret = list(self.ret) if isinstance(self.ret, tuple) else self.ret
        return {
            "session": self.session,
            "index": self.index,
            "method": self.method,
            "args": list(self.args),
            "ret": ret
        }

    def __str__(self) -> str:
        args = ", ".join(str(a) for a in self.args)
        text = f"{self.method}({args})"
        if self.ret is not None:
            text += f" ⇒ {self.ret}"
        return text


class History:
    """
    事件集合加上每个会话内的全序（会话序 so）

    构造后不再修改，可以在多个 worker 之间只读共享。
    事件的规范位置（position）按会话号升序、会话内按序排列，
    搜索内部用位置做位掩码。
    """

    def __init__(self, events: Iterable[Event], sessions: Optional[Dict[int, Iterable[EventId]]] = None):
        by_id: Dict[EventId, Event] = {}
        for event in events:
            if event.id in by_id:
                raise WellFormednessError(f"重复的事件 (session={event.session}, index={event.index})")
            by_id[event.id] = event

        if sessions is None:
            grouped: Dict[int, List[EventId]] = {}
            for eid in sorted(by_id):
                grouped.setdefault(eid[0], []).append(eid)
            sessions = grouped

        self.sessions: Dict[int, Tuple[EventId, ...]] = {}
        listed = set()
        for session_id in sorted(sessions):
            ids = tuple(sessions[session_id])
            for eid in ids:
                if eid not in by_id:
                    raise WellFormednessError(f"会话 {session_id} 引用了不存在的事件 {eid}")
                if by_id[eid].session != session_id:
                    raise WellFormednessError(f"事件 {eid} 不属于会话 {session_id}")
                if eid in listed:
                    raise WellFormednessError(f"事件 {eid} 在会话列表中出现多次")
                listed.add(eid)
            if ids:
                self.sessions[session_id] = ids
        if len(listed) != len(by_id):
            missing = sorted(set(by_id) - listed)
            raise WellFormednessError(f"事件未出现在任何会话列表中: {missing}")

        self.events: Tuple[Event, ...] = tuple(
            by_id[eid] for ids in self.sessions.values() for eid in ids
        )
        self._by_id = by_id
        self._position = {event.id: pos for pos, event in enumerate(self.events)}

        # 位掩码形式的会话结构
        session_positions = []
        hb_masks = [0] * len(self.events)
        for ids in self.sessions.values():
            positions = tuple(self._position[eid] for eid in ids)
            session_positions.append(positions)
            before = 0
            for pos in positions:
                hb_masks[pos] = before
                before |= 1 << pos
        self.session_positions: Tuple[Tuple[int, ...], ...] = tuple(session_positions)
        self.session_masks: Tuple[int, ...] = tuple(
            sum(1 << p for p in positions) for positions in session_positions
        )
        self.hb_masks: Tuple[int, ...] = tuple(hb_masks)
        self.full_mask = (1 << len(self.events)) - 1

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __contains__(self, item) -> bool:
        eid = item.id if isinstance(item, Event) else item
        return eid in self._by_id and (not isinstance(item, Event) or self._by_id[eid] == item)

    def __eq__(self, other) -> bool:
        if not isinstance(other, History):
            return NotImplemented
        return self.events == other.events and self.sessions == other.sessions

    def __hash__(self) -> int:
        return hash(self.events)

    def __repr__(self) -> str:
        return f"History(sessions={len(self.sessions)}, events={len(self.events)})"

    def event(self, eid: EventId) -> Event:
        """按 id 取事件"""
        try:
            return self._by_id[eid]
        except KeyError:
            raise DomainError(f"事件 {eid} 不在历史中") from None

    def position(self, eid: EventId) -> int:
        """事件的规范位置"""
        try:
            return self._position[eid]
        except KeyError:
            raise DomainError(f"事件 {eid} 不在历史中") from None

    def so_pairs(self) -> List[Tuple[EventId, EventId]]:
        """会话序中的全部有序对"""
        pairs = []
        for ids in self.sessions.values():
            for i, a in enumerate(ids):
                for b in ids[i + 1:]:
                    pairs.append((a, b))
        return pairs


def session_predecessors(h: History, e: Event) -> List[Event]:
    """
    返回同一会话中排在 e 之前的事件（按会话内顺序）

    Args:
        h: 历史
        e: 目标事件

    Returns:
        e 的会话前驱列表；其他会话的事件永远不会出现
    """
    if e not in h:
        raise DomainError(f"事件 {e.id} 不在历史中")
    ids = h.sessions[e.session]
    return [h.event(eid) for eid in ids[:ids.index(e.id)]]


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _check_scalar(value, what: str, line: int):
    if _is_int(value):
        if not _INT64_MIN <= value <= _INT64_MAX:
            raise HistoryParseError(f"{what} 超出 64 位整数范围: {value}", line=line)
        return value
    if isinstance(value, str):
        return value
    raise HistoryParseError(f"{what} 必须是整数或字符串: {value!r}", line=line)


def _parse_ret(value, line: int):
    if value is None or isinstance(value, bool):
        return value
    if isinstance(value, list):
        if len(value) != 2 or not all(_is_int(v) for v in value):
            raise HistoryParseError(f"ret 只能是 [int, int] 形式的二元组: {value!r}", line=line)
        return (_check_scalar(value[0], "ret", line), _check_scalar(value[1], "ret", line))
    return _check_scalar(value, "ret", line)


def _parse_record(text: str, line: int) -> Event:
    try:
        record = json.loads(text)
    except json.JSONDecodeError as e:
        raise HistoryParseError(f"JSON 解析失败: {e.msg}", line=line) from e

    if not isinstance(record, dict):
        raise HistoryParseError("每行必须是一个 JSON 对象", line=line)
    unknown = sorted(set(record) - set(RECORD_FIELDS))
    if unknown:
        raise HistoryParseError(f"未知字段: {', '.join(unknown)}", line=line)
    missing = [name for name in RECORD_FIELDS if name not in record]
    if missing:
        raise HistoryParseError(f"缺少字段: {', '.join(missing)}", line=line)

    session, index, method, args = record["session"], record["index"], record["method"], record["args"]
    if not _is_int(session) or not _is_int(index) or index < 0:
        raise HistoryParseError("session 和 index 必须是整数（index 非负）", line=line)
    if not isinstance(method, str) or not method:
        raise HistoryParseError("method 必须是非空字符串", line=line)
    if not isinstance(args, list):
        raise HistoryParseError("args 必须是数组", line=line)

    return Event(
        session=session,
        index=index,
        method=method,
        args=tuple(_check_scalar(a, "args 元素", line) for a in args),
        ret=_parse_ret(record["ret"], line)
    )


def parse_history(data: Union[str, bytes], spec: Optional["datatypes.DataTypeSpec"] = None) -> History:
    """
    解析历史文件

    Args:
        data: UTF-8 文本，每行一个事件记录
        spec: 数据类型；为空时按所有内置类型的方法名归类

    Returns:
        结构合法的 History，每个会话的事件保持文件中的顺序
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise HistoryParseError(f"不是合法的 UTF-8 文本: {e}") from e

    events: List[Event] = []
    sessions: Dict[int, List[EventId]] = {}
    seen = set()
    for line_no, raw in enumerate(data.splitlines(), start=1):
        if not raw.strip():
            continue
        event = _parse_record(raw, line_no)
        if event.id in seen:
            raise WellFormednessError(
                f"第 {line_no} 行: 重复的 (session={event.session}, index={event.index})"
            )
        expected = len(sessions.get(event.session, ()))
        if event.index != expected:
            raise WellFormednessError(
                f"第 {line_no} 行: 会话 {event.session} 期望 index={expected}，实际为 {event.index}"
            )
        try:
            _check_event(event, spec)
        except WellFormednessError as e:
            raise WellFormednessError(f"第 {line_no} 行: {e}") from e
        seen.add(event.id)
        events.append(event)
        sessions.setdefault(event.session, []).append(event.id)

    return History(events, sessions)


def _check_event(event: Event, spec: Optional["datatypes.DataTypeSpec"]):
    if spec is None:
        signature = datatypes.signature_any(event.method)
    else:
        signature = spec.methods.get(event.method)
        if signature is None:
            raise WellFormednessError(f"{spec.name} 没有方法 {event.method}")
    signature.check_args(event.method, event.args)
    if signature.kind is datatypes.OpKind.UPDATE and event.ret is not None:
        raise WellFormednessError(f"更新操作 {event.method} 的返回值必须为 null")


def validate_history(h: History, spec: "datatypes.DataTypeSpec") -> History:
    """按数据类型签名检查每个事件（方法名、参数个数与类型、更新返回值）"""
    for event in h:
        try:
            _check_event(event, spec)
        except WellFormednessError as e:
            raise WellFormednessError(f"事件 {event.id}: {e}") from e
    return h


def serialize_history(h: History) -> str:
    """把历史写回每行一个 JSON 对象的格式"""
    lines = [
        json.dumps(event.to_record(), separators=(",", ":"), ensure_ascii=False)
        for event in h
    ]
    return "".join(line + "\n" for line in lines)


def load_corpus(path: Union[str, Path], spec: Optional["datatypes.DataTypeSpec"] = None) -> List[Tuple[str, History]]:
    """
    读取历史语料

    Args:
        path: `*.hist` 文件目录，或用 `---` 行分隔的单个文件
        spec: 数据类型

    Returns:
        (名称, History) 列表，按文件名（或流中顺序）排列
    """
    path = Path(path)
    corpus: List[Tuple[str, History]] = []

    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix == HISTORY_SUFFIX)
        logger.info(f"📂 读取语料目录 {path}，共 {len(files)} 个历史文件")
        for file in files:
            try:
                corpus.append((file.name, parse_history(file.read_bytes(), spec)))
            except (HistoryParseError, WellFormednessError) as e:
                raise type(e)(f"{file.name}: {e}") from e
        return corpus

    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DomainError(f"无法读取语料 {path}: {e}") from e

    chunks: List[List[str]] = [[]]
    for raw in text.splitlines():
        if raw.strip() == CORPUS_SEPARATOR:
            chunks.append([])
        else:
            chunks[-1].append(raw)
    for i, chunk in enumerate(chunks):
        body = "\n".join(chunk)
        if not body.strip() and len(chunks) > 1:
            continue
        try:
            corpus.append((f"{path.name}#{i}", parse_history(body, spec)))
        except (HistoryParseError, WellFormednessError) as e:
            raise type(e)(f"{path.name}#{i}: {e}") from e
    logger.info(f"📂 读取语料流 {path}，共 {len(corpus)} 条历史")
    return corpus
