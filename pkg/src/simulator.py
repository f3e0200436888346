"""
多副本存储模拟器
生成随机工作负载，在进程内的多副本 CRDT 存储上执行，
输出历史以及每个事件执行时已应用的更新（ground truth）
"""
import enum
import json
import logging
import random
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterator, List, Mapping, NamedTuple, Optional, Set, Tuple, Union

import networkx as nx

from src.config import (
    DEFAULT_ARG_RANGE,
    DEFAULT_MAX_IN_FLIGHT,
    DEFAULT_OP_COUNT,
    DEFAULT_SESSION_COUNT,
    DELIVERY_PROBABILITY,
    get_mix,
)
from src.datatypes import DataTypeSpec, OpKind, classify_any, get_spec, read
from src.errors import DomainError
from src.history import Event, EventId, History
from src.visibility import PartialExecution

logger = logging.getLogger(__name__)

TRUTH_SUFFIX = ".truth"


class DeliveryMode(enum.Enum):
    SYNC = "sync"
    CAUSAL = "causal"
    RANDOM = "random"


class Resolution(enum.Enum):
    ADD_WIN = "addwin"
    REMOVE_WIN = "removewin"


class Operation(NamedTuple):
    method: str
    args: Tuple[int, ...]


@dataclass(frozen=True)
class WorkloadConfig:
    """
    工作负载配置

    op_count 和 session_count 可以是固定值，也可以是 (最小, 最大) 区间，
    每次生成时在区间内均匀抽取。
    """
    type_name: str = "set"
    op_count: Union[int, Tuple[int, int]] = DEFAULT_OP_COUNT
    session_count: Union[int, Tuple[int, int]] = DEFAULT_SESSION_COUNT
    arg_range: Tuple[int, int] = DEFAULT_ARG_RANGE
    mix: Optional[Mapping[str, float]] = None
    seed: int = 0

    def __post_init__(self):
        spec = get_spec(self.type_name)
        mix = self.weights
        unknown = sorted(set(mix) - set(spec.methods))
        if unknown:
            raise DomainError(f"{self.type_name} 没有方法: {', '.join(unknown)}")
        if abs(sum(mix.values()) - 1.0) > 1e-9 or any(w < 0 for w in mix.values()):
            raise DomainError(f"方法配比之和必须为 1: {dict(mix)}")
        op_lo, _ = _as_range(self.op_count)
        _, session_hi = _as_range(self.session_count)
        if op_lo < session_hi:
            raise DomainError(f"操作数 {self.op_count} 不能少于会话数 {self.session_count}")
        if self.arg_range[0] > self.arg_range[1]:
            raise DomainError(f"参数区间不合法: {self.arg_range}")

    @property
    def weights(self) -> Mapping[str, float]:
        return self.mix if self.mix is not None else get_mix(self.type_name)

    @property
    def update_fraction(self) -> float:
        spec = get_spec(self.type_name)
        return sum(w for m, w in self.weights.items() if spec.methods[m].kind is OpKind.UPDATE)


@dataclass(frozen=True)
class Workload:
    type_name: str
    sessions: Tuple[Tuple[Operation, ...], ...]

    @property
    def op_count(self) -> int:
        return sum(len(ops) for ops in self.sessions)


@dataclass(frozen=True)
class SimConfig:
    replica_count: Optional[int] = None  # None 表示每个会话一个副本
    delivery: DeliveryMode = DeliveryMode.CAUSAL
    max_in_flight: int = DEFAULT_MAX_IN_FLIGHT
    resolution: Resolution = Resolution.ADD_WIN
    seed: int = 0

    def __post_init__(self):
        if self.replica_count is not None and self.replica_count < 1:
            raise DomainError(f"副本数必须为正数: {self.replica_count}")
        if self.max_in_flight < 0:
            raise DomainError(f"在途更新上限不能为负数: {self.max_in_flight}")


@dataclass
class GroundTruth:
    """
    每个事件执行时其副本上已应用的更新（不含自身），
    外加事件的全局执行顺序、更新的 Lamport 时间戳和冲突解决策略
    """
    delivered: Dict[EventId, FrozenSet[EventId]]
    order: Tuple[EventId, ...]
    timestamps: Dict[EventId, int] = field(default_factory=dict)
    resolution: Optional[Resolution] = None

    def to_json(self) -> Dict[str, Any]:
        return {
            "order": [list(eid) for eid in self.order],
            "delivered": [
                {"event": list(eid), "delivered": [list(u) for u in sorted(self.delivered[eid])]}
                for eid in self.order
            ],
            "timestamps": [[list(eid), ts] for eid, ts in sorted(self.timestamps.items())],
            "resolution": self.resolution.value if self.resolution else None
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "GroundTruth":
        try:
            resolution = data.get("resolution")
            return cls(
                delivered={
                    tuple(item["event"]): frozenset(tuple(u) for u in item["delivered"])
                    for item in data["delivered"]
                },
                order=tuple(tuple(eid) for eid in data["order"]),
                timestamps={tuple(eid): ts for eid, ts in data.get("timestamps", [])},
                resolution=Resolution(resolution) if resolution else None
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DomainError(f"ground truth 格式不正确: {e}") from e


@dataclass
class SimulationResult:
    history: History
    truth: GroundTruth
    final_states: Dict[int, Any]


def _as_range(value: Union[int, Tuple[int, int]]) -> Tuple[int, int]:
    if isinstance(value, int):
        return (value, value)
    return (value[0], value[1])


def _largest_remainder(weights: Mapping[str, float], total: int) -> Dict[str, int]:
    exact = {m: w * total for m, w in weights.items()}
    counts = {m: int(v) for m, v in exact.items()}
    leftover = total - sum(counts.values())
    for m in sorted(exact, key=lambda m: (-(exact[m] - counts[m]), m))[:leftover]:
        counts[m] += 1
    return counts


def generate_workload(cfg: WorkloadConfig) -> Workload:
    """
    按方法配比随机生成工作负载

    Args:
        cfg: 工作负载配置

    Returns:
        Workload：每个会话一个操作序列（没有返回值）；相同种子结果相同
    """
    rng = random.Random(cfg.seed)
    spec = get_spec(cfg.type_name)
    op_count = rng.randint(*_as_range(cfg.op_count))
    session_count = rng.randint(*_as_range(cfg.session_count))
    lo, hi = cfg.arg_range

    methods: List[str] = []
    for method, count in sorted(_largest_remainder(cfg.weights, op_count).items()):
        methods.extend([method] * count)
    rng.shuffle(methods)

    ops = [
        Operation(method, tuple(rng.randint(lo, hi) for _ in range(spec.methods[method].arity)))
        for method in methods
    ]

    sessions = []
    start = 0
    for i in range(session_count):
        size = op_count // session_count + (1 if i < op_count % session_count else 0)
        sessions.append(tuple(ops[start:start + size]))
        start += size
    return Workload(cfg.type_name, tuple(sessions))


@dataclass
class UpdateRecord:
    event: Event
    ts: int
    observed: FrozenSet[EventId]


def _key(info: UpdateRecord) -> Tuple[int, int, int]:
    return (info.ts, info.event.session, info.event.index)


def _group_by_element(spec: DataTypeSpec, applied: Set[EventId], updates: Mapping[EventId, UpdateRecord]):
    grouped: Dict[Any, List[UpdateRecord]] = defaultdict(list)
    for uid in sorted(applied):
        info = updates[uid]
        grouped[spec.element_of(info.event)].append(info)
    return grouped


def resolve_state(spec: DataTypeSpec, resolution: Resolution, applied: Set[EventId],
                  updates: Mapping[EventId, UpdateRecord]):
    """
    按冲突解决策略由已应用的更新集合算出副本状态

    状态与 replay 的形式相同（集合为 set，映射和优先队列为 dict），
    结果与更新的到达顺序无关。
    """
    add_win = resolution is Resolution.ADD_WIN
    grouped = _group_by_element(spec, applied, updates)

    if spec.name == "set":
        state = set()
        for element, infos in grouped.items():
            adds = [i for i in infos if i.event.method == "add"]
            removes = [i for i in infos if i.event.method == "remove"]
            if add_win:
                present = any(all(a.event.id not in r.observed for r in removes) for a in adds)
            else:
                present = any(all(r.event.id in a.observed for r in removes) for a in adds)
            if present:
                state.add(element)
        return state

    if spec.name == "map":
        state = {}
        for key, infos in grouped.items():
            puts = [i for i in infos if i.event.method == "put"]
            deletes = [i for i in infos if i.event.method == "delete"]
            frontier = [p for p in puts if not any(p.event.id in o.observed for o in puts)]
            if add_win:
                live = [p for p in frontier if not any(p.event.id in d.observed for d in deletes)]
            else:
                live = [p for p in frontier if all(d.event.id in p.observed for d in deletes)]
            if live:
                state[key] = max(live, key=_key).event.args[1]
        return state

    if spec.name == "pqueue":
        state = {}
        for element, infos in grouped.items():
            inserts = [i for i in infos if i.event.method == "insert"]
            if not inserts:
                continue
            effective = min(inserts, key=_key)
            insert_ids = {i.event.id for i in inserts}
            priority = effective.event.args[1]
            for inc in (i for i in infos if i.event.method == "inc"):
                if add_win:
                    counts = inc.event.id not in effective.observed
                else:
                    counts = bool(insert_ids & inc.observed)
                if counts:
                    priority += inc.event.args[1]
            state[element] = priority
        return state

    raise DomainError(f"未知的数据类型: {spec.name}")


class Replica:
    """一个副本：已应用的更新集合加上 Lamport 时钟"""

    def __init__(self, replica_id: int):
        self.replica_id = replica_id
        self.applied: Set[EventId] = set()
        self.clock = 0

    def apply(self, info: UpdateRecord):
        self.applied.add(info.event.id)
        self.clock = max(self.clock, info.ts)


def simulate(workload: Workload, sim: SimConfig) -> SimulationResult:
    """
    在多副本存储上执行工作负载

    每个会话绑定一个副本；更新先在本地应用，再按投递模式传播，
    查询读取本地状态。结束时投递全部在途更新，final_states 是收敛后的状态。

    Args:
        workload: 工作负载
        sim: 模拟配置

    Returns:
        SimulationResult（历史、ground truth、各副本最终状态）
    """
    spec = get_spec(workload.type_name)
    rng = random.Random(sim.seed)
    session_count = len(workload.sessions)
    replica_count = sim.replica_count or session_count
    replicas = [Replica(r) for r in range(replica_count)]
    home = {s: replicas[s % replica_count] for s in range(session_count)}
    max_in_flight = 0 if sim.delivery is DeliveryMode.SYNC else sim.max_in_flight

    updates: Dict[EventId, UpdateRecord] = {}
    delivered: Dict[EventId, FrozenSet[EventId]] = {}
    order: List[EventId] = []
    events: List[Event] = []
    pending: List[Tuple[EventId, int]] = []  # (更新, 目标副本)，按产生顺序
    cursor = [0] * session_count

    def deliverable() -> List[Tuple[EventId, int]]:
        if sim.delivery is not DeliveryMode.CAUSAL:
            return list(pending)
        return [(u, r) for u, r in pending if updates[u].observed <= replicas[r].applied]

    def deliver(message: Tuple[EventId, int]):
        pending.remove(message)
        uid, r = message
        replicas[r].apply(updates[uid])

    def in_flight() -> int:
        return len({u for u, _ in pending})

    def drain_oldest():
        oldest = pending[0][0]
        for message in [m for m in pending if m[0] == oldest]:
            deliver(message)

    while any(cursor[s] < len(workload.sessions[s]) for s in range(session_count)):
        while pending and rng.random() < DELIVERY_PROBABILITY:
            candidates = deliverable()
            if not candidates:
                break
            deliver(rng.choice(candidates))

        active = [s for s in range(session_count) if cursor[s] < len(workload.sessions[s])]
        s = rng.choice(active)
        op = workload.sessions[s][cursor[s]]
        replica = home[s]
        eid = (s, cursor[s])
        cursor[s] += 1
        observed = frozenset(replica.applied)

        if spec.methods[op.method].kind is OpKind.UPDATE:
            event = Event(s, eid[1], op.method, op.args, None)
            replica.clock += 1
            info = UpdateRecord(event, replica.clock, observed)
            updates[eid] = info
            replica.apply(info)
            pending.extend((eid, r.replica_id) for r in replicas if r is not replica)
        else:
            state = resolve_state(spec, sim.resolution, replica.applied, updates)
            event = Event(s, eid[1], op.method, op.args, read(spec, state, Event(s, eid[1], op.method, op.args)))

        events.append(event)
        delivered[eid] = observed
        order.append(eid)

        while in_flight() > max_in_flight:
            drain_oldest()

    while pending:
        drain_oldest()

    final_states = {
        r.replica_id: resolve_state(spec, sim.resolution, r.applied, updates) for r in replicas
    }
    truth = GroundTruth(
        delivered=delivered,
        order=tuple(order),
        timestamps={uid: info.ts for uid, info in updates.items()},
        resolution=sim.resolution
    )
    return SimulationResult(History(events), truth, final_states)


def _ground_truth_vis(h: History, gt: GroundTruth) -> Dict[EventId, Set[EventId]]:
    vis: Dict[EventId, Set[EventId]] = {}
    queries: List[EventId] = []
    for eid in gt.order:
        event = h.event(eid)
        seen = set(gt.delivered[eid])
        ids = h.sessions[event.session]
        seen.update(ids[:ids.index(eid)])
        for q in queries:
            if vis[q] <= seen:
                seen.add(q)
        vis[eid] = seen
        if classify_any(event.method) is OpKind.QUERY:
            queries.append(eid)
    return vis


def _resolution_edges(h: History, gt: GroundTruth, spec: DataTypeSpec) -> List[Tuple[EventId, EventId]]:
    """并发冲突更新之间由冲突解决策略决定的先后"""
    add_win = gt.resolution is Resolution.ADD_WIN
    update_ids = sorted(gt.timestamps)
    edges = []
    for i, a in enumerate(update_ids):
        for b in update_ids[i + 1:]:
            ea, eb = h.event(a), h.event(b)
            if spec.element_of(ea) != spec.element_of(eb):
                continue
            if a in gt.delivered[b] or b in gt.delivered[a]:
                continue
            ka, kb = (gt.timestamps[a], a[0], a[1]), (gt.timestamps[b], b[0], b[1])
            first, second = (a, b) if ka < kb else (b, a)
            methods = {ea.method: a, eb.method: b}
            if ea.method == eb.method:
                if ea.method in ("put", "insert"):
                    edges.append((first, second))
                continue
            if spec.name == "set":
                edges.append((methods["remove"], methods["add"]) if add_win else (methods["add"], methods["remove"]))
            elif spec.name == "map":
                edges.append((methods["delete"], methods["put"]) if add_win else (methods["put"], methods["delete"]))
            elif spec.name == "pqueue":
                insert, inc = methods["insert"], methods["inc"]
                observed_insert = any(h.event(u).method == "insert" for u in gt.delivered[inc])
                if add_win or observed_insert:
                    edges.append((insert, inc))
                else:
                    edges.append((inc, insert))
    return edges


def ground_truth_execution(h: History, gt: GroundTruth, spec: Optional[DataTypeSpec] = None) -> PartialExecution:
    """
    由 ground truth 构造完整的抽象执行

    vis 为执行时已应用的更新、会话前驱，以及可见集已被包含的更早查询；
    lin 是 vis ∪ so 加上冲突解决边（不成环时）的拓扑序，并列时按 (session, index)。

    Raises:
        DomainError: ground truth 与历史不一致
    """
    if set(gt.order) != {e.id for e in h} or set(gt.delivered) != set(gt.order):
        raise DomainError("ground truth 与历史的事件不一致")
    for eid, seen in gt.delivered.items():
        for u in seen:
            if u not in h or classify_any(h.event(u).method) is not OpKind.UPDATE:
                raise DomainError(f"{eid} 的已应用集合包含非更新事件 {u}")

    vis = _ground_truth_vis(h, gt)
    graph = nx.DiGraph()
    graph.add_nodes_from(e.id for e in h)
    graph.add_edges_from((x, y) for y, seen in vis.items() for x in seen)
    graph.add_edges_from(h.so_pairs())
    if not nx.is_directed_acyclic_graph(graph):
        raise DomainError("ground truth 的可见关系与会话序成环")

    if spec is not None and gt.resolution is not None:
        for u, v in _resolution_edges(h, gt, spec):
            if nx.has_path(graph, v, u):
                logger.debug(f"⏭️ 冲突解决边 {u} → {v} 会成环，跳过")
                continue
            graph.add_edge(u, v)

    lin = list(nx.lexicographical_topological_sort(graph, key=lambda eid: eid))
    pairs = [(x, y) for y, seen in vis.items() for x in seen]
    return PartialExecution.from_ids(h, lin, pairs)


def write_truth(path: Union[str, Path], gt: GroundTruth) -> Path:
    path = Path(path)
    path.write_text(json.dumps(gt.to_json(), separators=(",", ":")) + "\n", encoding="utf-8")
    return path


def read_truth(path: Union[str, Path]) -> GroundTruth:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DomainError(f"无法读取 ground truth {path}: {e}") from e
    return GroundTruth.from_json(data)


def simulate_corpus(
    type_name: str,
    sim: SimConfig,
    count: int,
    seed: int = 0,
    workload: Optional[WorkloadConfig] = None
) -> Iterator[SimulationResult]:
    """
    连续生成 count 条模拟历史

    第 i 条历史的工作负载种子和模拟种子都由 seed 派生，整批可复现。
    """
    base = workload or WorkloadConfig(type_name=type_name)
    seeds = random.Random(seed)
    for _ in range(count):
        run_seed = seeds.getrandbits(32)
        cfg = WorkloadConfig(
            type_name=type_name,
            op_count=base.op_count,
            session_count=base.session_count,
            arg_range=base.arg_range,
            mix=base.mix,
            seed=run_seed
        )
        run = SimConfig(
            replica_count=sim.replica_count,
            delivery=sim.delivery,
            max_in_flight=sim.max_in_flight,
            resolution=sim.resolution,
            seed=run_seed ^ 0x5F3759DF
        )
        yield simulate(generate_workload(cfg), run)
