"""
并行搜索
先用广度优先生成初始前沿，再把前沿分给 k 个 worker 做深度优先搜索；
空闲 worker 通过协调者从忙碌 worker 的队尾接过一半状态
"""
import enum
import logging
import multiprocessing as mp
import queue
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional

from src.config import (
    DEFAULT_BUDGET,
    FRONTIER_FACTOR,
    IDLE_POLL_SECONDS,
    PARALLEL_BACKEND,
    SELF_CHECK_INTERVAL,
    SELF_CHECK_JITTER,
)
from src.datatypes import DataTypeSpec
from src.errors import DomainError
from src.history import History
from src.search import CheckResult, Searcher, SearchState, SearchStats, Verdict
from src.visibility import Level, PartialExecution

logger = logging.getLogger(__name__)

BACKENDS = ("process", "thread")


class SearchFlag(enum.IntEnum):
    RUNNING = 0
    FOUND = 1
    EXHAUSTED = 2
    BUDGET_EXCEEDED = 3


_FLAG_VERDICT = {
    SearchFlag.FOUND: Verdict.SATISFIED,
    SearchFlag.EXHAUSTED: Verdict.VIOLATED,
    SearchFlag.BUDGET_EXCEEDED: Verdict.BUDGET_EXCEEDED,
}


class _Cell:
    """线程后端下代替 mp.Value 的计数器"""

    def __init__(self, value: int = 0):
        self.value = value


@dataclass
class Frontier:
    """初始前沿；搜索在生成前沿时就结束的话 verdict 不为空"""
    states: List[SearchState] = field(default_factory=list)
    stats: SearchStats = field(default_factory=SearchStats)
    verdict: Optional[Verdict] = None
    certificate: Optional[PartialExecution] = None


@dataclass
class WorkerReport:
    worker_id: int
    stats: SearchStats
    certificate: Optional[PartialExecution] = None


class Coordinator:
    """
    协调者：空闲计数、结果标志、转交队列

    所有状态修改都在同一把锁内完成。转交的状态只经由 handoff 队列传递，
    worker 之间不共享可变数据。
    """

    def __init__(self, workers: int, backend: str, manager=None, budget: Optional[int] = None):
        self.workers = workers
        self.budget = budget
        if backend == "process":
            self._lock = mp.Lock()
            self._idle = mp.Value("i", 0, lock=False)
            self._flag = mp.Value("i", SearchFlag.RUNNING, lock=False)
            self._explored = mp.Value("q", 0, lock=False)
            self._handoff = manager.Queue()
            self.results = manager.Queue()
        else:
            self._lock = threading.Lock()
            self._idle = _Cell()
            self._flag = _Cell(SearchFlag.RUNNING)
            self._explored = _Cell()
            self._handoff = queue.Queue()
            self.results = queue.Queue()

    @property
    def flag(self) -> SearchFlag:
        return SearchFlag(self._flag.value)

    @property
    def running(self) -> bool:
        return self._flag.value == SearchFlag.RUNNING

    @property
    def idle_count(self) -> int:
        return self._idle.value

    @property
    def explored(self) -> int:
        return self._explored.value

    def report_found(self):
        with self._lock:
            if self._flag.value == SearchFlag.RUNNING:
                self._flag.value = SearchFlag.FOUND

    def add_explored(self, count: int):
        """累计探索状态数；超过上限时置 BUDGET_EXCEEDED"""
        with self._lock:
            self._explored.value += count
            if (self.budget is not None and self._explored.value >= self.budget
                    and self._flag.value == SearchFlag.RUNNING):
                self._flag.value = SearchFlag.BUDGET_EXCEEDED

    def share(self, states: List[SearchState]) -> bool:
        """
        把一批状态交给一个空闲 worker

        Returns:
            是否被接收；没有空闲 worker 或搜索已结束时返回 False，调用方保留这些状态
        """
        with self._lock:
            if self._flag.value != SearchFlag.RUNNING or self._idle.value == 0:
                return False
            self._idle.value -= 1
            self._handoff.put(states)
            return True

    def go_idle(self):
        """所有 worker 都空闲且没有待转交的状态时搜索空间耗尽"""
        with self._lock:
            self._idle.value += 1
            if self._idle.value == self.workers and self._flag.value == SearchFlag.RUNNING:
                self._flag.value = SearchFlag.EXHAUSTED

    def take(self, timeout: float) -> Optional[List[SearchState]]:
        try:
            return self._handoff.get(timeout=timeout)
        except queue.Empty:
            return None


def _jittered(interval: int, rng: random.Random) -> int:
    spread = int(interval * SELF_CHECK_JITTER)
    return max(1, interval + rng.randint(-spread, spread))


def _take_tail_half(dq: deque) -> List[SearchState]:
    batch = [dq.pop() for _ in range(len(dq) // 2)]
    batch.reverse()
    return batch


def _worker_main(
    worker_id: int,
    states: List[SearchState],
    h: History,
    spec: DataTypeSpec,
    level: Level,
    pruner,
    interval: int,
    seed: int,
    coordinator: Coordinator
):
    """worker 主循环：本地深度优先，定期自检协调者"""
    searcher = Searcher(h, spec, level, pruner)
    stats = SearchStats()
    rng = random.Random(seed * 1009 + worker_id)
    dq = deque(states)
    certificate = None
    next_check = _jittered(interval, rng)
    since_check = 0
    unreported = 0
    finished = False

    try:
        while not finished:
            while dq:
                state = dq.popleft()
                stats.states_explored += 1
                since_check += 1
                unreported += 1
                if searcher.newest_valid(state):
                    if searcher.is_complete(state):
                        certificate = state.execution
                        coordinator.report_found()
                        finished = True
                        break
                    dq.extendleft(reversed(searcher.expand(state, stats)))
                    if len(dq) > stats.max_deque_depth:
                        stats.max_deque_depth = len(dq)

                if since_check >= next_check:
                    since_check = 0
                    next_check = _jittered(interval, rng)
                    coordinator.add_explored(unreported)
                    unreported = 0
                    if not coordinator.running:
                        finished = True
                        break
                    if coordinator.idle_count > 0 and len(dq) > 1:
                        batch = _take_tail_half(dq)
                        if not coordinator.share(batch):
                            dq.extend(batch)
            if finished:
                break

            coordinator.add_explored(unreported)
            unreported = 0
            coordinator.go_idle()
            batch = None
            while coordinator.running:
                batch = coordinator.take(IDLE_POLL_SECONDS)
                if batch is not None:
                    break
            if batch is None:
                break
            dq.extend(batch)
    finally:
        if unreported:
            coordinator.add_explored(unreported)
        coordinator.results.put(WorkerReport(worker_id, stats, certificate))


def seed_frontier(
    h: History,
    spec: DataTypeSpec,
    level: Level,
    workers: int,
    pruner=None,
    budget: Optional[int] = DEFAULT_BUDGET
) -> Frontier:
    """
    广度优先扩展，直到队列中至少有 FRONTIER_FACTOR × workers 个状态

    剪枝器已判定不可满足、生成前沿时找到证书、搜索空间耗尽或超过上限，都直接给出结论。
    """
    searcher = Searcher(h, spec, level, pruner)
    stats = SearchStats()
    if searcher.refuted():
        return Frontier(stats=stats, verdict=Verdict.VIOLATED)
    pending = deque([searcher.root()])
    target = FRONTIER_FACTOR * workers

    while pending and len(pending) < target:
        if budget is not None and stats.states_explored >= budget:
            return Frontier(stats=stats, verdict=Verdict.BUDGET_EXCEEDED)
        state = pending.popleft()
        stats.states_explored += 1
        if not searcher.newest_valid(state):
            continue
        if searcher.is_complete(state):
            return Frontier(stats=stats, verdict=Verdict.SATISFIED, certificate=state.execution)
        pending.extend(searcher.expand(state, stats))
        stats.max_deque_depth = max(stats.max_deque_depth, len(pending))

    if not pending:
        return Frontier(stats=stats, verdict=Verdict.VIOLATED)
    return Frontier(states=list(pending), stats=stats)


def _collect(coordinator: Coordinator, workers: int, handles) -> List[WorkerReport]:
    reports = []
    while len(reports) < workers:
        try:
            reports.append(coordinator.results.get(timeout=0.5))
        except queue.Empty:
            if not any(handle.is_alive() for handle in handles):
                # worker 全部退出后再取一次，避免和最后一次 put 竞争
                try:
                    reports.append(coordinator.results.get(timeout=0.5))
                    continue
                except queue.Empty:
                    raise RuntimeError(f"并行搜索 worker 异常退出（收到 {len(reports)}/{workers} 份报告）")
    return reports


def run_parallel(
    h: History,
    spec: DataTypeSpec,
    level: Level,
    workers: int,
    pruner=None,
    budget: Optional[int] = DEFAULT_BUDGET,
    self_check_interval: int = SELF_CHECK_INTERVAL,
    backend: str = PARALLEL_BACKEND,
    seed: int = 0
) -> CheckResult:
    """
    用 k 个 worker 并行判断历史是否满足一致性级别

    Args:
        h: 历史
        spec: 数据类型
        level: 一致性级别
        workers: worker 数量 k；k=1 时等价于顺序搜索
        pruner: 剪枝器（只读，每个 worker 一份）
        budget: 所有 worker 合计的探索状态上限
        self_check_interval: 两次自检之间的状态数（带 ±10% 扰动）
        backend: "process" 或 "thread"
        seed: 扰动随机种子

    Returns:
        CheckResult；统计为前沿生成与全部 worker 之和
    """
    if workers < 1:
        raise DomainError(f"worker 数量必须为正数: {workers}")
    if backend not in BACKENDS:
        raise DomainError(f"未知的并行后端: {backend}（可选: {', '.join(BACKENDS)}）")
    if workers == 1:
        return Searcher(h, spec, level, pruner).run(budget)

    frontier = seed_frontier(h, spec, level, workers, pruner, budget)
    if frontier.verdict is not None:
        return CheckResult(frontier.verdict, frontier.stats, frontier.certificate)

    remaining = None if budget is None else budget - frontier.stats.states_explored
    shares = [frontier.states[i::workers] for i in range(workers)]
    logger.info(f"🚀 {level.label}: 初始前沿 {len(frontier.states)} 个状态，启动 {workers} 个 worker（{backend}）")
    started = time.perf_counter()

    if backend == "process":
        with mp.Manager() as manager:
            coordinator = Coordinator(workers, backend, manager, remaining)
            handles = [
                mp.Process(
                    target=_worker_main,
                    args=(i, shares[i], h, spec, level, pruner, self_check_interval, seed, coordinator),
                    daemon=True
                )
                for i in range(workers)
            ]
            for handle in handles:
                handle.start()
            reports = _collect(coordinator, workers, handles)
            for handle in handles:
                handle.join()
            flag = coordinator.flag
    else:
        coordinator = Coordinator(workers, backend, budget=remaining)
        handles = [
            threading.Thread(
                target=_worker_main,
                args=(i, shares[i], h, spec, level, pruner, self_check_interval, seed, coordinator),
                daemon=True
            )
            for i in range(workers)
        ]
        for handle in handles:
            handle.start()
        reports = _collect(coordinator, workers, handles)
        for handle in handles:
            handle.join()
        flag = coordinator.flag

    stats = frontier.stats
    certificate = None
    for report in sorted(reports, key=lambda r: r.worker_id):
        stats = stats.merge(report.stats)
        if certificate is None and report.certificate is not None:
            certificate = report.certificate

    verdict = _FLAG_VERDICT[flag]
    logger.info(
        f"✅ {level.label}: {verdict.value}，{workers} 个 worker 共探索 {stats.states_explored} 个状态，"
        f"耗时 {time.perf_counter() - started:.2f}s"
    )
    return CheckResult(verdict, stats, certificate if verdict is Verdict.SATISFIED else None)
