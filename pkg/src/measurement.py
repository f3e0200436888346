"""
一致性度量
按轮次在语料上逐级检查，统计每个级别的违反数，
给出数据类型达到的最强一致性级别，以及剪枝率、并行加速比统计
"""
import logging
import multiprocessing as mp
import random
import time
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from terminaltables import AsciiTable

from src.checker import CheckOptions, check_history
from src.config import PRUNING_BUCKETS, ROUND_SIZE, STABLE_ROUNDS
from src.datatypes import DataTypeSpec
from src.history import History
from src.search import Verdict, check
from src.pruning import Pruner
from src.simulator import SimConfig, simulate_corpus
from src.visibility import STRONGEST_FIRST, Level

logger = logging.getLogger(__name__)

NamedHistory = Tuple[str, History]
NOT_CHECKED = "/"


@dataclass
class HistoryMeasurement:
    """一条历史在各级别上的结论"""
    name: str
    verdicts: Dict[Level, Verdict] = field(default_factory=dict)
    implied: List[Level] = field(default_factory=list)
    states: Dict[Level, int] = field(default_factory=dict)

    @property
    def strongest(self) -> Optional[Level]:
        """满足的最强级别；没有任何级别满足时为 None"""
        for level in STRONGEST_FIRST:
            if self.verdicts.get(level) is Verdict.SATISFIED:
                return level
        return None

    @property
    def budget_exceeded(self) -> bool:
        return any(v is Verdict.BUDGET_EXCEEDED for v in self.verdicts.values())


def measure_history(
    h: History,
    spec: DataTypeSpec,
    options: Optional[CheckOptions] = None,
    name: str = "",
    exhaustive: bool = False
) -> HistoryMeasurement:
    """
    从 Complete 开始逐级向下检查

    某一级满足后更弱的级别直接记为满足（implied）；
    exhaustive=True 时六个级别全部实际检查。
    """
    options = options or CheckOptions()
    result = HistoryMeasurement(name)
    for level in STRONGEST_FIRST:
        if level in result.implied:
            continue
        outcome = check_history(h, spec, level, options)
        result.verdicts[level] = outcome.verdict
        result.states[level] = outcome.stats.states_explored
        if outcome.verdict is Verdict.SATISFIED and not exhaustive:
            for weaker in STRONGEST_FIRST:
                if weaker < level:
                    result.verdicts[weaker] = Verdict.SATISFIED
                    result.implied.append(weaker)
    return result


@dataclass
class MeasurementReport:
    """
    语料度量结果

    violations 只统计有结论的历史；超过状态上限的历史单独列出，
    不参与级别判定。连 Weak 都不满足的历史记为 anomalies（数据类型实现错误）。
    """
    type_name: str
    violations: Dict[Level, int] = field(default_factory=lambda: {level: 0 for level in Level})
    histories_checked: int = 0
    budget_exceeded: List[str] = field(default_factory=list)
    anomalies: List[str] = field(default_factory=list)
    rounds: List[Optional[Level]] = field(default_factory=list)
    elapsed: float = 0.0

    def add(self, m: HistoryMeasurement):
        if m.budget_exceeded:
            self.budget_exceeded.append(m.name)
            return
        self.histories_checked += 1
        strongest = m.strongest
        if strongest is None:
            self.anomalies.append(m.name)
        for level in Level:
            if strongest is None or strongest < level:
                self.violations[level] += 1

    @property
    def strongest_clean_level(self) -> Optional[Level]:
        """违反数为 0 的最强级别"""
        if self.histories_checked == 0:
            return None
        for level in STRONGEST_FIRST:
            if self.violations[level] == 0:
                return level
        return None

    def cells(self) -> Dict[Level, Any]:
        """表格单元：某级别违反数为 0 后，更弱的级别显示 "/" """
        cells: Dict[Level, Any] = {}
        clean = False
        for level in STRONGEST_FIRST:
            cells[level] = NOT_CHECKED if clean else self.violations[level]
            clean = clean or self.violations[level] == 0
        return cells

    def to_json(self, timing: bool = False) -> Dict[str, Any]:
        strongest = self.strongest_clean_level
        data = {
            "type": self.type_name,
            "histories": self.histories_checked,
            "violations": {level.abbr: value for level, value in self.cells().items()},
            "strongest": strongest.label if strongest is not None else None,
            "rounds": [level.label if level is not None else None for level in self.rounds],
            "budget_exceeded": list(self.budget_exceeded),
            "anomalies": list(self.anomalies)
        }
        if timing:
            data["time"] = round(self.elapsed, 3)
        return data

    def table(self) -> str:
        cells = self.cells()
        header = [level.abbr for level in STRONGEST_FIRST] + ["#hist", "time"]
        row = [str(cells[level]) for level in STRONGEST_FIRST] + [
            str(self.histories_checked),
            f"{self.elapsed:.1f}s"
        ]
        table = AsciiTable([header, row], title=f" {self.type_name} ")
        return table.table


def _measure_one(job: Tuple[NamedHistory, DataTypeSpec, CheckOptions]) -> HistoryMeasurement:
    (name, h), spec, options = job
    return measure_history(h, spec, options, name=name)


def rounds_from_corpus(corpus: Sequence[NamedHistory], round_size: int = ROUND_SIZE) -> Iterator[List[NamedHistory]]:
    """把语料切成每轮 round_size 条"""
    for start in range(0, len(corpus), round_size):
        yield list(corpus[start:start + round_size])


def rounds_from_simulator(
    type_name: str,
    sim: SimConfig,
    round_size: int = ROUND_SIZE,
    seed: int = 0,
    max_rounds: Optional[int] = None
) -> Iterator[List[NamedHistory]]:
    """每轮重新模拟一批历史"""
    seeds = random.Random(seed)
    index = 0
    while max_rounds is None or index < max_rounds:
        batch = simulate_corpus(type_name, sim, round_size, seed=seeds.getrandbits(32))
        yield [(f"r{index:03d}-{i:05d}", run.history) for i, run in enumerate(batch)]
        index += 1


def measure_corpus(
    rounds: Iterable[Sequence[NamedHistory]],
    spec: DataTypeSpec,
    options: Optional[CheckOptions] = None,
    stable_rounds: int = STABLE_ROUNDS,
    processes: int = 1
) -> MeasurementReport:
    """
    按轮次度量

    每轮的结果是该轮所有历史中最弱的"最强满足级别"；
    连续 stable_rounds 轮结果不变，或轮次用完时停止。

    Args:
        rounds: 每轮的 (名称, History) 列表
        spec: 数据类型
        options: 检查选项
        stable_rounds: 结果需要保持不变的轮数
        processes: 同时度量的历史数（进程池大小）

    Returns:
        MeasurementReport
    """
    options = options or CheckOptions()
    report = MeasurementReport(spec.name)
    started = time.perf_counter()
    pool = mp.Pool(processes) if processes > 1 else None

    try:
        for index, batch in enumerate(rounds):
            jobs = [(item, spec, options) for item in batch]
            results = pool.map(_measure_one, jobs) if pool else [_measure_one(job) for job in jobs]

            round_report = MeasurementReport(spec.name)
            for m in results:
                report.add(m)
                round_report.add(m)
            level = round_report.strongest_clean_level
            report.rounds.append(level)
            logger.info(
                f"📊 第 {index + 1} 轮: {len(batch)} 条历史，"
                f"最强无违反级别 {level.label if level is not None else '-'}"
            )

            recent = report.rounds[-stable_rounds:]
            if len(recent) == stable_rounds and len(set(recent)) == 1:
                logger.info(f"✅ 连续 {stable_rounds} 轮结果不变，停止度量")
                break
    finally:
        if pool is not None:
            pool.close()
            pool.join()

    report.elapsed = time.perf_counter() - started
    if report.budget_exceeded:
        logger.warning(f"⚠️ {len(report.budget_exceeded)} 条历史超过状态上限，未计入级别判定")
    if report.anomalies:
        logger.warning(f"⚠️ {len(report.anomalies)} 条历史连 weak 都不满足，数据类型实现可能有误")
    return report


def bucket_of(unpruned: int) -> str:
    """按无剪枝探索状态数分档"""
    for name, lo, hi in PRUNING_BUCKETS:
        if unpruned >= lo and (hi is None or unpruned <= hi):
            return name
    return PRUNING_BUCKETS[0][0]


@dataclass
class PruningRatioReport:
    level: Level
    ratios: Dict[str, List[float]] = field(default_factory=lambda: {name: [] for name, _, _ in PRUNING_BUCKETS})
    skipped: List[str] = field(default_factory=list)

    def median(self, bucket: str) -> Optional[float]:
        values = self.ratios[bucket]
        return float(np.median(values)) if values else None

    def to_json(self) -> Dict[str, Any]:
        return {
            "level": self.level.label,
            "buckets": {
                name: {"count": len(self.ratios[name]), "median": self.median(name)}
                for name, _, _ in PRUNING_BUCKETS
            },
            "skipped": list(self.skipped)
        }

    def table(self) -> str:
        rows = [["bucket", "range", "#hist", "median ratio"]]
        for name, lo, hi in PRUNING_BUCKETS:
            median = self.median(name)
            rows.append([
                name,
                f"[{lo}, {hi if hi is not None else '∞'}]",
                str(len(self.ratios[name])),
                f"{median:.3f}" if median is not None else "-"
            ])
        return AsciiTable(rows, title=f" pruning ratio ({self.level.label}) ").table


def pruning_ratio_report(
    corpus: Iterable[NamedHistory],
    spec: DataTypeSpec,
    level: Level,
    options: Optional[CheckOptions] = None
) -> PruningRatioReport:
    """
    剪枝率：有剪枝时的探索状态数 / 无剪枝时的探索状态数

    只用顺序搜索；任一次超过状态上限的历史不计入。
    """
    options = options or CheckOptions()
    report = PruningRatioReport(level)
    for name, h in corpus:
        unpruned = check(h, spec, level, None, options.budget)
        pruner = Pruner(h, spec, level, options.cluster_size_cap, options.cluster_budget)
        pruned = check(h, spec, level, pruner, options.budget)
        if Verdict.BUDGET_EXCEEDED in (unpruned.verdict, pruned.verdict):
            report.skipped.append(name)
            continue
        explored = unpruned.stats.states_explored
        report.ratios[bucket_of(explored)].append(pruned.stats.states_explored / explored)
    return report


@dataclass
class SpeedupReport:
    level: Level
    wall_time: Dict[int, float] = field(default_factory=dict)

    def speedup(self, workers: int) -> Optional[float]:
        base = self.wall_time.get(min(self.wall_time)) if self.wall_time else None
        current = self.wall_time.get(workers)
        if not base or current is None or current == 0:
            return None
        return base / current

    def to_json(self) -> Dict[str, Any]:
        return {
            "level": self.level.label,
            "workers": {
                str(k): {"time": round(t, 3), "speedup": self.speedup(k)}
                for k, t in sorted(self.wall_time.items())
            }
        }

    def table(self) -> str:
        rows = [["workers", "time", "speedup"]]
        for k, t in sorted(self.wall_time.items()):
            s = self.speedup(k)
            rows.append([str(k), f"{t:.2f}s", f"{s:.2f}x" if s is not None else "-"])
        return AsciiTable(rows, title=f" speedup ({self.level.label}) ").table


def speedup_report(
    corpus: Sequence[NamedHistory],
    spec: DataTypeSpec,
    level: Level,
    worker_counts: Sequence[int] = (1, 2, 4, 8),
    options: Optional[CheckOptions] = None
) -> SpeedupReport:
    """每个 worker 数下检查整个语料的总耗时"""
    options = options or CheckOptions()
    report = SpeedupReport(level)
    for workers in worker_counts:
        run_options = replace(options, workers=workers)
        started = time.perf_counter()
        for _, h in corpus:
            check_history(h, spec, level, run_options)
        report.wall_time[workers] = time.perf_counter() - started
        logger.info(f"⏱️ {workers} 个 worker: {report.wall_time[workers]:.2f}s")
    return report
