"""
并行搜索测试（线程后端为主，进程后端只跑一个慢测试）
"""
from collections import deque

import pytest

from src.datatypes import PQUEUE, SET
from src.errors import DomainError
from src.parallel import Coordinator, SearchFlag, _take_tail_half, run_parallel, seed_frontier
from src.pruning import Pruner
from src.search import Verdict, check
from src.visibility import Level, full_execution_satisfies
from tests.oracle import history, random_corpus


def _violated_size_history():
    return history(
        [("add", (1,), None), ("add", (2,), None)],
        [("add", (3,), None)],
        [("size", (), 5)],
    )


def test_single_worker_is_sequential(size_history):
    sequential = check(size_history, SET, Level.CAUSAL, budget=None)
    parallel = run_parallel(size_history, SET, Level.CAUSAL, 1, budget=None, backend="thread")
    assert parallel.verdict is sequential.verdict
    assert parallel.stats == sequential.stats


def test_rejects_bad_arguments(size_history):
    with pytest.raises(DomainError):
        run_parallel(size_history, SET, Level.WEAK, 0)
    with pytest.raises(DomainError):
        run_parallel(size_history, SET, Level.WEAK, 2, backend="gpu")


@pytest.mark.parametrize("workers", [2, 4])
def test_no_states_lost(workers):
    h = _violated_size_history()
    sequential = check(h, SET, Level.WEAK, budget=None)
    parallel = run_parallel(h, SET, Level.WEAK, workers, budget=None, self_check_interval=5, backend="thread")
    assert sequential.verdict is Verdict.VIOLATED
    assert parallel.verdict is Verdict.VIOLATED
    assert parallel.stats.states_explored == sequential.stats.states_explored


@pytest.mark.parametrize("workers", [2, 4])
def test_verdicts_match_sequential(workers):
    for spec in (SET, PQUEUE):
        for h in random_corpus(spec, 10, max_events=5, seed=7):
            for level in (Level.WEAK, Level.BASIC, Level.CAUSAL, Level.COMPLETE):
                pruner = Pruner(h, spec, level)
                expected = check(h, spec, level, pruner=pruner, budget=None).verdict
                result = run_parallel(h, spec, level, workers, pruner=pruner, budget=None,
                                      self_check_interval=7, backend="thread")
                assert result.verdict is expected, (h.events, level)
                if result.verdict is Verdict.SATISFIED:
                    assert full_execution_satisfies(level, result.certificate, h)


def test_frontier_short_circuits_on_certificate():
    frontier = seed_frontier(history([("add", (1,), None)]), SET, Level.WEAK, 4)
    assert frontier.verdict is Verdict.SATISFIED
    assert frontier.certificate is not None
    assert frontier.states == []


def test_frontier_short_circuits_on_exhaustion():
    frontier = seed_frontier(history([("contains", (1,), True)]), SET, Level.WEAK, 4)
    assert frontier.verdict is Verdict.VIOLATED


def test_frontier_reaches_target_size():
    frontier = seed_frontier(_violated_size_history(), SET, Level.WEAK, 2)
    assert frontier.verdict is None
    assert len(frontier.states) >= 8


def test_parallel_budget_exceeded():
    h = _violated_size_history()
    result = run_parallel(h, SET, Level.WEAK, 2, budget=40, self_check_interval=5, backend="thread")
    assert result.verdict is Verdict.BUDGET_EXCEEDED
    assert result.certificate is None


def test_take_tail_half():
    dq = deque([1, 2, 3, 4, 5])
    assert _take_tail_half(dq) == [4, 5]
    assert list(dq) == [1, 2, 3]


def test_coordinator_share_needs_idle_worker():
    coordinator = Coordinator(2, "thread")
    assert not coordinator.share(["state"])
    coordinator.go_idle()
    assert coordinator.idle_count == 1
    assert coordinator.share(["state"])
    assert coordinator.idle_count == 0
    assert coordinator.take(0.1) == ["state"]
    assert coordinator.take(0.01) is None


def test_coordinator_exhausted_when_all_idle():
    coordinator = Coordinator(2, "thread")
    coordinator.go_idle()
    assert coordinator.running
    coordinator.go_idle()
    assert coordinator.flag is SearchFlag.EXHAUSTED


def test_coordinator_first_result_wins():
    coordinator = Coordinator(2, "thread", budget=10)
    coordinator.report_found()
    coordinator.add_explored(20)
    assert coordinator.flag is SearchFlag.FOUND
    assert coordinator.explored == 20
    assert not coordinator.share(["state"])


def test_coordinator_budget():
    coordinator = Coordinator(2, "thread", budget=10)
    coordinator.add_explored(6)
    assert coordinator.running
    coordinator.add_explored(4)
    assert coordinator.flag is SearchFlag.BUDGET_EXCEEDED


@pytest.mark.slow
def test_process_backend():
    h = _violated_size_history()
    sequential = check(h, SET, Level.WEAK, budget=None)
    parallel = run_parallel(h, SET, Level.WEAK, 2, budget=None, self_check_interval=5, backend="process")
    assert parallel.verdict is Verdict.VIOLATED
    assert parallel.stats.states_explored == sequential.stats.states_explored


@pytest.mark.parametrize("workers", [1, 2, 4])
def test_refuting_pruner_skips_search(workers):
    h = history(
        [("add", (1,), None)] * 5,
        [("add", (2,), None)] * 5,
        [("add", (3,), None)] * 5 + [("contains", (9,), True)],
    )
    pruner = Pruner(h, SET, Level.WEAK)
    result = run_parallel(h, SET, Level.WEAK, workers, pruner=pruner, budget=1000, backend="thread")
    assert result.verdict is Verdict.VIOLATED
    assert result.stats.states_explored == 0


@pytest.mark.slow
def test_verdicts_match_for_every_worker_count(any_spec):
    for i, h in enumerate(random_corpus(any_spec, 500, max_events=6, seed=11)):
        level = list(Level)[i % len(Level)]
        pruner = Pruner(h, any_spec, level)
        expected = check(h, any_spec, level, pruner=pruner, budget=None).verdict
        for workers in (1, 2, 4, 8):
            result = run_parallel(h, any_spec, level, workers, pruner=pruner, budget=None,
                                  self_check_interval=7, backend="thread")
            assert result.verdict is expected, (h.events, level, workers)
