"""
多副本模拟器测试
"""
from collections import Counter

import pytest

from src.datatypes import MAP, PQUEUE, SET, OpKind, classify_any, replay
from src.errors import DomainError
from src.history import Event
from src.search import SearchState, Verdict, check, is_valid
from src.simulator import (
    DeliveryMode,
    GroundTruth,
    Resolution,
    SimConfig,
    UpdateRecord,
    WorkloadConfig,
    generate_workload,
    ground_truth_execution,
    read_truth,
    resolve_state,
    simulate,
    simulate_corpus,
    write_truth,
)
from src.visibility import Level, full_execution_satisfies

SMALL = dict(op_count=(5, 7), session_count=(2, 3), arg_range=(0, 2))


def _record(session, index, method, args, ts, observed=()):
    return UpdateRecord(Event(session, index, method, args, None), ts, frozenset(observed))


def _runs(type_name, delivery, count, seed, resolution=Resolution.ADD_WIN, max_in_flight=3):
    workload = WorkloadConfig(type_name=type_name, **SMALL)
    sim = SimConfig(delivery=delivery, max_in_flight=max_in_flight, resolution=resolution)
    return list(simulate_corpus(type_name, sim, count, seed=seed, workload=workload))


def test_workload_is_deterministic():
    cfg = WorkloadConfig(type_name="pqueue", seed=11)
    assert generate_workload(cfg) == generate_workload(cfg)
    assert generate_workload(cfg) != generate_workload(WorkloadConfig(type_name="pqueue", seed=12))


def test_workload_mix_counts():
    workload = generate_workload(WorkloadConfig(type_name="set", op_count=15, session_count=5))
    counts = Counter(op.method for ops in workload.sessions for op in ops)
    assert counts == {"add": 6, "remove": 3, "contains": 3, "size": 3}
    assert [len(ops) for ops in workload.sessions] == [3, 3, 3, 3, 3]


def test_workload_uneven_split():
    workload = generate_workload(WorkloadConfig(type_name="set", op_count=16, session_count=5))
    assert [len(ops) for ops in workload.sessions] == [4, 3, 3, 3, 3]
    counts = Counter(op.method for ops in workload.sessions for op in ops)
    assert counts["add"] == 7


def test_workload_args_in_range():
    workload = generate_workload(WorkloadConfig(type_name="map", arg_range=(2, 3), seed=5))
    assert all(2 <= a <= 3 for ops in workload.sessions for op in ops for a in op.args)


def test_default_mix_is_mostly_updates():
    for name in ("set", "map", "pqueue"):
        assert WorkloadConfig(type_name=name).update_fraction == pytest.approx(0.6)


@pytest.mark.parametrize("kwargs", [
    dict(mix={"add": 0.5, "put": 0.5}),
    dict(mix={"add": 0.5, "remove": 0.2}),
    dict(op_count=2, session_count=3),
    dict(arg_range=(3, 1)),
    dict(type_name="queue"),
])
def test_workload_config_validation(kwargs):
    with pytest.raises(DomainError):
        WorkloadConfig(**{"type_name": "set", **kwargs})


def test_sim_config_validation():
    with pytest.raises(DomainError):
        SimConfig(replica_count=0)
    with pytest.raises(DomainError):
        SimConfig(max_in_flight=-1)


def test_set_add_win_vs_remove_win():
    updates = {
        (0, 0): _record(0, 0, "add", (1,), 1),
        (1, 0): _record(1, 0, "remove", (1,), 1),
    }
    applied = set(updates)
    assert resolve_state(SET, Resolution.ADD_WIN, applied, updates) == {1}
    assert resolve_state(SET, Resolution.REMOVE_WIN, applied, updates) == set()


def test_set_sequential_remove():
    updates = {
        (0, 0): _record(0, 0, "add", (1,), 1),
        (0, 1): _record(0, 1, "remove", (1,), 2, [(0, 0)]),
    }
    for resolution in Resolution:
        assert resolve_state(SET, resolution, set(updates), updates) == set()


def test_map_concurrent_puts_pick_larger_timestamp():
    updates = {
        (0, 0): _record(0, 0, "put", (1, 4), 1),
        (1, 0): _record(1, 0, "put", (1, 7), 1),
    }
    assert resolve_state(MAP, Resolution.ADD_WIN, set(updates), updates) == {1: 7}


def test_map_delete_resolution():
    updates = {
        (0, 0): _record(0, 0, "put", (1, 4), 1),
        (1, 0): _record(1, 0, "delete", (1,), 1),
    }
    assert resolve_state(MAP, Resolution.ADD_WIN, set(updates), updates) == {1: 4}
    assert resolve_state(MAP, Resolution.REMOVE_WIN, set(updates), updates) == {}


def test_pqueue_concurrent_inc():
    updates = {
        (0, 0): _record(0, 0, "insert", (1, 5), 1),
        (1, 0): _record(1, 0, "inc", (1, 2), 1),
    }
    assert resolve_state(PQUEUE, Resolution.ADD_WIN, set(updates), updates) == {1: 7}
    assert resolve_state(PQUEUE, Resolution.REMOVE_WIN, set(updates), updates) == {1: 5}


def test_random_without_in_flight_equals_sync():
    workload = generate_workload(WorkloadConfig(type_name="map", seed=3))
    sync = simulate(workload, SimConfig(delivery=DeliveryMode.SYNC, seed=9))
    random_zero = simulate(workload, SimConfig(delivery=DeliveryMode.RANDOM, max_in_flight=0, seed=9))
    assert sync.history == random_zero.history
    assert sync.truth == random_zero.truth


def test_simulation_is_deterministic():
    first = _runs("set", DeliveryMode.RANDOM, 3, seed=1)
    second = _runs("set", DeliveryMode.RANDOM, 3, seed=1)
    assert [r.history for r in first] == [r.history for r in second]


@pytest.mark.parametrize("delivery", list(DeliveryMode))
def test_replicas_converge(delivery):
    for run in _runs("pqueue", delivery, 10, seed=2):
        states = list(run.final_states.values())
        assert all(state == states[0] for state in states)


def test_updates_have_no_return_value():
    for run in _runs("set", DeliveryMode.RANDOM, 5, seed=3):
        for event in run.history:
            if classify_any(event.method) is OpKind.UPDATE:
                assert event.ret is None


@pytest.mark.parametrize("spec", [SET, MAP, PQUEUE], ids=lambda s: s.name)
def test_sync_final_state_is_sequential_replay(spec):
    for resolution in Resolution:
        for run in _runs(spec.name, DeliveryMode.SYNC, 5, seed=4, resolution=resolution):
            updates = [
                run.history.event(eid) for eid in run.truth.order
                if classify_any(run.history.event(eid).method) is OpKind.UPDATE
            ]
            assert run.final_states[0] == replay(spec, updates)


@pytest.mark.parametrize("spec", [SET, MAP, PQUEUE], ids=lambda s: s.name)
def test_sync_ground_truth_is_complete(spec):
    for run in _runs(spec.name, DeliveryMode.SYNC, 5, seed=5):
        execution = ground_truth_execution(run.history, run.truth, spec)
        assert full_execution_satisfies(Level.COMPLETE, execution, run.history)
        assert is_valid(SearchState(execution), spec, run.history)
        assert check(run.history, spec, Level.COMPLETE).verdict is Verdict.SATISFIED


@pytest.mark.parametrize("spec", [SET, MAP, PQUEUE], ids=lambda s: s.name)
def test_causal_ground_truth_is_causal(spec):
    for run in _runs(spec.name, DeliveryMode.CAUSAL, 10, seed=6):
        execution = ground_truth_execution(run.history, run.truth, spec)
        assert full_execution_satisfies(Level.CAUSAL, execution, run.history)


@pytest.mark.parametrize("spec", [SET, MAP, PQUEUE], ids=lambda s: s.name)
def test_checker_accepts_valid_ground_truth(spec):
    for run in _runs(spec.name, DeliveryMode.CAUSAL, 10, seed=7):
        execution = ground_truth_execution(run.history, run.truth, spec)
        if is_valid(SearchState(execution), spec, run.history):
            assert check(run.history, spec, Level.CAUSAL, budget=None).verdict is Verdict.SATISFIED


def test_ground_truth_rejects_mismatch():
    run = _runs("set", DeliveryMode.RANDOM, 1, seed=8)[0]
    broken = GroundTruth(dict(run.truth.delivered), run.truth.order[:-1], run.truth.timestamps)
    with pytest.raises(DomainError):
        ground_truth_execution(run.history, broken)


def test_truth_file_round_trip(tmp_path):
    run = _runs("pqueue", DeliveryMode.RANDOM, 1, seed=9)[0]
    path = write_truth(tmp_path / "00000.truth", run.truth)
    assert read_truth(path) == run.truth


def test_read_truth_rejects_garbage(tmp_path):
    path = tmp_path / "bad.truth"
    path.write_text('{"order": 3}')
    with pytest.raises(DomainError):
        read_truth(path)
