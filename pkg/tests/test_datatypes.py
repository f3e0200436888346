"""
数据类型顺序语义测试
"""
import pytest

from src.datatypes import (
    MAP,
    PQUEUE,
    SET,
    OpKind,
    classify,
    eval_query,
    get_spec,
    matches_return,
    replay,
    same_value,
)
from src.errors import ContractViolation, DomainError
from src.history import Event


def op(method, *args, ret=None):
    return Event(0, 0, method, tuple(args), ret)


def test_classify():
    assert classify(SET, "add") is OpKind.UPDATE
    assert classify(SET, "size") is OpKind.QUERY
    assert classify(PQUEUE, "inc") is OpKind.UPDATE
    assert classify(PQUEUE, "get_max") is OpKind.QUERY
    assert classify(MAP, "delete") is OpKind.UPDATE
    assert classify(MAP, "get") is OpKind.QUERY


def test_classify_unknown_method():
    with pytest.raises(DomainError):
        classify(SET, "put")


def test_get_spec_unknown_name():
    with pytest.raises(DomainError):
        get_spec("queue")


def test_get_pri_after_inc():
    assert eval_query(PQUEUE, [op("insert", 1, 5), op("inc", 1, 1)], op("get_pri", 1)) == 6


def test_size_after_add_remove():
    assert eval_query(SET, [op("add", 2), op("remove", 2)], op("size")) == 0


def test_contains_on_empty_context():
    assert eval_query(SET, [], op("contains", 3)) is False


def test_contains_last_update_wins():
    context = [op("add", 1), op("remove", 1), op("add", 1)]
    assert eval_query(SET, context, op("contains", 1)) is True


def test_map_get_and_size():
    context = [op("put", 1, 4), op("put", 2, 5), op("put", 1, 3), op("delete", 2)]
    assert eval_query(MAP, context, op("get", 1)) == 3
    assert eval_query(MAP, context, op("get", 2)) is None
    assert eval_query(MAP, context, op("size")) == 1


def test_pqueue_reinsert_is_noop():
    context = [op("insert", 1, 5), op("insert", 1, 9)]
    assert eval_query(PQUEUE, context, op("get_pri", 1)) == 5


def test_pqueue_inc_on_missing_element_is_noop():
    context = [op("inc", 1, 3), op("insert", 1, 5)]
    assert eval_query(PQUEUE, context, op("get_pri", 1)) == 5


def test_get_max_tie_breaks_by_smaller_id():
    context = [op("insert", 3, 4), op("insert", 1, 4), op("insert", 2, 1)]
    assert eval_query(PQUEUE, context, op("get_max")) == (1, 4)


def test_get_max_on_empty_queue():
    assert eval_query(PQUEUE, [], op("get_max")) is None


def test_eval_query_rejects_update():
    with pytest.raises(ContractViolation):
        eval_query(SET, [], op("add", 1))


def test_matches_return():
    assert not matches_return(PQUEUE, [op("insert", 1, 5)], op("get_pri", 1, ret=6))
    assert matches_return(PQUEUE, [op("insert", 1, 5)], op("get_pri", 1, ret=5))


def test_matches_return_is_type_strict():
    # size() ⇒ true 不等于 1
    assert not matches_return(SET, [op("add", 1)], op("size", ret=True))
    assert not matches_return(SET, [], op("contains", 1, ret=0))


def test_same_value():
    assert same_value((1, 2), [1, 2])
    assert not same_value(1, True)
    assert not same_value(None, 0)
    assert same_value(None, None)


def test_replay_states():
    assert replay(SET, [op("add", 1), op("add", 2), op("remove", 1)]) == {2}
    assert replay(MAP, [op("put", 1, 2)]) == {1: 2}
    assert replay(PQUEUE, [op("insert", 1, 2), op("inc", 1, 3)]) == {1: 5}


def test_replay_rejects_query():
    with pytest.raises(ContractViolation):
        replay(SET, [op("size")])
