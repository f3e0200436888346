"""
测试公共配置
"""
import sys
from pathlib import Path

import pytest

# 添加项目根目录到 Python 路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.datatypes import MAP, PQUEUE, SET  # noqa: E402
from tests.oracle import history  # noqa: E402


@pytest.fixture
def size_history():
    """A=[add(1)]，B=[add(2), remove(2), size()⇒0]"""
    return history(
        [("add", (1,), None)],
        [("add", (2,), None), ("remove", (2,), None), ("size", (), 0)],
    )


@pytest.fixture
def get_pri_history():
    """{insert(1,5); inc(1,1)} ∥ {get_pri(1)⇒6}"""
    return history(
        [("insert", (1, 5), None), ("inc", (1, 1), None)],
        [("get_pri", (1,), 6)],
    )


@pytest.fixture(params=[SET, MAP, PQUEUE], ids=lambda spec: spec.name)
def any_spec(request):
    return request.param
