"""
数据类型的顺序语义
集合、映射、优先队列三种类型的方法签名、查询/更新分类，
以及给定一组可见更新时查询的返回值
"""
import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, Mapping, Optional, Sequence, Tuple

from src.errors import ContractViolation, DomainError, WellFormednessError

if TYPE_CHECKING:
    from src.history import Event


class OpKind(enum.Enum):
    QUERY = "query"
    UPDATE = "update"


# 参数允许的类型
INT: Tuple[type, ...] = (int,)
SCALAR: Tuple[type, ...] = (int, str)


@dataclass(frozen=True)
class MethodSignature:
    kind: OpKind
    element_arg: Optional[int]  # 作用于多个元素的方法为 None
    arg_types: Tuple[Tuple[type, ...], ...] = ()

    @property
    def arity(self) -> int:
        return len(self.arg_types)

    def check_args(self, method: str, args: Sequence[Any]):
        """
        检查参数个数与类型

        Raises:
            WellFormednessError: 个数不符，或参数不是该位置允许的类型（布尔值不算整数）
        """
        if len(args) != self.arity:
            raise WellFormednessError(f"{method} 需要 {self.arity} 个参数，实际为 {len(args)}")
        for i, (value, allowed) in enumerate(zip(args, self.arg_types)):
            if isinstance(value, bool) or not isinstance(value, allowed):
                names = " 或 ".join(t.__name__ for t in allowed)
                raise WellFormednessError(f"{method} 的第 {i + 1} 个参数必须是 {names}: {value!r}")


@dataclass(frozen=True)
class DataTypeSpec:
    """一种数据类型：名称加上每个方法的签名"""
    name: str
    methods: Mapping[str, MethodSignature] = field(default_factory=dict)

    def element_of(self, event: "Event"):
        """事件操作的元素（多元素方法返回 None）"""
        signature = self.methods.get(event.method)
        if signature is None or signature.element_arg is None:
            return None
        return event.args[signature.element_arg]

    def is_update(self, event: "Event") -> bool:
        return classify(self, event.method) is OpKind.UPDATE


SET = DataTypeSpec("set", {
    "add": MethodSignature(OpKind.UPDATE, 0, (SCALAR,)),
    "remove": MethodSignature(OpKind.UPDATE, 0, (SCALAR,)),
    "contains": MethodSignature(OpKind.QUERY, 0, (SCALAR,)),
    "size": MethodSignature(OpKind.QUERY, None),
})

MAP = DataTypeSpec("map", {
    "put": MethodSignature(OpKind.UPDATE, 0, (SCALAR, SCALAR)),
    "delete": MethodSignature(OpKind.UPDATE, 0, (SCALAR,)),
    "get": MethodSignature(OpKind.QUERY, 0, (SCALAR,)),
    "size": MethodSignature(OpKind.QUERY, None),
})

PQUEUE = DataTypeSpec("pqueue", {
    "insert": MethodSignature(OpKind.UPDATE, 0, (INT, INT)),
    "inc": MethodSignature(OpKind.UPDATE, 0, (INT, INT)),
    "get_pri": MethodSignature(OpKind.QUERY, 0, (INT,)),
    "get_max": MethodSignature(OpKind.QUERY, None),
})

SPECS: Dict[str, DataTypeSpec] = {spec.name: spec for spec in (SET, MAP, PQUEUE)}


def get_spec(name: str) -> DataTypeSpec:
    """按名称获取数据类型"""
    try:
        return SPECS[name]
    except KeyError:
        raise DomainError(f"未知的数据类型: {name}（可选: {', '.join(SPECS)}）") from None


def classify(spec: DataTypeSpec, method: str) -> OpKind:
    """判断方法是查询还是更新"""
    signature = spec.methods.get(method)
    if signature is None:
        raise DomainError(f"{spec.name} 没有方法 {method}")
    return signature.kind


def signature_any(method: str) -> MethodSignature:
    """不指定类型时在所有内置类型中查找方法签名（各类型的方法名互不冲突）"""
    for spec in SPECS.values():
        if method in spec.methods:
            return spec.methods[method]
    raise WellFormednessError(f"未知的方法: {method}")


def classify_any(method: str) -> OpKind:
    """不指定类型时按所有内置类型归类"""
    return signature_any(method).kind


def replay(spec: DataTypeSpec, updates: Sequence["Event"]):
    """
    按给定顺序在单副本上重放更新，返回抽象状态

    集合的状态是元素集合；映射和优先队列的状态是字典
    （key → value，element → priority）。
    """
    if spec.name == "set":
        state = set()
        for u in updates:
            if u.method == "add":
                state.add(u.args[0])
            elif u.method == "remove":
                state.discard(u.args[0])
            else:
                raise ContractViolation(f"{u.method} 不是 set 的更新操作")
        return state

    if spec.name == "map":
        state = {}
        for u in updates:
            if u.method == "put":
                state[u.args[0]] = u.args[1]
            elif u.method == "delete":
                state.pop(u.args[0], None)
            else:
                raise ContractViolation(f"{u.method} 不是 map 的更新操作")
        return state

    if spec.name == "pqueue":
        state = {}
        for u in updates:
            element = u.args[0]
            if u.method == "insert":
                # 重复插入已存在的元素不生效
                state.setdefault(element, u.args[1])
            elif u.method == "inc":
                if element in state:
                    state[element] += u.args[1]
            else:
                raise ContractViolation(f"{u.method} 不是 pqueue 的更新操作")
        return state

    raise DomainError(f"未知的数据类型: {spec.name}")


def read(spec: DataTypeSpec, state, q: "Event") -> Any:
    """在抽象状态上执行查询"""
    method = q.method
    if spec.name == "set":
        if method == "contains":
            return q.args[0] in state
        if method == "size":
            return len(state)
    elif spec.name == "map":
        if method == "get":
            return state.get(q.args[0])
        if method == "size":
            return len(state)
    elif spec.name == "pqueue":
        if method == "get_pri":
            return state.get(q.args[0])
        if method == "get_max":
            if not state:
                return None
            # 优先级最高者；相同时取 id 较小的元素
            element, priority = min(state.items(), key=lambda kv: (-kv[1], kv[0]))
            return (element, priority)
    if classify(spec, method) is OpKind.UPDATE:
        raise ContractViolation(f"{method} 是更新操作，不能求查询值")
    raise DomainError(f"{spec.name} 没有查询方法 {method}")


def eval_query(spec: DataTypeSpec, context: Sequence["Event"], q: "Event") -> Any:
    """
    计算查询在可见更新序列上的返回值 F_τ(context, q)

    Args:
        spec: 数据类型
        context: 对 q 可见的更新，按候选仲裁序排列
        q: 查询事件

    Returns:
        顺序语义给出的返回值
    """
    if classify(spec, q.method) is not OpKind.QUERY:
        raise ContractViolation(f"{q.method} 是更新操作，不能求查询值")
    return read(spec, replay(spec, context), q)


def same_value(a: Any, b: Any) -> bool:
    """类型严格的值比较：True 与 1 不相等"""
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if isinstance(a, (tuple, list)) and isinstance(b, (tuple, list)):
        return len(a) == len(b) and all(same_value(x, y) for x, y in zip(a, b))
    if isinstance(a, (tuple, list)) or isinstance(b, (tuple, list)):
        return False
    return type(a) is type(b) and a == b


def matches_return(spec: DataTypeSpec, context: Sequence["Event"], q: "Event") -> bool:
    """查询在该上下文下的返回值是否等于记录的返回值"""
    return same_value(eval_query(spec, context, q), q.ret)
