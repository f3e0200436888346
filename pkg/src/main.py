#!/usr/bin/env python3
"""
vischeck 主入口
检查复制数据类型的历史满足哪个可见性一致性级别，
生成模拟历史，并在语料上做按轮次的一致性度量
"""
import argparse
import json
import logging
import sys
from pathlib import Path

# 添加项目根目录到 Python 路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import coloredlogs

from src.checker import CheckOptions, build_pruner, check_history
from src.config import (
    DEFAULT_BUDGET,
    DEFAULT_MAX_IN_FLIGHT,
    DEFAULT_WORKERS,
    LOG_LEVEL,
    PARALLEL_BACKEND,
    ROUND_SIZE,
    SELF_CHECK_INTERVAL,
    STABLE_ROUNDS,
)
from src.datatypes import SPECS, get_spec
from src.errors import DomainError, VischeckError
from src.history import HISTORY_SUFFIX, load_corpus, parse_history, serialize_history
from src.measurement import measure_corpus, pruning_ratio_report, rounds_from_corpus, rounds_from_simulator, speedup_report
from src.simulator import TRUTH_SUFFIX, DeliveryMode, Resolution, SimConfig, simulate_corpus, write_truth
from src.visibility import Level

logger = logging.getLogger("vischeck")

EXIT_SATISFIED = 0
EXIT_VIOLATED = 1
EXIT_BUDGET = 2
EXIT_ERROR = 3
EXIT_INTERRUPTED = 130


def print_banner():
    """打印程序横幅（写到 stderr，stdout 只输出结果）"""
    banner = """
╔════════════════════════════════════════════════════════════╗
║                                                            ║
║   vischeck - 复制数据类型的可见性一致性度量                ║
║                                                            ║
║   Complete · Causal · Peer · Monotonic · Basic · Weak      ║
║                                                            ║
╚════════════════════════════════════════════════════════════╝
"""
    print(banner, file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    """参数错误也按输入错误退出（退出码 3），不与 BudgetExceeded 的 2 冲突"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: 错误: {message}\n")


def _level(value: str) -> Level:
    return Level.parse(value)


def _budget(value: str):
    budget = int(value)
    if budget < 0:
        raise argparse.ArgumentTypeError("状态上限不能为负数")
    return budget or None


def _worker_list(value: str):
    try:
        counts = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"worker 数量列表不合法: {value}") from None
    if not counts or any(c < 1 for c in counts):
        raise argparse.ArgumentTypeError(f"worker 数量必须为正数: {value}")
    return counts


def _add_check_options(parser: argparse.ArgumentParser, workers_default: int = 1):
    parser.add_argument("--type", required=True, choices=sorted(SPECS), help="数据类型")
    parser.add_argument("--no-prune", action="store_true", help="关闭剪枝谓词")
    parser.add_argument("--budget", type=_budget, default=DEFAULT_BUDGET,
                        help=f"每个 (history, level) 的探索状态上限，0 表示不限（默认 {DEFAULT_BUDGET}）")
    parser.add_argument("--workers", type=int, default=workers_default,
                        help=f"并行搜索的 worker 数量（默认 {workers_default}）")
    parser.add_argument("--self-check-interval", type=int, default=SELF_CHECK_INTERVAL,
                        help="worker 两次自检之间探索的状态数")
    parser.add_argument("--backend", choices=["process", "thread"], default=PARALLEL_BACKEND,
                        help="并行后端")


def _options(args) -> CheckOptions:
    if args.workers < 1:
        raise DomainError(f"worker 数量必须为正数: {args.workers}")
    return CheckOptions(
        prune=not args.no_prune,
        budget=args.budget,
        workers=args.workers,
        self_check_interval=args.self_check_interval,
        backend=args.backend
    )


def _print_json(data):
    print(json.dumps(data, ensure_ascii=False, indent=2, sort_keys=False))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vischeck", description="复制数据类型的可见性一致性检查")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v 输出 INFO 日志，-vv 输出 DEBUG 日志")
    commands = parser.add_subparsers(dest="command", required=True)

    check = commands.add_parser("check", help="检查单个历史是否满足某个级别")
    _add_check_options(check, workers_default=DEFAULT_WORKERS)
    check.add_argument("--level", required=True, type=_level, help="一致性级别（名称或 Co/Ca/P/M/B/W）")
    check.add_argument("--stats", action="store_true", help="输出搜索统计")
    check.add_argument("--certificate", action="store_true", help="满足时输出证书执行")
    check.add_argument("--dump-predicates", metavar="FILE", help="把提取的剪枝谓词写入 JSON 文件")
    check.add_argument("file", help="历史文件")

    gen = commands.add_parser("gen", help="生成模拟历史和 ground truth")
    gen.add_argument("--type", required=True, choices=sorted(SPECS), help="数据类型")
    gen.add_argument("--mode", choices=[m.value for m in DeliveryMode], default=DeliveryMode.CAUSAL.value,
                     help="投递模式")
    gen.add_argument("--resolution", choices=[r.value for r in Resolution], default=Resolution.ADD_WIN.value,
                     help="冲突解决策略")
    gen.add_argument("--max-in-flight", type=int, default=DEFAULT_MAX_IN_FLIGHT, help="在途更新上限")
    gen.add_argument("--replicas", type=int, default=None, help="副本数（默认每个会话一个副本）")
    gen.add_argument("--seed", type=int, default=0, help="随机种子")
    gen.add_argument("--count", type=int, required=True, help="历史条数")
    gen.add_argument("outdir", help="输出目录")

    measure = commands.add_parser("measure", help="按轮次度量历史语料")
    _add_check_options(measure, workers_default=1)
    measure.add_argument("--rounds-protocol", type=int, default=STABLE_ROUNDS,
                         help="结果连续不变多少轮后停止")
    measure.add_argument("--round-size", type=int, default=ROUND_SIZE, help="每轮历史条数")
    measure.add_argument("--processes", type=int, default=1, help="同时度量的历史数")
    measure.add_argument("--json", action="store_true", help="输出 JSON")
    measure.add_argument("--timing", action="store_true", help="JSON 中包含耗时")
    measure.add_argument("corpus", help="历史目录或以 --- 分隔的历史流")

    survey = commands.add_parser("survey", help="在模拟存储上按轮次度量（每轮重新生成历史）")
    _add_check_options(survey, workers_default=1)
    survey.add_argument("--mode", choices=[m.value for m in DeliveryMode], default=DeliveryMode.CAUSAL.value)
    survey.add_argument("--resolution", choices=[r.value for r in Resolution], default=Resolution.ADD_WIN.value)
    survey.add_argument("--max-in-flight", type=int, default=DEFAULT_MAX_IN_FLIGHT)
    survey.add_argument("--replicas", type=int, default=None)
    survey.add_argument("--seed", type=int, default=0)
    survey.add_argument("--rounds-protocol", type=int, default=STABLE_ROUNDS)
    survey.add_argument("--round-size", type=int, default=ROUND_SIZE)
    survey.add_argument("--max-rounds", type=int, default=None, help="最多度量的轮数")
    survey.add_argument("--processes", type=int, default=1)
    survey.add_argument("--json", action="store_true")
    survey.add_argument("--timing", action="store_true")

    ratio = commands.add_parser("ratio", help="剪枝率分档统计")
    _add_check_options(ratio, workers_default=1)
    ratio.add_argument("--level", required=True, type=_level)
    ratio.add_argument("--json", action="store_true")
    ratio.add_argument("corpus")

    speedup = commands.add_parser("speedup", help="不同 worker 数下的检查耗时")
    _add_check_options(speedup, workers_default=1)
    speedup.add_argument("--level", required=True, type=_level)
    speedup.add_argument("--worker-counts", type=_worker_list, default=[1, 2, 4, 8],
                         help="逗号分隔的 worker 数量（默认 1,2,4,8）")
    speedup.add_argument("--json", action="store_true")
    speedup.add_argument("corpus")
    return parser


def run_check(args) -> int:
    spec = get_spec(args.type)
    try:
        data = Path(args.file).read_bytes()
    except OSError as e:
        raise DomainError(f"无法读取历史文件 {args.file}: {e}") from e
    h = parse_history(data, spec)
    options = _options(args)

    pruner = build_pruner(h, spec, args.level, options)
    if args.dump_predicates:
        if pruner is None:
            raise DomainError("--dump-predicates 需要开启剪枝")
        pruner.dump(args.dump_predicates)

    result = check_history(h, spec, args.level, options, pruner=pruner)
    print(result.verdict.value)
    if args.stats:
        _print_json(result.stats.to_dict())
    if args.certificate and result.certificate is not None:
        _print_json(result.certificate_dump(h))
    return result.verdict.exit_code


def _sim_config(args) -> SimConfig:
    return SimConfig(
        replica_count=args.replicas,
        delivery=DeliveryMode(args.mode),
        max_in_flight=args.max_in_flight,
        resolution=Resolution(args.resolution),
        seed=args.seed
    )


def run_gen(args) -> int:
    if args.count < 0:
        raise DomainError(f"历史条数不能为负数: {args.count}")
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    sim = _sim_config(args)
    for i, run in enumerate(simulate_corpus(args.type, sim, args.count, seed=args.seed)):
        stem = f"{i:05d}"
        (outdir / f"{stem}{HISTORY_SUFFIX}").write_text(serialize_history(run.history), encoding="utf-8")
        write_truth(outdir / f"{stem}{TRUTH_SUFFIX}", run.truth)
    logger.info(f"💾 已生成 {args.count} 条历史到 {outdir}")
    print(outdir)
    return 0


def _print_report(report, args):
    if args.json:
        _print_json(report.to_json(timing=args.timing))
    else:
        print(report.table())


def run_measure(args) -> int:
    print_banner()
    spec = get_spec(args.type)
    corpus = load_corpus(args.corpus, spec)
    if not corpus:
        raise DomainError(f"语料为空: {args.corpus}")
    report = measure_corpus(
        rounds_from_corpus(corpus, args.round_size),
        spec,
        _options(args),
        stable_rounds=args.rounds_protocol,
        processes=args.processes
    )
    _print_report(report, args)
    return 0


def run_survey(args) -> int:
    print_banner()
    spec = get_spec(args.type)
    rounds = rounds_from_simulator(args.type, _sim_config(args), args.round_size, args.seed, args.max_rounds)
    report = measure_corpus(rounds, spec, _options(args), stable_rounds=args.rounds_protocol, processes=args.processes)
    _print_report(report, args)
    return 0


def run_ratio(args) -> int:
    spec = get_spec(args.type)
    report = pruning_ratio_report(load_corpus(args.corpus, spec), spec, args.level, _options(args))
    if args.json:
        _print_json(report.to_json())
    else:
        print(report.table())
    return 0


def run_speedup(args) -> int:
    spec = get_spec(args.type)
    report = speedup_report(load_corpus(args.corpus, spec), spec, args.level, args.worker_counts, _options(args))
    if args.json:
        _print_json(report.to_json())
    else:
        print(report.table())
    return 0


COMMANDS = {
    "check": run_check,
    "gen": run_gen,
    "measure": run_measure,
    "survey": run_survey,
    "ratio": run_ratio,
    "speedup": run_speedup,
}


def setup_logging(verbose: int):
    level = LOG_LEVEL
    if verbose == 1:
        level = "INFO"
    elif verbose >= 2:
        level = "DEBUG"
    coloredlogs.install(level=level, stream=sys.stderr, fmt="%(asctime)s %(levelname)s %(message)s")


def main(argv=None) -> int:
    """主函数"""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)

    try:
        return COMMANDS[args.command](args)

    except KeyboardInterrupt:
        print("\n⚠️ 用户中断", file=sys.stderr)
        return EXIT_INTERRUPTED

    except VischeckError as e:
        print(f"❌ 错误: {e}", file=sys.stderr)
        return EXIT_ERROR

    except Exception as e:
        print(f"\n[错误] 执行过程出错: {e}", file=sys.stderr)
        import traceback
        traceback.print_exc()
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
