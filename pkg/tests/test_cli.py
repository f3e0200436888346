"""
命令行测试
"""
import json

import pytest

from src.history import parse_history, serialize_history
from src.main import main
from src.simulator import read_truth
from tests.oracle import history


@pytest.fixture
def size_file(tmp_path, size_history):
    path = tmp_path / "size.hist"
    path.write_text(serialize_history(size_history), encoding="utf-8")
    return path


@pytest.fixture
def contradiction_file(tmp_path):
    path = tmp_path / "contradiction.hist"
    path.write_text(serialize_history(history([("add", (1,), None), ("contains", (1,), False)])), encoding="utf-8")
    return path


@pytest.fixture
def corpus_dir(tmp_path, size_history):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    basic_only = history(
        [("add", (1,), None)],
        [("contains", (1,), True), ("contains", (1,), False)],
    )
    (corpus / "00000.hist").write_text(serialize_history(size_history), encoding="utf-8")
    (corpus / "00001.hist").write_text(serialize_history(basic_only), encoding="utf-8")
    return corpus


def _check(*extra):
    return ["check", "--type", "set", "--workers", "1", *extra]


def test_check_satisfied(size_file, capsys):
    assert main(_check("--level", "basic", str(size_file))) == 0
    assert capsys.readouterr().out.splitlines()[0] == "satisfied"


def test_check_violated(contradiction_file, capsys):
    assert main(_check("--level", "Co", str(contradiction_file))) == 1
    assert capsys.readouterr().out.strip() == "violated"


def test_check_budget_exceeded(contradiction_file, capsys):
    assert main(_check("--level", "weak", "--budget", "1", str(contradiction_file))) == 2
    assert capsys.readouterr().out.strip() == "budget-exceeded"


def test_check_zero_budget_is_unlimited(contradiction_file):
    assert main(_check("--level", "weak", "--budget", "0", str(contradiction_file))) == 0


def test_check_stats_and_certificate(size_file, capsys):
    assert main(_check("--level", "causal", "--stats", "--certificate", str(size_file))) == 0
    out = capsys.readouterr().out
    first, rest = out.split("\n", 1)
    assert first == "satisfied"
    decoder = json.JSONDecoder()
    stats, end = decoder.raw_decode(rest)
    certificate, _ = decoder.raw_decode(rest[end:].lstrip())
    assert stats["states_explored"] >= 1
    assert len(certificate["lin"]) == 4


def test_check_dump_predicates(tmp_path, size_file):
    target = tmp_path / "predicates.json"
    assert main(_check("--level", "weak", "--dump-predicates", str(target), str(size_file))) == 0
    assert isinstance(json.loads(target.read_text(encoding="utf-8")), list)


def test_dump_predicates_requires_pruning(tmp_path, size_file):
    target = tmp_path / "predicates.json"
    code = main(_check("--level", "weak", "--no-prune", "--dump-predicates", str(target), str(size_file)))
    assert code == 3


def test_check_malformed_history(tmp_path, capsys):
    path = tmp_path / "bad.hist"
    path.write_text('{"session":0,"index":0,"method":"add"}\n', encoding="utf-8")
    assert main(_check("--level", "weak", str(path))) == 3
    assert "错误" in capsys.readouterr().err


def test_check_rejects_string_amount(tmp_path, capsys):
    path = tmp_path / "amount.hist"
    path.write_text(
        '{"session":0,"index":0,"method":"insert","args":[1,5],"ret":null}\n'
        '{"session":0,"index":1,"method":"inc","args":[1,"x"],"ret":null}\n'
        '{"session":0,"index":2,"method":"get_pri","args":[1],"ret":5}\n',
        encoding="utf-8",
    )
    args = ["check", "--type", "pqueue", "--level", "basic", "--workers", "1", str(path)]
    assert main(args) == 3
    err = capsys.readouterr().err
    assert "❌ 错误" in err and "第 2 行" in err
    assert "Traceback" not in err


def test_check_missing_file(tmp_path):
    assert main(_check("--level", "weak", str(tmp_path / "missing.hist"))) == 3


def test_unknown_level_is_usage_error(size_file):
    with pytest.raises(SystemExit) as info:
        main(_check("--level", "strong", str(size_file)))
    assert info.value.code == 3


def test_check_parallel_thread_backend(contradiction_file, capsys):
    args = ["check", "--type", "set", "--workers", "2", "--backend", "thread", "--level", "causal",
            str(contradiction_file)]
    assert main(args) == 1


def test_gen_writes_history_and_truth(tmp_path, capsys):
    outdir = tmp_path / "gen"
    args = ["gen", "--type", "map", "--mode", "random", "--max-in-flight", "4", "--seed", "3",
            "--count", "2", str(outdir)]
    assert main(args) == 0
    names = sorted(p.name for p in outdir.iterdir())
    assert names == ["00000.hist", "00000.truth", "00001.hist", "00001.truth"]
    h = parse_history((outdir / "00000.hist").read_text(encoding="utf-8"))
    truth = read_truth(outdir / "00000.truth")
    assert set(truth.order) == {e.id for e in h}


def test_gen_is_reproducible(tmp_path):
    for name in ("a", "b"):
        assert main(["gen", "--type", "set", "--seed", "5", "--count", "1", str(tmp_path / name)]) == 0
    first = (tmp_path / "a" / "00000.hist").read_text(encoding="utf-8")
    assert first == (tmp_path / "b" / "00000.hist").read_text(encoding="utf-8")


def test_measure_json(corpus_dir, capsys):
    assert main(["measure", "--type", "set", "--json", str(corpus_dir)]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["histories"] == 2
    assert data["strongest"] == "basic"
    assert data["violations"]["W"] == "/"
    assert "time" not in data


def test_measure_table(corpus_dir, capsys):
    assert main(["measure", "--type", "set", str(corpus_dir)]) == 0
    assert "#hist" in capsys.readouterr().out


def test_measure_empty_corpus(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["measure", "--type", "set", str(empty)]) == 3


def test_ratio_json(corpus_dir, capsys):
    assert main(["ratio", "--type", "set", "--level", "causal", "--json", str(corpus_dir)]) == 0
    data = json.loads(capsys.readouterr().out)
    assert sum(bucket["count"] for bucket in data["buckets"].values()) == 2


def test_speedup_json(corpus_dir, capsys):
    args = ["speedup", "--type", "set", "--level", "basic", "--backend", "thread",
            "--worker-counts", "1,2", "--json", str(corpus_dir)]
    assert main(args) == 0
    data = json.loads(capsys.readouterr().out)
    assert set(data["workers"]) == {"1", "2"}


def test_measure_json_is_byte_identical_across_runs(tmp_path, capsys):
    outputs = []
    for name in ("first", "second"):
        outdir = tmp_path / name
        gen = ["gen", "--type", "pqueue", "--mode", "sync", "--seed", "7", "--count", "3", str(outdir)]
        assert main(gen) == 0
        capsys.readouterr()
        assert main(["measure", "--type", "pqueue", "--workers", "1", "--budget", "20000", "--json", str(outdir)]) == 0
        outputs.append(capsys.readouterr().out)
    assert outputs[0] == outputs[1]
    data = json.loads(outputs[0])
    assert data["histories"] + len(data["budget_exceeded"]) == 3
