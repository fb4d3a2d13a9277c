import json
import shutil
import subprocess
import sys

import pytest

from lazyref.cli import corpus_path, main
from lazyref.typecheck import Report


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_safe_and_unsafe_exit_codes(capsys):
    assert run(capsys, "check", "examples/good.lzr")[0] == 0
    code, out, _ = run(capsys, "check", "examples/bad.lzr")
    assert code == 1 and out.startswith("Unsafe")
    assert "SubtypingFailed" in out and "6:15" in out


def test_eager_naive_is_watermarked(capsys):
    code, out, _ = run(capsys, "check", "examples/foobar.lzr", "--mode", "eager-naive")
    assert code == 0
    first, second = out.splitlines()[:2]
    assert first.startswith("WARNING") and "unsound" in first
    assert second == "Safe (UNSOUND MODE)"
    code, out, _ = run(capsys, "check", "examples/foobar.lzr", "--mode", "eager-naive", "--format", "json")
    assert json.loads(out)["mode"] == "eager-naive"


def test_json_report_round_trips(capsys):
    code, out, _ = run(capsys, "check", "examples/bad.lzr", "--format", "json")
    d = json.loads(out)
    assert code == 1 and d["verdict"] == "Unsafe"
    assert set(d) == {"verdict", "mode", "bindings", "errors", "stats"}
    assert set(d["errors"][0]) >= {"rule", "span", "message", "query_id"}
    assert Report.from_dict(d).to_dict() == d


def test_run_exit_codes(capsys):
    assert run(capsys, "run", "examples/foobar.lzr", "--strategy", "cbn")[:2] == (4, "crash\nsteps: 7\n")
    code, out, _ = run(capsys, "run", "examples/foobar.lzr", "--strategy", "cbv", "--fuel", "2000")
    assert code == 5 and out.startswith("fuel exhausted")
    code, out, _ = run(capsys, "run", "examples/fib5.lzr", "--strategy", "opt", "--fuel", "100000")
    assert code == 0 and out.startswith("value 8")


def test_run_with_checker_oracle(capsys):
    code, out, _ = run(capsys, "run", "examples/loop.lzr", "--strategy", "opt", "--oracle", "checker")
    assert code == 0 and out.startswith("value 5")


def test_run_trace_and_json(capsys):
    code, out, _ = run(capsys, "run", "examples/fib5.lzr", "--trace")
    assert code == 0 and out.splitlines()[0].startswith("0: ")
    code, out, _ = run(capsys, "run", "examples/fib5.lzr", "--format", "json")
    d = json.loads(out)
    assert d["result"] == "value" and d["value"] == "8"


def test_usage_errors(capsys, tmp_path):
    bad = tmp_path / "scope.lzr"
    bad.write_text("main = 2014 / z\n")
    code, _, err = run(capsys, "check", str(bad))
    assert code == 2 and "1:15" in err
    assert run(capsys, "check", str(tmp_path / "missing.lzr"))[0] == 2
    assert run(capsys, "check")[0] == 2
    assert run(capsys, "check", "examples/good.lzr", "--mode", "bogus")[0] == 2


def test_missing_solver_binary_is_usage_error(capsys):
    code, _, err = run(capsys, "check", "examples/good.lzr", "--backend", "exec:no-such-solver-xyz")
    assert code == 2 and "no-such-solver-xyz" in err


@pytest.mark.skipif(shutil.which("z3") is None, reason="no z3 binary on PATH")
def test_external_backend(capsys, monkeypatch):
    assert run(capsys, "check", "examples/good.lzr", "--backend", "exec:z3 -in")[0] == 0
    monkeypatch.setenv("LAZYREF_SOLVER", "z3 -in")
    assert run(capsys, "check", "examples/bad.lzr")[0] == 1


def test_smt_dump(capsys, tmp_path):
    out = tmp_path / "dump"
    code, _, _ = run(capsys, "smt-dump", "examples/good.lzr", "--out", str(out))
    assert code == 0
    index = json.loads((out / "index.json").read_text())
    assert len(index) == 4 == len(list(out.glob("*.smt2")))
    good = [q for q in index if q["binding"] == "good"]
    assert len(good) == 1 and good[0]["verdict"] == "Valid"
    text = (out / good[0]["file"]).read_text()
    assert "(assert (<= 0 x))" in text and "(assert (<= 0 y))" in text
    assert text.rstrip().endswith("(check-sat)\n(get-model)".rstrip())


def test_bundled_corpus_and_module_entry_point():
    assert corpus_path("good.lzr").exists()
    proc = subprocess.run([sys.executable, "-m", "lazyref", "check", "examples/baz.lzr"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("Safe")
