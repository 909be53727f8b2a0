import json

import pytest

from conftest import write_corpus
from hero2.cli import EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, main
from hero2.records import read_run


def fixed_clock():
    return 0.0


@pytest.fixture
def corpus(tmp_path):
    return write_corpus(tmp_path, n_claims=3)


def run(*argv, clock=fixed_clock):
    return main([str(a) for a in argv], clock=clock)


def build(corpus):
    out = corpus["root"] / "index"
    code = run("build-store", "--config", corpus["config"], "--stores", corpus["stores"], "--out", out)
    return code, out


def verify(corpus, index, name="run.jsonl", *extra):
    out = corpus["root"] / name
    code = run("verify", "--config", corpus["config"], "--claims", corpus["claims"],
               "--index-dir", index, "--out", out, *extra)
    return code, out


def test_build_store(corpus, capsys):
    code, out = build(corpus)
    assert code == EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == ["c0.idx", "c1.idx", "c2.idx"]
    assert "built 3 index(es)" in capsys.readouterr().out


def test_build_store_partial_failure(corpus, capsys):
    (corpus["stores"] / "c0.json").write_text("not json\n")
    code, out = build(corpus)
    assert code == EXIT_PARTIAL
    assert sorted(p.name for p in out.iterdir()) == ["c1.idx", "c2.idx"]
    assert "claim c0" in capsys.readouterr().err


def test_verify_writes_run_and_runtime(corpus, capsys):
    _, index = build(corpus)
    code, out = verify(corpus, index)
    assert code == EXIT_OK
    records = read_run(out)
    assert [r.claim_id for r in records] == ["c0", "c1", "c2"]
    assert "average runtime per claim (s): 0.00" in capsys.readouterr().out


def test_verify_budget_flag(corpus, capsys):
    _, index = build(corpus)
    ticks = iter(range(10_000))
    out = corpus["root"] / "run.jsonl"
    code = run("verify", "--config", corpus["config"], "--claims", corpus["claims"],
               "--index-dir", index, "--out", out, "--budget", "0.5", "--parallelism", "1",
               clock=lambda: float(next(ticks)))
    assert code == EXIT_OK
    assert all(r.over_budget for r in read_run(out))
    assert "3 claim(s) over the 0.5s budget" in capsys.readouterr().out


def test_verify_missing_claims_file(corpus):
    _, index = build(corpus)
    out = corpus["root"] / "r.jsonl"
    assert run("verify", "--config", corpus["config"], "--claims", corpus["root"] / "nope.json",
               "--index-dir", index, "--out", out) == EXIT_USAGE


def test_score_default_threshold(corpus, capsys):
    _, index = build(corpus)
    _, out = verify(corpus, index)
    capsys.readouterr()
    prefix = corpus["root"] / "report"
    code = run("score", "--config", corpus["config"], "--run", out, "--gold", corpus["claims"],
               "--out", prefix)
    assert code == EXIT_OK
    text = capsys.readouterr().out
    assert "AVeriTeC score (tau=0.5)" in text
    data = json.loads((corpus["root"] / "report.json").read_text())
    assert data["threshold"] == 0.5
    assert data["aggregate"]["averitec_score"] == 1.0


def test_score_multiple_runs(corpus, capsys):
    _, index = build(corpus)
    _, a = verify(corpus, index, "a.jsonl")
    _, b = verify(corpus, index, "b.jsonl")
    capsys.readouterr()
    code = run("score", "--config", corpus["config"], "--run", a, b, "--gold", corpus["claims"])
    assert code == EXIT_OK
    assert "averitec: 1.000 ± 0.000" in capsys.readouterr().out


def test_score_missing_gold(corpus):
    _, index = build(corpus)
    _, out = verify(corpus, index)
    code = run("score", "--config", corpus["config"], "--run", out, "--gold", corpus["root"] / "x.json")
    assert code == EXIT_USAGE


def test_score_claim_mismatch(corpus, tmp_path):
    _, index = build(corpus)
    _, out = verify(corpus, index)
    lines = out.read_text().splitlines()[:2]
    out.write_text("\n".join(lines) + "\n")
    code = run("score", "--config", corpus["config"], "--run", out, "--gold", corpus["claims"])
    assert code == EXIT_PARTIAL


def test_score_bad_threshold(corpus):
    _, index = build(corpus)
    _, out = verify(corpus, index)
    code = run("score", "--config", corpus["config"], "--run", out, "--gold", corpus["claims"],
               "--threshold", "1.5")
    assert code == EXIT_USAGE


def test_benchmark_writes_table(corpus, capsys):
    prefix = corpus["root"] / "bench"
    code = run("benchmark", "--config", corpus["config"], "--claims", corpus["claims"],
               "--stores", corpus["stores"], "--strategies", "document,chunk:3",
               "--ks", "3,5,10", "--modes", "retrieval,reformulation", "--out", prefix)
    assert code == EXIT_OK
    data = json.loads((corpus["root"] / "bench.json").read_text())
    assert data["columns"] == ["Top-3", "Top-5", "Top-10"]
    assert len(data["rows"]) == 4
    assert "Chunk (3 sentences) + answer reformulation" in capsys.readouterr().out


def test_benchmark_unknown_mode(corpus):
    code = run("benchmark", "--config", corpus["config"], "--claims", corpus["claims"],
               "--stores", corpus["stores"], "--modes", "bogus")
    assert code == EXIT_USAGE


def test_missing_config_file(tmp_path):
    assert run("build-store", "--config", tmp_path / "none.yaml", "--stores", tmp_path,
               "--out", tmp_path / "o") == EXIT_USAGE


def test_config_with_unknown_key(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("top_k_docs: 3\n")
    assert run("build-store", "--config", path, "--stores", tmp_path, "--out", tmp_path / "o") == EXIT_USAGE


def test_argparse_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["verify"])
    assert info.value.code == 2
