import json
import shutil

import numpy as np
import pytest

from conftest import FIXTURES, GOLDEN, read_jsonl
from tuna import cli
from tuna.assembler import IMAGE_GRID, INSTRUCTION_TOKEN, TAG_IMAGE_TOKEN, TAG_TEXT_TOKEN
from tuna.datastore import IvfIndex, load
from tuna.embedder import EncoderSpec, stub_image_embed
from tuna.tagminer import mine_tags


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


@pytest.fixture
def golden_store(tmp_path):
    p = tmp_path / "store.tunads"
    shutil.copy(GOLDEN / "store_8.tunads", p)
    return p


def _write_lines(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


# ---------------------------------------------------------------- mine

def test_mine_100_fixture(capsys, tmp_path):
    out = tmp_path / "tags.jsonl"
    stats = run_json(capsys, "mine", "--input", FIXTURES / "captions_100.jsonl", "--output", out)
    rows = read_jsonl(out)
    expected = read_jsonl(FIXTURES / "captions_100_expected.jsonl")
    assert rows == [{"id": r["id"], "tags": r["tags"]} for r in expected]
    assert all(len(t) <= 30 for r in rows for t in r["tags"])
    assert stats["records"] == 100 and {"chars_per_tag", "tags_per_image", "unique_tags"} <= set(stats)


def test_mine_empty_file(capsys, tmp_path):
    src = tmp_path / "empty.jsonl"
    src.write_text("")
    stats = run_json(capsys, "mine", "--input", src, "--output", tmp_path / "o.jsonl")
    assert stats["chars_per_tag"] == 0 and stats["tags_per_image"] == 0 and stats["unique_tags"] == 0
    assert (tmp_path / "o.jsonl").read_text() == ""


def test_mine_malformed_line(capsys, tmp_path):
    src = tmp_path / "bad.jsonl"
    src.write_text('{"id": "a", "caption": "a cat"}\n{"id": "b", "caption": \n')
    code, _, err = run(capsys, "mine", "--input", src, "--output", tmp_path / "o.jsonl")
    assert code == 1 and "line 2" in err


def test_mine_missing_input_and_out_dir(capsys, tmp_path):
    code, _, err = run(capsys, "mine", "--input", tmp_path / "nope.jsonl", "--output", tmp_path / "o.jsonl")
    assert code == 1 and "not found" in err
    code, _, _ = run(capsys, "mine", "--input", FIXTURES / "captions_8.jsonl",
                     "--output", tmp_path / "no-dir" / "o.jsonl")
    assert code == 1


def test_mine_max_tag_len(capsys, tmp_path):
    out = tmp_path / "t.jsonl"
    run_json(capsys, "mine", "--input", FIXTURES / "captions_8.jsonl", "--output", out, "--max-tag-len", 6)
    assert all(len(t) <= 6 for r in read_jsonl(out) for t in r["tags"])


def test_mine_stats_golden(capsys, tmp_path):
    out = tmp_path / "t.jsonl"
    stats = run_json(capsys, "mine", "--input", FIXTURES / "captions_8.jsonl", "--output", out)
    assert stats == json.loads((GOLDEN / "stats_8.json").read_text())
    assert out.read_text() == (GOLDEN / "tags_8.jsonl").read_text()


# ---------------------------------------------------------------- build

def test_build_twice_identical(capsys, tmp_path):
    a, b = tmp_path / "a.tunads", tmp_path / "b.tunads"
    args = ["--input", GOLDEN / "tags_8.jsonl", "--with-captions", "--captions", FIXTURES / "captions_8.jsonl"]
    run_json(capsys, "build", *args, "--output", a)
    run_json(capsys, "build", *args, "--output", b)
    assert a.read_bytes() == b.read_bytes() == (GOLDEN / "store_8.tunads").read_bytes()


def test_build_ivf_and_summary(capsys, tmp_path):
    out = tmp_path / "s.tunads"
    summary = run_json(capsys, "build", "--input", GOLDEN / "tags_8.jsonl", "--output", out, "--ivf", 2)
    assert summary["kind"] == "ivf" and summary["nlist"] == 2 and summary["count"] == 8
    store = load(out)
    assert isinstance(store, IvfIndex) and list(store.captions) == [None] * 8


def test_build_10k_round_trip(capsys, tmp_path):
    src = _write_lines(tmp_path / "t.jsonl", ({"id": f"img-{i}", "tags": [f"t{i % 13}"]} for i in range(10_000)))
    out = tmp_path / "s.tunads"
    assert run_json(capsys, "build", "--input", src, "--output", out, "--dim", 8)["count"] == 10_000
    assert len(load(out)) == 10_000


def test_build_errors(capsys, tmp_path):
    code, _, err = run(capsys, "build", "--input", tmp_path / "missing.jsonl", "--output", tmp_path / "s")
    assert code == 1 and "not found" in err
    dup = _write_lines(tmp_path / "d.jsonl", [{"id": "a", "tags": []}, {"id": "a", "tags": ["x"]}])
    code, _, err = run(capsys, "build", "--input", dup, "--output", tmp_path / "s")
    assert code == 1 and "a" in err
    bad = tmp_path / "b.jsonl"
    bad.write_text('{"id": "a", "tags": "notalist"}\n')
    code, _, err = run(capsys, "build", "--input", bad, "--output", tmp_path / "s")
    assert code == 1 and "line 1" in err
    assert not (tmp_path / "s").exists()


def test_build_embeddings_file(capsys, tmp_path):
    ids = ["a", "b", "c"]
    src = _write_lines(tmp_path / "t.jsonl", [{"id": i, "tags": [i]} for i in ids])
    emb = tmp_path / "e.f32"
    np.array([[3, 0, 0, 0], [0, 2, 0, 0], [0, 0, 0, 5]], dtype="<f4").tofile(emb)
    out = tmp_path / "s.tunads"
    run_json(capsys, "build", "--input", src, "--output", out, "--dim", 4, "--embeddings-file", emb)
    np.testing.assert_array_equal(load(out).keys, np.eye(4)[[0, 1, 3]])
    np.zeros(5, dtype="<f4").tofile(emb)
    code, _, err = run(capsys, "build", "--input", src, "--output", out, "--dim", 4, "--embeddings-file", emb)
    assert code == 1 and "expected 3 x 4" in err


# ---------------------------------------------------------------- query

def test_query_golden(capsys, golden_store):
    hits = run_json(capsys, "query", "--store", golden_store, "--image-id", "query-0")
    assert hits == json.loads((GOLDEN / "query_query-0.json").read_text())


def test_query_self_and_large_k(capsys, golden_store):
    hits = run_json(capsys, "query", "--store", golden_store, "--image-id", "img-4")
    assert hits[0]["id"] == "img-4" and hits[0]["rank"] == 1
    assert hits[0]["score"] == pytest.approx(1.0, abs=1e-6)
    hits = run_json(capsys, "query", "--store", golden_store, "--image-id", "img-4", "--k", 50)
    assert len(hits) == 8
    hits = run_json(capsys, "query", "--store", golden_store, "--image-id", "img-4", "--exclude-id", "img-4")
    assert "img-4" not in [h["id"] for h in hits]


def test_query_errors(capsys, tmp_path, golden_store):
    bad = tmp_path / "bad.tunads"
    bad.write_bytes(b"garbage")
    code, _, err = run(capsys, "query", "--store", bad, "--image-id", "x")
    assert code == 1 and "bad store" in err
    code, _, _ = run(capsys, "query", "--store", golden_store, "--image-id", "x", "--text", "y")
    assert code == 1
    code, _, _ = run(capsys, "query", "--store", golden_store, "--image-id", "x", "--dim", 8)
    assert code == 1
    code, _, _ = run(capsys, "query", "--store", golden_store, "--image-id", "x", "--k", 0)
    assert code == 1


def test_json_output_sorted_keys(capsys, golden_store):
    _, out, _ = run(capsys, "query", "--store", golden_store, "--text", "red apple")
    for hit in json.loads(out):
        assert list(hit) == sorted(hit)
    assert out.strip() == json.dumps(json.loads(out), sort_keys=True)


# ---------------------------------------------------------------- assemble

def _assemble(capsys, tmp_path, store, mode, *extra):
    out, csv = tmp_path / f"{mode}.json", tmp_path / f"{mode}.csv"
    code, stdout, err = run(capsys, "assemble", "--store", store, "--image-id", "query-0",
                            "--instruction", "Describe the image in detail.", "--mode", mode,
                            "--out", out, "--weights-csv", csv, *extra)
    return code, out, csv, err


@pytest.mark.parametrize("mode", ["full", "no-tuner", "no-tags", "random-tags", "captions"])
def test_assemble_modes(capsys, tmp_path, golden_store, mode):
    code, out, csv, err = _assemble(capsys, tmp_path, golden_store, mode)
    assert code == 0, err
    layout = json.loads(out.read_text())
    tag_segs = [s for s in layout["segments"] if s["kind"] in (TAG_IMAGE_TOKEN, TAG_TEXT_TOKEN)]
    rows = csv.read_text().splitlines()
    assert rows[0] == "tag,raw_score,weight"
    if mode == "no-tags":
        assert tag_segs == [] and len(rows) == 1
    else:
        assert tag_segs
    if mode == "no-tuner":
        assert all(s["weight"] == 1.0 for s in tag_segs)
        assert all(r.split(",")[2] == "1.00000000" for r in rows[1:])


def test_assemble_kinds_known(capsys, tmp_path, golden_store):
    _, out, _, _ = _assemble(capsys, tmp_path, golden_store, "full")
    kinds = {s["kind"] for s in json.loads(out.read_text())["segments"]}
    assert kinds == {IMAGE_GRID, TAG_IMAGE_TOKEN, TAG_TEXT_TOKEN, INSTRUCTION_TOKEN}


def test_assemble_random_tags_seeded(capsys, tmp_path, golden_store):
    _, a, _, _ = _assemble(capsys, tmp_path, golden_store, "random-tags", "--seed", 5)
    first = a.read_bytes()
    _, b, _, _ = _assemble(capsys, tmp_path, golden_store, "random-tags", "--seed", 5)
    assert b.read_bytes() == first


def test_assemble_captions_missing(capsys, tmp_path):
    store = tmp_path / "nocap.tunads"
    run_json(capsys, "build", "--input", GOLDEN / "tags_8.jsonl", "--output", store)
    code, out, _, err = _assemble(capsys, tmp_path, store, "captions")
    assert code == 1 and "img-7" in err and "img-0" in err
    assert not out.exists()


def test_assemble_no_tags_without_store(capsys, tmp_path):
    out = tmp_path / "l.json"
    code, _, err = run(capsys, "assemble", "--image-id", "q", "--instruction", "hi there",
                       "--mode", "no-tags", "--out", out)
    assert code == 0, err
    assert len(json.loads(out.read_text())["segments"]) == 16 + 2


def test_assemble_golden(capsys, tmp_path, golden_store):
    code, out, csv, err = _assemble(capsys, tmp_path, golden_store, "full")
    assert code == 0, err
    got, want = json.loads(out.read_text()), json.loads((GOLDEN / "layout_full.json").read_text())
    assert got["mode"] == want["mode"] and got["pool"] == want["pool"]
    assert [(s["kind"], s["tag"]) for s in got["segments"]] == [(s["kind"], s["tag"]) for s in want["segments"]]
    for g, w in zip(got["segments"], want["segments"]):
        np.testing.assert_allclose(g["values"], w["values"], atol=1e-9, rtol=0)
    got_rows = [r.split(",") for r in csv.read_text().splitlines()]
    want_rows = [r.split(",") for r in (GOLDEN / "weights_full.csv").read_text().splitlines()]
    assert [r[0] for r in got_rows] == [r[0] for r in want_rows]
    for g, w in zip(got_rows[1:], want_rows[1:]):
        assert abs(float(g[2]) - float(w[2])) <= 1e-8


# ---------------------------------------------------------------- eval

def test_eval_pred_gold(capsys):
    report = run_json(capsys, "eval", "--pred", FIXTURES / "pope_pred_50.jsonl",
                      "--gold", FIXTURES / "pope_gold_50.jsonl")
    assert report["counts"] == {"tp": 20, "fp": 7, "tn": 20, "fn": 3}
    assert report["accuracy"] == 80.0 and report["f1"] == 80.0


def test_eval_pred_equals_gold(capsys):
    gold = FIXTURES / "pope_gold_50.jsonl"
    assert run_json(capsys, "eval", "--pred", gold, "--gold", gold)["accuracy"] == 100.0


def test_eval_f1_mode(capsys):
    assert run_json(capsys, "eval", "--f1", "97.44", "78.80")["f1"] == 87.13
    assert run_json(capsys, "eval", "--f1", "84.09", "95.13")["f1"] == 89.27
    assert run_json(capsys, "eval", "--f1", "52.07", "99.60")["f1"] == 68.39
    code, _, _ = run(capsys, "eval", "--f1", "120", "50")
    assert code == 1


def test_eval_judged(capsys):
    assert run_json(capsys, "eval", "--judged", FIXTURES / "judged_24.jsonl") == {"relative_score": 87.46}


def test_eval_errors(capsys, tmp_path):
    assert run(capsys, "eval")[0] == 1
    pred = _write_lines(tmp_path / "p.jsonl", [{"id": "zzz", "answer": "yes"}])
    code, _, err = run(capsys, "eval", "--pred", pred, "--gold", FIXTURES / "pope_gold_50.jsonl")
    assert code == 1 and "zzz" in err


# ---------------------------------------------------------------- bench

def test_bench_full_probe_recall_one(capsys, tmp_path):
    src = _write_lines(tmp_path / "t.jsonl", ({"id": f"img-{i}", "tags": []} for i in range(400)))
    store = tmp_path / "s.tunads"
    run_json(capsys, "build", "--input", src, "--output", store, "--dim", 16, "--ivf", 8)
    report = run_json(capsys, "bench", "--store", store, "--queries", 20, "--nprobe", "1,8")
    by_probe = {c["nprobe"]: c for c in report["configs"]}
    assert by_probe[8]["recall_at_k"] == 1.0 and by_probe[None]["recall_at_k"] == 1.0
    assert 0.0 <= by_probe[1]["recall_at_k"] <= 1.0
    again = run_json(capsys, "bench", "--store", store, "--queries", 20, "--nprobe", "1,8")
    assert [c["recall_at_k"] for c in again["configs"]] == [c["recall_at_k"] for c in report["configs"]]
    stored = run_json(capsys, "bench", "--store", store, "--queries", 20, "--query-source", "stored")
    assert stored["configs"][-1]["recall_at_k"] == 1.0


def test_bench_empty_store(capsys, tmp_path):
    src = tmp_path / "t.jsonl"
    src.write_text("")
    store = tmp_path / "s.tunads"
    run_json(capsys, "build", "--input", src, "--output", store)
    code, _, err = run(capsys, "bench", "--store", store)
    assert code == 1 and "empty" in err


# ---------------------------------------------------------------- plumbing

def test_internal_error_exit_2(capsys, monkeypatch, golden_store):
    def boom(*a, **k):
        raise AssertionError("invariant broken")
    monkeypatch.setattr(cli, "search", boom)
    code, _, err = run(capsys, "query", "--store", golden_store, "--image-id", "x")
    assert code == 2 and "internal error" in err


def test_config_precedence(capsys, tmp_path, golden_store):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"store": str(golden_store), "k": 2}))
    assert len(run_json(capsys, "--config", cfg, "query", "--image-id", "img-1")) == 2
    assert len(run_json(capsys, "query", "--config", cfg, "--image-id", "img-1", "--k", 3)) == 3
    assert len(run_json(capsys, "query", "--store", golden_store, "--image-id", "img-1")) == 5


def test_tuna_seed_env(capsys, tmp_path, golden_store, monkeypatch):
    q = run_json(capsys, "query", "--store", golden_store, "--text", "cat")
    monkeypatch.setenv("TUNA_SEED", "7")
    # the store was built with seed 0, so a seed-7 query vector scores differently
    q7 = run_json(capsys, "query", "--store", golden_store, "--text", "cat")
    assert [h["score"] for h in q] != [h["score"] for h in q7]
    assert run_json(capsys, "query", "--store", golden_store, "--text", "cat", "--encoder-seed", 0) == q
    monkeypatch.setenv("TUNA_SEED", "nope")
    assert run(capsys, "query", "--store", golden_store, "--text", "cat")[0] == 1


def test_help_documents_precedence(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["build", "--help"])
    assert exc.value.code == 0
    assert "flags > --config JSON > built-in defaults" in capsys.readouterr().out


def test_pipeline_matches_library(capsys, tmp_path):
    tags = tmp_path / "t.jsonl"
    run_json(capsys, "mine", "--input", FIXTURES / "captions_8.jsonl", "--output", tags)
    for r, cap in zip(read_jsonl(tags), read_jsonl(FIXTURES / "captions_8.jsonl")):
        assert r["tags"] == mine_tags(cap["caption"])
    store = tmp_path / "s.tunads"
    run_json(capsys, "build", "--input", tags, "--output", store)
    keys = load(store).keys
    np.testing.assert_array_equal(keys[0], stub_image_embed("img-0", EncoderSpec())[1].astype(np.float32))
