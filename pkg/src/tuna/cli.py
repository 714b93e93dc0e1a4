"""Command-line interface.

Commands::

    tuna mine      captions JSONL -> tags JSONL, corpus stats on stdout
    tuna build     tags JSONL -> TUNADS store (flat, or IVF with --ivf NLIST)
    tuna query     k-NN lookup by stub image id or text
    tuna assemble  prompt layout JSON + weight CSV for one image/instruction
    tuna eval      yes/no metrics, F1 from P/R, judged relative score
    tuna bench     retrieval latency and recall@k per nprobe

Configuration precedence: command-line flags > --config JSON > built-in
defaults. ``TUNA_SEED`` replaces the built-in default seed (0).

Exit codes: 0 success, 1 user or input error, 2 internal invariant violation.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import _kernels
from .assembler import AblationMode, assemble
from .datastore import (
    DEFAULT_K,
    IvfIndex,
    StoreEntry,
    build_flat,
    build_flat_arrays,
    knn,
    load,
    save,
    search,
    train_ivf,
)
from .embedder import EncoderSpec, SeededStream, l2_normalize, stub_image_embed, stub_text_embed
from .errors import MissingCaptionError, TunaError
from .evalkit import (
    JudgedPair,
    confusion,
    f1_from_pr,
    metrics,
    read_answers,
    relative_score,
)
from .tag_encoder import ConnectorParams, TagEncoder, init_connector
from .tagminer import MinerConfig, StatsAccumulator, mine_tags, read_captions

DEFAULTS = {
    "dim": 64,
    "grid_h": 4,
    "grid_w": 4,
    "k": DEFAULT_K,
    "ivf_iters": 10,
    "queries": 100,
}

EPILOG = (
    "Configuration precedence: flags > --config JSON > built-in defaults. "
    "TUNA_SEED overrides the default seed 0."
)


class UserError(Exception):
    """Bad flags or inputs; reported on stderr with exit code 1."""


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def default_seed() -> int:
    raw = os.environ.get("TUNA_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw, 0)
    except ValueError:
        raise UserError(f"TUNA_SEED must be an integer, got {raw!r}") from None


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UserError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UserError(f"config {path} must hold a JSON object")
    return cfg


def _pick(args, name, cfg_value, default):
    value = getattr(args, name, None)
    if value is not None:
        return value
    if cfg_value is not None:
        return cfg_value
    return default


def resolve_settings(args) -> dict:
    """Merge flags, config file and defaults into one settings dict."""
    cfg = _load_config(getattr(args, "config", None))
    enc = cfg.get("encoder", {})
    ivf = cfg.get("ivf", {})
    seed = default_seed()
    s = {
        "dim": _pick(args, "dim", enc.get("dim"), DEFAULTS["dim"]),
        "grid_h": _pick(args, "grid_h", enc.get("grid_h"), DEFAULTS["grid_h"]),
        "grid_w": _pick(args, "grid_w", enc.get("grid_w"), DEFAULTS["grid_w"]),
        "encoder_seed": _pick(args, "encoder_seed", enc.get("seed"), seed),
        "store": _pick(args, "store", cfg.get("store"), None),
        "k": _pick(args, "k", cfg.get("k"), DEFAULTS["k"]),
        "nlist": _pick(args, "ivf", ivf.get("nlist"), None),
        "nprobe": _pick(args, "nprobe", ivf.get("nprobe"), None),
        "ivf_iters": _pick(args, "ivf_iters", ivf.get("iters"), DEFAULTS["ivf_iters"]),
        "ivf_seed": _pick(args, "ivf_seed", ivf.get("seed"), seed),
        "miner_config": _pick(args, "miner_config", cfg.get("miner_config"), None),
        "seed": _pick(args, "seed", cfg.get("seed"), seed),
    }
    if s["k"] < 1:
        raise UserError("--k must be >= 1")
    try:
        s["encoder"] = EncoderSpec(int(s["dim"]), int(s["grid_h"]), int(s["grid_w"]), int(s["encoder_seed"]))
    except ValueError as exc:
        raise UserError(str(exc)) from exc
    return s


def _require_file(path, what: str) -> Path:
    if path is None:
        raise UserError(f"missing {what} path")
    p = Path(path)
    if not p.is_file():
        raise UserError(f"{what} not found: {p}")
    return p


def _require_dir_for(path) -> Path:
    p = Path(path)
    parent = p.parent if str(p.parent) else Path(".")
    if not parent.is_dir():
        raise UserError(f"output directory does not exist: {parent}")
    return p


def _write_atomic(path: Path, data: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(data, encoding="utf-8")
    os.replace(tmp, path)


def _load_store(path):
    _require_file(path, "store")
    try:
        return load(path)
    except TunaError as exc:
        raise UserError(f"bad store {path}: {exc}") from exc


# ------------------------------------------------------------------- commands

def cmd_mine(args) -> int:
    s = resolve_settings(args)
    src = _require_file(args.input, "input")
    out = _require_dir_for(args.output)
    overrides = _load_config(s["miner_config"])
    if args.max_tag_len is not None:
        overrides["max_tag_len"] = args.max_tag_len
    miner = MinerConfig.from_dict(overrides)
    acc = StatsAccumulator()
    lines = []
    with open(src, encoding="utf-8") as fh:
        for _, rec in read_captions(fh):
            tags = mine_tags(rec.caption, miner)
            acc.add(tags)
            lines.append(_dump({"id": rec.id, "tags": tags}))
    _write_atomic(out, "".join(line + "\n" for line in lines))
    stats = acc.finalize().to_dict()
    stats["records"] = acc.records
    print(_dump(stats))
    return 0


def _read_tag_lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                tags = obj["tags"]
                if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
                    raise TypeError("tags must be a list of strings")
                yield lineno, str(obj["id"]), tags, obj.get("caption")
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc


def _read_caption_map(path) -> dict:
    with open(_require_file(path, "captions"), encoding="utf-8") as fh:
        return {rec.id: rec.caption for _, rec in read_captions(fh)}


def cmd_build(args) -> int:
    s = resolve_settings(args)
    src = _require_file(args.input, "input")
    out = _require_dir_for(args.output)
    spec = s["encoder"]
    rows = list(_read_tag_lines(src))
    captions = _read_caption_map(args.captions) if args.captions else {}

    def caption_of(image_id, inline):
        if not args.with_captions:
            return None
        return inline if inline is not None else captions.get(image_id)

    ids = [r[1] for r in rows]
    tags = [r[2] for r in rows]
    caps = [caption_of(r[1], r[3]) for r in rows]
    if args.embeddings_file:
        raw = np.fromfile(_require_file(args.embeddings_file, "embeddings file"), dtype="<f4")
        if raw.size != len(ids) * spec.dim:
            raise UserError(f"embeddings file holds {raw.size} floats, expected {len(ids)} x {spec.dim}")
        keys = raw.reshape(len(ids), spec.dim).astype(np.float64)
        keys = np.stack([l2_normalize(k) for k in keys]) if len(ids) else keys
        flat = build_flat_arrays(ids, keys, tags, caps)
    else:
        flat = build_flat(
            (StoreEntry(i, stub_image_embed(i, spec)[1], tuple(t), c) for i, t, c in zip(ids, tags, caps)),
            spec.dim,
        )
    index = flat
    if s["nlist"] is not None:
        index = train_ivf(flat, int(s["nlist"]), int(s["ivf_seed"]), int(s["ivf_iters"]))
    save(index, out)
    summary = {"count": len(flat), "dim": flat.dim, "kind": "ivf" if isinstance(index, IvfIndex) else "flat",
               "output": str(out)}
    if isinstance(index, IvfIndex):
        summary["nlist"] = index.nlist
    print(_dump(summary))
    return 0


def _query_vector(args, spec):
    if (args.image_id is None) == (args.text is None):
        raise UserError("give exactly one of --image-id or --text")
    if args.image_id is not None:
        return stub_image_embed(args.image_id, spec)[1]
    return stub_text_embed(args.text, spec)


def cmd_query(args) -> int:
    s = resolve_settings(args)
    store = _load_store(s["store"])
    if store.dim != s["encoder"].dim:
        raise UserError(f"store dim {store.dim} does not match encoder dim {s['encoder'].dim}")
    q = _query_vector(args, s["encoder"])
    hits = search(store, q, s["k"], nprobe=s["nprobe"], exclude_id=args.exclude_id)
    print(_dump([h.to_dict() for h in hits]))
    return 0


def cmd_assemble(args) -> int:
    s = resolve_settings(args)
    mode = AblationMode.parse(args.mode)
    store = None if mode is AblationMode.NO_TAGS and s["store"] is None else _load_store(s["store"])
    if store is not None and store.dim != s["encoder"].dim:
        raise UserError(f"store dim {store.dim} does not match encoder dim {s['encoder'].dim}")
    out = _require_dir_for(args.out)
    csv_path = _require_dir_for(args.weights_csv) if args.weights_csv else None
    spec = s["encoder"]
    if args.connector:
        params = ConnectorParams.from_json(_require_file(args.connector, "connector").read_text(encoding="utf-8"))
    else:
        params = init_connector(spec.dim, spec.dim, spec.dim, spec.seed)
    try:
        layout = assemble(args.image_id, args.instruction, store, mode, TagEncoder(spec, params),
                          seed=int(s["seed"]), k=s["k"], exclude_id=args.exclude_id, nprobe=s["nprobe"])
    except MissingCaptionError as exc:
        raise UserError(f"captions mode needs stored captions; missing for: {', '.join(exc.ids)}") from exc
    _write_atomic(out, layout.to_json() + "\n")
    if csv_path is not None:
        _write_atomic(csv_path, layout.weights_csv())
    print(_dump({"mode": mode.value, "segments": len(layout.segments), "tags": [t.tag for t in layout.tuples]}))
    return 0


def _read_judged(path):
    pairs = []
    with open(_require_file(path, "judged"), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                pairs.append(JudgedPair(str(obj["id"]), float(obj["candidate"]), float(obj["reference"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
    return pairs


def cmd_eval(args) -> int:
    if args.f1 is not None:
        p, r = args.f1
        print(_dump({"f1": round(100.0 * f1_from_pr(p / 100.0, r / 100.0), 2), "precision": p, "recall": r}))
        return 0
    if args.judged is not None:
        print(_dump({"relative_score": round(relative_score(_read_judged(args.judged)), 2)}))
        return 0
    if args.pred is None or args.gold is None:
        raise UserError("eval needs --pred and --gold (or --f1 P R, or --judged)")
    with open(_require_file(args.pred, "pred"), encoding="utf-8") as fh:
        preds = list(read_answers(fh))
    with open(_require_file(args.gold, "gold"), encoding="utf-8") as fh:
        golds = list(read_answers(fh))
    counts = confusion(preds, golds)
    report = metrics(counts).to_dict()
    report["counts"] = {"tp": counts.tp, "fp": counts.fp, "tn": counts.tn, "fn": counts.fn}
    print(_dump(report))
    return 0


def _bench_queries(store, n: int, source: str, seed: int):
    flat = store.flat
    if source == "stored":
        picks = SeededStream(seed, "bench-queries").sample(len(flat), n)
        return [(flat.keys[i].astype(np.float64) / np.linalg.norm(flat.keys[i]), flat.ids[i]) for i in picks]
    vals = SeededStream(seed, "bench-queries").uniform(n * flat.dim).reshape(n, flat.dim)
    return [(l2_normalize(v), None) for v in vals]


def _timed(fn, queries):
    results, elapsed = [], 0.0
    for q, ex in queries:
        t0 = time.perf_counter()
        results.append(fn(q, ex))
        elapsed += time.perf_counter() - t0
    return results, 1000.0 * elapsed / max(1, len(queries))


def cmd_bench(args) -> int:
    s = resolve_settings(args)
    store = _load_store(s["store"])
    if len(store) == 0:
        raise UserError("store is empty; nothing to benchmark")
    k = s["k"]
    queries = _bench_queries(store, args.queries, args.query_source, int(s["seed"]))
    exact, flat_ms = _timed(lambda q, ex: knn(store.flat, q, k, exclude_id=ex), queries)
    configs = [{"index": "flat", "nprobe": None, "mean_latency_ms": round(flat_ms, 4), "recall_at_k": 1.0}]
    if isinstance(store, IvfIndex):
        probes = args.nprobe or [1, max(1, store.nlist // 8), store.nlist]
        for nprobe in sorted(set(probes)):
            if not 1 <= nprobe <= store.nlist:
                raise UserError(f"nprobe {nprobe} outside [1, {store.nlist}]")
            got, ms = _timed(lambda q, ex: search(store, q, k, nprobe=nprobe, exclude_id=ex), queries)
            recall = np.mean([
                len({h.image_id for h in g} & {h.image_id for h in e}) / len(e) if e else 1.0
                for g, e in zip(got, exact)
            ])
            configs.append({"index": "ivf", "nprobe": nprobe, "mean_latency_ms": round(ms, 4),
                            "recall_at_k": float(recall)})
    print(_dump({"backend": _kernels.BACKEND, "count": len(store), "dim": store.dim, "k": k,
                 "queries": len(queries), "query_source": args.query_source, "configs": configs}))
    return 0


# --------------------------------------------------------------------- parser

def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def _add_encoder_flags(p):
    g = p.add_argument_group("stub encoder")
    g.add_argument("--dim", type=int, help=f"embedding width (default {DEFAULTS['dim']})")
    g.add_argument("--grid-h", type=int, help=f"grid rows (default {DEFAULTS['grid_h']})")
    g.add_argument("--grid-w", type=int, help=f"grid columns (default {DEFAULTS['grid_w']})")
    g.add_argument("--encoder-seed", type=int, help="stub encoder seed (default TUNA_SEED or 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tuna", description=__doc__.split("\n\n")[0], epilog=EPILOG)
    parser.add_argument("--config", help="CliConfig JSON file")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=EPILOG)
        p.add_argument("--config", default=argparse.SUPPRESS, help="CliConfig JSON file")
        return p

    p = add("mine", "mine tags from a captions JSONL file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--max-tag-len", type=int, help="drop tags longer than this (default 30)")
    p.add_argument("--miner-config", help="JSON with lexicon overrides")
    p.set_defaults(func=cmd_mine)

    p = add("build", "build a TUNADS store from a tags JSONL file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--ivf", type=int, metavar="NLIST", help="train an IVF index with NLIST lists")
    p.add_argument("--ivf-iters", type=int, help="k-means iterations (default 10)")
    p.add_argument("--ivf-seed", type=int, help="k-means init seed (default TUNA_SEED or 0)")
    p.add_argument("--with-captions", action="store_true", help="keep captions (for captions mode)")
    p.add_argument("--captions", help="captions JSONL to merge by id (with --with-captions)")
    p.add_argument("--embeddings-file", help="raw little-endian float32 rows, one per input line")
    _add_encoder_flags(p)
    p.set_defaults(func=cmd_build)

    p = add("query", "k-NN query against a store")
    p.add_argument("--store")
    p.add_argument("--image-id")
    p.add_argument("--text")
    p.add_argument("--k", type=int, help=f"neighbors (default {DEFAULT_K})")
    p.add_argument("--nprobe", type=int, help="IVF lists to probe (default all)")
    p.add_argument("--exclude-id", help="drop this id from results")
    _add_encoder_flags(p)
    p.set_defaults(func=cmd_query)

    p = add("assemble", "assemble a prompt layout for one image")
    p.add_argument("--store")
    p.add_argument("--image-id", required=True)
    p.add_argument("--instruction", required=True)
    p.add_argument("--mode", default="full",
                   choices=["full", "no-tuner", "no-tags", "random-tags", "captions",
                            "no_tuner", "no_tags", "random_tags"])
    p.add_argument("--seed", type=int, help="random-tags sampling seed (default TUNA_SEED or 0)")
    p.add_argument("--out", required=True, help="layout JSON path")
    p.add_argument("--weights-csv", help="tag,raw_score,weight CSV path")
    p.add_argument("--k", type=int, help=f"neighbors (default {DEFAULT_K})")
    p.add_argument("--nprobe", type=int)
    p.add_argument("--exclude-id")
    p.add_argument("--connector", help="ConnectorParams JSON (default: seeded init)")
    _add_encoder_flags(p)
    p.set_defaults(func=cmd_assemble)

    p = add("eval", "yes/no metrics, F1 from P/R, or judged relative score")
    p.add_argument("--pred")
    p.add_argument("--gold")
    p.add_argument("--f1", nargs=2, type=float, metavar=("P", "R"), help="precision and recall in percent")
    p.add_argument("--judged", help="JSONL of {id, candidate, reference} judge scores")
    p.set_defaults(func=cmd_eval)

    p = add("bench", "measure retrieval latency and recall@k")
    p.add_argument("--store")
    p.add_argument("--queries", type=int, default=DEFAULTS["queries"])
    p.add_argument("--k", type=int)
    p.add_argument("--nprobe", type=_int_list, help="comma-separated nprobe values")
    p.add_argument("--query-source", choices=["random", "stored"], default="random",
                   help="random unit vectors, or stored keys queried leave-one-out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UserError, TunaError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"tuna {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"tuna {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
