"""Standalone recomputation of full-mode tag weights for one query image.

Reads a tags JSONL file (``{"id", "tags"}`` per line), rebuilds every stub key
and the query's <CLS> vector from scratch, brute-force retrieves the top-k,
pools tags, scores each tag by cosine against <CLS>, and min-max normalizes.
Prints ``tag,raw_score,weight`` in descending weight order (ties by tag).

    python tests/oracle_weights.py --tags tags.jsonl --image-id query-0
"""
import argparse
import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np  # noqa: E402

from oracles import brute_force_knn, image_vectors, minmax, text_vector  # noqa: E402


def recompute(tag_rows, image_id, dim=64, grid_h=4, grid_w=4, seed=0, k=5):
    cells = grid_h * grid_w
    keys = np.array([image_vectors(r["id"], dim, cells, seed)[1] for r in tag_rows], dtype=np.float32)
    _, cls_vec = image_vectors(image_id, dim, cells, seed)
    if len(tag_rows) == 0:
        return []
    top, _ = brute_force_knn(keys, cls_vec, k)
    pooled = []
    for i in top:
        for t in tag_rows[i]["tags"]:
            if t not in pooled:
                pooled.append(t)
    if not pooled:
        return []
    raw = []
    for t in pooled:
        q = text_vector(t, dim, seed)
        raw.append(max(-1.0, min(1.0, math.fsum(a * b for a, b in zip(q, cls_vec)))))
    weights = minmax(raw)
    rows = sorted(zip(pooled, raw, weights), key=lambda r: (-r[2], r[0]))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--tags", required=True)
    ap.add_argument("--image-id", required=True)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--grid-h", type=int, default=4)
    ap.add_argument("--grid-w", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--k", type=int, default=5)
    args = ap.parse_args(argv)
    with open(args.tags, encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    print("tag,raw_score,weight")
    for tag, raw, w in recompute(rows, args.image_id, args.dim, args.grid_h, args.grid_w, args.seed, args.k):
        print(f"{tag},{raw!r},{w!r}")


if __name__ == "__main__":
    main()
