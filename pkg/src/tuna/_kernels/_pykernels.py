"""Pure numpy/Python kernels.

Arithmetic order matches ``_ckernels.pyx`` exactly: scores are accumulated in
float64, one key dimension at a time (d = 0..D-1), with no fused multiply-add.
Both backends therefore return bit-identical scores.
"""
import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
XS_MULT = 0x2545F4914F6CDD1D
INV_2_53 = 1.0 / 9007199254740992.0


def xorshift_fill(state, n):
    """Draw ``n`` uniforms in [-1, 1) from an xorshift64* stream.

    Returns ``(values, next_state)``.
    """
    x = state & MASK64
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        r = (x * XS_MULT) & MASK64
        out[i] = 2.0 * ((r >> 11) * INV_2_53) - 1.0
    return out, x


def dot_scores(keys_t, query, rows=None):
    dim = keys_t.shape[0]
    if rows is not None:
        keys_t = keys_t[:, rows]
    acc = np.zeros(keys_t.shape[1], dtype=np.float64)
    for d in range(dim):
        acc += keys_t[d].astype(np.float64) * query[d]
    return acc


def _select(idx, scores, k):
    n = scores.shape[0]
    if n > k:
        thr = np.partition(scores, n - k)[n - k]
        keep = scores >= thr
        idx, scores = idx[keep], scores[keep]
    order = np.lexsort((idx, -scores))[:k]
    return idx[order], scores[order]


def scan_topk(keys_t, query, k, rows=None, exclude=-1):
    scores = dot_scores(keys_t, query, rows)
    if rows is None:
        idx = np.arange(scores.shape[0], dtype=np.int64)
    else:
        idx = np.asarray(rows, dtype=np.int64)
    if exclude >= 0:
        keep = idx != exclude
        idx, scores = idx[keep], scores[keep]
    if k <= 0 or idx.shape[0] == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    return _select(idx, scores, k)


def assign_nearest(keys_t, centroids):
    n = keys_t.shape[1]
    labels = np.zeros(n, dtype=np.int64)
    best = np.full(n, -np.inf, dtype=np.float64)
    cent64 = centroids.astype(np.float64)
    for c in range(cent64.shape[0]):
        s = dot_scores(keys_t, cent64[c])
        better = s > best
        labels[better] = c
        best[better] = s[better]
    return labels, best
