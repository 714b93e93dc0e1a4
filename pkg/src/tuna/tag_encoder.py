"""Image-aware tag encoder and adaptive weight tuner.

For a tag with global text feature ``q`` and the input image's grid features
``Z`` (one row per patch), the tag-aware image feature is single-query
scaled dot-product attention::

    attn = softmax(Z @ q / sqrt(D))
    z_vt = attn @ Z

``z_vt`` goes through the same MLP connector as the image grid to give the
tag-aware image token. Each tag is scored by cosine between ``q`` and the
image's <CLS> feature; scores over the retrieved tags are min-max normalized
into weights in [0, 1].
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from .embedder import (
    EncoderSpec,
    GridFeatures,
    LinearProjection,
    SeededStream,
    cosine,
    seeded_projection,
    stub_text_embed,
)
from .errors import (
    DimensionMismatchError,
    EmptyInputError,
    EmptyTextError,
    NonFiniteError,
    OutOfRangeError,
    ShapeMismatchError,
)

DEGENERATE_SPREAD = 1e-12
ACTIVATION = "gelu"


def gelu(x):
    """Exact (erf-based) Gaussian error linear unit."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


@dataclass(frozen=True)
class ConnectorParams:
    """Two-layer MLP ``h(z) = gelu(z @ w1 + b1) @ w2 + b2`` (row-vector convention)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("w1", "b1", "w2", "b2"):
            a = np.array(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(a)):
                raise NonFiniteError(f"connector {name} contains NaN or Inf")
            a.setflags(write=False)
            arrays[name] = a
        w1, b1, w2, b2 = arrays["w1"], arrays["b1"], arrays["w2"], arrays["b2"]
        if w1.ndim != 2 or w2.ndim != 2 or b1.shape != (w1.shape[1],) \
                or w2.shape[0] != w1.shape[1] or b2.shape != (w2.shape[1],):
            raise ShapeMismatchError(
                f"inconsistent connector shapes w1{w1.shape} b1{b1.shape} w2{w2.shape} b2{b2.shape}"
            )
        for name, a in arrays.items():
            object.__setattr__(self, name, a)

    @property
    def d_in(self) -> int:
        return self.w1.shape[0]

    @property
    def d_hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def d_out(self) -> int:
        return self.w2.shape[1]

    def to_json(self) -> str:
        payload = {
            "activation": ACTIVATION,
            "d_in": self.d_in,
            "d_hidden": self.d_hidden,
            "d_out": self.d_out,
            "w1": self.w1.ravel().tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.ravel().tolist(),
            "b2": self.b2.tolist(),
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ConnectorParams":
        d = json.loads(text)
        if d.get("activation", ACTIVATION) != ACTIVATION:
            raise ValueError(f"unsupported activation {d['activation']!r}")
        d_in, d_hidden, d_out = d["d_in"], d["d_hidden"], d["d_out"]
        try:
            return cls(
                np.reshape(d["w1"], (d_in, d_hidden)),
                np.asarray(d["b1"]),
                np.reshape(d["w2"], (d_hidden, d_out)),
                np.asarray(d["b2"]),
            )
        except ValueError as exc:
            raise ShapeMismatchError(str(exc)) from exc


def init_connector(d_in: int, d_hidden: int, d_out: int, seed: int = 0) -> ConnectorParams:
    """Seeded uniform init in +-1/sqrt(fan_in), like a default linear layer."""
    s = SeededStream(seed, "connector")
    a1, a2 = 1.0 / math.sqrt(d_in), 1.0 / math.sqrt(d_hidden)
    return ConnectorParams(
        s.uniform(d_in * d_hidden).reshape(d_in, d_hidden) * a1,
        s.uniform(d_hidden) * a1,
        s.uniform(d_hidden * d_out).reshape(d_hidden, d_out) * a2,
        s.uniform(d_out) * a2,
    )


def connector(z, params: ConnectorParams) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim not in (1, 2) or z.shape[-1] != params.d_in:
        raise ShapeMismatchError(f"connector expects {params.d_in} input columns, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise NonFiniteError("connector input contains NaN or Inf")
    return gelu(z @ params.w1 + params.b1) @ params.w2 + params.b2


@dataclass(frozen=True)
class AttentionTrace:
    attention_weights: np.ndarray
    output: np.ndarray
    grid_h: int = 1
    grid_w: int = 1

    def to_csv(self) -> str:
        """One line per grid cell: ``row,col,weight``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "col", "weight"])
        for cell, a in enumerate(self.attention_weights.tolist()):
            w.writerow([cell // self.grid_w, cell % self.grid_w, f"{a:.8f}"])
        return buf.getvalue()


def _attention_inputs(q, grid):
    rows = grid.rows if isinstance(grid, GridFeatures) else np.asarray(grid, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ShapeMismatchError(f"grid must be a nonempty 2-d array, got shape {rows.shape}")
    if q.ndim != 1 or q.shape[0] != rows.shape[1]:
        raise DimensionMismatchError(f"query dim {q.shape} does not match grid dim {rows.shape[1]}")
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(rows))):
        raise NonFiniteError("attention inputs contain NaN or Inf")
    return q, rows


def _softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max())
    return e / e.sum()


def cross_attention(q, grid) -> AttentionTrace:
    q, rows = _attention_inputs(q, grid)
    weights = _softmax(rows @ q / math.sqrt(rows.shape[1]))
    gh, gw = (grid.grid_h, grid.grid_w) if isinstance(grid, GridFeatures) else (rows.shape[0], 1)
    return AttentionTrace(weights, weights @ rows, gh, gw)


def cross_attention_jvp(q, grid, direction) -> np.ndarray:
    """Directional derivative of the attention output w.r.t. the query.

    With ``a = softmax(l)`` and ``l_j = <q, z_j> / sqrt(D)``, the derivative of
    ``sum_j a_j z_j`` along ``v`` is ``sum_j a_j (dl_j - <a, dl>) z_j`` where
    ``dl_j = <v, z_j> / sqrt(D)``.
    """
    q, rows = _attention_inputs(q, grid)
    v = np.asarray(direction, dtype=np.float64)
    scale = math.sqrt(rows.shape[1])
    a = _softmax(rows @ q / scale)
    dl = rows @ v / scale
    return (a * (dl - a @ dl)) @ rows


def _minmax(scores: np.ndarray) -> np.ndarray:
    lo, hi = scores.min(), scores.max()
    if hi - lo <= DEGENERATE_SPREAD:
        return np.ones_like(scores)
    return (scores - lo) / (hi - lo)


def _affine(scores: np.ndarray) -> np.ndarray:
    return (scores + 1.0) / 2.0


WEIGHT_NORMALIZERS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "minmax": _minmax,
    "affine": _affine,
}


def tune_weights(raw_scores: Sequence[float], method: str = "minmax") -> list[float]:
    """Map cosine scores to weights in [0, 1], preserving input order.

    ``minmax`` (default) gives the best tag weight 1 and the worst 0; when all
    scores are equal every weight is 1. ``affine`` maps [-1, 1] linearly.
    """
    scores = np.asarray(list(raw_scores), dtype=np.float64)
    if scores.size == 0:
        raise EmptyInputError("no scores to normalize")
    if not np.all(np.isfinite(scores)) or np.any(np.abs(scores) > 1.0):
        raise OutOfRangeError("scores must be finite cosines in [-1, 1]")
    return np.clip(WEIGHT_NORMALIZERS[method](scores), 0.0, 1.0).tolist()


@dataclass
class TagTuple:
    tag: str
    image_token: np.ndarray
    text_tokens: np.ndarray
    raw_score: float
    weight: float | None = None
    tokens: tuple = field(default_factory=tuple)

    def weighted(self) -> tuple[np.ndarray, np.ndarray]:
        """Payloads scaled by the tuned weight (unweighted tuples count as weight 1)."""
        w = 1.0 if self.weight is None else self.weight
        return w * self.image_token, w * self.text_tokens


def whitespace_tokenize(text: str) -> list[str]:
    return text.split()


class TagEncoder:
    """Bundles the frozen stub encoders, connector and token embedding stub.

    ``query_projection`` maps text features into the vision feature width before
    attention; with the shared-width stub it is the identity and may be omitted.
    """

    def __init__(self, spec: EncoderSpec, params: ConnectorParams | None = None,
                 text_encoder: Callable[[str], np.ndarray] | None = None,
                 query_projection: LinearProjection | None = None,
                 tokenizer: Callable[[str], list[str]] = whitespace_tokenize):
        self.spec = spec
        self.params = params or init_connector(spec.dim, spec.dim, spec.dim, spec.seed)
        if self.params.d_in != spec.dim:
            raise ShapeMismatchError(f"connector input width {self.params.d_in} != encoder dim {spec.dim}")
        self.text_encoder = text_encoder or (lambda text: stub_text_embed(text, spec))
        self.query_projection = query_projection
        self.tokenizer = tokenizer
        self.token_projection = seeded_projection(spec.dim, self.params.d_out, spec.seed, "token-projection")

    @property
    def d_out(self) -> int:
        return self.params.d_out

    def embed_tokens(self, text: str) -> tuple[list[str], np.ndarray]:
        """Stub for the LLM tokenizer + embedding table: one vector per whitespace token."""
        tokens = self.tokenizer(text)
        if not tokens:
            raise EmptyTextError("nothing to tokenize")
        mat = np.stack([stub_text_embed(t, self.spec) for t in tokens])
        return tokens, self.token_projection(mat)

    def image_tokens(self, grid: GridFeatures) -> np.ndarray:
        return connector(grid.rows, self.params)

    def encode(self, tag: str, grid: GridFeatures, cls_vec) -> tuple[TagTuple, AttentionTrace]:
        if not tag or not tag.strip():
            raise EmptyTextError("tag is empty")
        q = self.text_encoder(tag)
        raw_score = cosine(q, cls_vec)
        if self.query_projection is not None:
            q = self.query_projection(q)
        trace = cross_attention(q, grid)
        tokens, text_tokens = self.embed_tokens(tag)
        tt = TagTuple(tag, connector(trace.output, self.params), text_tokens, raw_score, tokens=tuple(tokens))
        return tt, trace


def encode_tag(tag: str, grid: GridFeatures, cls_vec, params: ConnectorParams,
               spec: EncoderSpec) -> TagTuple:
    return TagEncoder(spec, params).encode(tag, grid, cls_vec)[0]
