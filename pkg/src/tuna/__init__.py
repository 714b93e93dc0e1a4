"""Tag-grounded retrieval augmentation for multimodal instruction tuning.

Submodules: ``embedder`` (vector math, stub encoders), ``tagminer`` (caption
to tags), ``datastore`` (k-NN tag store), ``tag_encoder`` (image-aware tag
encoder, weight tuner), ``assembler`` (prompt layouts), ``evalkit`` (metrics),
``cli``.
"""
from ._kernels import BACKEND
from .assembler import AblationMode, PromptLayout, RetrievalPool, assemble, retrieve_tag_pool
from .datastore import (
    FlatIndex,
    IvfIndex,
    QueryHit,
    StoreEntry,
    build_flat,
    build_flat_arrays,
    knn,
    knn_ivf,
    load,
    save,
    search,
    train_ivf,
)
from .embedder import EncoderSpec, GridFeatures, cosine, l2_normalize, stub_image_embed, stub_text_embed
from .evalkit import (
    ConfusionCounts,
    JudgedPair,
    MetricsReport,
    confusion,
    export_heatmap,
    f1_from_pr,
    metrics,
    relative_score,
)
from .tag_encoder import (
    AttentionTrace,
    ConnectorParams,
    TagEncoder,
    TagTuple,
    connector,
    cross_attention,
    encode_tag,
    init_connector,
    tune_weights,
)
from .tagminer import CorpusStats, MinerConfig, corpus_stats, extract_entities, mine_tags, normalize_tag

__version__ = "0.1.0"
