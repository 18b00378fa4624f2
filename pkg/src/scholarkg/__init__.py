"""Scholarly knowledge graph toolkit: curation, TransE, similarity search, evaluation."""
from ._io import __version__
from .curation import CurationConfig, curate, normalize_author, normalize_concept
from .graph import PropertyGraph, build_graph
from .ingest import Corpus, IngestConfig, load_corpus, validate_corpus
from .kge import KgeConfig, KgeModel, kfold_validate, score_triplet, train
from .semantic import SemanticConfig, embed_corpus
from .similarity import EmbeddingIndex, batch_top_k, combine, top_k

__all__ = [
    "__version__", "Corpus", "CurationConfig", "EmbeddingIndex", "IngestConfig", "KgeConfig",
    "KgeModel", "PropertyGraph", "SemanticConfig", "batch_top_k", "build_graph", "combine",
    "curate", "embed_corpus", "kfold_validate", "load_corpus", "normalize_author",
    "normalize_concept", "score_triplet", "top_k", "train", "validate_corpus",
]
