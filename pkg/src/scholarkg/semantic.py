"""Semantic document vectors: sentence vectors -> section means -> document mean.

Sentence vectors come either from an external encoder (CSV input) or from
the built-in signed feature-hashing encoder, which needs no model weights.
"""
import hashlib
import logging
import re
from dataclasses import dataclass, field

import numpy as np

from ._io import fmt_float, iter_csv, read_csv_columns, write_csv, write_json
from .ingest import SECTIONS

logger = logging.getLogger(__name__)

SECTION_FLAGS = {"title": "t", "abstract": "a", "body": "b"}
EXACT_PAIR_LIMIT = 5000
SAMPLED_PAIRS = 1_000_000

_BOUNDARY = re.compile(r"(?<=[.!?])\s+(?=[A-Z0-9])")
_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class SemanticConfig:
    dim: int = 768
    source: str = "fallback_hashing"
    sections_used: tuple = SECTIONS

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.source not in ("external_vectors", "fallback_hashing"):
            raise ValueError(f"unknown source {self.source!r}")
        if not set(self.sections_used) <= set(SECTIONS) or not self.sections_used:
            raise ValueError(f"sections_used must be a non-empty subset of {SECTIONS}")


@dataclass
class DocumentEmbedding:
    paper_id: str
    vector: np.ndarray
    sections_present: tuple
    section_vectors: dict = field(default_factory=dict)


def split_sentences(text):
    """Split on ``.``/``!``/``?`` followed by whitespace and an uppercase
    letter or digit.

    >>> split_sentences("A b. C d.")
    ['A b.', 'C d.']
    """
    return [s.strip() for s in _BOUNDARY.split(text or "") if s.strip()]


def _hash64(token):
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big")


def fallback_encode(sentence, dim):
    """Signed feature hashing of lowercase alphanumeric tokens, L2-normalized.

    Each token's 64-bit BLAKE2b digest picks the slot (``hash % dim``) and
    the sign (bit 63). Returns the zero vector when there are no tokens.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    vec = np.zeros(dim)
    for tok in _TOKEN.findall(sentence.lower()):
        h = _hash64(tok)
        vec[h % dim] += -1.0 if h >> 63 else 1.0
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def document_vector(sections, paper_id=None):
    """Average sentence vectors within each section, then average the
    available section means with equal weight. Empty sections are skipped."""
    means = {}
    for name in SECTIONS:
        vecs = sections.get(name)
        if vecs is not None and len(vecs):
            means[name] = np.mean(np.asarray(vecs, dtype=float), axis=0)
    if not means:
        raise ValueError(f"paper {paper_id!r}: no section has a sentence vector")
    present = tuple(s for s in SECTIONS if s in means)
    vec = np.mean([means[s] for s in present], axis=0)
    return DocumentEmbedding(paper_id, vec, present, means)


def _section_texts(corpus):
    texts = {p.paper_id: {"title": p.title} for p in corpus.papers}
    for s in corpus.sections:
        texts.setdefault(s.paper_id, {})[s.section] = s.text
    return texts


def embed_corpus(corpus, config=None):
    """One :class:`DocumentEmbedding` per paper, keyed and ordered by paper_id.

    Papers with nothing to embed are skipped with a warning.
    """
    config = config or SemanticConfig()
    used = set(config.sections_used)
    out = {}
    if config.source == "fallback_hashing":
        for pid, texts in sorted(_section_texts(corpus).items()):
            sections = {}
            for name, text in texts.items():
                if name in used:
                    sents = split_sentences(text)
                    if sents:
                        sections[name] = [fallback_encode(s, config.dim) for s in sents]
            if sections:
                out[pid] = document_vector(sections, pid)
            else:
                logger.warning("paper %s has no text to embed", pid)
        return out

    grouped = {}
    for (pid, section), mat in corpus.sentence_vectors.items():
        if section in used:
            grouped.setdefault(pid, {})[section] = mat
    for pid, sections in sorted(grouped.items()):
        out[pid] = document_vector(sections, pid)
    for pid, vec in sorted(corpus.semantic_vectors.items()):
        if pid not in out:
            out[pid] = DocumentEmbedding(pid, np.asarray(vec, dtype=float), ())
    if not out:
        raise ValueError("external_vectors source selected but the corpus has no vectors")
    return dict(sorted(out.items()))


def _unit_rows(mat):
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    return np.divide(mat, norms, out=np.zeros_like(mat), where=norms > 0)


def mean_pairwise_cosine(mat, seed=0, exact_limit=EXACT_PAIR_LIMIT, n_pairs=SAMPLED_PAIRS):
    """Mean cosine similarity over unordered row pairs (zero rows count as 0).

    Exact below ``exact_limit`` rows, otherwise a seeded sample of pairs.
    """
    u = _unit_rows(np.asarray(mat, dtype=float))
    n = len(u)
    if n < 2:
        raise ValueError("need at least two vectors")
    if n <= exact_limit:
        s = u.sum(axis=0)
        sq = np.einsum("ij,ij->", u, u)
        return float((s @ s - sq) / (n * (n - 1)))
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, n_pairs)
    j = rng.integers(0, n - 1, n_pairs)
    j[j >= i] += 1
    return float(np.mean(np.einsum("ij,ij->i", u[i], u[j])))


def corpus_semantics_report(corpus, embeddings, seed=0):
    """Per-section and combined coverage plus mean pairwise cosine."""
    n = len(corpus.papers)
    rows = {}
    for name in SECTIONS:
        vecs = [e.section_vectors[name] for _, e in sorted(embeddings.items())
                if name in e.section_vectors]
        rows[name] = {
            "coverage": len(vecs) / n if n else 0.0,
            "papers": len(vecs),
            "mean_cosine_similarity": mean_pairwise_cosine(vecs, seed) if len(vecs) >= 2 else None,
        }
    docs = [e.vector for _, e in sorted(embeddings.items())]
    rows["combined"] = {
        "coverage": len(docs) / n if n else 0.0,
        "papers": len(docs),
        "mean_cosine_similarity": mean_pairwise_cosine(docs, seed) if len(docs) >= 2 else None,
    }
    return rows


def write_document_embeddings(embeddings, path, header=None):
    dim = len(next(iter(embeddings.values())).vector)
    write_csv(path, ["paper_id", "sections_present"] + [f"v{i}" for i in range(dim)],
              ([pid, "|".join(SECTION_FLAGS[s] for s in e.sections_present)]
               + [fmt_float(x) for x in e.vector] for pid, e in sorted(embeddings.items())),
              header)


def read_document_embeddings(path):
    inv = {v: k for k, v in SECTION_FLAGS.items()}
    vcols = [c for c in read_csv_columns(path) if re.fullmatch(r"v\d+", c)]
    out = {}
    for _, _, row in iter_csv(path):
        flags = tuple(inv[f] for f in row["sections_present"].split("|") if f)
        out[row["paper_id"]] = DocumentEmbedding(
            row["paper_id"], np.array([float(row[c]) for c in vcols]), flags)
    return out


def write_semantics_report(report, path, header=None):
    write_json(path, {"sections": report}, header)
