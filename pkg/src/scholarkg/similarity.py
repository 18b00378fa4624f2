"""Fuse semantic and graph paper vectors and answer top-k cosine queries.

Fusion is a weighted concatenation of L2-normalized parts, so for unit
parts the combined cosine is ``(a^2 cos_sem + b^2 cos_kge) / (a^2 + b^2)``.
Search is an exact brute-force scan; ties break on paper_id.
"""
import logging
from dataclasses import dataclass

import numpy as np

from ._io import fmt_float, iter_csv, write_csv

logger = logging.getLogger(__name__)

METHODS = ("semantic", "kge", "combined", "random")


@dataclass
class CombinedEmbedding:
    paper_id: str
    vector: np.ndarray
    weights: tuple
    partial: bool = False


@dataclass
class RecommendationList:
    source: str
    entries: list  # [(paper_id, cosine_distance)], best first
    k: int

    @property
    def paper_ids(self):
        return [p for p, _ in self.entries]


def _unit(vec):
    vec = np.asarray(vec, dtype=float)
    n = np.linalg.norm(vec)
    return (vec / n, True) if n > 0 else (np.zeros_like(vec), False)


def combine(sem, kge_vec, weights=(1.0, 1.0), paper_id=None, sem_dim=None, kge_dim=None):
    """Concatenate ``w_sem * unit(sem)`` and ``w_kge * unit(kge)``.

    A missing (``None``) or zero-norm part becomes a zero block of
    ``sem_dim``/``kge_dim`` entries and marks the result partial.
    """
    w_sem, w_kge = weights
    if w_sem < 0 or w_kge < 0:
        raise ValueError("weights must be non-negative")
    if sem is None and kge_vec is None:
        raise ValueError(f"paper {paper_id!r}: both embedding parts absent")
    if hasattr(sem, "vector"):
        paper_id = paper_id or sem.paper_id
        sem = sem.vector
    partial = False
    blocks = []
    for part, w, dim in ((sem, w_sem, sem_dim), (kge_vec, w_kge, kge_dim)):
        if part is None:
            if dim is None:
                raise ValueError("dimension of the absent part must be given")
            blocks.append(np.zeros(dim))
            partial = True
            continue
        u, ok = _unit(part)
        if not ok:
            logger.warning("paper %s: zero-norm embedding part", paper_id)
            partial = True
        blocks.append(w * u)
    return CombinedEmbedding(paper_id, np.concatenate(blocks), (w_sem, w_kge), partial)


class EmbeddingIndex:
    """Immutable paper-vector matrix, rows sorted by paper_id."""

    def __init__(self, vectors):
        items = sorted(vectors.items())
        if not items:
            raise ValueError("empty index")
        self.paper_ids = tuple(pid for pid, _ in items)
        mat = np.vstack([np.asarray(getattr(v, "vector", v), dtype=float) for _, v in items])
        norms = np.linalg.norm(mat, axis=1, keepdims=True)
        self.unit = np.divide(mat, norms, out=np.zeros_like(mat), where=norms > 0)
        self.unit.setflags(write=False)
        self._pos = {pid: i for i, pid in enumerate(self.paper_ids)}

    def __len__(self):
        return len(self.paper_ids)

    def __contains__(self, paper_id):
        return paper_id in self._pos

    def position(self, paper_id):
        try:
            return self._pos[paper_id]
        except KeyError:
            raise KeyError(f"unknown paper {paper_id!r}") from None

    def distances(self, i):
        """Cosine distances from row ``i`` to every row, clipped to [0, 2]."""
        return np.clip(1.0 - self.unit @ self.unit[i], 0.0, 2.0)


_SLACK = 1e-9


def _rank(index, i, dist, k):
    # BLAS rounding depends on block shape, so shortlist with some slack and
    # recompute the shortlist with a per-row reduction whose result does not
    # depend on how the query was batched.
    dist = dist.copy()
    dist[i] = np.inf
    m = min(k, len(dist) - 1)
    if m <= 0:
        return RecommendationList(index.paper_ids[i], [], k)
    kth = np.partition(dist, m - 1)[m - 1]
    cands = np.flatnonzero(dist <= kth + _SLACK)
    exact = np.clip(1.0 - (index.unit[cands] * index.unit[i]).sum(axis=1), 0.0, 2.0)
    order = np.lexsort((cands, exact))[:m]  # ties go to the lower row, i.e. paper_id
    return RecommendationList(index.paper_ids[i],
                              [(index.paper_ids[cands[j]], float(exact[j])) for j in order], k)


def top_k(index, source, k=5):
    """Exact top-k neighbours of ``source`` by cosine distance, excluding itself."""
    if k < 1:
        raise ValueError("k must be >= 1")
    i = index.position(source)
    return _rank(index, i, index.distances(i), k)


def batch_top_k(index, k=5, chunk=1024):
    """:func:`top_k` for every paper, computed in row blocks."""
    if k < 1:
        raise ValueError("k must be >= 1")
    out = {}
    for start in range(0, len(index), chunk):
        block = np.clip(1.0 - index.unit[start:start + chunk] @ index.unit.T, 0.0, 2.0)
        for off, dist in enumerate(block):
            i = start + off
            out[index.paper_ids[i]] = _rank(index, i, dist, k)
    return out


def random_recommendations(paper_ids, k=5, seed=None):
    """``k`` distinct papers per source, uniform without replacement, source
    excluded. A seed is mandatory so baselines are reproducible."""
    if seed is None:
        raise ValueError("random recommendations require an explicit seed")
    ids = sorted(paper_ids)
    rng = np.random.default_rng(seed)
    n = len(ids)
    m = min(k, n - 1)
    out = {}
    for i, pid in enumerate(ids):
        pick = rng.choice(n - 1, size=m, replace=False)
        pick[pick >= i] += 1
        out[pid] = RecommendationList(pid, [(ids[j], float("nan")) for j in pick], k)
    return out


def build_vectors(method, semantic=None, kge=None, weights=(1.0, 1.0)):
    """Per-paper vectors for ``semantic``, ``kge`` or ``combined`` search.

    ``semantic`` maps paper_id to DocumentEmbedding (or array); ``kge``
    maps paper_id to array.
    """
    if method == "semantic":
        return {p: getattr(v, "vector", v) for p, v in semantic.items()}
    if method == "kge":
        return dict(kge)
    if method != "combined":
        raise ValueError(f"unknown method {method!r}")
    sem_dim = len(getattr(next(iter(semantic.values())), "vector", next(iter(semantic.values()))))
    kge_dim = len(next(iter(kge.values())))
    out = {}
    for pid in sorted(set(semantic) | set(kge)):
        out[pid] = combine(semantic.get(pid), kge.get(pid), weights, pid, sem_dim, kge_dim).vector
    return out


def write_recommendations(recs, path, header=None):
    rows = []
    for src in sorted(recs):
        for rank, (pid, dist) in enumerate(recs[src].entries, start=1):
            rows.append([src, rank, pid, fmt_float(dist)])
    write_csv(path, ("source_paper_id", "rank", "target_paper_id", "cosine_distance"), rows, header)


def read_recommendations(path):
    grouped = {}
    for _, _, row in iter_csv(path):
        d = row["cosine_distance"]
        grouped.setdefault(row["source_paper_id"], []).append(
            (int(row["rank"]), row["target_paper_id"], float(d) if d else float("nan")))
    out = {}
    for src, items in sorted(grouped.items()):
        items.sort()
        out[src] = RecommendationList(src, [(p, d) for _, p, d in items], len(items))
    return out
