"""Recommendation and graph-validation metrics.

Means over papers use pairwise summation (:func:`pairwise_sum`) so that
results do not depend on how work was split.
"""
import logging
import math
import warnings
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass

import numpy as np

from .similarity import random_recommendations

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricReport:
    method: str
    metric: str
    value: float
    support: int

    def to_dict(self):
        return asdict(self)


class SVDConvergenceWarning(RuntimeWarning):
    pass


class SVDConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


def pairwise_sum(values):
    """Tree summation: split in halves down to blocks of 8."""
    values = list(values)
    n = len(values)
    if n <= 8:
        total = 0.0
        for v in values:
            total += v
        return total
    mid = n // 2
    return pairwise_sum(values[:mid]) + pairwise_sum(values[mid:])


def pairwise_mean(values):
    values = list(values)
    return pairwise_sum(values) / len(values)


def topic_vectors(paper_topics, vocabulary):
    """``{paper_id: bool array}`` one-hot over ``vocabulary``.

    ``paper_topics`` maps paper_id to an iterable of labels.
    """
    pos = {label: i for i, label in enumerate(vocabulary)}
    out = {}
    for pid, labels in paper_topics.items():
        v = np.zeros(len(vocabulary), dtype=bool)
        for label in labels:
            if label in pos:
                v[pos[label]] = True
        out[pid] = v
    return out


def jaccard_distance(u, v, printed_denominator=False):
    """Jaccard distance between boolean vectors.

    ``(c_TF + c_FT) / (c_TT + c_TF + c_FT)``; 0 when both are all-false.
    ``printed_denominator=True`` uses ``c_TT + 2 c_TF`` instead, for
    auditing against the formula as typeset in the original write-up.
    """
    u = np.asarray(u, dtype=bool)
    v = np.asarray(v, dtype=bool)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    tt = int(np.sum(u & v))
    tf = int(np.sum(u & ~v))
    ft = int(np.sum(~u & v))
    denom = tt + 2 * tf if printed_denominator else tt + tf + ft
    if denom == 0:
        return 0.0
    return (tf + ft) / denom


def topic_similarity(source, recs, topics):
    """Mean Jaccard distance between a source's topics and each recommended
    paper's topics (lower = more topical agreement)."""
    ids = recs.paper_ids if hasattr(recs, "paper_ids") else list(recs)
    if not ids:
        raise ValueError(f"empty recommendation list for {source!r}")
    missing = [p for p in [source] + list(ids) if p not in topics]
    if missing:
        raise KeyError(f"no topic vector for {missing}")
    return pairwise_mean(jaccard_distance(topics[source], topics[p]) for p in ids)


def corpus_topic_similarity(method_outputs, topics, k=5, seed=None, include_random=True):
    """One TS report per method, plus a seeded random baseline.

    Sources whose topic vector is all-false are excluded; ``support`` is
    the number of sources averaged.
    """
    reports = []
    outputs = dict(method_outputs)
    if include_random:
        if seed is None:
            raise ValueError("the random baseline needs an explicit seed")
        universe = sorted(set().union(*(set(o) for o in outputs.values())) if outputs
                          else set(topics))
        outputs["random"] = random_recommendations(universe, k, seed)
    for method in outputs:
        lists = outputs[method]
        vals = [topic_similarity(src, lists[src], topics) for src in sorted(lists)
                if topics[src].any()]
        if not vals:
            raise ValueError(f"{method}: no source paper has topics")
        reports.append(MetricReport(method, "topic_similarity", pairwise_mean(vals), len(vals)))
    return reports


def citation_overlap(recs, cites, k=5, method="", per_paper=False):
    """Share of a paper's out-citations found in its top-k list, in percent.

    Per paper: ``|cites(i) & topk(i)| / min(k, |cites(i)|)``, averaged over
    papers citing at least one other paper.
    """
    vals = {}
    for src in sorted(recs):
        out = set(cites.get(src, ()))
        if not out:
            continue
        top = set(recs[src].paper_ids[:k])
        vals[src] = len(out & top) / min(k, len(out))
    if per_paper:
        return vals
    if not vals:
        raise ValueError("no recommended source cites another paper")
    return MetricReport(method, "citation_overlap_pct",
                        100.0 * pairwise_mean(vals[s] for s in sorted(vals)), len(vals))


def iou(a, b):
    a, b = set(a), set(b)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def recommendation_iou(recs_a, recs_b, method=""):
    """Mean IoU of the two methods' top-k sets over shared sources."""
    if set(recs_a) != set(recs_b):
        raise ValueError("methods cover different source sets")
    vals = [iou(recs_a[s].paper_ids, recs_b[s].paper_ids) for s in sorted(recs_a)]
    return MetricReport(method, "iou", pairwise_mean(vals), len(vals))


def iou_matrix(method_outputs):
    names = list(method_outputs)
    mat = np.ones((len(names), len(names)))
    for i, a in enumerate(names):
        for j, b in enumerate(names):
            if i < j:
                mat[i, j] = mat[j, i] = recommendation_iou(method_outputs[a],
                                                           method_outputs[b]).value
    return names, mat


@dataclass
class PopularityHistogram:
    occurrences: dict  # paper_id -> times recommended
    bins: list         # [(label, n_papers)]


def popularity_histogram(recs, papers=None, width=1, cap=20):
    """How often each paper shows up across all top-k lists, binned.

    Bins are ``[1, 1+width), ...`` up to ``cap``, then ``>cap``. Papers
    never recommended appear in bin ``0`` only when ``papers`` is given.
    """
    counts = Counter()
    for lst in recs.values():
        counts.update(lst.paper_ids)
    if papers is not None:
        for p in papers:
            counts.setdefault(p, 0)
    binned = Counter()
    for c in counts.values():
        if c == 0:
            binned["0"] += 1
        elif c > cap:
            binned[f">{cap}"] += 1
        else:
            lo = 1 + ((c - 1) // width) * width
            hi = min(lo + width - 1, cap)
            binned[str(lo) if lo == hi else f"{lo}-{hi}"] += 1

    def order(label):
        if label.startswith(">"):
            return math.inf
        return int(label.split("-")[0])

    return PopularityHistogram(dict(sorted(counts.items())),
                               sorted(binned.items(), key=lambda kv: order(kv[0])))


def topic_by_journal(graph):
    """Rows ``(journal, topic, fraction, n_papers)``: for each journal, the
    fraction of its papers carrying each topic (multi-label)."""
    topic_ids = list(graph.ids_of_kind("topic"))
    topic_names = {int(t): graph.entities[t].key for t in topic_ids}
    by_journal = defaultdict(list)
    for p in graph.ids_of_kind("paper"):
        journal = graph.entities[p].attributes.get("journal") or "(unknown)"
        by_journal[journal].append(int(p))
    rows = []
    fwd = graph.forward["associated_topic"]
    for journal in sorted(by_journal):
        papers = by_journal[journal]
        tally = Counter()
        for p in papers:
            tally.update(int(t) for t in fwd.neighbors(p))
        for t in sorted(topic_names, key=lambda t: topic_names[t]):
            rows.append((journal, topic_names[t], tally[t] / len(papers), len(papers)))
    return rows


@dataclass
class SVDProjection:
    coordinates: np.ndarray   # (n, 2)
    components: np.ndarray    # (2, d), orthonormal rows
    singular_values: np.ndarray
    mean: np.ndarray
    iterations: list
    residuals: list


def _ritz(gram, q):
    """Rayleigh-Ritz on the span of ``q``'s columns: eigenpairs, descending."""
    lam, w = np.linalg.eigh(q.T @ gram @ q)
    order = np.argsort(lam)[::-1]
    return lam[order], q @ w[:, order]


def truncated_svd_2d(vectors, tol=1e-10, max_iter=1000, seed=0, strict=False, oversample=8):
    """Project rows onto the top two right singular vectors of the centered
    matrix.

    Block power (subspace) iteration on the Gram matrix with ``2 +
    oversample`` vectors: each step multiplies by the Gram matrix and
    re-orthonormalizes, which deflates leading directions out of the later
    ones. A Rayleigh-Ritz step inside the block separates the pairs, so a
    small gap between the top two singular values does not slow
    convergence. Only the top two pairs are checked; the residual is
    ``||G v - lam v||`` relative to ``max |G|``.

    Sign convention: each component's largest-magnitude entry is positive.
    Non-convergence warns (or raises with ``strict=True``) and reports the
    achieved residual.
    """
    x = np.asarray(vectors, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ValueError("need an (n, d) matrix with n >= 2 and d >= 2")
    mean = x.mean(axis=0)
    xc = x - mean
    gram = xc.T @ xc
    scale = max(np.abs(gram).max(), 1e-300)
    width = min(x.shape[1], 2 + max(oversample, 0))
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((x.shape[1], width)))
    residuals, it = [np.inf, np.inf], 0
    for it in range(1, max_iter + 1):
        lam, v = _ritz(gram, q)
        gv = gram @ v
        residuals = [float(np.linalg.norm(gv[:, j] - lam[j] * v[:, j]) / scale) for j in range(2)]
        if max(residuals) < tol:
            break
        # a pair with eigenvalue ~0 (rank deficiency) keeps its Ritz vector
        # instead of a vanishing product
        null = lam <= 1e-12 * scale
        q, _ = np.linalg.qr(np.where(null, v, gv))
    if max(residuals) >= tol:
        msg = f"power iteration stopped after {it} steps with residual {max(residuals):.3g}"
        if strict:
            raise SVDConvergenceError(msg, max(residuals))
        warnings.warn(msg, SVDConvergenceWarning)
    comps = v[:, :2].T.copy()
    for c in comps:
        if c[np.argmax(np.abs(c))] < 0:
            c *= -1
    sigmas = np.sqrt(np.maximum(lam[:2], 0.0))
    return SVDProjection(xc @ comps.T, comps, sigmas, mean, [it, it], residuals)
