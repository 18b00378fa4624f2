"""TransE embeddings trained with a logistic loss and filtered negative sampling.

Triplet score is ``gamma - ||h + r - t||_2``; the per-triplet loss is
``log(1 + exp(-y * score))`` with ``y = +1`` for observed triplets and
``-1`` for corruptions. Training is plain minibatch SGD on the mean loss.
"""
import logging
import os
import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.special import expit

from ._io import fmt_float, iter_csv, read_json, write_csv, write_json
from .curation import RELATIONS

logger = logging.getLogger(__name__)

REL_INDEX = {r: i for i, r in enumerate(RELATIONS)}


class KgeTrainingError(RuntimeError):
    pass


class FoldCoverageWarning(UserWarning):
    pass


@dataclass(frozen=True)
class KgeConfig:
    dim: int = 400
    gamma: float = 12.0
    negatives_per_positive: int = 16
    batch_size: int = 1024
    learning_rate: float = 0.01
    epochs: int = 100
    seed: int = 0
    include_relations: tuple = RELATIONS
    normalize_entities: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")
        if self.batch_size < 1 or self.epochs < 0 or self.workers < 1:
            raise ValueError("batch_size and workers must be >= 1, epochs >= 0")
        bad = set(self.include_relations) - set(RELATIONS)
        if bad:
            raise ValueError(f"unknown relations {sorted(bad)}")

    def to_dict(self):
        d = asdict(self)
        d["include_relations"] = list(self.include_relations)
        return d


@dataclass
class KgeModel:
    entity_embeddings: np.ndarray
    relation_embeddings: np.ndarray
    config: KgeConfig
    loss_trace: list = field(default_factory=list)

    @property
    def gamma(self):
        return self.config.gamma

    def score(self, heads, relations, tails):
        """Vectorized score for aligned id arrays."""
        heads, relations, tails = (np.asarray(a, dtype=np.int64) for a in (heads, relations, tails))
        n_e, n_r = len(self.entity_embeddings), len(self.relation_embeddings)
        if (heads.size and (heads.min() < 0 or heads.max() >= n_e or tails.min() < 0
                            or tails.max() >= n_e or relations.min() < 0
                            or relations.max() >= n_r)):
            raise IndexError("entity or relation id out of bounds")
        return transe_score(self.entity_embeddings[heads], self.relation_embeddings[relations],
                            self.entity_embeddings[tails], self.gamma)


def transe_score(h, r, t, gamma=12.0):
    return gamma - np.linalg.norm(np.asarray(h) + np.asarray(r) - np.asarray(t), axis=-1)


def score_triplet(model, triplet):
    """Score one ``(head, relation, tail)`` triplet; relation may be a name."""
    h, r, t = triplet
    if isinstance(r, str):
        r = REL_INDEX[r]
    return float(model.score([h], [r], [t])[0])


def loss_term(score, y):
    """``log(1 + exp(-y * score))`` in overflow-safe form."""
    return np.logaddexp(0.0, -np.asarray(y, dtype=float) * np.asarray(score, dtype=float))


def loss_and_grads(h, r, t, y, gamma):
    """Per-row loss and its gradients w.r.t. ``h``, ``r`` and ``t``.

    Rows are triplets; ``h``, ``r``, ``t`` have shape ``(n, d)`` and ``y``
    shape ``(n,)``. The residual norm is floored at 1e-12 where ``h + r = t``.
    """
    diff = h + r - t
    norm = np.linalg.norm(diff, axis=1)
    score = gamma - norm
    loss = loss_term(score, y)
    # dL/dscore = -y * sigmoid(-y * score); dscore/ddiff = -diff / norm
    coef = y * expit(-y * score) / np.maximum(norm, 1e-12)
    g = coef[:, None] * diff
    return loss, g, g, -g


def _encode(h, r, t, n_entities, n_relations):
    return (np.asarray(h, dtype=np.int64) * n_relations + r) * n_entities + t


class _NegativeSampler:
    """Head-or-tail corruption that never returns a known positive."""

    max_rounds = 100

    def __init__(self, n_entities, n_relations, known):
        self.n_entities = n_entities
        self.n_relations = n_relations
        known = np.asarray(known, dtype=np.int64).reshape(-1, 3)
        self.known = np.unique(_encode(known[:, 0], known[:, 1], known[:, 2],
                                       n_entities, n_relations))

    def _is_known(self, h, r, t):
        keys = _encode(h, r, t, self.n_entities, self.n_relations)
        pos = np.searchsorted(self.known, keys)
        pos = np.minimum(pos, len(self.known) - 1)
        return self.known[pos] == keys if len(self.known) else np.zeros(len(keys), bool)

    def corrupt(self, h, r, t, rng):
        h, r, t = (np.array(a, dtype=np.int64) for a in (h, r, t))
        head_side = rng.random(len(h)) < 0.5
        todo = np.arange(len(h))
        for _ in range(self.max_rounds):
            draw = rng.integers(0, self.n_entities, size=len(todo))
            hs = head_side[todo]
            h[todo[hs]] = draw[hs]
            t[todo[~hs]] = draw[~hs]
            todo = todo[self._is_known(h[todo], r[todo], t[todo])]
            if len(todo) == 0:
                break
        else:
            warnings.warn(f"{len(todo)} corruptions collide with positives after "
                          f"{self.max_rounds} redraws", RuntimeWarning)
        return h, r, t, head_side


def sample_negatives(triplet, n, rng, n_entities, known=None, n_relations=len(RELATIONS)):
    """``n`` corruptions of one triplet: a fair coin picks head or tail, which
    is replaced by a uniform entity id, redrawing any known positive."""
    if n < 1:
        raise ValueError("n must be >= 1")
    h, r, t = triplet
    if isinstance(r, str):
        r = REL_INDEX[r]
    known = [(h, r, t)] if known is None else np.vstack([np.asarray(known).reshape(-1, 3),
                                                           [(h, r, t)]])
    sampler = _NegativeSampler(n_entities, n_relations, known)
    nh, nr, nt, _ = sampler.corrupt(np.full(n, h), np.full(n, r), np.full(n, t), rng)
    return [(int(a), int(b), int(c)) for a, b, c in zip(nh, nr, nt)]


def init_embeddings(n_entities, n_relations, dim, rng):
    bound = 6.0 / np.sqrt(dim)
    ent = rng.uniform(-bound, bound, size=(n_entities, dim))
    rel = rng.uniform(-bound, bound, size=(n_relations, dim))
    return ent, rel


def _scatter(ids, grads):
    """Sum gradient rows sharing an id: returns ``(unique_ids, summed)``."""
    uniq, inv = np.unique(ids, return_inverse=True)
    m = sparse.csr_matrix((np.ones(len(ids)), (inv, np.arange(len(ids)))),
                          shape=(len(uniq), len(ids)))
    return uniq, m @ grads


def _step(ent, rel, batch, sampler, cfg, rng):
    k = cfg.negatives_per_positive
    ph, pr, pt = batch[:, 0], batch[:, 1], batch[:, 2]
    nh, nr, nt, _ = sampler.corrupt(np.repeat(ph, k), np.repeat(pr, k), np.repeat(pt, k), rng)
    h = np.concatenate([ph, nh])
    r = np.concatenate([pr, nr])
    t = np.concatenate([pt, nt])
    y = np.concatenate([np.ones(len(ph)), -np.ones(len(nh))])
    loss, gh, gr, gt = loss_and_grads(ent[h], rel[r], ent[t], y, cfg.gamma)
    mean_loss = float(loss.mean())
    if not np.isfinite(mean_loss):
        raise KgeTrainingError(
            f"non-finite loss {mean_loss}; max |entity| = {np.abs(ent).max():.3g}, "
            f"learning_rate = {cfg.learning_rate}")
    scale = cfg.learning_rate / len(y)
    eids, eg = _scatter(np.concatenate([h, t]), np.vstack([gh, gt]))
    rids, rg = _scatter(r, gr)
    ent[eids] -= scale * eg
    rel[rids] -= scale * rg
    if cfg.normalize_entities:
        norms = np.linalg.norm(ent[eids], axis=1, keepdims=True)
        ent[eids] /= np.maximum(norms, 1e-12)
    return mean_loss * len(y), len(y)


def train_triplets(triplets, n_entities, config, known=None, n_relations=len(RELATIONS)):
    """Train on an ``(m, 3)`` array of (head, relation, tail) ids.

    ``known`` lists every triplet that must never be drawn as a negative;
    it defaults to the training triplets themselves. With ``workers == 1``
    the result is a deterministic function of ``config.seed``.
    """
    cfg = config
    triplets = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    rng = np.random.default_rng(cfg.seed)
    ent, rel = init_embeddings(n_entities, n_relations, cfg.dim, rng)
    sampler = _NegativeSampler(n_entities, n_relations, triplets if known is None else known)
    trace = []
    m = len(triplets)
    for epoch in range(cfg.epochs):
        if m == 0:
            break
        perm = rng.permutation(m)
        batches = [triplets[perm[i:i + cfg.batch_size]] for i in range(0, m, cfg.batch_size)]
        if cfg.workers == 1:
            totals = [_step(ent, rel, b, sampler, cfg, rng) for b in batches]
        else:
            totals = _parallel_epoch(ent, rel, batches, sampler, cfg, rng)
        epoch_loss = sum(s for s, _ in totals) / sum(n for _, n in totals)
        trace.append(epoch_loss)
        logger.debug("epoch %d mean loss %.6f", epoch, epoch_loss)
    return KgeModel(ent, rel, cfg, trace)


def _parallel_epoch(ent, rel, batches, sampler, cfg, rng):
    # lock-free shared updates; results depend on thread scheduling
    seeds = rng.integers(0, 2**63, size=cfg.workers)
    out, lock = [], threading.Lock()

    def work(w):
        local = np.random.default_rng(seeds[w])
        res = [_step(ent, rel, b, sampler, cfg, local) for b in batches[w::cfg.workers]]
        with lock:
            out.extend(res)

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        list(pool.map(work, range(cfg.workers)))
    return out


def _included(graph, config):
    keep = np.isin(graph.relations, [REL_INDEX[r] for r in config.include_relations])
    return graph.triplet_array()[keep]


def train(graph, config=None):
    """Train TransE on the graph's triplets of the included relation types."""
    config = config or KgeConfig()
    counts = graph.relation_counts()
    empty = [r for r in config.include_relations if counts[r] == 0]
    if empty:
        raise ValueError(f"no triplets for included relations {empty}")
    trips = _included(graph, config)
    logger.info("training TransE on %d triplets, %d entities, dim %d",
                len(trips), graph.n_entities, config.dim)
    return train_triplets(trips, graph.n_entities, config)


def link_prediction_ranks(model, test, known):
    """Filtered ranks of the true tail and the true head for each test triplet.

    For each side, candidates forming a known positive (other than the test
    triplet) are removed; rank = 1 + #strictly better + half the ties.
    Returns ``(ranks, n_candidates)`` with two entries per test triplet.
    """
    ent, rel = model.entity_embeddings, model.relation_embeddings
    n = len(ent)
    test = np.asarray(test, dtype=np.int64).reshape(-1, 3)
    by_hr, by_rt = {}, {}
    for h, r, t in np.asarray(known, dtype=np.int64).reshape(-1, 3):
        by_hr.setdefault((h, r), set()).add(t)
        by_rt.setdefault((r, t), set()).add(h)
    ranks, cands = [], []
    for h, r, t in test:
        for side in ("tail", "head"):
            if side == "tail":
                scores = model.gamma - np.linalg.norm(ent[h] + rel[r] - ent, axis=1)
                true, others = t, by_hr.get((h, r), set())
            else:
                scores = model.gamma - np.linalg.norm(ent + rel[r] - ent[t], axis=1)
                true, others = h, by_rt.get((r, t), set())
            mask = np.ones(n, dtype=bool)
            mask[list(others - {true})] = False
            s_true = scores[true]
            valid = scores[mask]
            better = np.sum(valid > s_true)
            ties = np.sum(valid == s_true) - 1
            ranks.append(1.0 + better + ties / 2.0)
            cands.append(int(mask.sum()))
    return np.array(ranks), np.array(cands)


def mrr(ranks):
    return float(np.mean(1.0 / np.asarray(ranks)))


def hits_at(ranks, k):
    return float(np.mean(np.asarray(ranks) <= k))


def random_mrr(n_candidates):
    """Expected MRR of a uniformly random ranking: mean of H(c) / c."""
    c = np.asarray(n_candidates, dtype=np.int64)
    harmonic = np.cumsum(1.0 / np.arange(1, c.max() + 1))
    return float(np.mean(harmonic[c - 1] / c))


@dataclass
class KFoldResult:
    heads: np.ndarray
    relations: np.ndarray
    tails: np.ndarray
    folds: np.ndarray
    scores: np.ndarray
    negative_relations: np.ndarray
    negative_scores: np.ndarray

    def relation_summary(self):
        out = {}
        for rel in np.unique(self.relations):
            pos = self.scores[self.relations == rel]
            neg = self.negative_scores[self.negative_relations == rel]
            out[RELATIONS[rel]] = {"n": int(len(pos)), "mean_score": float(pos.mean()),
                                   "mean_corrupted_score": float(neg.mean()) if len(neg) else None}
        return out

    def histograms(self, bins=40):
        """Per-relation counts over shared bin edges: ``(edges, {relation: counts})``."""
        edges = np.histogram_bin_edges(self.scores, bins=bins)
        return edges, {RELATIONS[r]: np.histogram(self.scores[self.relations == r], edges)[0]
                       for r in np.unique(self.relations)}


def fold_assignment(m, folds, seed):
    """Seeded partition of ``range(m)`` into ``folds`` near-equal parts."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    perm = np.random.default_rng(seed).permutation(m)
    assign = np.empty(m, dtype=np.int64)
    for f, part in enumerate(np.array_split(perm, folds)):
        assign[part] = f
    return assign


def kfold_validate(graph, config=None, folds=10):
    """Score every triplet with a model trained on the other folds.

    Each held-out triplet also gets one uniformly corrupted counterpart,
    scored by the same model, as a per-relation baseline.
    """
    config = config or KgeConfig()
    trips = _included(graph, config)
    return kfold_validate_triplets(trips, graph.n_entities, config, folds)


def kfold_validate_triplets(trips, n_entities, config, folds=10):
    trips = np.asarray(trips, dtype=np.int64).reshape(-1, 3)
    seq = np.random.SeedSequence(config.seed)
    split_seed, *fold_seeds = (int(s.generate_state(1)[0]) for s in seq.spawn(folds + 1))
    assign = fold_assignment(len(trips), folds, split_seed)
    scores = np.empty(len(trips))
    neg_scores = np.empty(len(trips))
    neg_rel = trips[:, 1].copy()
    sampler = _NegativeSampler(n_entities, len(RELATIONS), trips)
    for f in range(folds):
        test_mask = assign == f
        train_set = trips[~test_mask]
        missing = set(np.unique(trips[test_mask, 1])) - set(np.unique(train_set[:, 1]))
        if missing:
            warnings.warn(f"fold {f}: no training triplets for relations "
                          f"{sorted(RELATIONS[i] for i in missing)}", FoldCoverageWarning)
        model = train_triplets(train_set, n_entities, replace(config, seed=fold_seeds[f]),
                               known=train_set)
        test = trips[test_mask]
        scores[test_mask] = model.score(test[:, 0], test[:, 1], test[:, 2])
        rng = np.random.default_rng(fold_seeds[f] ^ 0x5EED)
        nh, nr, nt, _ = sampler.corrupt(test[:, 0], test[:, 1], test[:, 2], rng)
        neg_scores[test_mask] = model.score(nh, nr, nt)
        logger.info("fold %d/%d: %d held out", f + 1, folds, int(test_mask.sum()))
    return KFoldResult(trips[:, 0], trips[:, 1], trips[:, 2], assign, scores, neg_rel, neg_scores)


def save_model(model, directory, header=None, entity_keys=None):
    ent, rel = model.entity_embeddings, model.relation_embeddings
    d = ent.shape[1]
    write_json(os.path.join(directory, "model.json"), {
        "dim": d, "gamma": model.gamma, "n_entities": len(ent), "n_relations": len(rel),
        "seed": model.config.seed, "relations": list(RELATIONS),
        "config": model.config.to_dict(),
        "loss_trace": [float(x) for x in model.loss_trace],
    }, header)
    vcols = [f"v{i}" for i in range(d)]
    write_csv(os.path.join(directory, "entity_embeddings.csv"), ["entity_id"] + vcols,
              ([i] + [fmt_float(x) for x in row] for i, row in enumerate(ent)), header)
    write_csv(os.path.join(directory, "relation_embeddings.csv"), ["relation"] + vcols,
              ([RELATIONS[i]] + [fmt_float(x) for x in row] for i, row in enumerate(rel)), header)


def load_model(directory):
    meta = read_json(os.path.join(directory, "model.json"))
    cfg = dict(meta["config"])
    cfg["include_relations"] = tuple(cfg["include_relations"])
    config = KgeConfig(**cfg)
    d = meta["dim"]

    def matrix(name, n):
        out = np.empty((n, d))
        for i, (_, _, row) in enumerate(iter_csv(os.path.join(directory, name))):
            out[i] = [float(row[f"v{j}"]) for j in range(d)]
        return out

    return KgeModel(matrix("entity_embeddings.csv", meta["n_entities"]),
                    matrix("relation_embeddings.csv", meta["n_relations"]),
                    config, list(meta.get("loss_trace", [])))


def write_scores(result, path, header=None):
    write_csv(path, ("head", "relation", "tail", "fold", "score"),
              ([int(h), RELATIONS[r], int(t), int(f), fmt_float(s)] for h, r, t, f, s in
               zip(result.heads, result.relations, result.tails, result.folds, result.scores)),
              header)
