import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scholarkg.kge import (KgeConfig, KgeModel, KgeTrainingError, fold_assignment, hits_at,
                           init_embeddings, kfold_validate, kfold_validate_triplets,
                           link_prediction_ranks, load_model, loss_and_grads, loss_term, mrr,
                           random_mrr, sample_negatives, save_model, score_triplet, train,
                           train_triplets, transe_score)
from scholarkg.synthetic import make_translational_kg

from conftest import paper_graph


def _model(ent, rel, gamma=12.0):
    return KgeModel(np.asarray(ent, float), np.asarray(rel, float), KgeConfig(dim=len(ent[0]), gamma=gamma))


def test_score_examples():
    m = _model([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [[0.0, 1.0], [0.0, 0.0]])
    assert score_triplet(m, (0, 0, 2)) == 12.0
    assert score_triplet(m, (0, 1, 1)) == pytest.approx(12 - math.sqrt(2), abs=1e-12)
    assert score_triplet(m, (1, 1, 1)) == 12.0
    assert score_triplet(m, (0, "authored_by", 2)) == 12.0


def test_score_bounds_checked():
    m = _model([[0.0]], [[0.0]])
    with pytest.raises(IndexError):
        m.score([0], [0], [3])


def test_loss_examples():
    assert loss_term(0.0, 1) == pytest.approx(math.log(2))
    assert loss_term(50.0, 1) < 1e-20
    assert loss_term(3.0, -1) == pytest.approx(loss_term(-3.0, 1))
    assert np.isfinite(loss_term(-1e6, 1)) and loss_term(-1e6, 1) == pytest.approx(1e6)


def _fd_check(rng, gamma=12.0, d=6, eps=1e-5):
    h, r, t = (rng.normal(size=(1, d)) * rng.uniform(0.2, 5) for _ in range(3))
    y = np.array([rng.choice([-1.0, 1.0])])
    _, gh, gr, gt = loss_and_grads(h, r, t, y, gamma)

    def f(hh, rr, tt):
        return float(loss_term(transe_score(hh, rr, tt, gamma), y)[0])

    worst = 0.0
    for which, grad in ((0, gh), (1, gr), (2, gt)):
        for j in range(d):
            args = [h.copy(), r.copy(), t.copy()]
            args[which][0, j] += eps
            up = f(*args)
            args[which][0, j] -= 2 * eps
            down = f(*args)
            num = (up - down) / (2 * eps)
            rel = abs(num - grad[0, j]) / max(abs(num), abs(grad[0, j]), 1e-8)
            worst = max(worst, rel if abs(num) > 1e-9 else abs(num - grad[0, j]))
    return worst


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    assert max(_fd_check(rng) for _ in range(20)) < 1e-4


vec = arrays(np.float64, 4, elements=st.floats(-10, 10))


@given(vec, vec, vec, vec)
def test_translation_invariance_and_upper_bound(h, r, t, c):
    a = transe_score(h, r, t)
    b = transe_score(h + c, r, t + c)
    assert a == pytest.approx(b, abs=1e-9)
    assert a <= 12.0


def test_negatives_are_deterministic_and_corrupt():
    a = sample_negatives((1, 0, 2), 50, np.random.default_rng(3), 10)
    b = sample_negatives((1, 0, 2), 50, np.random.default_rng(3), 10)
    assert a == b
    assert all(x != (1, 0, 2) for x in a)
    assert all((h != 1) + (t != 2) == 1 and r == 0 for h, r, t in a)


def test_negatives_split_head_and_tail_evenly():
    negs = sample_negatives((3, 1, 7), 10000, np.random.default_rng(11), 1000)
    head = sum(1 for h, _, t in negs if t == 7 and h != 3)
    assert abs(head / 10000 - 0.5) <= 0.02


def test_filtered_negatives_avoid_known_positives():
    known = [(0, 0, t) for t in range(1, 9)]  # every tail except 9 and 0 is known
    negs = sample_negatives((0, 0, 1), 500, np.random.default_rng(1), 10, known=known)
    assert not set(negs) & set(known)


def test_zero_learning_rate_keeps_initialization():
    trips = make_translational_kg(n_entities=30, n_triplets=100, seed=2)
    cfg = KgeConfig(dim=8, learning_rate=0.0, epochs=1, seed=5, batch_size=32)
    m = train_triplets(trips, 30, cfg)
    rng = np.random.default_rng(5)
    ent, rel = init_embeddings(30, 5, 8, rng)
    assert np.array_equal(m.entity_embeddings, ent)
    assert np.array_equal(m.relation_embeddings, rel)
    assert np.all(np.abs(ent) <= 6 / math.sqrt(8))


def test_single_worker_training_is_deterministic():
    trips = make_translational_kg(n_entities=40, n_triplets=200, seed=2)
    cfg = KgeConfig(dim=8, learning_rate=5.0, epochs=3, seed=9, batch_size=64)
    a, b = train_triplets(trips, 40, cfg), train_triplets(trips, 40, cfg)
    assert np.array_equal(a.entity_embeddings, b.entity_embeddings)
    assert a.loss_trace == b.loss_trace


def test_threaded_training_runs():
    trips = make_translational_kg(n_entities=40, n_triplets=200, seed=2)
    m = train_triplets(trips, 40, KgeConfig(dim=8, learning_rate=5.0, epochs=2, workers=2, batch_size=32))
    assert len(m.loss_trace) == 2 and all(np.isfinite(m.loss_trace))


def test_non_finite_loss_aborts():
    trips = make_translational_kg(n_entities=40, n_triplets=200, seed=2)
    cfg = KgeConfig(dim=8, learning_rate=1e308, epochs=3, batch_size=16)
    with np.errstate(all="ignore"), pytest.raises(KgeTrainingError, match="non-finite"):
        train_triplets(trips, 40, cfg)


def test_train_on_graph_respects_relation_filter():
    g = paper_graph(6, [(0, 1), (1, 2), (2, 3)])
    with pytest.raises(ValueError, match="no triplets"):
        train(g, KgeConfig(dim=4, epochs=1))
    m = train(g, KgeConfig(dim=4, epochs=2, include_relations=("cites",)))
    assert m.entity_embeddings.shape == (6, 4)


def test_fold_assignment_partitions():
    a = fold_assignment(103, 10, seed=4)
    sizes = np.bincount(a)
    assert len(sizes) == 10 and sizes.sum() == 103 and sizes.max() - sizes.min() <= 1


def test_kfold_scores_every_triplet_once():
    trips = np.array([(i, 0, (i + 1) % 12) for i in range(10)])
    res = kfold_validate_triplets(trips, 12, KgeConfig(dim=4, epochs=2, learning_rate=1.0), folds=2)
    assert sorted(np.bincount(res.folds)) == [5, 5]
    assert np.all(np.isfinite(res.scores))
    assert set(res.relation_summary()) == {"authored_by"}


def test_kfold_on_graph_warns_on_missing_relation():
    g = paper_graph(4, [(0, 1)])
    with pytest.warns(UserWarning, match="no training triplets"):
        kfold_validate(g, KgeConfig(dim=4, epochs=1, include_relations=("cites",)), folds=2)


def _oracle_ranks(model, test, known):
    known = {tuple(map(int, k)) for k in known}
    out = []
    for h, r, t in test:
        for side in ("tail", "head"):
            cands = []
            for e in range(len(model.entity_embeddings)):
                trip = (h, r, e) if side == "tail" else (e, r, t)
                if trip in known and trip != (h, r, t):
                    continue
                cands.append(score_triplet(model, trip))
            s = score_triplet(model, (h, r, t))
            better = sum(c > s for c in cands)
            ties = sum(c == s for c in cands) - 1
            out.append(1 + better + ties / 2)
    return out


def test_link_prediction_ranks_match_oracle():
    rng = np.random.default_rng(0)
    m = _model(rng.normal(size=(15, 3)), rng.normal(size=(2, 3)))
    known = [(int(a), int(b), int(c)) for a, b, c in zip(rng.integers(0, 15, 40), rng.integers(0, 2, 40),
                                                          rng.integers(0, 15, 40))]
    test = known[:8]
    ranks, cands = link_prediction_ranks(m, test, known)
    assert list(ranks) == _oracle_ranks(m, test, known)
    assert mrr([1, 2, 4]) == pytest.approx((1 + 0.5 + 0.25) / 3)
    assert hits_at([1, 2, 11], 10) == pytest.approx(2 / 3)


def test_random_mrr_matches_enumeration():
    for c in (1, 2, 3, 5):
        exact = np.mean([1.0 / (perm.index(0) + 1) for perm in itertools.permutations(range(c))])
        assert random_mrr([c]) == pytest.approx(exact)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 30), st.integers(2, 10), st.integers(0, 100))
def test_fold_assignment_property(m, folds, seed):
    a = fold_assignment(m, folds, seed)
    assert len(a) == m and a.min() >= 0 and a.max() < folds


def test_model_round_trip(tmp_path):
    trips = make_translational_kg(n_entities=20, n_triplets=60, seed=1)
    m = train_triplets(trips, 20, KgeConfig(dim=5, epochs=2, learning_rate=1.0, batch_size=16))
    save_model(m, tmp_path)
    m2 = load_model(tmp_path)
    assert np.array_equal(m.entity_embeddings, m2.entity_embeddings)
    assert np.array_equal(m.relation_embeddings, m2.relation_embeddings)
    assert m2.config == m.config and m2.loss_trace == m.loss_trace
