import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scholarkg.ingest import Corpus, PaperRecord, SectionText, load_corpus
from scholarkg.semantic import (SemanticConfig, corpus_semantics_report, document_vector,
                                embed_corpus, fallback_encode, mean_pairwise_cosine,
                                read_document_embeddings, split_sentences,
                                write_document_embeddings)


@pytest.mark.parametrize("text, expected", [
    ("A b. C d.", ["A b.", "C d."]),
    ("Dose was 2.5 mg. Next step!", ["Dose was 2.5 mg.", "Next step!"]),
    ("Is it? yes it is.", ["Is it? yes it is."]),
    ("", []),
    ("   ", []),
])
def test_split_sentences(text, expected):
    assert split_sentences(text) == expected


def test_fallback_encoder():
    a = fallback_encode("Remdesivir trial results", 64)
    assert np.array_equal(a, fallback_encode("remdesivir TRIAL results", 64))
    assert np.linalg.norm(a) == pytest.approx(1.0)
    assert not fallback_encode("...", 64).any()


def test_disjoint_sentences_are_nearly_orthogonal():
    a = fallback_encode("alpha beta gamma delta epsilon", 2 ** 16)
    b = fallback_encode("zeta eta theta iota kappa", 2 ** 16)
    assert abs(a @ b) < 0.05


def test_document_vector_examples():
    e = document_vector({"title": [[1.0, 0.0]], "abstract": [[0.0, 1.0], [0.0, 3.0]]})
    assert np.allclose(e.vector, [0.5, 1.0])
    assert e.sections_present == ("title", "abstract")
    e = document_vector({"title": [[1.0, 1.0]], "body": []})
    assert np.allclose(e.vector, [1.0, 1.0]) and e.sections_present == ("title",)
    with pytest.raises(ValueError):
        document_vector({"body": []}, "p9")


@given(st.permutations(range(5)))
def test_document_vector_ignores_sentence_order(perm):
    rows = np.arange(10.0).reshape(5, 2)
    base = document_vector({"body": rows}).vector
    assert np.allclose(document_vector({"body": rows[list(perm)]}).vector, base)


def test_document_vector_commutes_with_scaling():
    rows = np.random.default_rng(0).normal(size=(4, 3))
    assert np.allclose(document_vector({"abstract": 3 * rows}).vector,
                       3 * document_vector({"abstract": rows}).vector)


def _corpus(texts):
    papers = tuple(PaperRecord(pid, t["title"]) for pid, t in sorted(texts.items()))
    secs = tuple(SectionText(pid, s, x) for pid, t in sorted(texts.items())
                 for s, x in sorted(t.items()) if s != "title")
    return Corpus(papers, (), (), (), (), secs)


def test_identical_documents_have_cosine_one():
    c = _corpus({"a": {"title": "Same words here."}, "b": {"title": "Same words here."}})
    rep = corpus_semantics_report(c, embed_corpus(c, SemanticConfig(dim=32)))
    assert rep["title"]["mean_cosine_similarity"] == pytest.approx(1.0)
    assert rep["title"]["coverage"] == 1.0


def test_coverage():
    c = _corpus({"a": {"title": "A.", "abstract": "x y."}, "b": {"title": "B.", "abstract": "z."},
                 "c": {"title": "C."}})
    rep = corpus_semantics_report(c, embed_corpus(c, SemanticConfig(dim=32)))
    assert rep["abstract"]["coverage"] == pytest.approx(2 / 3)
    assert rep["combined"]["coverage"] >= max(rep[s]["coverage"] for s in ("title", "abstract", "body"))


def test_mean_pairwise_cosine_matches_brute_force():
    x = np.random.default_rng(1).normal(size=(30, 5))
    x[3] = 0
    u = np.array([v / np.linalg.norm(v) if np.linalg.norm(v) else v for v in x])
    pairs = [u[i] @ u[j] for i in range(30) for j in range(i + 1, 30)]
    assert mean_pairwise_cosine(x) == pytest.approx(np.mean(pairs), abs=1e-12)
    assert mean_pairwise_cosine(x, exact_limit=5, n_pairs=200000) == pytest.approx(np.mean(pairs), abs=0.01)


def test_sections_used_restricts_input(tiny_dir):
    c = load_corpus(tiny_dir)
    emb = embed_corpus(c, SemanticConfig(dim=16, sections_used=("title",)))
    assert all(e.sections_present == ("title",) for e in emb.values())
    assert len(emb) == 10


def test_external_vectors(tmp_path):
    papers = (PaperRecord("a", "A"), PaperRecord("b", "B"))
    sent = {("a", "abstract"): np.array([[1.0, 0.0], [0.0, 1.0]])}
    c = Corpus(papers, (), (), (), (), (), {"b": np.array([2.0, 2.0])}, sent)
    emb = embed_corpus(c, SemanticConfig(dim=2, source="external_vectors"))
    assert np.allclose(emb["a"].vector, [0.5, 0.5]) and emb["a"].sections_present == ("abstract",)
    assert emb["b"].sections_present == ()


def test_embedding_file_round_trip(tiny_dir, tmp_path):
    emb = embed_corpus(load_corpus(tiny_dir), SemanticConfig(dim=8))
    write_document_embeddings(emb, tmp_path / "e.csv")
    back = read_document_embeddings(tmp_path / "e.csv")
    for pid in emb:
        assert np.array_equal(emb[pid].vector, back[pid].vector)
        assert emb[pid].sections_present == back[pid].sections_present
