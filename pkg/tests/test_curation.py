import random
import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scholarkg.curation import (CurationConfig, CurationError, curate, curate_authors,
                                curate_concepts, link_citations, normalize_author,
                                normalize_concept)
from scholarkg.ingest import (AuthorMention, BibliographyEntry, ConceptMention, PaperRecord,
                              load_corpus)


def test_normalize_author_examples():
    assert normalize_author("John", "Q.", "Smith") == "john q smith"
    assert normalize_author("JOHN", None, "SMITH") == "john smith"
    assert normalize_author("J.", "", "O'Neil") == "j o neil"
    with pytest.raises(CurationError):
        normalize_author("John", None, "")
    with pytest.raises(CurationError):
        normalize_author("John", None, "...")


def test_normalize_concept_examples():
    assert normalize_concept("Acute Appendicitis") == "acute appendicitis"
    assert normalize_concept("ultrasound,") == "ultrasound"
    assert normalize_concept("antibodies", "lowercase_strip_lemma") == "antibody"
    assert normalize_concept("boxes", "lowercase_strip_lemma") == "box"
    assert normalize_concept("virus", "lowercase_strip_lemma") == "virus"
    assert normalize_concept("Vaccines", "lowercase_strip_lemma") == "vaccine"
    with pytest.raises(CurationError):
        normalize_concept("!!")


names = st.text(string.ascii_letters + " .,-'", min_size=1, max_size=15)


@given(names, names, names)
def test_author_key_is_idempotent(first, middle, last):
    try:
        key = normalize_author(first, middle, last)
    except CurationError:
        return
    assert key == key.lower() and "  " not in key and key == key.strip()
    assert all(ch.isalnum() or ch == " " for ch in key)
    assert normalize_author(None, None, key) == key


@given(st.text(min_size=1, max_size=30), st.sampled_from(["lowercase_strip", "lowercase_strip_lemma"]))
def test_concept_normalization_is_idempotent(text, mode):
    try:
        once = normalize_concept(text, mode)
    except CurationError:
        return
    assert normalize_concept(once, mode) == once


def _mentions(spec):
    return [ConceptMention(p, s, "c", conf) for p, s, conf in spec]


def test_low_confidence_dropped():
    ents, trips, _, rep = curate_concepts(_mentions([("p1", "fever", 0.4), ("p2", "fever", 0.9)]), 2)
    assert rep["dropped_low_confidence"] == 1
    assert [t.head for t in trips] == [("paper", "p2")]


def test_rare_rule_uses_ceiling():
    m = _mentions([("p1", "rare", 0.9)])
    ents, _, _, _ = curate_concepts(m, 10000)
    assert [e.key for e in ents] == ["rare"]  # ceil(1e-4 * 1e4) = 1
    ents, _, _, rep = curate_concepts(m, 10001)
    assert ents == [] and rep["pruned_rare"] == 1  # needs 2 papers


def test_zero_support_concept_absent():
    ents, trips, _, _ = curate_concepts(_mentions([("p1", "x", 0.1)]), 5)
    assert ents == [] and trips == []


def test_frequent_concept_flagged_not_removed():
    m = _mentions([(f"p{i}", "common", 0.9) for i in range(6)] + [("p0", "other", 0.9)])
    ents, trips, flagged, rep = curate_concepts(m, 10)
    assert flagged == ["common"] and rep["flagged_frequent"] == 1
    assert {e.key for e in ents} == {"common", "other"}
    assert sum(t.tail == ("concept", "common") for t in trips) == 6


def test_pair_weight_is_max_confidence():
    _, trips, _, _ = curate_concepts(_mentions([("p1", "Fever", 0.6), ("p1", "fever.", 0.8)]), 1)
    assert len(trips) == 1 and trips[0].weight == 0.8


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 4), st.floats(0, 1)), max_size=40),
       st.floats(0, 1), st.floats(0, 1))
def test_threshold_monotonicity(raw, t1, t2):
    lo, hi = sorted((t1, t2))
    m = _mentions([(f"p{p}", f"c{c}", conf) for p, c, conf in raw])
    cfg = dict(concept_min_fraction=0.0)
    _, trips_lo, _, _ = curate_concepts(m, 10, CurationConfig(concept_confidence_threshold=lo, **cfg))
    _, trips_hi, _, _ = curate_concepts(m, 10, CurationConfig(concept_confidence_threshold=hi, **cfg))
    assert {(t.head, t.tail) for t in trips_hi} <= {(t.head, t.tail) for t in trips_lo}


def test_authors_merge_across_spellings():
    m = [AuthorMention("p1", "J.", None, "Doe", "MIT", None, None),
         AuthorMention("p2", "j", None, "DOE", "mit", "USA", None),
         AuthorMention("p2", "Ann", None, "Lee", None, None, None)]
    authors, insts, authored, affil, rep = curate_authors(m)
    assert [a.key for a in authors] == ["ann lee", "j doe"]
    assert [i.key for i in insts] == ["mit"] and insts[0].attributes["country"] == "USA"
    assert rep["authors_merged"] == 1
    assert len(authored) == 3 and len(affil) == 1


def test_citation_exact_match():
    papers = [PaperRecord("a", "Remdesivir trial"), PaperRecord("b", "Other")]
    am = [AuthorMention("a", "Ann", None, "Lee", None, None, None),
          AuthorMention("b", "Bo", None, "Ma", None, None, None)]
    hit = BibliographyEntry("b", "remdesivir trial.", (("ANN", None, "lee"),))
    miss = BibliographyEntry("b", "Remdesivir trial", (("Ann", None, "Leigh"),))
    selfref = BibliographyEntry("a", "Remdesivir trial", (("Ann", None, "Lee"),))
    trips = link_citations([hit, miss, selfref], papers, am)
    assert [(t.head, t.tail) for t in trips] == [(("paper", "b"), ("paper", "a"))]


def _oracle_links(bib, papers, am):
    """Pairwise comparison over every (reference, paper) pair."""
    def norm_title(s):
        return " ".join("".join(ch if ch.isalnum() else " " for ch in s.lower()).split())

    def auth(first, middle, last):
        return " ".join(norm_title(x) for x in (first, middle, last) if x and norm_title(x))

    out = set()
    for b in bib:
        ref_set = {auth(*a) for a in b.ref_authors}
        for p in papers:
            p_set = {auth(m.first, m.middle, m.last) for m in am if m.paper_id == p.paper_id}
            if norm_title(b.ref_title) == norm_title(p.title) and ref_set == p_set \
                    and b.citing_paper_id != p.paper_id:
                out.add((b.citing_paper_id, p.paper_id))
    return out


@pytest.mark.parametrize("seed", range(20))
def test_link_citations_matches_oracle(seed):
    rnd = random.Random(seed)
    n = rnd.randint(2, 100)
    titles = ["Study of X", "study of x!", "Another Title", "Y effects", "Z"]
    people = [("Ann", None, "Lee"), ("ann", None, "LEE"), ("Bo", "K.", "Ma"), ("Cy", None, "Ng")]
    papers = [PaperRecord(f"p{i}", rnd.choice(titles)) for i in range(n)]
    am = [AuthorMention(p.paper_id, *rnd.choice(people), None, None, None)
          for p in papers for _ in range(rnd.randint(1, 2))]
    bib = [BibliographyEntry(f"p{rnd.randrange(n)}", rnd.choice(titles),
                             tuple(rnd.sample(people, rnd.randint(1, 2))))
           for _ in range(rnd.randint(0, 60))]
    got = {(t.head[1], t.tail[1]) for t in link_citations(bib, papers, am)}
    assert got == _oracle_links(bib, papers, am)


def test_curate_tiny_corpus(tiny_dir):
    cur = curate(load_corpus(tiny_dir))
    assert cur.report["dropped_low_confidence"] == 1
    assert cur.report["citations_linked"] == 6
    kinds = {}
    for e in cur.entities:
        kinds.setdefault(e.kind, set()).add(e.key)
    assert "j doe" in kinds["author"] and len(kinds["author"]) == 7
    assert "mit" in kinds["institution"]
    assert "antibiotics" not in kinds["concept"]
    assert len(kinds["topic"]) == 10
    # every endpoint exists
    keys = {(e.kind, e.key) for e in cur.entities}
    assert all(t.head in keys and t.tail in keys for t in cur.triplets)


def test_config_invariants():
    with pytest.raises(CurationError):
        CurationConfig(concept_confidence_threshold=1.5)
    with pytest.raises(CurationError):
        CurationConfig(concept_min_fraction=0.6, concept_flag_fraction=0.5)
    with pytest.raises(CurationError):
        CurationConfig(normalization_mode="stem")
