import filecmp
import os
import random

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from scholarkg.ingest import (DuplicateKeyError, IngestConfig, MalformedRowError, MissingFileError,
                              format_ref_authors, load_corpus, parse_ref_authors, validate_corpus,
                              write_corpus)

from conftest import minimal_corpus_dir, write_table


def test_tiny_corpus_counts(tiny_dir):
    c = load_corpus(tiny_dir)
    assert c.counts["papers"] == 10
    assert c.counts["author_mentions"] == 16
    assert c.counts["concept_mentions"] == 17
    assert c.counts["topic_assignments"] == 13
    assert c.counts["bibliography"] == 9
    assert c.warnings == ()


def test_three_papers_four_authors(tmp_path):
    d = minimal_corpus_dir(tmp_path / "c", papers=[("a", "A"), ("b", "B"), ("c", "C")],
                           authors=[("a", "X", "", "Y", "", "", "")] * 2
                           + [("b", "Z", "", "W", "", "", ""), ("c", "", "", "V", "", "", "")])
    c = load_corpus(d)
    assert (c.counts["papers"], c.counts["author_mentions"]) == (3, 4)


def test_confidence_out_of_range_names_file_and_line(tmp_path):
    d = minimal_corpus_dir(tmp_path / "c", concepts=[("p1", "fever", "x", "0.9"),
                                                     ("p1", "cough", "x", "1.2")])
    with pytest.raises(MalformedRowError) as info:
        load_corpus(d)
    assert info.value.line == 3
    assert info.value.path.endswith("concept_mentions.csv")
    assert "concept_mentions.csv:3" in str(info.value)


def test_missing_file(tmp_path):
    d = minimal_corpus_dir(tmp_path / "c")
    os.remove(d / "bibliography.csv")
    with pytest.raises(MissingFileError, match="bibliography.csv"):
        load_corpus(d)


def test_duplicate_paper_id(tmp_path):
    d = minimal_corpus_dir(tmp_path / "c", papers=[("p1", "A"), ("p1", "B")])
    with pytest.raises(DuplicateKeyError):
        load_corpus(d)


def test_empty_title_rejected(tmp_path):
    d = minimal_corpus_dir(tmp_path / "c", papers=[("p1", "  ")])
    with pytest.raises(MalformedRowError, match="title"):
        load_corpus(d)


def test_bad_date_rejected(tmp_path):
    d = minimal_corpus_dir(tmp_path / "c")
    write_table(d / "papers.csv", ("paper_id", "title", "pub_date", "journal", "doi"),
                [("p1", "T", "April 2020", "", "")])
    with pytest.raises(MalformedRowError, match="pub_date"):
        load_corpus(d)


def test_ragged_row(tmp_path):
    d = minimal_corpus_dir(tmp_path / "c")
    with open(d / "topic_assignments.csv", "a") as fh:
        fh.write("p1,Genomics\n")
    with pytest.raises(MalformedRowError) as info:
        load_corpus(d)
    assert info.value.line == 2


def test_dangling_reference_is_a_warning(tmp_path):
    d = minimal_corpus_dir(tmp_path / "c", concepts=[("ghost", "fever", "", "0.9")])
    c = load_corpus(d)
    assert len(c.warnings) == 1
    rep = validate_corpus(c)
    assert len(rep.dangling_references) == 1
    assert rep.dangling_references[0]["paper_id"] == "ghost"


def test_out_of_vocabulary_topic(tmp_path):
    d = minimal_corpus_dir(tmp_path / "c", topics=[("p1", "Astrology", "0.5")])
    rep = validate_corpus(load_corpus(d))
    assert rep.out_of_vocabulary_topics == [{"topic_label": "Astrology", "rows": 1}]


def test_custom_vocabulary(tmp_path):
    d = minimal_corpus_dir(tmp_path / "c", topics=[("p1", "Astrology", "0.5")])
    voc = tmp_path / "voc.txt"
    voc.write_text("Astrology\n")
    rep = validate_corpus(load_corpus(d, IngestConfig.from_file(voc)))
    assert rep.is_empty()


def test_tiny_corpus_is_clean(tiny_dir):
    assert validate_corpus(load_corpus(tiny_dir)).is_empty()


def test_empty_section_reported(tmp_path):
    d = minimal_corpus_dir(tmp_path / "c")
    (d / "sections.jsonl").write_text('{"paper_id": "p1", "section": "abstract", "text": " "}\n')
    rep = validate_corpus(load_corpus(d))
    assert rep.empty_sections == [{"paper_id": "p1", "section": "abstract"}]


def test_row_order_does_not_matter(tiny_copy, tmp_path):
    a = load_corpus(tiny_copy)
    rnd = random.Random(4)
    for name in os.listdir(tiny_copy):
        path = tiny_copy / name
        lines = path.read_text(encoding="utf-8").splitlines(keepends=True)
        head, body = ([], lines) if name.endswith(".jsonl") else (lines[:1], lines[1:])
        rnd.shuffle(body)
        path.write_text("".join(head + body), encoding="utf-8")
    b = load_corpus(tiny_copy)
    for field in ("papers", "author_mentions", "concept_mentions", "topic_assignments",
                  "bibliography", "sections"):
        assert getattr(a, field) == getattr(b, field)


def test_round_trip_is_lossless(tiny_dir, tmp_path):
    a = load_corpus(tiny_dir)
    write_corpus(a, tmp_path / "one")
    b = load_corpus(tmp_path / "one")
    write_corpus(b, tmp_path / "two")
    assert a.papers == b.papers and a.bibliography == b.bibliography
    assert a.sections == b.sections
    for name in os.listdir(tmp_path / "one"):
        assert filecmp.cmp(tmp_path / "one" / name, tmp_path / "two" / name, shallow=False)


def test_ref_author_codec():
    raw = "Alice||Smith;J.|Q|Doe"
    parsed = parse_ref_authors(raw)
    assert parsed == (("Alice", None, "Smith"), ("J.", "Q", "Doe"))
    assert format_ref_authors(parsed) == raw


_text = st.text(st.characters(blacklist_categories=("Cs", "Cc")), min_size=1, max_size=20) \
    .filter(lambda s: s.strip() == s and s)


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(titles=st.lists(_text, min_size=1, max_size=6),
       conf=st.lists(st.floats(0, 1), min_size=1, max_size=6))
def test_round_trip_property(tmp_path_factory, titles, conf):
    root = tmp_path_factory.mktemp("rt")
    papers = [(f"p{i}", t) for i, t in enumerate(titles)]
    concepts = [(f"p{i % len(titles)}", f"c{i}", "", repr(c)) for i, c in enumerate(conf)]
    minimal_corpus_dir(root / "src", papers=papers, concepts=concepts)
    a = load_corpus(root / "src")
    write_corpus(a, root / "out")
    b = load_corpus(root / "out")
    assert a.papers == b.papers
    assert a.concept_mentions == b.concept_mentions
