"""Load flat-file corpus exports into validated, immutable records.

One CSV per record type (UTF-8, header row, RFC-4180 quoting). Empty
optional cells are read as ``None``; mandatory cells must be non-empty.
"""
import json
import logging
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._io import fmt_float, iter_csv, read_csv_columns, write_csv

logger = logging.getLogger(__name__)

TOPIC_LABELS = (
    "Vaccines/Immunology",
    "Genomics",
    "Public Health Policies",
    "Epidemiology",
    "Clinical Treatment",
    "Virology",
    "Influenza",
    "Healthcare Industry",
    "Lab Trials (human)",
    "Pulmonary infections",
)
SECTIONS = ("title", "abstract", "body")

PAPER_COLUMNS = ("paper_id", "title", "pub_date", "journal", "doi")
AUTHOR_COLUMNS = ("paper_id", "first", "middle", "last", "inst_name", "inst_country", "inst_city")
CONCEPT_COLUMNS = ("paper_id", "surface_text", "category", "confidence")
TOPIC_COLUMNS = ("paper_id", "topic_label", "score")
BIB_COLUMNS = ("citing_paper_id", "ref_title", "ref_authors")

MANDATORY_FILES = {
    "papers.csv": PAPER_COLUMNS,
    "author_mentions.csv": AUTHOR_COLUMNS,
    "concept_mentions.csv": CONCEPT_COLUMNS,
    "topic_assignments.csv": TOPIC_COLUMNS,
    "bibliography.csv": BIB_COLUMNS,
}

_DATE_RE = re.compile(r"^\d{4}(-\d{2}(-\d{2})?)?$")


class IngestError(Exception):
    """Fatal input problem, optionally located at ``path:line``."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class MissingFileError(IngestError):
    pass


class MalformedRowError(IngestError):
    pass


class DuplicateKeyError(IngestError):
    pass


@dataclass(frozen=True, order=True)
class PaperRecord:
    paper_id: str
    title: str
    pub_date: Optional[str] = None
    journal: Optional[str] = None
    doi: Optional[str] = None


@dataclass(frozen=True)
class AuthorMention:
    paper_id: str
    first: Optional[str]
    middle: Optional[str]
    last: str
    inst_name: Optional[str] = None
    inst_country: Optional[str] = None
    inst_city: Optional[str] = None

    def sort_key(self):
        return tuple(v or "" for v in (self.paper_id, self.last, self.first, self.middle,
                                       self.inst_name, self.inst_country, self.inst_city))


@dataclass(frozen=True)
class ConceptMention:
    paper_id: str
    surface_text: str
    category: Optional[str]
    confidence: float

    def sort_key(self):
        return (self.paper_id, self.surface_text, self.category or "", self.confidence)


@dataclass(frozen=True)
class TopicAssignment:
    paper_id: str
    topic_label: str
    score: float

    def sort_key(self):
        return (self.paper_id, self.topic_label, self.score)


@dataclass(frozen=True)
class BibliographyEntry:
    citing_paper_id: str
    ref_title: str
    ref_authors: tuple = ()  # of (first, middle, last), each str or None

    def sort_key(self):
        authors = tuple(tuple(p or "" for p in a) for a in self.ref_authors)
        return (self.citing_paper_id, self.ref_title, authors)


@dataclass(frozen=True)
class SectionText:
    paper_id: str
    section: str
    text: str

    def sort_key(self):
        return (self.paper_id, SECTIONS.index(self.section))


@dataclass(frozen=True)
class IngestConfig:
    topic_vocabulary: tuple = TOPIC_LABELS

    @classmethod
    def from_file(cls, path):
        """Read a topic vocabulary override: a JSON list or one label per line."""
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        if text.lstrip().startswith("["):
            labels = json.loads(text)
        else:
            labels = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not labels:
            raise IngestError("empty topic vocabulary", path)
        return cls(topic_vocabulary=tuple(labels))


@dataclass(frozen=True, eq=False)
class Corpus:
    papers: tuple
    author_mentions: tuple
    concept_mentions: tuple
    topic_assignments: tuple
    bibliography: tuple
    sections: tuple = ()
    # paper_id -> document vector, from semantic_vectors.csv
    semantic_vectors: dict = field(default_factory=dict)
    # (paper_id, section) -> (n_sentences, dim) array, from sentence_vectors.csv
    sentence_vectors: dict = field(default_factory=dict)
    warnings: tuple = ()
    config: IngestConfig = IngestConfig()

    @property
    def counts(self):
        return {
            "papers": len(self.papers),
            "author_mentions": len(self.author_mentions),
            "concept_mentions": len(self.concept_mentions),
            "topic_assignments": len(self.topic_assignments),
            "bibliography": len(self.bibliography),
            "sections": len(self.sections),
            "semantic_vectors": len(self.semantic_vectors),
            "sentence_vector_groups": len(self.sentence_vectors),
        }

    @property
    def paper_ids(self):
        return tuple(p.paper_id for p in self.papers)

    def paper(self, paper_id):
        for p in self.papers:
            if p.paper_id == paper_id:
                return p
        raise KeyError(paper_id)


@dataclass
class ValidationReport:
    dangling_references: list = field(default_factory=list)
    empty_sections: list = field(default_factory=list)
    out_of_vocabulary_topics: list = field(default_factory=list)

    def is_empty(self):
        return not (self.dangling_references or self.empty_sections
                    or self.out_of_vocabulary_topics)

    def to_dict(self):
        return {
            "dangling_references": self.dangling_references,
            "empty_sections": self.empty_sections,
            "out_of_vocabulary_topics": self.out_of_vocabulary_topics,
        }


def _opt(value):
    value = value.strip() if value is not None else ""
    return value or None


def _req(row, col, path, line):
    value = _opt(row[col])
    if value is None:
        raise MalformedRowError(f"empty mandatory field {col!r}", path, line)
    return value


def _unit_float(row, col, path, line):
    raw = row[col].strip()
    try:
        value = float(raw)
    except ValueError:
        raise MalformedRowError(f"{col}={raw!r} is not a number", path, line) from None
    if not 0.0 <= value <= 1.0:
        raise MalformedRowError(f"{col}={raw!r} outside [0, 1]", path, line)
    return value


def _rows(path, expected):
    present = read_csv_columns(path)
    missing = [c for c in expected if c not in present]
    if missing:
        raise MalformedRowError(f"header lacks columns {missing}", path, 1)
    for line, columns, row in iter_csv(path):
        if not isinstance(row, dict):
            raise MalformedRowError(
                f"expected {len(columns)} fields, got {len(row)}", path, line)
        yield line, row


def parse_ref_authors(raw):
    """``"first|middle|last;..."`` -> tuple of (first, middle, last)."""
    out = []
    for chunk in (raw or "").split(";"):
        if not chunk.strip():
            continue
        parts = chunk.split("|")
        if len(parts) != 3:
            raise ValueError(f"author {chunk!r} is not first|middle|last")
        out.append(tuple(_opt(p) for p in parts))
    return tuple(out)


def format_ref_authors(authors):
    return ";".join("|".join(p or "" for p in a) for a in authors)


def _load_papers(path):
    papers, seen = [], set()
    for line, row in _rows(path, PAPER_COLUMNS):
        pid = _req(row, "paper_id", path, line)
        if pid in seen:
            raise DuplicateKeyError(f"duplicate paper_id {pid!r}", path, line)
        seen.add(pid)
        date = _opt(row["pub_date"])
        if date is not None and not _DATE_RE.match(date):
            raise MalformedRowError(f"pub_date={date!r} is not an ISO-8601 date", path, line)
        papers.append(PaperRecord(pid, _req(row, "title", path, line), date,
                                  _opt(row["journal"]), _opt(row["doi"])))
    return papers


def _load_authors(path):
    out = []
    for line, row in _rows(path, AUTHOR_COLUMNS):
        out.append(AuthorMention(
            _req(row, "paper_id", path, line), _opt(row["first"]), _opt(row["middle"]),
            _req(row, "last", path, line), _opt(row["inst_name"]),
            _opt(row["inst_country"]), _opt(row["inst_city"])))
    return out


def _load_concepts(path):
    out = []
    for line, row in _rows(path, CONCEPT_COLUMNS):
        out.append(ConceptMention(
            _req(row, "paper_id", path, line), _req(row, "surface_text", path, line),
            _opt(row["category"]), _unit_float(row, "confidence", path, line)))
    return out


def _load_topics(path):
    out = []
    for line, row in _rows(path, TOPIC_COLUMNS):
        out.append(TopicAssignment(
            _req(row, "paper_id", path, line), _req(row, "topic_label", path, line),
            _unit_float(row, "score", path, line)))
    return out


def _load_bibliography(path):
    out = []
    for line, row in _rows(path, BIB_COLUMNS):
        try:
            authors = parse_ref_authors(row["ref_authors"])
        except ValueError as exc:
            raise MalformedRowError(str(exc), path, line) from None
        out.append(BibliographyEntry(_req(row, "citing_paper_id", path, line),
                                     _req(row, "ref_title", path, line), authors))
    return out


def _load_sections(path):
    out, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for line, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
                pid, section, text = obj["paper_id"], obj["section"], obj["text"]
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedRowError(f"bad section record ({exc})", path, line) from None
            if not isinstance(pid, str) or not pid:
                raise MalformedRowError("empty paper_id", path, line)
            if section not in SECTIONS:
                raise MalformedRowError(f"unknown section {section!r}", path, line)
            if not isinstance(text, str):
                raise MalformedRowError("text must be a string", path, line)
            if (pid, section) in seen:
                raise DuplicateKeyError(f"duplicate section ({pid!r}, {section!r})", path, line)
            seen.add((pid, section))
            out.append(SectionText(pid, section, text))
    return out


def _vector_columns(columns, path):
    vcols = [c for c in columns if re.fullmatch(r"v\d+", c)]
    if [int(c[1:]) for c in vcols] != list(range(len(vcols))) or not vcols:
        raise MalformedRowError("vector columns must be v0..v{d-1}", path, 1)
    return vcols


def _parse_vector(row, vcols, path, line):
    try:
        vec = np.array([float(row[c]) for c in vcols])
    except ValueError:
        raise MalformedRowError("non-numeric vector component", path, line) from None
    if not np.all(np.isfinite(vec)):
        raise MalformedRowError("non-finite vector component", path, line)
    return vec


def load_semantic_vectors(path):
    """Per-document vectors: ``paper_id, v0..v{d-1}``."""
    vcols = _vector_columns(read_csv_columns(path), path)
    out = {}
    for line, row in _rows(path, ("paper_id",)):
        pid = _req(row, "paper_id", path, line)
        if pid in out:
            raise DuplicateKeyError(f"duplicate vector for {pid!r}", path, line)
        out[pid] = _parse_vector(row, vcols, path, line)
    return out


def load_sentence_vectors(path):
    """Per-sentence vectors: ``paper_id, section, sentence_index, v0..``."""
    vcols = _vector_columns(read_csv_columns(path), path)
    groups = {}
    for line, row in _rows(path, ("paper_id", "section", "sentence_index")):
        pid = _req(row, "paper_id", path, line)
        section = _req(row, "section", path, line)
        if section not in SECTIONS:
            raise MalformedRowError(f"unknown section {section!r}", path, line)
        try:
            idx = int(row["sentence_index"])
        except ValueError:
            raise MalformedRowError("sentence_index must be an integer", path, line) from None
        bucket = groups.setdefault((pid, section), {})
        if idx in bucket:
            raise DuplicateKeyError(f"duplicate sentence {pid!r}/{section}/{idx}", path, line)
        bucket[idx] = _parse_vector(row, vcols, path, line)
    return {key: np.vstack([b[i] for i in sorted(b)]) for key, b in sorted(groups.items())}


def load_corpus(directory, config=None):
    """Parse a corpus export directory into a :class:`Corpus`.

    Cross-file references to unknown ``paper_id`` values are not fatal;
    they are collected in ``Corpus.warnings``. Every collection is sorted
    on its natural key, so row order in the input files does not matter.

    Raises
    ------
    MissingFileError
        A mandatory file is absent.
    MalformedRowError
        A row fails parsing or a range check (message carries file:line).
    DuplicateKeyError
        Repeated ``paper_id`` or repeated (paper_id, section) text.
    """
    config = config or IngestConfig()
    paths = {}
    for name in MANDATORY_FILES:
        path = os.path.join(directory, name)
        if not os.path.isfile(path):
            raise MissingFileError(f"missing mandatory file {name}", directory)
        paths[name] = path

    papers = sorted(_load_papers(paths["papers.csv"]))
    authors = sorted(_load_authors(paths["author_mentions.csv"]), key=AuthorMention.sort_key)
    concepts = sorted(_load_concepts(paths["concept_mentions.csv"]), key=ConceptMention.sort_key)
    topics = sorted(_load_topics(paths["topic_assignments.csv"]), key=TopicAssignment.sort_key)
    bib = sorted(_load_bibliography(paths["bibliography.csv"]), key=BibliographyEntry.sort_key)

    sections, sem, sent = [], {}, {}
    opt = os.path.join(directory, "sections.jsonl")
    if os.path.isfile(opt):
        sections = sorted(_load_sections(opt), key=SectionText.sort_key)
    opt = os.path.join(directory, "semantic_vectors.csv")
    if os.path.isfile(opt):
        sem = dict(sorted(load_semantic_vectors(opt).items()))
    opt = os.path.join(directory, "sentence_vectors.csv")
    if os.path.isfile(opt):
        sent = load_sentence_vectors(opt)

    corpus = Corpus(tuple(papers), tuple(authors), tuple(concepts), tuple(topics), tuple(bib),
                    tuple(sections), sem, sent, config=config)
    warnings = tuple(f"dangling reference: {d['file']} paper_id={d['paper_id']!r}"
                     for d in _dangling(corpus))
    corpus = Corpus(corpus.papers, corpus.author_mentions, corpus.concept_mentions,
                    corpus.topic_assignments, corpus.bibliography, corpus.sections,
                    sem, sent, warnings, config)
    for w in warnings:
        logger.warning(w)
    logger.info("loaded corpus %s", corpus.counts)
    return corpus


def _dangling(corpus):
    known = set(corpus.paper_ids)
    groups = [
        ("author_mentions.csv", (m.paper_id for m in corpus.author_mentions)),
        ("concept_mentions.csv", (m.paper_id for m in corpus.concept_mentions)),
        ("topic_assignments.csv", (m.paper_id for m in corpus.topic_assignments)),
        ("bibliography.csv", (m.citing_paper_id for m in corpus.bibliography)),
        ("sections.jsonl", (m.paper_id for m in corpus.sections)),
        ("semantic_vectors.csv", iter(corpus.semantic_vectors)),
        ("sentence_vectors.csv", (pid for pid, _ in corpus.sentence_vectors)),
    ]
    out = []
    for name, ids in groups:
        for pid, n in sorted(Counter(i for i in ids if i not in known).items()):
            out.append({"file": name, "paper_id": pid, "rows": n})
    return out


def validate_corpus(corpus):
    """Report-only integrity check; the corpus is not modified."""
    report = ValidationReport()
    report.dangling_references = _dangling(corpus)
    for s in corpus.sections:
        if not s.text.strip():
            report.empty_sections.append({"paper_id": s.paper_id, "section": s.section})
    vocab = set(corpus.config.topic_vocabulary)
    for label, n in sorted(Counter(t.topic_label for t in corpus.topic_assignments
                                   if t.topic_label not in vocab).items()):
        report.out_of_vocabulary_topics.append({"topic_label": label, "rows": n})
    return report


def write_corpus(corpus, directory, header=None):
    """Serialize a corpus back to the export layout (sorted, lossless)."""
    os.makedirs(directory, exist_ok=True)
    j = os.path.join
    write_csv(j(directory, "papers.csv"), PAPER_COLUMNS,
              ([p.paper_id, p.title, p.pub_date or "", p.journal or "", p.doi or ""]
               for p in corpus.papers), header)
    write_csv(j(directory, "author_mentions.csv"), AUTHOR_COLUMNS,
              ([m.paper_id, m.first or "", m.middle or "", m.last, m.inst_name or "",
                m.inst_country or "", m.inst_city or ""] for m in corpus.author_mentions), header)
    write_csv(j(directory, "concept_mentions.csv"), CONCEPT_COLUMNS,
              ([m.paper_id, m.surface_text, m.category or "", fmt_float(m.confidence)]
               for m in corpus.concept_mentions), header)
    write_csv(j(directory, "topic_assignments.csv"), TOPIC_COLUMNS,
              ([t.paper_id, t.topic_label, fmt_float(t.score)] for t in corpus.topic_assignments),
              header)
    write_csv(j(directory, "bibliography.csv"), BIB_COLUMNS,
              ([b.citing_paper_id, b.ref_title, format_ref_authors(b.ref_authors)]
               for b in corpus.bibliography), header)
    if corpus.sections:
        with open(j(directory, "sections.jsonl"), "w", encoding="utf-8") as fh:
            for s in corpus.sections:
                fh.write(json.dumps({"paper_id": s.paper_id, "section": s.section,
                                     "text": s.text}, ensure_ascii=False) + "\n")
    if corpus.semantic_vectors:
        dim = len(next(iter(corpus.semantic_vectors.values())))
        write_csv(j(directory, "semantic_vectors.csv"),
                  ["paper_id"] + [f"v{i}" for i in range(dim)],
                  ([pid] + [fmt_float(x) for x in vec]
                   for pid, vec in sorted(corpus.semantic_vectors.items())), header)
    if corpus.sentence_vectors:
        dim = next(iter(corpus.sentence_vectors.values())).shape[1]
        rows = []
        for (pid, section), mat in sorted(corpus.sentence_vectors.items()):
            for i, vec in enumerate(mat):
                rows.append([pid, section, i] + [fmt_float(x) for x in vec])
        write_csv(j(directory, "sentence_vectors.csv"),
                  ["paper_id", "section", "sentence_index"] + [f"v{i}" for i in range(dim)],
                  rows, header)
