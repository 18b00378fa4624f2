"""Turn raw mentions into deduplicated graph entities and relation triplets.

Entities are identified here by natural keys ``(kind, key)``; dense integer
ids are assigned later, when the graph is built.
"""
import logging
import math
import os
import re
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field

from ._io import fmt_float, iter_csv, parse_float, write_csv, write_json

logger = logging.getLogger(__name__)

ENTITY_KINDS = ("paper", "author", "institution", "concept", "topic")
RELATIONS = ("authored_by", "affiliated_with", "associated_concept", "associated_topic", "cites")
SIGNATURES = {
    "authored_by": ("paper", "author"),
    "affiliated_with": ("author", "institution"),
    "associated_concept": ("paper", "concept"),
    "associated_topic": ("paper", "topic"),
    "cites": ("paper", "paper"),
}
NORMALIZATION_MODES = ("lowercase_strip", "lowercase_strip_lemma")

ENTITY_FIELDS = {
    "paper": ("title", "pub_date", "journal", "doi"),
    "author": ("first", "middle", "last"),
    "institution": ("name", "country", "city"),
    "concept": ("category", "flagged"),
    "topic": (),
}

_PUNCT = re.compile(r"[^\w\s]|_", re.UNICODE)
_SPACE = re.compile(r"\s+")


class CurationError(ValueError):
    pass


@dataclass(frozen=True)
class CurationConfig:
    concept_confidence_threshold: float = 0.5
    concept_min_fraction: float = 1e-4
    concept_flag_fraction: float = 0.5
    normalization_mode: str = "lowercase_strip"

    def __post_init__(self):
        if not 0.0 <= self.concept_confidence_threshold <= 1.0:
            raise CurationError("concept_confidence_threshold must lie in [0, 1]")
        if not 0.0 <= self.concept_min_fraction < self.concept_flag_fraction <= 1.0:
            raise CurationError("need 0 <= concept_min_fraction < concept_flag_fraction <= 1")
        if self.normalization_mode not in NORMALIZATION_MODES:
            raise CurationError(f"unknown normalization_mode {self.normalization_mode!r}")


@dataclass(frozen=True)
class CuratedEntity:
    kind: str
    key: str
    attributes: dict = field(default_factory=dict, compare=False, hash=False)


@dataclass(frozen=True, order=True)
class CuratedTriplet:
    head: tuple  # (kind, key)
    relation: str
    tail: tuple
    weight: float = field(default=None, compare=False)


@dataclass
class CuratedGraphInput:
    entities: list
    triplets: list
    report: dict = field(default_factory=dict)
    flagged_concepts: list = field(default_factory=list)


def _strip(text):
    return _SPACE.sub(" ", _PUNCT.sub(" ", text.lower())).strip()


def normalize_author(first, middle, last):
    """Lowercase, drop punctuation, join first/middle/last with single spaces.

    >>> normalize_author("John", "Q.", "Smith")
    'john q smith'
    """
    if last is None or not _strip(last):
        raise CurationError("author last name is empty")
    parts = [_strip(p) for p in (first, middle, last) if p]
    return " ".join(p for p in parts if p)


def _lemma(token):
    if len(token) <= 3 or token.endswith(("ss", "us", "is")):
        return token
    if token.endswith("ies") and len(token) > 4:
        return token[:-3] + "y"
    if token.endswith(("ches", "shes", "sses", "xes", "zes")):
        return token[:-2]
    if token.endswith("s"):
        return token[:-1]
    return token


def normalize_concept(surface_text, mode="lowercase_strip"):
    text = _strip(surface_text)
    if mode == "lowercase_strip_lemma":
        text = " ".join(_lemma(t) for t in text.split())
    elif mode != "lowercase_strip":
        raise CurationError(f"unknown normalization mode {mode!r}")
    if not text:
        raise CurationError(f"concept {surface_text!r} is empty after normalization")
    return text


def normalize_title(title):
    return _strip(title)


def curate_concepts(mentions, n_papers, config=None):
    """Threshold, normalize, and frequency-prune concept mentions.

    Returns ``(entities, triplets, flagged, report)``. Mentions below the
    confidence threshold are dropped; a concept supported by fewer than
    ``ceil(min_fraction * n_papers)`` distinct papers is pruned; one above
    ``flag_fraction * n_papers`` papers is kept but listed as flagged. The
    weight on each paper-concept triplet is the highest surviving confidence.
    """
    config = config or CurationConfig()
    if n_papers <= 0:
        raise CurationError("n_papers must be positive")
    report = Counter(mentions_in=len(mentions))
    best = {}  # (paper_id, concept) -> max confidence
    categories = defaultdict(Counter)
    for m in mentions:
        if m.confidence < config.concept_confidence_threshold:
            report["dropped_low_confidence"] += 1
            continue
        try:
            name = normalize_concept(m.surface_text, config.normalization_mode)
        except CurationError:
            report["dropped_unnormalizable"] += 1
            continue
        key = (m.paper_id, name)
        best[key] = max(best.get(key, 0.0), m.confidence)
        categories[name][m.category or ""] += 1

    support = Counter(name for _, name in best)
    # guard against 1e-4 * 1e4 landing a hair above an integer
    min_papers = math.ceil(config.concept_min_fraction * n_papers - 1e-9)
    flag_above = config.concept_flag_fraction * n_papers
    kept, flagged = set(), []
    for name, n in sorted(support.items()):
        if n < min_papers:
            report["pruned_rare"] += 1
            continue
        kept.add(name)
        if n > flag_above:
            flagged.append(name)
    report["flagged_frequent"] = len(flagged)

    entities = []
    for name in sorted(kept):
        cat = sorted(categories[name].items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
        entities.append(CuratedEntity("concept", name, {"category": cat or None,
                                                         "flagged": name in flagged}))
    triplets = sorted(CuratedTriplet(("paper", pid), "associated_concept", ("concept", name), conf)
                      for (pid, name), conf in best.items() if name in kept)
    report["associated_concept"] = len(triplets)
    return entities, triplets, flagged, dict(report)


def curate_authors(mentions):
    """Merge author mentions on their normalized key and institutions on
    their lowercased name.

    Returns ``(authors, institutions, authored_by, affiliated_with, report)``.
    """
    authors, institutions = {}, {}
    authored, affiliated = set(), set()
    for m in mentions:
        key = normalize_author(m.first, m.middle, m.last)
        if key not in authors:
            authors[key] = {"first": m.first, "middle": m.middle, "last": m.last}
        authored.add((m.paper_id, key))
        if m.inst_name:
            ikey = _SPACE.sub(" ", m.inst_name.lower()).strip()
            attrs = institutions.setdefault(ikey, {"name": m.inst_name, "country": None,
                                                   "city": None})
            attrs["country"] = attrs["country"] or m.inst_country
            attrs["city"] = attrs["city"] or m.inst_city
            affiliated.add((key, ikey))

    author_entities = [CuratedEntity("author", k, authors[k]) for k in sorted(authors)]
    inst_entities = [CuratedEntity("institution", k, institutions[k]) for k in sorted(institutions)]
    authored_by = [CuratedTriplet(("paper", p), "authored_by", ("author", a))
                   for p, a in sorted(authored)]
    affiliated_with = [CuratedTriplet(("author", a), "affiliated_with", ("institution", i))
                       for a, i in sorted(affiliated)]
    report = {"author_mentions_in": len(mentions),
              "authors_merged": len(mentions) - len(authors) if mentions else 0,
              "institutions": len(institutions)}
    return author_entities, inst_entities, authored_by, affiliated_with, report


def _author_set(triples):
    keys = set()
    for first, middle, last in triples:
        if last and _strip(last):
            keys.add(normalize_author(first, middle, last))
    return frozenset(keys)


def link_citations(bibliography, papers, author_mentions):
    """Cites triplets for references whose normalized title and normalized
    author set both equal those of a corpus paper. Self-citations dropped."""
    paper_authors = defaultdict(list)
    for m in author_mentions:
        paper_authors[m.paper_id].append((m.first, m.middle, m.last))
    index = defaultdict(list)
    for p in papers:
        index[(normalize_title(p.title), _author_set(paper_authors[p.paper_id]))].append(p.paper_id)

    links = set()
    for entry in bibliography:
        key = (normalize_title(entry.ref_title), _author_set(entry.ref_authors))
        for cited in index.get(key, ()):
            if cited != entry.citing_paper_id:
                links.add((entry.citing_paper_id, cited))
    return [CuratedTriplet(("paper", a), "cites", ("paper", b)) for a, b in sorted(links)]


def curate(corpus, config=None):
    """Full curation pass over a loaded corpus.

    Rows that reference unknown papers are skipped (and counted) so that
    every emitted triplet has both endpoints in the entity set.
    """
    config = config or CurationConfig()
    known = set(corpus.paper_ids)
    report = Counter()

    papers = [CuratedEntity("paper", p.paper_id, {"title": p.title, "pub_date": p.pub_date,
                                                   "journal": p.journal, "doi": p.doi})
              for p in corpus.papers]

    authors_in = [m for m in corpus.author_mentions if m.paper_id in known]
    report["dangling_author_mentions"] = len(corpus.author_mentions) - len(authors_in)
    a_ents, i_ents, authored_by, affiliated, a_report = curate_authors(authors_in)
    report.update(a_report)

    concepts_in = [m for m in corpus.concept_mentions if m.paper_id in known]
    report["dangling_concept_mentions"] = len(corpus.concept_mentions) - len(concepts_in)
    c_ents, assoc_concept, flagged, c_report = curate_concepts(
        concepts_in, max(len(corpus.papers), 1), config)
    report.update(c_report)
    report["mentions_in"] = len(corpus.concept_mentions)

    vocab = tuple(corpus.config.topic_vocabulary)
    t_ents = [CuratedEntity("topic", label, {}) for label in sorted(vocab)]
    topic_best = {}
    for t in corpus.topic_assignments:
        if t.paper_id not in known:
            report["dangling_topic_assignments"] += 1
        elif t.topic_label not in vocab:
            report["out_of_vocabulary_topics"] += 1
        else:
            k = (t.paper_id, t.topic_label)
            topic_best[k] = max(topic_best.get(k, 0.0), t.score)
    assoc_topic = [CuratedTriplet(("paper", p), "associated_topic", ("topic", label), s)
                   for (p, label), s in sorted(topic_best.items())]

    bib_in = [b for b in corpus.bibliography if b.citing_paper_id in known]
    cites = link_citations(bib_in, corpus.papers, authors_in)
    report["citations_linked"] = len(cites)

    for name in ("dropped_low_confidence", "pruned_rare", "flagged_frequent", "authors_merged"):
        report.setdefault(name, 0)
    entities = papers + a_ents + i_ents + c_ents + t_ents
    triplets = authored_by + affiliated + assoc_concept + assoc_topic + cites
    out = CuratedGraphInput(entities, triplets, dict(sorted(report.items())), flagged)
    check_referential_integrity(out)
    logger.info("curated %d entities, %d triplets", len(entities), len(triplets))
    return out


def check_referential_integrity(curated):
    keys = {(e.kind, e.key) for e in curated.entities}
    for t in curated.triplets:
        for end in (t.head, t.tail):
            if end not in keys:
                raise CurationError(f"triplet {t.relation} endpoint {end} not among entities")


def write_curated(curated, directory, header=None):
    """Per-kind entity CSVs, ``triplets.csv`` and ``curation_report.json``."""
    by_kind = defaultdict(list)
    for e in curated.entities:
        by_kind[e.kind].append(e)
    for kind in ENTITY_KINDS:
        cols = ("key",) + ENTITY_FIELDS[kind]
        rows = []
        for e in sorted(by_kind[kind], key=lambda e: e.key):
            row = [e.key]
            for f in ENTITY_FIELDS[kind]:
                v = e.attributes.get(f)
                row.append(("1" if v else "0") if f == "flagged" else (v or ""))
            rows.append(row)
        write_csv(os.path.join(directory, f"entities_{kind}.csv"), cols, rows, header)
    write_csv(os.path.join(directory, "triplets.csv"), ("relation", "head", "tail", "weight"),
              ([t.relation, t.head[1], t.tail[1], fmt_float(t.weight)]
               for t in sorted(curated.triplets)), header)
    write_json(os.path.join(directory, "curation_report.json"),
               {"counts": curated.report, "flagged_concepts": curated.flagged_concepts}, header)


def read_curated(directory):
    entities = []
    for kind in ENTITY_KINDS:
        for _, _, row in iter_csv(os.path.join(directory, f"entities_{kind}.csv")):
            attrs = {}
            for f in ENTITY_FIELDS[kind]:
                attrs[f] = (row[f] == "1") if f == "flagged" else (row[f] or None)
            entities.append(CuratedEntity(kind, row["key"], attrs))
    triplets = []
    for _, _, row in iter_csv(os.path.join(directory, "triplets.csv")):
        hk, tk = SIGNATURES[row["relation"]]
        triplets.append(CuratedTriplet((hk, row["head"]), row["relation"], (tk, row["tail"]),
                                       parse_float(row["weight"])))
    flagged = [e.key for e in entities if e.kind == "concept" and e.attributes.get("flagged")]
    return CuratedGraphInput(entities, triplets, {}, flagged)


def config_dict(config):
    return asdict(config)
