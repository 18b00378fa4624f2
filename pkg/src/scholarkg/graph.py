"""Immutable typed property graph with statistics and the two query families.

Entities get dense integer ids ``0..n-1`` in (kind, key) order. Triplets
are stored column-wise as numpy arrays; each relation type has forward and
reverse CSR adjacency.
"""
import json
import logging
import os
from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from ._io import fmt_float, iter_csv, parse_float, write_csv
from .curation import (ENTITY_KINDS, RELATIONS, SIGNATURES, CuratedEntity,
                       CuratedGraphInput, CuratedTriplet, normalize_concept)

logger = logging.getLogger(__name__)

REL_INDEX = {r: i for i, r in enumerate(RELATIONS)}
KIND_INDEX = {k: i for i, k in enumerate(ENTITY_KINDS)}
DIAMETER_EXACT_LIMIT = 200_000


class GraphSchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Entity:
    id: int
    kind: str
    key: str
    attributes: dict


class _Adjacency:
    """CSR-style neighbor lists for one relation in one direction."""

    def __init__(self, src, dst, edge_ids, n):
        order = np.lexsort((dst, src))
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=self.indptr[1:])
        self.indices = dst[order]
        self.edge_ids = edge_ids[order]
        for a in (self.indptr, self.indices, self.edge_ids):
            a.setflags(write=False)

    def neighbors(self, node):
        return self.indices[self.indptr[node]:self.indptr[node + 1]]

    def degree(self):
        return np.diff(self.indptr)


class PropertyGraph:
    """Read-only graph. Build it with :func:`build_graph`."""

    def __init__(self, entities, heads, relations, tails, weights):
        self.entities = tuple(entities)
        self.kinds = np.array([KIND_INDEX[e.kind] for e in self.entities], dtype=np.int8)
        self.heads = np.asarray(heads, dtype=np.int64)
        self.relations = np.asarray(relations, dtype=np.int64)
        self.tails = np.asarray(tails, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=float)
        for a in (self.kinds, self.heads, self.relations, self.tails, self.weights):
            a.setflags(write=False)
        self._by_key = {(e.kind, e.key): e.id for e in self.entities}
        n = len(self.entities)
        self.forward, self.reverse = {}, {}
        eid = np.arange(len(self.heads))
        for rel, ri in REL_INDEX.items():
            mask = self.relations == ri
            self.forward[rel] = _Adjacency(self.heads[mask], self.tails[mask], eid[mask], n)
            self.reverse[rel] = _Adjacency(self.tails[mask], self.heads[mask], eid[mask], n)

    @property
    def n_entities(self):
        return len(self.entities)

    @property
    def n_triplets(self):
        return len(self.heads)

    def entity_id(self, kind, key):
        return self._by_key[(kind, key)]

    def has_entity(self, kind, key):
        return (kind, key) in self._by_key

    def ids_of_kind(self, kind):
        return np.flatnonzero(self.kinds == KIND_INDEX[kind])

    def triplet_array(self):
        """``(m, 3)`` int array of (head, relation, tail)."""
        return np.column_stack([self.heads, self.relations, self.tails])

    def entity_counts(self):
        c = Counter(e.kind for e in self.entities)
        return {k: c.get(k, 0) for k in ENTITY_KINDS}

    def relation_counts(self):
        c = np.bincount(self.relations, minlength=len(RELATIONS))
        return {r: int(c[i]) for i, r in enumerate(RELATIONS)}


def build_graph(curated: CuratedGraphInput) -> PropertyGraph:
    """Assign ids and index a curated entity/triplet set.

    Raises :class:`GraphSchemaError` on a relation whose endpoint kinds do
    not match its signature, a dangling endpoint, or a duplicate triplet.
    """
    seen = set()
    for e in curated.entities:
        if e.kind not in KIND_INDEX:
            raise GraphSchemaError(f"unknown entity kind {e.kind!r}")
        if (e.kind, e.key) in seen:
            raise GraphSchemaError(f"duplicate entity {(e.kind, e.key)}")
        seen.add((e.kind, e.key))
    ordered = sorted(curated.entities, key=lambda e: (KIND_INDEX[e.kind], e.key))
    entities = [Entity(i, e.kind, e.key, dict(e.attributes)) for i, e in enumerate(ordered)]
    index = {(e.kind, e.key): e.id for e in entities}

    rows = []
    for t in curated.triplets:
        if t.relation not in SIGNATURES:
            raise GraphSchemaError(f"unknown relation {t.relation!r}")
        want = SIGNATURES[t.relation]
        got = (t.head[0], t.tail[0])
        if got != want:
            raise GraphSchemaError(f"{t.relation} expects {want[0]}->{want[1]}, got {got[0]}->{got[1]}")
        try:
            h, tl = index[t.head], index[t.tail]
        except KeyError as exc:
            raise GraphSchemaError(f"triplet endpoint {exc.args[0]} is not an entity") from None
        rows.append((h, REL_INDEX[t.relation], tl, np.nan if t.weight is None else t.weight))
    rows.sort(key=lambda r: (r[1], r[0], r[2]))
    for a, b in zip(rows, rows[1:]):
        if a[:3] == b[:3]:
            raise GraphSchemaError(
                f"duplicate triplet {entities[a[0]].key} {RELATIONS[a[1]]} {entities[a[2]].key}")
    if rows:
        h, r, t, w = (np.array(c) for c in zip(*rows))
    else:
        h = r = t = np.zeros(0, dtype=np.int64)
        w = np.zeros(0)
    graph = PropertyGraph(entities, h, r, t, w)
    logger.info("built graph: %d entities, %d triplets", graph.n_entities, graph.n_triplets)
    return graph


def _relation_mask(graph, excluded_relations=()):
    bad = set(excluded_relations) - set(RELATIONS)
    if bad:
        raise ValueError(f"unknown relations {sorted(bad)}")
    keep = np.ones(graph.n_triplets, dtype=bool)
    for rel in excluded_relations:
        keep &= graph.relations != REL_INDEX[rel]
    return keep


def undirected_adjacency(graph, excluded_relations=()):
    """Symmetric boolean CSR matrix over included relations (no self loops
    arise from the schema except paper self-citation, which curation drops)."""
    keep = _relation_mask(graph, excluded_relations)
    h, t = graph.heads[keep], graph.tails[keep]
    n = graph.n_entities
    data = np.ones(2 * len(h), dtype=np.int8)
    mat = sparse.coo_matrix((data, (np.concatenate([h, t]), np.concatenate([t, h]))), shape=(n, n))
    mat = mat.tocsr()
    mat.data[:] = 1
    return mat


def degree_distribution(graph, excluded_relations=()):
    """Histogram ``{degree: n_entities}`` of undirected degree.

    Each included triplet adds one to the degree of both endpoints, so the
    histogram mass ``sum(d * n)`` is twice the number of included triplets.
    """
    keep = _relation_mask(graph, excluded_relations)
    deg = np.bincount(graph.heads[keep], minlength=graph.n_entities)
    deg += np.bincount(graph.tails[keep], minlength=graph.n_entities)
    values, counts = np.unique(deg, return_counts=True)
    return {int(d): int(c) for d, c in zip(values, counts)}


def connected_components(graph):
    """Return ``(n_components, labels)`` on the undirected view of all relations."""
    n, labels = csgraph.connected_components(undirected_adjacency(graph), directed=False)
    return int(n), labels


def _bfs_eccentricities(adj, sources, chunk=256):
    ecc = np.empty(len(sources), dtype=np.int64)
    for start in range(0, len(sources), chunk):
        block = sources[start:start + chunk]
        dist = csgraph.shortest_path(adj, directed=False, unweighted=True, indices=block)
        dist[~np.isfinite(dist)] = -1
        ecc[start:start + len(block)] = dist.max(axis=1)
    return ecc


def _double_sweep(adj, start):
    d = csgraph.shortest_path(adj, directed=False, unweighted=True, indices=[start])[0]
    d[~np.isfinite(d)] = -1
    far = int(np.argmax(d))
    d2 = csgraph.shortest_path(adj, directed=False, unweighted=True, indices=[far])[0]
    d2[~np.isfinite(d2)] = -1
    return int(d2.max())


def largest_cc_diameter(graph, exact_limit=DIAMETER_EXACT_LIMIT):
    """Diameter of the largest connected component (undirected, unweighted).

    Exact (BFS from every node of the component) up to ``exact_limit``
    nodes; above that, a double-sweep lower bound. Ties between equally
    large components go to the one containing the smallest entity id.
    Returns ``(diameter, component_size, exact)``.
    """
    if graph.n_entities < 1:
        raise ValueError("graph has no entities")
    _, labels = connected_components(graph)
    sizes = np.bincount(labels)
    members = np.flatnonzero(labels == int(np.argmax(sizes)))
    if len(members) == 1:
        return 0, 1, True
    adj = undirected_adjacency(graph)[members][:, members]
    if len(members) > exact_limit:
        logger.warning("largest component has %d nodes; using double-sweep bound", len(members))
        return _double_sweep(adj, 0), len(members), False
    ecc = _bfs_eccentricities(adj, np.arange(len(members)))
    return int(ecc.max()), len(members), True


def mean_out_degrees(graph):
    """Per-relation mean out-degree over all entities of the head kind,
    zero-degree entities included."""
    out = {}
    for rel in RELATIONS:
        head_kind = SIGNATURES[rel][0]
        n = len(graph.ids_of_kind(head_kind))
        m = int(np.sum(graph.relations == REL_INDEX[rel]))
        out[rel] = m / n if n else 0.0
    return out


def graph_statistics(graph):
    n_cc, labels = connected_components(graph)
    diameter, size, exact = largest_cc_diameter(graph) if graph.n_entities else (0, 0, True)
    cites = graph.forward["cites"]
    has_out = cites.degree()[graph.ids_of_kind("paper")] > 0
    has_in = graph.reverse["cites"].degree()[graph.ids_of_kind("paper")] > 0
    return {
        "entity_counts": graph.entity_counts(),
        "relation_counts": graph.relation_counts(),
        "total_entities": graph.n_entities,
        "total_relations": graph.n_triplets,
        "mean_out_degree": mean_out_degrees(graph),
        "papers_citing": int(has_out.sum()),
        "papers_cited": int(has_in.sum()),
        "papers_citing_and_cited": int((has_in & has_out).sum()),
        "papers_without_citations": int((~has_in & ~has_out).sum()),
        "connected_components": n_cc,
        "largest_cc_size": size,
        "largest_cc_diameter": diameter,
        "largest_cc_diameter_exact": exact,
    }


DEGREE_SCENARIOS = {
    "full": (),
    "no_concept": ("associated_concept",),
    "no_cites": ("cites",),
    "no_topic": ("associated_topic",),
}


@dataclass
class ConceptTopicResult:
    papers: list        # entity ids, ascending
    authors: list       # (entity id, matched-paper count), ranked
    institutions: list  # (entity id, matched-paper count), ranked
    unknown: list       # names that resolved to nothing


def _resolve_concepts(graph, names, mode):
    ids, unknown = set(), []
    for name in names:
        cands = {name}
        for m in ("lowercase_strip", "lowercase_strip_lemma", mode):
            try:
                cands.add(normalize_concept(name, m))
            except ValueError:
                pass
        hit = [graph.entity_id("concept", c) for c in cands if graph.has_entity("concept", c)]
        if hit:
            ids.update(hit)
        else:
            unknown.append(name)
    return ids, unknown


def _resolve_topics(graph, labels):
    lookup = {graph.entities[i].key.lower(): int(i) for i in graph.ids_of_kind("topic")}
    ids, unknown = set(), []
    for label in labels:
        i = lookup.get(label.strip().lower())
        if i is None:
            unknown.append(label)
        else:
            ids.add(i)
    return ids, unknown


def _papers_linked_to(graph, relation, targets):
    rev = graph.reverse[relation]
    out = set()
    for t in targets:
        out.update(int(p) for p in rev.neighbors(t))
    return out


def _ranked(counter):
    return sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))


def query_concept_topic(graph, concept_names, topic_labels, mode="lowercase_strip"):
    """Papers tied to any named concept AND any named topic, plus their
    authors (one hop) and those authors' institutions (two hops).

    Authors and institutions are ranked by how many matching papers they
    reach, most first; ties go to the lower entity id.
    """
    c_ids, unk_c = _resolve_concepts(graph, concept_names, mode)
    t_ids, unk_t = _resolve_topics(graph, topic_labels)
    for name in unk_c + unk_t:
        logger.warning("query name %r did not resolve", name)
    papers = _papers_linked_to(graph, "associated_concept", c_ids)
    papers &= _papers_linked_to(graph, "associated_topic", t_ids)

    author_papers = defaultdict(set)
    for p in papers:
        for a in graph.forward["authored_by"].neighbors(p):
            author_papers[int(a)].add(p)
    inst_papers = defaultdict(set)
    for a, ps in author_papers.items():
        for i in graph.forward["affiliated_with"].neighbors(a):
            inst_papers[int(i)].update(ps)
    return ConceptTopicResult(
        sorted(papers),
        _ranked({a: len(ps) for a, ps in author_papers.items()}),
        _ranked({i: len(ps) for i, ps in inst_papers.items()}),
        unk_c + unk_t,
    )


def query_concept_citation_rank(graph, concept_names, limit, mode="lowercase_strip"):
    """Papers tied to any named concept, ranked by in-corpus citation count.

    Returns a list of ``(entity_id, paper_id, title, cited_by)``.
    """
    if limit < 1:
        raise ValueError("limit must be >= 1")
    c_ids, _ = _resolve_concepts(graph, concept_names, mode)
    papers = _papers_linked_to(graph, "associated_concept", c_ids)
    indeg = graph.reverse["cites"].degree()
    rows = [(p, graph.entities[p].key, graph.entities[p].attributes.get("title"), int(indeg[p]))
            for p in papers]
    rows.sort(key=lambda r: (-r[3], r[1]))
    return rows[:limit]


def write_graph(graph, directory, header=None):
    write_csv(os.path.join(directory, "entities.csv"), ("id", "kind", "key", "attributes"),
              ([e.id, e.kind, e.key, json.dumps(e.attributes, sort_keys=True)]
               for e in graph.entities), header)
    write_csv(os.path.join(directory, "triplets.csv"), ("head", "relation", "tail", "weight"),
              ([int(h), RELATIONS[r], int(t), fmt_float(w)] for h, r, t, w in
               zip(graph.heads, graph.relations, graph.tails, graph.weights)), header)


def read_graph(directory):
    ents = []
    for _, _, row in iter_csv(os.path.join(directory, "entities.csv")):
        ents.append(CuratedEntity(row["kind"], row["key"], json.loads(row["attributes"])))
    ents_by_id = dict(enumerate(ents))
    trips = []
    for _, _, row in iter_csv(os.path.join(directory, "triplets.csv")):
        h, t = ents_by_id[int(row["head"])], ents_by_id[int(row["tail"])]
        trips.append(CuratedTriplet((h.kind, h.key), row["relation"], (t.kind, t.key),
                                    parse_float(row["weight"])))
    return build_graph(CuratedGraphInput(ents, trips))
