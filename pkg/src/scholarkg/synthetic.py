"""Seeded synthetic data with planted structure, for tests and demos."""
import numpy as np

from .ingest import (TOPIC_LABELS, AuthorMention, BibliographyEntry, ConceptMention, Corpus,
                     PaperRecord, SectionText, TopicAssignment)


def make_translational_kg(n_entities=200, n_relations=4, n_triplets=2000, latent_dim=8,
                          neighbours=3, seed=0):
    """Triplets ``(h, r, t)`` where ``t`` is one of the ``neighbours`` nearest
    entities to ``x_h + v_r`` in a hidden Gaussian latent space.

    Returns an ``(n_triplets, 3)`` int array of unique triplets.
    """
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n_entities, latent_dim))
    v = rng.normal(size=(n_relations, latent_dim))
    seen, out = set(), []
    while len(out) < n_triplets:
        h = int(rng.integers(n_entities))
        r = int(rng.integers(n_relations))
        d = np.linalg.norm(x - (x[h] + v[r]), axis=1)
        d[h] = np.inf
        t = int(rng.choice(np.argsort(d)[:neighbours]))
        if (h, r, t) not in seen:
            seen.add((h, r, t))
            out.append((h, r, t))
    return np.array(out, dtype=np.int64)


def split_holdout(triplets, fraction=0.1, seed=0):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(triplets))
    n_test = int(round(fraction * len(triplets)))
    return triplets[perm[n_test:]], triplets[perm[:n_test]]


_SHARED_WORDS = ("study", "patients", "results", "analysis", "data", "method", "observed",
                 "significant", "clinical", "report", "cases", "model", "effect", "using")


def make_clustered_corpus(n_papers=500, n_clusters=5, seed=0, authors_per_cluster=40,
                          concepts_per_cluster=30, citation_group=6, cites_per_paper=3,
                          topic_noise=0.1, text_purity=0.6):
    """In-memory corpus whose papers fall into ``n_clusters`` planted groups.

    Each cluster owns two topic labels, a vocabulary, an author pool and a
    concept pool; a paper draws mostly from its own cluster. Inside each
    cluster, papers are further split into citation groups of size
    ``citation_group`` and cite only members of their own group, so the
    citation structure is finer than anything the other relations reveal.
    Returns ``(corpus, cluster_of)`` with ``cluster_of[paper_id]``.
    """
    rng = np.random.default_rng(seed)
    labels = TOPIC_LABELS
    cluster_topics = [(labels[(2 * c) % len(labels)], labels[(2 * c + 1) % len(labels)])
                      for c in range(n_clusters)]
    vocab = [[f"c{c}w{i}" for i in range(60)] for c in range(n_clusters)]

    papers, authors, concepts, topics, bib, sections = [], [], [], [], [], []
    cluster_of, titles, paper_authors = {}, {}, {}
    ids = [f"p{i:04d}" for i in range(n_papers)]
    for i, pid in enumerate(ids):
        c = i % n_clusters
        cluster_of[pid] = c

        def sentence(n_words):
            own = int(round(text_purity * n_words))
            words = list(rng.choice(vocab[c], size=own)) + \
                list(rng.choice(_SHARED_WORDS, size=n_words - own))
            rng.shuffle(words)
            return " ".join(words).capitalize() + "."

        title = f"Paper {pid} " + sentence(6)[:-1]
        titles[pid] = title
        papers.append(PaperRecord(pid, title, f"2020-{1 + i % 12:02d}-01",
                                  f"Journal {c}" if rng.random() < 0.9 else None, None))
        sections.append(SectionText(pid, "abstract", " ".join(sentence(10) for _ in range(3))))
        sections.append(SectionText(pid, "body", " ".join(sentence(12) for _ in range(6))))

        names = []
        for a in rng.choice(authors_per_cluster, size=3, replace=False):
            first, last = f"A{c}x{a}", f"Author{c}x{a}"
            inst = f"Institute {c}-{a % 4}"
            authors.append(AuthorMention(pid, first, None, last, inst, "Nowhere", "City"))
            names.append((first, None, last))
        paper_authors[pid] = tuple(names)

        for k in rng.choice(concepts_per_cluster, size=5, replace=False):
            concepts.append(ConceptMention(pid, f"Concept {c}-{k}", "Medical Condition",
                                           float(np.round(rng.uniform(0.55, 1.0), 3))))
        concepts.append(ConceptMention(pid, "noise term", "Anatomy", 0.3))

        for label in cluster_topics[c]:
            if rng.random() > topic_noise:
                topics.append(TopicAssignment(pid, label, float(np.round(rng.uniform(0.5, 1), 3))))
        if rng.random() < topic_noise:
            other = labels[int(rng.integers(len(labels)))]
            if other not in cluster_topics[c]:
                topics.append(TopicAssignment(pid, other, 0.5))

    for c in range(n_clusters):
        members = [pid for pid in ids if cluster_of[pid] == c]
        for g in range(0, len(members), citation_group):
            group = members[g:g + citation_group]
            for pid in group:
                others = [q for q in group if q != pid]
                if not others:
                    continue
                for q in rng.choice(others, size=min(cites_per_paper, len(others)), replace=False):
                    bib.append(BibliographyEntry(pid, titles[q], paper_authors[q]))

    corpus = Corpus(
        tuple(sorted(papers)),
        tuple(sorted(authors, key=AuthorMention.sort_key)),
        tuple(sorted(concepts, key=ConceptMention.sort_key)),
        tuple(sorted(topics, key=TopicAssignment.sort_key)),
        tuple(sorted(bib, key=BibliographyEntry.sort_key)),
        tuple(sorted(sections, key=SectionText.sort_key)),
    )
    return corpus, cluster_of
