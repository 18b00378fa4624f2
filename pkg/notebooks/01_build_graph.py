"""
Building the graph from the bundled corpus
==========================================

Load the ten-paper fixture, curate it, build the property graph and run
the two traversal queries.
"""
# %%
import os

import scholarkg
from scholarkg import graph as G
from scholarkg.curation import curate

corpus_dir = os.path.join(os.path.dirname(scholarkg.__file__), "data", "tiny_corpus")
corpus = scholarkg.load_corpus(corpus_dir)
print(corpus.counts)

# %% curation: thresholds, merges, citation linking
cur = curate(corpus)
for key, value in cur.report.items():
    print(f"{key:28s} {value}")

# %%
g = G.build_graph(cur)
stats = G.graph_statistics(g)
print(stats["entity_counts"])
print(stats["relation_counts"])
print("components:", stats["connected_components"], "diameter:", stats["largest_cc_diameter"])

# degree histograms with and without each relation family
for name, excluded in G.DEGREE_SCENARIOS.items():
    hist = G.degree_distribution(g, excluded)
    print(name, sorted(hist.items())[:6], "...")

# %% which authors and institutions work on remdesivir in human trials?
res = G.query_concept_topic(g, ["remdesivir", "acute appendicitis"], ["Lab Trials (human)"])
print("papers:", [g.entities[p].key for p in res.papers])
for a, n in res.authors:
    print("  author", g.entities[a].key, n)
for i, n in res.institutions:
    print("  institution", g.entities[i].key, n)

# %% most cited papers on a concept
for _, pid, title, cited_by in G.query_concept_citation_rank(g, ["remdesivir"], limit=5):
    print(f"{pid}  {cited_by}  {title}")
