"""
2-D view of a neighbourhood
===========================

Project a few source papers and their top-5 neighbours onto the top two
singular directions. Prints coordinates; pipe them into any plotting tool.
"""
# %%
import os

import numpy as np

import scholarkg
from scholarkg import evaluation as E, semantic, similarity as S

corpus = scholarkg.load_corpus(os.path.join(os.path.dirname(scholarkg.__file__),
                                            "data", "tiny_corpus"))
emb = semantic.embed_corpus(corpus, semantic.SemanticConfig(dim=128))
vecs = S.build_vectors("semantic", emb)
recs = S.batch_top_k(S.EmbeddingIndex(vecs), 3)

# %%
rows = []
for src in ("p01", "p05", "p10"):
    rows.append((src, src))
    rows += [(p, src) for p in recs[src].paper_ids]
proj = E.truncated_svd_2d(np.vstack([vecs[p] for p, _ in rows]))
print("singular values", proj.singular_values.round(4), "steps", proj.iterations[0])
for (pid, group), (x, y) in zip(rows, proj.coordinates):
    print(f"{group}  {pid}  {x:+.3f} {y:+.3f}")

# %% the same rows with random data as a sanity check: axes stay orthonormal
noise = np.random.default_rng(0).normal(size=(len(rows), 128))
p2 = E.truncated_svd_2d(noise)
print(np.round(p2.components @ p2.components.T, 12))
