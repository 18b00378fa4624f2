"""Command-line pipeline: one subcommand per stage, files between stages.

Exit codes: 0 ok, 1 usage error, 2 input validation failure, 3 runtime failure.
"""
import argparse
import logging
import os
import sys
import zlib

import numpy as np

from . import curation, evaluation, graph as graphmod, ingest, kge, semantic, similarity
from ._io import fmt_float, iter_csv, make_header, write_csv, write_json

logger = logging.getLogger("scholarkg")

SUBCOMMANDS = ("ingest", "curate", "build", "stats", "query-concept-topic",
               "query-citation-rank", "train-kge", "validate-kge", "embed-semantic",
               "combine", "recommend", "evaluate", "svd", "pipeline")

DEFAULTS = {
    "corpus_dir": None, "work_dir": "work", "seed": None, "k": 5,
    "dim": 400, "gamma": 12.0, "epochs": 100, "lr": 0.01, "negatives": 16, "batch_size": 1024,
    "threshold": 0.5, "min_fraction": 1e-4, "flag_fraction": 0.5,
    "normalization": "lowercase_strip", "w_sem": 1.0, "w_kge": 1.0, "method": "combined",
    "exclude_relations": "", "workers": 1, "sem_dim": 768, "sem_source": "fallback_hashing",
    "folds": 10, "concepts": "", "topics": "", "limit": 10, "sources": "",
    "topic_vocabulary": None,
}
_PATH_KEYS = ("corpus_dir", "work_dir", "config")
_INT = {"seed", "k", "dim", "epochs", "negatives", "batch_size", "workers", "sem_dim",
        "folds", "limit"}
_FLOAT = {"gamma", "lr", "threshold", "min_fraction", "flag_fraction", "w_sem", "w_kge"}


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p):
    a = p.add_argument
    a("--corpus-dir")
    a("--work-dir")
    a("--config", help="key=value file; explicit flags win over it")
    a("--seed", type=int)
    a("--k", type=int)
    a("--dim", type=int)
    a("--gamma", type=float)
    a("--epochs", type=int)
    a("--lr", type=float)
    a("--negatives", type=int)
    a("--batch-size", type=int)
    a("--threshold", type=float)
    a("--min-fraction", type=float)
    a("--flag-fraction", type=float)
    a("--normalization", choices=curation.NORMALIZATION_MODES)
    a("--w-sem", type=float)
    a("--w-kge", type=float)
    a("--method", choices=similarity.METHODS)
    a("--exclude-relations", help="comma-separated relation names")
    a("--workers", type=int)
    a("--sem-dim", type=int)
    a("--sem-source", choices=("fallback_hashing", "external_vectors"))
    a("--folds", type=int)
    a("--concepts", help="comma-separated concept names")
    a("--topics", help="comma-separated topic labels")
    a("--limit", type=int)
    a("--sources", help="comma-separated paper ids for svd")
    a("--topic-vocabulary", help="file overriding the topic label list")
    a("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="scholarkg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        _add_common(sub.add_parser(name))
    return parser


def _read_config_file(path):
    out = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    with fh:
        for n, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise UsageError(f"{path}:{n}: unknown key {key!r}")
            try:
                out[key] = int(value) if key in _INT else float(value) if key in _FLOAT else value
            except ValueError:
                raise UsageError(f"{path}:{n}: bad value for {key}") from None
    return out


def resolve_options(ns):
    """Defaults < config file < explicit command-line flags."""
    opts = dict(DEFAULTS)
    if ns.config:
        opts.update(_read_config_file(ns.config))
    for key in DEFAULTS:
        val = getattr(ns, key, None)
        if val is not None:
            opts[key] = val
    opts["subcommand"] = ns.subcommand
    return opts


def stage_seed(global_seed, stage):
    seq = np.random.SeedSequence([global_seed or 0, zlib.crc32(stage.encode())])
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> 1)


def _excluded(opts):
    names = [s.strip() for s in opts["exclude_relations"].split(",") if s.strip()]
    bad = set(names) - set(curation.RELATIONS)
    if bad:
        raise UsageError(f"unknown relations in --exclude-relations: {sorted(bad)}")
    return tuple(names)


def _list(value):
    return [s.strip() for s in (value or "").split(",") if s.strip()]


class Stages:
    """Stage implementations sharing resolved options and work-dir layout."""

    def __init__(self, opts):
        self.opts = opts
        self.work = opts["work_dir"]

    def path(self, *parts):
        return os.path.join(self.work, *parts)

    def header(self, stage, **extra):
        cfg = {k: v for k, v in sorted(self.opts.items())
               if k not in _PATH_KEYS and k != "subcommand"}
        cfg.update(extra)
        return make_header(stage, cfg)

    # configs -------------------------------------------------------------
    def ingest_config(self):
        if self.opts["topic_vocabulary"]:
            return ingest.IngestConfig.from_file(self.opts["topic_vocabulary"])
        return ingest.IngestConfig()

    def curation_config(self):
        o = self.opts
        return curation.CurationConfig(o["threshold"], o["min_fraction"], o["flag_fraction"],
                                       o["normalization"])

    def kge_config(self, stage):
        o = self.opts
        include = tuple(r for r in curation.RELATIONS if r not in _excluded(o))
        return kge.KgeConfig(dim=o["dim"], gamma=o["gamma"], negatives_per_positive=o["negatives"],
                             batch_size=o["batch_size"], learning_rate=o["lr"],
                             epochs=o["epochs"], seed=stage_seed(o["seed"], stage),
                             include_relations=include, workers=o["workers"])

    def semantic_config(self):
        return semantic.SemanticConfig(dim=self.opts["sem_dim"], source=self.opts["sem_source"])

    def corpus(self, stage_input=True):
        """The raw corpus, or the ingest stage's normalized copy when
        ``--corpus-dir`` is omitted."""
        src = self.opts["corpus_dir"]
        if not src and stage_input and os.path.isdir(self.path("ingest", "corpus")):
            src = self.path("ingest", "corpus")
        if not src:
            raise UsageError("--corpus-dir is required for this stage")
        return ingest.load_corpus(src, self.ingest_config())

    def graph(self):
        return graphmod.read_graph(self.path("graph"))

    # stages --------------------------------------------------------------
    def ingest(self):
        corpus = self.corpus(stage_input=False)
        h = self.header("ingest")
        report = ingest.validate_corpus(corpus)
        ingest.write_corpus(corpus, self.path("ingest", "corpus"), h)
        write_json(self.path("ingest", "validation_report.json"), report.to_dict(), h)
        write_json(self.path("ingest", "ingest_summary.json"),
                   {"counts": corpus.counts, "warnings": list(corpus.warnings)}, h)

    def curate(self):
        curated = curation.curate(self.corpus(), self.curation_config())
        curation.write_curated(curated, self.path("curated"), self.header("curate"))

    def build(self):
        g = graphmod.build_graph(curation.read_curated(self.path("curated")))
        graphmod.write_graph(g, self.path("graph"), self.header("build"))

    def stats(self):
        g = self.graph()
        h = self.header("stats")
        write_json(self.path("stats", "stats.json"), graphmod.graph_statistics(g), h)
        scenarios = dict(graphmod.DEGREE_SCENARIOS)
        if _excluded(self.opts):
            scenarios["custom"] = _excluded(self.opts)
        for name, excl in scenarios.items():
            hist = graphmod.degree_distribution(g, excl)
            write_csv(self.path("stats", f"degree_{name}.csv"), ("degree", "count"),
                      sorted(hist.items()), h)

    def query_concept_topic(self):
        g = self.graph()
        res = graphmod.query_concept_topic(g, _list(self.opts["concepts"]),
                                           _list(self.opts["topics"]), self.opts["normalization"])
        rows = [("paper", g.entities[p].key, "") for p in res.papers]
        rows += [("author", g.entities[a].key, n) for a, n in res.authors]
        rows += [("institution", g.entities[i].key, n) for i, n in res.institutions]
        rows += [("unresolved", name, "") for name in res.unknown]
        write_csv(self.path("queries", "concept_topic.csv"), ("kind", "key", "matched_papers"),
                  rows, self.header("query-concept-topic"))

    def query_citation_rank(self):
        rows = graphmod.query_concept_citation_rank(self.graph(), _list(self.opts["concepts"]),
                                                    self.opts["limit"], self.opts["normalization"])
        write_csv(self.path("queries", "citation_rank.csv"), ("cord_uid", "title", "cited_by"),
                  [(pid, title or "", n) for _, pid, title, n in rows],
                  self.header("query-citation-rank"))

    def train_kge(self):
        cfg = self.kge_config("train-kge")
        model = kge.train(self.graph(), cfg)
        h = self.header("train-kge", kge=cfg.to_dict())
        kge.save_model(model, self.path("kge"), h)
        write_csv(self.path("kge", "loss_trace.csv"), ("epoch", "mean_loss"),
                  ((i, fmt_float(x)) for i, x in enumerate(model.loss_trace)), h)

    def validate_kge(self):
        cfg = self.kge_config("validate-kge")
        res = kge.kfold_validate(self.graph(), cfg, self.opts["folds"])
        h = self.header("validate-kge", kge=cfg.to_dict())
        kge.write_scores(res, self.path("kge_validation", "scores.csv"), h)
        edges, hists = res.histograms()
        rows = []
        for rel, counts in hists.items():
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                rows.append((rel, fmt_float(lo), fmt_float(hi), int(c)))
        write_csv(self.path("kge_validation", "score_histograms.csv"),
                  ("relation", "bin_lo", "bin_hi", "count"), rows, h)
        write_json(self.path("kge_validation", "score_summary.json"),
                   {"relations": res.relation_summary()}, h)

    def embed_semantic(self):
        corpus = self.corpus()
        emb = semantic.embed_corpus(corpus, self.semantic_config())
        h = self.header("embed-semantic")
        semantic.write_document_embeddings(emb, self.path("semantic", "document_embeddings.csv"), h)
        semantic.write_semantics_report(
            semantic.corpus_semantics_report(corpus, emb, stage_seed(self.opts["seed"], "embed")),
            self.path("semantic", "semantics_report.json"), h)

    def _paper_vectors(self, method):
        if method == "semantic":
            return similarity.build_vectors(
                "semantic", semantic.read_document_embeddings(
                    self.path("semantic", "document_embeddings.csv")))
        if method == "kge":
            return self._kge_paper_vectors()
        if method == "combined":
            return self._read_combined()
        raise UsageError(f"no vectors for method {method!r}")

    def _kge_paper_vectors(self):
        g = self.graph()
        model = kge.load_model(self.path("kge"))
        return {g.entities[p].key: model.entity_embeddings[p] for p in g.ids_of_kind("paper")}

    def _read_combined(self):
        out = {}
        for _, _, row in iter_csv(self.path("combined", "combined_embeddings.csv")):
            vcols = [c for c in row if c.startswith("v")]
            out[row["paper_id"]] = np.array([float(row[c]) for c in vcols])
        return out

    def combine(self):
        sem = semantic.read_document_embeddings(self.path("semantic", "document_embeddings.csv"))
        vecs = similarity.build_vectors("combined", sem, self._kge_paper_vectors(),
                                        (self.opts["w_sem"], self.opts["w_kge"]))
        dim = len(next(iter(vecs.values())))
        write_csv(self.path("combined", "combined_embeddings.csv"),
                  ["paper_id"] + [f"v{i}" for i in range(dim)],
                  ([pid] + [fmt_float(x) for x in v] for pid, v in sorted(vecs.items())),
                  self.header("combine"))

    def recommend(self, method=None):
        method = method or self.opts["method"]
        k = self.opts["k"]
        if method == "random":
            if self.opts["seed"] is None:
                raise UsageError("--method random requires --seed")
            ids = [e.key for e in self.graph().entities if e.kind == "paper"]
            recs = similarity.random_recommendations(ids, k, stage_seed(self.opts["seed"],
                                                                        "recommend-random"))
        else:
            recs = similarity.batch_top_k(similarity.EmbeddingIndex(self._paper_vectors(method)), k)
        similarity.write_recommendations(recs, self.path("recs", f"recommendations_{method}.csv"),
                                         self.header("recommend", method=method))

    def _available_recs(self):
        out = {}
        for m in similarity.METHODS:
            p = self.path("recs", f"recommendations_{m}.csv")
            if os.path.isfile(p):
                out[m] = similarity.read_recommendations(p)
        if not out:
            raise InputError("no recommendation files found; run `recommend` first")
        return out

    def evaluate(self):
        g = self.graph()
        recs = self._available_recs()
        h = self.header("evaluate")
        vocab = [g.entities[t].key for t in g.ids_of_kind("topic")]
        fwd = g.forward["associated_topic"]
        paper_topics = {g.entities[p].key: [g.entities[t].key for t in fwd.neighbors(p)]
                        for p in g.ids_of_kind("paper")}
        topics = evaluation.topic_vectors(paper_topics, vocab)
        cites = {g.entities[p].key: [g.entities[q].key for q in g.forward["cites"].neighbors(p)]
                 for p in g.ids_of_kind("paper")}
        reports = evaluation.corpus_topic_similarity(
            {m: r for m, r in recs.items() if m != "random"}, topics, self.opts["k"],
            stage_seed(self.opts["seed"], "evaluate-random"), include_random="random" not in recs)
        if "random" in recs:
            reports += evaluation.corpus_topic_similarity({"random": recs["random"]}, topics,
                                                          include_random=False)
        for m, r in recs.items():
            try:
                reports.append(evaluation.citation_overlap(r, cites, self.opts["k"], m))
            except ValueError as exc:
                logger.warning("citation overlap skipped for %s: %s", m, exc)
        names, mat = evaluation.iou_matrix(recs)
        for i, a in enumerate(names):
            for j, b in enumerate(names):
                if i < j:
                    reports.append(evaluation.MetricReport(f"{a}|{b}", "iou", float(mat[i, j]),
                                                           len(recs[a])))
        write_json(self.path("evaluation", "evaluation_report.json"),
                   {"reports": [r.to_dict() for r in reports]}, h)
        write_csv(self.path("evaluation", "iou_matrix.csv"), ["method"] + names,
                  ([a] + [fmt_float(x) for x in row] for a, row in zip(names, mat)), h)
        paper_ids = sorted(paper_topics)
        for m, r in recs.items():
            hist = evaluation.popularity_histogram(r, paper_ids)
            write_csv(self.path("evaluation", f"popularity_{m}.csv"), ("occurrences", "papers"),
                      hist.bins, h)
        write_csv(self.path("evaluation", "topic_by_journal.csv"),
                  ("journal", "topic", "fraction", "papers"),
                  ((j, t, fmt_float(f), n) for j, t, f, n in evaluation.topic_by_journal(g)), h)

    def svd(self):
        method = self.opts["method"]
        if method == "random":
            raise UsageError("svd needs an embedding method, not random")
        vecs = self._paper_vectors(method)
        rec_path = self.path("recs", f"recommendations_{method}.csv")
        recs = similarity.read_recommendations(rec_path) if os.path.isfile(rec_path) else \
            similarity.batch_top_k(similarity.EmbeddingIndex(vecs), self.opts["k"])
        sources = _list(self.opts["sources"]) or self._default_sources()
        rows = []
        for s in sources:
            if s not in vecs:
                raise InputError(f"unknown source paper {s!r}")
            rows.append((s, s))
            rows += [(p, s) for p in recs[s].paper_ids]
        proj = evaluation.truncated_svd_2d(np.vstack([vecs[p] for p, _ in rows]),
                                           seed=stage_seed(self.opts["seed"], "svd"))
        write_csv(self.path("svd", f"svd_projection_{method}.csv"),
                  ("paper_id", "x", "y", "source_group"),
                  ((p, fmt_float(x), fmt_float(y), s) for (p, s), (x, y)
                   in zip(rows, proj.coordinates)), self.header("svd", method=method))

    def _default_sources(self, n=5):
        """First paper (by id) for each distinct strongest topic, up to n."""
        g = self.graph()
        chosen, used = [], set()
        fwd = g.forward["associated_topic"]
        for p in g.ids_of_kind("paper"):
            lo, hi = fwd.indptr[p], fwd.indptr[p + 1]
            if hi == lo:
                continue
            weights = g.weights[fwd.edge_ids[lo:hi]]
            top = int(fwd.indices[lo + int(np.nanargmax(np.nan_to_num(weights, nan=-1)))])
            if top not in used:
                used.add(top)
                chosen.append(g.entities[p].key)
            if len(chosen) == n:
                break
        return chosen

    def pipeline(self):
        for step in (self.ingest, self.curate, self.build, self.stats, self.train_kge,
                     self.validate_kge, self.embed_semantic, self.combine):
            logger.info("stage %s", step.__name__)
            step()
        methods = ["semantic", "kge", "combined"]
        if self.opts["seed"] is not None:
            methods.append("random")
        for m in methods:
            self.recommend(m)
        self.evaluate()
        for m in ("semantic", "kge", "combined"):
            self.opts = dict(self.opts, method=m)
            self.svd()
        if _list(self.opts["concepts"]):
            self.query_citation_rank()
            if _list(self.opts["topics"]):
                self.query_concept_topic()


def run_subcommand(argv):
    """Parse ``argv``, run one stage (or the whole pipeline); return exit code."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        opts = resolve_options(ns)
        stages = Stages(opts)
        getattr(stages, ns.subcommand.replace("-", "_"))()
    except UsageError as exc:
        print(f"scholarkg {ns.subcommand}: usage error: {exc}", file=sys.stderr)
        return 1
    except (ingest.IngestError, curation.CurationError, graphmod.GraphSchemaError,
            InputError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"scholarkg {ns.subcommand}: input error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime failure
        print(f"scholarkg {ns.subcommand}: runtime error: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 3
    return 0


def main(argv=None):
    sys.exit(run_subcommand(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
