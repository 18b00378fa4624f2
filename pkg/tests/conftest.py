import os
import shutil
from importlib import resources

import pytest

from scholarkg.curation import CuratedEntity, CuratedGraphInput, CuratedTriplet
from scholarkg.graph import build_graph

TINY = str(resources.files("scholarkg") / "data" / "tiny_corpus")

_criteria = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _criteria.append((marker.args[0], "PASS" if rep.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label, status in sorted(_criteria, key=lambda x: int(x[0].split()[0])):
        terminalreporter.write_line(f"[{status}] criterion {label}")


@pytest.fixture
def tiny_dir():
    return TINY


@pytest.fixture
def tiny_copy(tmp_path):
    dst = tmp_path / "corpus"
    shutil.copytree(TINY, dst)
    return dst


def paper_graph(n, edges, extra_entities=()):
    """Graph of ``n`` papers ``q000..`` joined by cites edges ``(i, j)``."""
    ents = [CuratedEntity("paper", f"q{i:03d}", {"title": f"t{i}"}) for i in range(n)]
    ents += list(extra_entities)
    trips = [CuratedTriplet(("paper", f"q{a:03d}"), "cites", ("paper", f"q{b:03d}"))
             for a, b in edges]
    return build_graph(CuratedGraphInput(ents, trips))


def write_table(path, header, rows):
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def minimal_corpus_dir(root, papers=(("p1", "T1"),), authors=(), concepts=(), topics=(), bib=()):
    os.makedirs(root, exist_ok=True)
    write_table(os.path.join(root, "papers.csv"), ("paper_id", "title", "pub_date", "journal", "doi"),
                [(p, t, "", "", "") for p, t in papers])
    write_table(os.path.join(root, "author_mentions.csv"),
                ("paper_id", "first", "middle", "last", "inst_name", "inst_country", "inst_city"),
                authors)
    write_table(os.path.join(root, "concept_mentions.csv"),
                ("paper_id", "surface_text", "category", "confidence"), concepts)
    write_table(os.path.join(root, "topic_assignments.csv"),
                ("paper_id", "topic_label", "score"), topics)
    write_table(os.path.join(root, "bibliography.csv"),
                ("citing_paper_id", "ref_title", "ref_authors"), bib)
    return root
