"""Small file helpers shared by the stage writers.

Every artifact written by the toolkit starts with a header. CSV files get
``#``-prefixed comment lines; JSON files carry a leading ``"_header"`` key.
Readers in this package skip both transparently.
"""
import csv
import io
import json
import os

__version__ = "0.1.0"
TOOL = "scholarkg"


def make_header(subcommand, config=None):
    return {"tool": TOOL, "version": __version__, "subcommand": subcommand,
            "config": config or {}}


def fmt_float(x):
    """Shortest repr that round-trips; empty string for None/NaN."""
    if x is None:
        return ""
    x = float(x)
    if x != x:
        return ""
    return repr(x)


def parse_float(s):
    if s is None or s == "":
        return None
    return float(s)


def write_csv(path, columns, rows, header=None):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    buf = io.StringIO()
    if header is not None:
        buf.write(f"# {header['tool']} {header['version']} subcommand={header['subcommand']}\n")
        buf.write("# config=" + json.dumps(header["config"], sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow(row)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def iter_csv(path):
    """Yield ``(line_number, columns, row)`` for a header-row CSV.

    Leading ``#`` comment lines are skipped. ``row`` is a dict, or the raw
    list when its width does not match the header. Line numbers are
    1-based physical lines of the file.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.readlines()
    skip = 0
    while skip < len(lines) and lines[skip].startswith("#"):
        skip += 1
    reader = csv.reader(lines[skip:])
    columns = None
    for row in reader:
        line_no = skip + reader.line_num
        if columns is None:
            columns = row
            continue
        if not row:
            continue
        if len(row) != len(columns):
            yield line_no, columns, row
            continue
        yield line_no, columns, dict(zip(columns, row))


def read_csv_columns(path):
    with open(path, encoding="utf-8", newline="") as fh:
        for line in fh:
            if not line.startswith("#"):
                return next(csv.reader([line]))
    return []


def write_json(path, payload, header=None):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    doc = {}
    if header is not None:
        doc["_header"] = header
    doc.update(payload)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    doc.pop("_header", None)
    return doc
