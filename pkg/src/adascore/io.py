"""Text/JSON graph serialization and CSV dataset reading/writing."""

from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path

import numpy as np

from .graphs import ARROW, CIRCLE, TAIL, Mark, MixedGraph

_EDGE_SYMBOLS = {
    (TAIL, ARROW): "->",
    (ARROW, TAIL): "<-",
    (ARROW, ARROW): "<->",
    (TAIL, TAIL): "--",
    (CIRCLE, CIRCLE): "o-o",
    (CIRCLE, ARROW): "o->",
    (ARROW, CIRCLE): "<-o",
    (CIRCLE, TAIL): "o--",
    (TAIL, CIRCLE): "--o",
}
_SYMBOL_MARKS = {v: k for k, v in _EDGE_SYMBOLS.items()}
_LINE = re.compile(r"^\s*(\S+)\s+(<->|->|<-|--o|o--|o->|<-o|o-o|--)\s+(\S+)\s*$")


class GraphFormatError(ValueError):
    pass


def _names(g: MixedGraph) -> list[str]:
    return [g.name(i) for i in range(g.num_nodes)]


def graph_to_text(g: MixedGraph) -> str:
    """One edge per line, e.g. ``X0 -> X1`` or ``A o-> B``.

    Edges whose left mark is an arrow are flipped so that lines read with
    the standard forms ``->``, ``<->``, ``--``, ``o-o``, ``o->``.
    """
    names = _names(g)
    lines = [f"# nodes: {' '.join(names)}"]
    for a, b, ma, mb in g.edges():
        if ma is ARROW and mb is not ARROW or (ma is TAIL and mb is CIRCLE):
            a, b, ma, mb = b, a, mb, ma
        lines.append(f"{names[a]} {_EDGE_SYMBOLS[(ma, mb)]} {names[b]}")
    return "\n".join(lines) + "\n"


def graph_from_text(text: str, node_names=None) -> MixedGraph:
    names = list(node_names) if node_names is not None else None
    body = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line[1:].strip().startswith("nodes:") and names is None:
                names = line.split(":", 1)[1].split()
            continue
        m = _LINE.match(line)
        if m is None:
            raise GraphFormatError(f"line {lineno}: cannot parse edge {raw!r}")
        body.append((lineno, m.group(1), m.group(2), m.group(3)))
    if names is None:
        names = []
        for _, a, _, b in body:
            for s in (a, b):
                if s not in names:
                    names.append(s)
    index = {s: i for i, s in enumerate(names)}
    g = MixedGraph(len(names), node_names=names)
    for lineno, a, sym, b in body:
        if a not in index or b not in index:
            raise GraphFormatError(f"line {lineno}: unknown node")
        ma, mb = _SYMBOL_MARKS[sym]
        g.set_edge(index[a], index[b], ma, mb)
    return g


def graph_to_json(g: MixedGraph) -> dict:
    return {
        "nodes": _names(g),
        "edges": [
            {"a": a, "b": b, "mark_a": ma.name.lower(), "mark_b": mb.name.lower()}
            for a, b, ma, mb in g.edges()
        ],
    }


def graph_from_json(obj) -> MixedGraph:
    if isinstance(obj, (str, bytes)):
        obj = json.loads(obj)
    try:
        nodes = list(obj["nodes"])
        g = MixedGraph(len(nodes), node_names=nodes)
        for e in obj["edges"]:
            a, b = e["a"], e["b"]
            if isinstance(a, str):
                a, b = nodes.index(a), nodes.index(b)
            g.set_edge(int(a), int(b), Mark[e["mark_a"].upper()], Mark[e["mark_b"].upper()])
    except (KeyError, ValueError, TypeError, IndexError) as exc:
        raise GraphFormatError(f"malformed graph JSON: {exc}") from exc
    return g


def read_graph(path) -> MixedGraph:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            return graph_from_json(json.loads(text))
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"{path}: {exc}") from exc
    return graph_from_text(text)


def write_graph(g: MixedGraph, path) -> None:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(graph_to_json(g), indent=2) + "\n", encoding="utf-8")
    else:
        path.write_text(graph_to_text(g), encoding="utf-8")


# ---------------------------------------------------------------------------
# CSV


class CsvFormatError(ValueError):
    pass


def write_csv(path, values: np.ndarray, column_names) -> None:
    """Comma-separated, header row, 17 significant digits (round-trips exactly)."""
    values = np.asarray(values, dtype=float)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(column_names)
        for row in values:
            w.writerow([repr(float(x)) if math.isfinite(x) else "nan" for x in row])


def read_csv(path) -> tuple[np.ndarray, list[str]]:
    """Parse a numeric CSV with a mandatory header row.

    Raises :class:`CsvFormatError` naming the offending row/column.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or any(h == "" for h in header):
        raise CsvFormatError(f"{path}: row 1: header row is missing or has empty names")
    data = []
    for r, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise CsvFormatError(f"{path}: row {r}: expected {len(header)} fields, got {len(row)}")
        parsed = []
        for c, cell in enumerate(row):
            try:
                x = float(cell)
            except ValueError:
                raise CsvFormatError(
                    f"{path}: row {r}, column {c + 1} ({header[c]}): non-numeric value {cell!r}"
                ) from None
            if not math.isfinite(x):
                raise CsvFormatError(f"{path}: row {r}, column {c + 1} ({header[c]}): non-finite value")
            parsed.append(x)
        data.append(parsed)
    return np.asarray(data, dtype=float).reshape(len(data), len(header)), header
