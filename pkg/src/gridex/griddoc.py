"""Grid documents: ingestion, label-driven refinement and tokenization.

Grid coordinates are half-open on both axes: a cell at ``(x, y, x2, y2)``
covers columns ``x .. x2-1`` and rows ``y .. y2-1``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple

from .errors import DocumentError
from .ontology import BiPosition, FactBase, OnePosition


@dataclass(frozen=True)
class Cell:
    id: str
    xstart: int
    ystart: int
    xend: int
    yend: int
    text: str | None = None

    @property
    def filled(self) -> bool:
        return self.text is not None

    @property
    def box(self) -> tuple[int, int, int, int]:
        return (self.xstart, self.ystart, self.xend, self.yend)

    @property
    def area(self) -> int:
        return (self.xend - self.xstart) * (self.yend - self.ystart)

    def overlaps(self, other: "Cell") -> bool:
        return (self.xstart < other.xend and other.xstart < self.xend
                and self.ystart < other.yend and other.ystart < self.yend)


def make_cell(x: int, y: int, x2: int, y2: int, text: str | None = None) -> Cell:
    if text is not None:
        text = text.strip() or None
    return Cell(f"c{x}_{y}", x, y, x2, y2, text)


@dataclass(frozen=True)
class GridDocument:
    doc_id: str
    cells: tuple[Cell, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        cells = tuple(sorted(self.cells, key=lambda c: (c.ystart, c.xstart)))
        object.__setattr__(self, "cells", cells)
        for c in cells:
            if min(c.box) < 0 or c.xstart >= c.xend or c.ystart >= c.yend:
                raise DocumentError(f"cell {c.box} has negative or degenerate extent")
            if c.text is not None and not c.text.strip():
                raise DocumentError(f"cell {c.box} has blank text; omit it to declare an empty cell")
            if c.text is not None and "\x00" in c.text:
                raise DocumentError(f"cell {c.box} contains a NUL character")
        for i, a in enumerate(cells):
            for b in cells[i + 1:]:
                if b.ystart >= a.yend:
                    break  # sorted by ystart
                if a.overlaps(b):
                    raise DocumentError(f"cells {a.box} and {b.box} overlap")
        ids = [c.id for c in cells]
        if len(set(ids)) != len(ids):
            raise DocumentError("duplicate cell ids")

    def cell(self, cell_id: str) -> Cell:
        for c in self.cells:
            if c.id == cell_id:
                return c
        raise KeyError(cell_id)


def parse_grid_document(data: bytes | str, default_id: str = "") -> GridDocument:
    """Read the JSON grid format ``{"doc_id": ..., "cells": [{x, y, x2, y2, text?}]}``."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DocumentError(f"grid file is not UTF-8: {exc}") from None
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"malformed grid file: {exc}") from None
    if not isinstance(raw, dict) or not isinstance(raw.get("cells", []), list):
        raise DocumentError("grid file must be an object with a 'cells' list")
    doc_id = raw.get("doc_id", default_id)
    if not isinstance(doc_id, str):
        raise DocumentError("doc_id must be a string")
    cells = []
    for i, rc in enumerate(raw.get("cells", [])):
        if not isinstance(rc, dict):
            raise DocumentError(f"cell #{i} is not an object")
        try:
            coords = [rc[k] for k in ("x", "y", "x2", "y2")]
        except KeyError as exc:
            raise DocumentError(f"cell #{i} lacks field {exc.args[0]!r}") from None
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in coords):
            raise DocumentError(f"cell #{i} has non-integer coordinates")
        text = rc.get("text")
        if text is not None and not isinstance(text, str):
            raise DocumentError(f"cell #{i} text must be a string")
        cells.append(make_cell(*coords, text))
    return GridDocument(doc_id, tuple(cells))


def grid_document_to_json(doc: GridDocument) -> str:
    cells = []
    for c in doc.cells:
        rc: dict[str, object] = {"x": c.xstart, "y": c.ystart, "x2": c.xend, "y2": c.yend}
        if c.text is not None:
            rc["text"] = c.text
        cells.append(rc)
    return json.dumps({"doc_id": doc.doc_id, "cells": cells}, indent=1, ensure_ascii=False)


def parse_two_column_text(text: str, split_col: int, doc_id: str = "") -> GridDocument:
    """Cut every line at ``split_col`` into a left (x=0) and right (x=1) cell.

    A line no longer than ``split_col`` yields only its left cell. Blank
    segments become empty cells.
    """
    if split_col <= 0:
        raise ValueError("split_col must be positive")
    cells = []
    for row, line in enumerate(text.splitlines()):
        cells.append(make_cell(0, row, 1, row + 1, line[:split_col]))
        if len(line) > split_col:
            cells.append(make_cell(1, row, 2, row + 1, line[split_col:]))
    return GridDocument(doc_id, tuple(cells))


def _norm(text: str) -> str:
    return " ".join(text.split()).casefold()


def refine_grid(doc: GridDocument, lexicon: Iterable[str]) -> GridDocument:
    """Merge edge-adjacent cells whose joined text forms a lexicon label.

    A pair merges only if neither part is a label on its own. Pairs are
    tried row-major (leftmost/topmost first, right neighbour before lower
    neighbour) until no pair qualifies.
    """
    labels = {_norm(entry) for entry in lexicon if entry.strip()}
    if not labels:
        return doc
    cells = list(doc.cells)
    while True:
        merged = _merge_once(cells, labels)
        if merged is None:
            return GridDocument(doc.doc_id, tuple(cells))
        cells = merged


def _merge_once(cells: list[Cell], labels: set[str]) -> list[Cell] | None:
    by_corner = {(c.xstart, c.ystart): c for c in cells}
    for a in sorted(cells, key=lambda c: (c.ystart, c.xstart)):
        if a.text is None or _norm(a.text) in labels:
            continue
        right = by_corner.get((a.xend, a.ystart))
        below = by_corner.get((a.xstart, a.yend))
        candidates = []
        if right is not None and right.yend == a.yend:
            candidates.append(right)
        if below is not None and below.xend == a.xend:
            candidates.append(below)
        for b in candidates:
            if b.text is None or _norm(b.text) in labels:
                continue
            joined = " ".join(f"{a.text} {b.text}".split())
            if _norm(joined) in labels:
                new = make_cell(a.xstart, a.ystart, max(a.xend, b.xend), max(a.yend, b.yend), joined)
                return [c for c in cells if c is not a and c is not b] + [new]
    return None


class TokenSpan(NamedTuple):
    id: str
    text: str
    start: int
    end: int


def cell_words(text: str | None) -> list[str]:
    return text.split() if text else []


def token_layout(words: list[str]) -> list[tuple[int, int]]:
    """Normalized spans of ``words`` after a unit-width start-of-line delimiter."""
    spans = []
    pos = 1
    for w in words:
        spans.append((pos, pos + len(w)))
        pos += len(w)
    return spans


def tokenize(doc: GridDocument, fb: FactBase) -> FactBase:
    """Assert cells, tokens and line delimiters for every cell of ``doc``.

    Inside a filled cell the coordinates are normalized: whitespace is
    dropped, ``startOfLine`` occupies ``[0,1)``, the words follow each other
    without gaps and ``endOfLine`` takes the unit after the last word.
    """
    for cell in doc.cells:
        pos = BiPosition(*cell.box)
        if cell.text is None:
            fb.add(cell.id, "emptyCell", pos)
            continue
        fb.add(cell.id, "filledCell", pos, value=cell.text)
        words = cell_words(cell.text)
        spans = token_layout(words)
        fb.add(f"{cell.id}_sol", "startOfLine", OnePosition(0, 1, cell.id))
        for i, (word, (s, e)) in enumerate(zip(words, spans)):
            fb.add(f"{cell.id}_t{i}", "token", OnePosition(s, e, cell.id), value=word)
        end = spans[-1][1]
        fb.add(f"{cell.id}_eol", "endOfLine", OnePosition(end, end + 1, cell.id))
    return fb


def cell_tokens(fb: FactBase, cell_id: str) -> list[TokenSpan]:
    """Tokens of a cell in position order."""
    out = []
    for oid in fb.members(cell_id):
        inst = fb.objects[oid]
        if inst.type_name == "token":
            s, e = fb.one_positions[oid]
            out.append(TokenSpan(oid, inst.attrs["value"], s, e))
    out.sort(key=lambda t: t.start)
    return out


def with_cells(doc: GridDocument, cells: Iterable[Cell]) -> GridDocument:
    return replace(doc, cells=tuple(cells))
