"""Target schema, mapping rules and the tabular semantic view.

Schema files hold one relation per line; ``!`` marks key columns and an
optional ``:int`` suffix types a column::

    workExperience(!Id, Company, BusinessSector, StartDate, EndDate)
"""
from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from . import datalog as dl
from .errors import SchemaError
from .ontology import FactBase

COLUMN_TYPES = ("string", "int")
CANDIDATE_ID = "cv_candidate_id"

_REL = re.compile(r"^([A-Za-z_]\w*)\s*\((.*)\)\s*\.?$")
_COL = re.compile(r"^(!?)([A-Za-z_]\w*)(?:\s*:\s*(\w+))?$")


@dataclass(frozen=True)
class TargetRelation:
    name: str
    columns: tuple[tuple[str, str], ...]
    keys: tuple[str, ...]

    def __post_init__(self) -> None:
        names = [c for c, _ in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError(f"{self.name}: duplicate column")
        if not self.keys:
            raise SchemaError(f"{self.name}: no key column")
        if not set(self.keys) <= set(names):
            raise SchemaError(f"{self.name}: key column not declared")

    @property
    def arity(self) -> int:
        return len(self.columns)

    @property
    def column_names(self) -> list[str]:
        return [c for c, _ in self.columns]

    def key_of(self, row: tuple) -> tuple:
        names = self.column_names
        return tuple(row[names.index(k)] for k in self.keys)

    def check_row(self, row: tuple) -> None:
        if len(row) != self.arity:
            raise SchemaError(f"{self.name}: expected {self.arity} values, got {len(row)}")
        for (col, ctype), v in zip(self.columns, row):
            ok = isinstance(v, int) if ctype == "int" else isinstance(v, str)
            if not ok:
                raise SchemaError(f"{self.name}.{col}: {v!r} is not a {ctype}")


Schema = dict[str, TargetRelation]


def load_target_schema(text: str) -> Schema:
    schema: Schema = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _REL.match(line)
        if not m:
            raise SchemaError(f"line {lineno}: cannot parse relation {line!r}")
        name, body = m.groups()
        if name in schema:
            raise SchemaError(f"line {lineno}: relation {name!r} declared twice")
        cols, keys = [], []
        for part in (p.strip() for p in body.split(",")):
            cm = _COL.match(part)
            if not cm:
                raise SchemaError(f"line {lineno}: bad column {part!r}")
            bang, col, ctype = cm.groups()
            ctype = ctype or "string"
            if ctype not in COLUMN_TYPES:
                raise SchemaError(f"line {lineno}: unknown column type {ctype!r}")
            cols.append((col, ctype))
            if bang:
                keys.append(col)
        try:
            schema[name] = TargetRelation(name, tuple(cols), tuple(keys))
        except SchemaError as exc:
            raise SchemaError(f"line {lineno}: {exc}") from None
    return schema


def check_mapping(program: dl.Program, schema: Schema) -> None:
    """Every rule head must be a schema relation of matching arity."""
    for rule in program.rules:
        rel = schema.get(rule.head.pred)
        if rel is None:
            raise SchemaError(f"mapping head {rule.head.pred!r} is not a target relation")
        if len(rule.head.args) != rel.arity:
            raise SchemaError(f"mapping head {rule.head.pred}/{len(rule.head.args)} "
                              f"does not match {rel.name}/{rel.arity}")


def candidate_id_fact(doc_id: str) -> tuple[str, str]:
    return (dl.new_id(CANDIDATE_ID, (doc_id,)), doc_id)


@dataclass
class ViewFragment:
    doc_id: str
    rows: dict[str, set[tuple]] = field(default_factory=dict)


def apply_mapping(program: dl.Program, fb: FactBase, doc_id: str, schema: Schema) -> ViewFragment:
    """Evaluate the mapping over one document's facts.

    Object ids in the output are prefixed with ``doc_id/`` so that ids from
    different documents cannot collide in the merged view.
    """
    check_mapping(program, schema)
    edb = dict(fb.facts())
    edb[CANDIDATE_ID] = {candidate_id_fact(doc_id)}
    result = dl.evaluate(program, edb)
    frag = ViewFragment(doc_id)
    for name, rel in schema.items():
        rows = set()
        for t in result.get(name, ()) if name in program.head_predicates else ():
            row = tuple(f"{doc_id}/{v}" if isinstance(v, str) and v in fb else v for v in t)
            rel.check_row(row)
            rows.add(row)
        frag.rows[name] = rows
    return frag


@dataclass
class Violation:
    relation: str
    key: tuple
    rows: list[tuple[tuple, tuple[str, ...]]]

    def __str__(self) -> str:
        parts = "; ".join(f"{list(r)} from {','.join(docs)}" for r, docs in self.rows)
        return f"{self.relation} key {list(self.key)}: {parts}"


@dataclass
class SemanticView:
    schema: Schema
    rows: dict[str, set[tuple]] = field(default_factory=dict)
    provenance: dict[tuple[str, tuple], set[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in self.schema:
            self.rows.setdefault(name, set())

    def merge(self, frag: ViewFragment) -> "SemanticView":
        for name, rows in frag.rows.items():
            rel = self.schema[name]
            for row in rows:
                rel.check_row(row)
                self.rows[name].add(row)
                self.provenance.setdefault((name, row), set()).add(frag.doc_id)
        return self

    def sorted_rows(self, name: str) -> list[tuple]:
        rel = self.schema[name]
        return sorted(self.rows[name], key=lambda r: (rel.key_of(r), r))

    def violations(self) -> list[Violation]:
        """Rows that share a key but differ elsewhere; all of them stay in the view."""
        out = []
        for name in sorted(self.schema):
            rel = self.schema[name]
            by_key: dict[tuple, list[tuple]] = {}
            for row in self.sorted_rows(name):
                by_key.setdefault(rel.key_of(row), []).append(row)
            for key, rows in by_key.items():
                if len(rows) > 1:
                    out.append(Violation(name, key, [(r, tuple(sorted(self.provenance.get((name, r), ()))))
                                                     for r in rows]))
        return out


def _csv_text(rel: TargetRelation, rows: Iterable[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(rel.column_names)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def emit_view(view: SemanticView, out_dir: str | Path, fmt: str = "csv") -> list[Path]:
    """Write one file per relation plus ``violations.txt``."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown output format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(view.schema):
        rel = view.schema[name]
        rows = view.sorted_rows(name)
        path = out / f"{name}.{fmt}"
        if fmt == "csv":
            path.write_bytes(_csv_text(rel, rows).encode("utf-8"))
        else:
            doc = {"relation": name, "columns": rel.column_names, "rows": [list(r) for r in rows]}
            path.write_text(json.dumps(doc, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
        written.append(path)
    vpath = out / "violations.txt"
    vpath.write_text("".join(f"{v}\n" for v in view.violations()), encoding="utf-8")
    written.append(vpath)
    return written


def read_view(out_dir: str | Path, schema: Schema, fmt: str = "csv") -> dict[str, set[tuple]]:
    """Read relation files written by :func:`emit_view` back into tuple sets."""
    out: dict[str, set[tuple]] = {}
    for name, rel in schema.items():
        path = Path(out_dir) / f"{name}.{fmt}"
        if fmt == "csv":
            with path.open(newline="", encoding="utf-8") as fh:
                records = list(csv.reader(fh))
            header, body = records[0], records[1:]
        else:
            doc = json.loads(path.read_text(encoding="utf-8"))
            header, body = doc["columns"], doc["rows"]
        if header != rel.column_names:
            raise SchemaError(f"{path}: header does not match relation {name}")
        out[name] = {tuple(int(v) if t == "int" else v for v, (_, t) in zip(r, rel.columns)) for r in body}
    return out
