"""Object model (entity taxonomy + relation types) and the per-document fact base.

The object-model file is line oriented::

    # comment
    entity semanticCategory(value:string).
    entity person isa semanticCategory.
    relation worksFor(who:person, since:int).

The document ontology (tokens, delimiters, cells) is always present and never
needs to be declared.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union

from .errors import FactBaseError, ModelError

ATTR_TYPES = ("string", "int", "list")

ROOT = "ontologyObject"
ONE_DIM = "oneDimObject"
BI_DIM = "biDimObject"

# (name, parent, attributes) in declaration order
BUILTIN_ENTITIES: tuple[tuple[str, str | None, tuple[tuple[str, str], ...]], ...] = (
    ("ontologyObject", None, ()),
    ("oneDimObject", "ontologyObject", ()),
    ("token", "oneDimObject", (("value", "string"),)),
    ("delimiter", "oneDimObject", ()),
    ("startOfLine", "delimiter", ()),
    ("endOfLine", "delimiter", ()),
    ("biDimObject", "ontologyObject", ()),
    ("cell", "biDimObject", ()),
    ("emptyCell", "cell", ()),
    ("filledCell", "cell", (("value", "string"),)),
)

# Roots that exist implicitly once something refers to them.
STANDARD_ROOTS: dict[str, tuple[tuple[str, str], ...]] = {
    "semanticCategory": (("value", "string"),),
    "domainObject": (),
}

BUILTIN_RELATIONS: tuple[tuple[str, tuple[tuple[str, str], ...]], ...] = (
    ("position", (("obj", "ontologyObject"), ("start", "int"), ("end", "int"))),
    ("onePosition", (("obj", "oneDimObject"), ("start", "int"), ("end", "int"))),
    ("biPosition", (("obj", "biDimObject"), ("xstart", "int"), ("ystart", "int"),
                    ("xend", "int"), ("yend", "int"))),
    ("belongsTo", (("obj", "oneDimObject"), ("obj2", "biDimObject"))),
)

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_ENTITY_RE = re.compile(
    rf"^entity\s+({_IDENT})(?:\s+isa\s+({_IDENT}))?\s*(?:\((.*)\))?\s*\.?$")
_RELATION_RE = re.compile(rf"^relation\s+({_IDENT})\s*\((.*)\)\s*\.?$")
_PARAM_RE = re.compile(rf"^({_IDENT})\s*:\s*({_IDENT})$")


@dataclass(frozen=True)
class EntityType:
    name: str
    parent: str | None = None
    attributes: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class RelationType:
    name: str
    params: tuple[tuple[str, str], ...]


class ObjectModel:
    """An immutable, validated entity forest plus relation types.

    ``dims`` records the dimensionality (1 or 2) of types whose objects are
    positioned; types under ``oneDimObject``/``biDimObject`` get it from
    their ancestry, descriptor heads from their axis.
    """

    def __init__(self, entities: Iterable[EntityType], relations: Iterable[RelationType] = (),
                 dims: dict[str, int] | None = None):
        self.entities: dict[str, EntityType] = {}
        for ent in entities:
            if ent.name in self.entities:
                raise ModelError(f"duplicate entity name {ent.name!r}")
            self.entities[ent.name] = ent
        self.relations: dict[str, RelationType] = {}
        for rel in relations:
            if rel.name in self.relations or rel.name in self.entities:
                raise ModelError(f"duplicate name {rel.name!r}")
            self.relations[rel.name] = rel
        self._dims = dict(dims or {})
        self._validate()
        self._attrs = {name: self._collect_attributes(name) for name in self.entities}

    def _validate(self) -> None:
        for ent in self.entities.values():
            if ent.parent is not None and ent.parent not in self.entities:
                raise ModelError(f"unknown parent {ent.parent!r} of entity {ent.name!r}")
            for _, atype in ent.attributes:
                if atype not in ATTR_TYPES:
                    raise ModelError(f"unknown attribute type {atype!r} in entity {ent.name!r}")
        for ent in self.entities.values():
            seen = {ent.name}
            cur = ent.parent
            while cur is not None:
                if cur in seen:
                    raise ModelError(f"cycle in isa hierarchy through {cur!r}")
                seen.add(cur)
                cur = self.entities[cur].parent
        for ent in self.entities.values():
            inherited = {a for anc in self.ancestors(ent.name)[1:] for a, _ in self.entities[anc].attributes}
            own: set[str] = set()
            for aname, _ in ent.attributes:
                if aname in inherited:
                    raise ModelError(f"entity {ent.name!r} redeclares inherited attribute {aname!r}")
                if aname in own:
                    raise ModelError(f"duplicate attribute {aname!r} in entity {ent.name!r}")
                own.add(aname)
        for rel in self.relations.values():
            for pname, ptype in rel.params:
                if ptype not in ("int", "string") and ptype not in self.entities:
                    raise ModelError(f"relation {rel.name!r}: unknown parameter type {ptype!r} for {pname!r}")

    def _collect_attributes(self, name: str) -> tuple[tuple[str, str], ...]:
        out: list[tuple[str, str]] = []
        for anc in reversed(self.ancestors(name)):
            out.extend(self.entities[anc].attributes)
        return tuple(out)

    def __contains__(self, name: str) -> bool:
        return name in self.entities

    def require(self, name: str) -> EntityType:
        try:
            return self.entities[name]
        except KeyError:
            raise ModelError(f"unknown entity type {name!r}") from None

    def ancestors(self, name: str) -> list[str]:
        """``name`` followed by its ancestors, nearest first."""
        self.require(name)
        chain = [name]
        parent = self.entities[name].parent
        while parent is not None:
            chain.append(parent)
            parent = self.entities[parent].parent
        return chain

    def attributes(self, name: str) -> tuple[tuple[str, str], ...]:
        """All attributes of ``name``, inherited ones first."""
        self.require(name)
        return self._attrs[name]

    def subtype_of(self, a: str, b: str) -> bool:
        self.require(b)
        return b in self.ancestors(a)

    def descendants(self, name: str) -> list[str]:
        self.require(name)
        return [n for n in self.entities if name in self.ancestors(n)]

    def dim(self, name: str) -> int | None:
        chain = self.ancestors(name)
        if ONE_DIM in chain:
            return 1
        if BI_DIM in chain:
            return 2
        for anc in chain:
            if anc in self._dims:
                return self._dims[anc]
        return None

    @property
    def dims(self) -> dict[str, int]:
        return dict(self._dims)

    def extended(self, entities: Iterable[EntityType] = (), dims: dict[str, int] | None = None) -> "ObjectModel":
        """A new model with extra entity types and dimensionality facts."""
        merged = dict(self._dims)
        merged.update(dims or {})
        return ObjectModel([*self.entities.values(), *entities], self.relations.values(), merged)


def _parse_params(text: str, lineno: int) -> tuple[tuple[str, str], ...]:
    text = text.strip()
    if not text:
        return ()
    params = []
    for chunk in text.split(","):
        m = _PARAM_RE.match(chunk.strip())
        if not m:
            raise ModelError(f"line {lineno}: malformed parameter {chunk.strip()!r}")
        params.append((m.group(1), m.group(2)))
    return tuple(params)


def builtin_model() -> ObjectModel:
    return load_object_model("")


def load_object_model(source: str) -> ObjectModel:
    """Parse and validate an object-model declaration file."""
    declared: list[EntityType] = []
    relations: list[RelationType] = []
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _ENTITY_RE.match(line)
        if m:
            name, parent, params = m.groups()
            declared.append(EntityType(name, parent, _parse_params(params or "", lineno)))
            continue
        m = _RELATION_RE.match(line)
        if m:
            relations.append(RelationType(m.group(1), _parse_params(m.group(2), lineno)))
            continue
        raise ModelError(f"line {lineno}: cannot parse declaration {line!r}")

    builtins = [EntityType(n, p, a) for n, p, a in BUILTIN_ENTITIES]
    names = {e.name for e in declared}
    for ent in declared:
        if ent.name in {b.name for b in builtins}:
            raise ModelError(f"duplicate entity name {ent.name!r} (built-in)")
    referenced = {e.parent for e in declared if e.parent}
    roots = [EntityType(n, None, attrs) for n, attrs in STANDARD_ROOTS.items()
             if n in referenced and n not in names]
    rels = [RelationType(n, p) for n, p in BUILTIN_RELATIONS] + relations
    return ObjectModel([*builtins, *roots, *declared], rels)


def subtype_of(model: ObjectModel, a: str, b: str) -> bool:
    return model.subtype_of(a, b)


# ---------------------------------------------------------------------------
# fact base

Value = Union[str, int, tuple]


@dataclass(frozen=True)
class BiPosition:
    xstart: int
    ystart: int
    xend: int
    yend: int

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.xstart, self.ystart, self.xend, self.yend)


@dataclass(frozen=True)
class OnePosition:
    start: int
    end: int
    cell: str


Position = Union[BiPosition, OnePosition]


@dataclass
class ObjectInstance:
    id: str
    type_name: str
    attrs: dict[str, Value] = field(default_factory=dict)


def _check_value(atype: str, value: object) -> Value:
    if atype == "string" and isinstance(value, str):
        return value
    if atype == "int" and isinstance(value, int) and not isinstance(value, bool):
        return value
    if atype == "list" and isinstance(value, (list, tuple)) and all(isinstance(v, str) for v in value):
        return tuple(value)
    raise FactBaseError(f"value {value!r} is not of type {atype}")


class FactBase:
    """Objects of one document with their positions and cell membership.

    The Datalog view of the fact base (one predicate per type and ancestor,
    plus ``bi_position``/``one_position``/``belongs_to``) is maintained
    incrementally and exposed through :meth:`facts`.
    """

    def __init__(self, model: ObjectModel, doc_id: str = ""):
        self.model = model
        self.doc_id = doc_id
        self.objects: dict[str, ObjectInstance] = {}
        self.bi_positions: dict[str, BiPosition] = {}
        self.one_positions: dict[str, tuple[int, int]] = {}
        self.belongs_to: dict[str, str] = {}
        self._members: dict[str, list[str]] = {}
        self._by_type: dict[str, list[str]] = {}
        self._facts: dict[str, set[tuple]] = {}

    def __len__(self) -> int:
        return len(self.objects)

    def __contains__(self, obj_id: str) -> bool:
        return obj_id in self.objects

    def assert_object(self, obj: ObjectInstance, pos: Position) -> "FactBase":
        if obj.id in self.objects:
            raise FactBaseError(f"duplicate object id {obj.id!r}")
        if obj.type_name not in self.model:
            raise FactBaseError(f"unknown type {obj.type_name!r}")
        attrs = self.model.attributes(obj.type_name)
        names = {a for a, _ in attrs}
        extra = set(obj.attrs) - names
        if extra:
            raise FactBaseError(f"{obj.type_name} has no attribute(s) {sorted(extra)}")
        values: dict[str, Value] = {}
        for aname, atype in attrs:
            if aname not in obj.attrs:
                raise FactBaseError(f"{obj.type_name} object {obj.id!r} lacks attribute {aname!r}")
            values[aname] = _check_value(atype, obj.attrs[aname])

        dim = self.model.dim(obj.type_name)
        if isinstance(pos, BiPosition):
            if dim == 1:
                raise FactBaseError(f"{obj.type_name} is one-dimensional but got a biPosition")
            if min(pos.as_tuple()) < 0 or pos.xstart >= pos.xend or pos.ystart >= pos.yend:
                raise FactBaseError(f"degenerate or negative biPosition {pos.as_tuple()}")
        elif isinstance(pos, OnePosition):
            if dim == 2:
                raise FactBaseError(f"{obj.type_name} is two-dimensional but got a onePosition")
            if pos.start < 0 or pos.start >= pos.end:
                raise FactBaseError(f"degenerate or negative onePosition ({pos.start},{pos.end})")
            if pos.cell not in self.bi_positions:
                raise FactBaseError(f"belongsTo target {pos.cell!r} is not a 2D object of this fact base")
        else:
            raise FactBaseError(f"not a position record: {pos!r}")

        inst = ObjectInstance(obj.id, obj.type_name, values)
        self.objects[obj.id] = inst
        for anc in self.model.ancestors(obj.type_name):
            row = (obj.id, *(values[a] for a, _ in self.model.attributes(anc)))
            self._facts.setdefault(anc, set()).add(row)
            self._by_type.setdefault(anc, []).append(obj.id)
        if isinstance(pos, BiPosition):
            self.bi_positions[obj.id] = pos
            self._facts.setdefault("bi_position", set()).add((obj.id, *pos.as_tuple()))
        else:
            self.one_positions[obj.id] = (pos.start, pos.end)
            self.belongs_to[obj.id] = pos.cell
            self._members.setdefault(pos.cell, []).append(obj.id)
            self._facts.setdefault("one_position", set()).add((obj.id, pos.start, pos.end))
            self._facts.setdefault("belongs_to", set()).add((obj.id, pos.cell))
        return self

    def add(self, obj_id: str, type_name: str, pos: Position, **attrs: Value) -> "FactBase":
        return self.assert_object(ObjectInstance(obj_id, type_name, attrs), pos)

    def facts(self) -> dict[str, set[tuple]]:
        """Datalog facts for this document; callers must not mutate them."""
        return self._facts

    def instances_of(self, type_name: str) -> list[str]:
        return list(self._by_type.get(type_name, ()))

    def members(self, cell_id: str) -> list[str]:
        """1D objects belonging to ``cell_id``, in insertion order."""
        return list(self._members.get(cell_id, ()))

    def values(self, obj_id: str, type_name: str) -> tuple[Value, ...]:
        """Attribute values of ``obj_id`` viewed as an instance of ``type_name``."""
        inst = self.objects[obj_id]
        return tuple(inst.attrs[a] for a, _ in self.model.attributes(type_name))

    def iter_lines(self) -> Iterator[str]:
        """Textual dump, one object per line, sorted by id."""
        for oid in sorted(self.objects):
            inst = self.objects[oid]
            args = ",".join(format_value(v) for v in inst.attrs.values())
            parts = [f"{oid}:{inst.type_name}({args})."]
            if oid in self.bi_positions:
                parts.append("bi_position({},{},{},{},{}).".format(oid, *self.bi_positions[oid].as_tuple()))
            else:
                s, e = self.one_positions[oid]
                parts.append(f"one_position({oid},{s},{e}).")
                parts.append(f"belongs_to({oid},{self.belongs_to[oid]}).")
            yield " ".join(parts)


def format_value(value: Value) -> str:
    if isinstance(value, tuple):
        return "[" + ",".join(format_value(v) for v in value) + "]"
    if isinstance(value, int):
        return str(value)
    return "'" + value.replace("\\", "\\\\").replace("'", "\\'") + "'"


def assert_object(fb: FactBase, obj: ObjectInstance, pos: Position) -> FactBase:
    return fb.assert_object(obj, pos)
