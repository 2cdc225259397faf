"""Semantic-descriptor language: AST, parser, printer and linker.

A descriptor builds a new object from a sequence of existing ones::

    <candidateEmail(E)> ::- <eucv_email_label_box()>
                            (<filledCell(X)> CONTAINS <email(X)> {E:=X;})

``::-`` chains cells left to right, ``::|`` top to bottom and ``::`` chains
one-dimensional objects inside a single cell. ``...`` allows a gap before the
next element and ``( ... )+`` repeats a sequence one or more times.

Variables inside ``<...>`` are (re)bound by every match; they never join.
Head parameters are registers written only by actions.
"""
from __future__ import annotations

import heapq
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Union

from .errors import DescriptorError, DescriptorSyntaxError, LinkError
from .ontology import BI_DIM, BUILTIN_ENTITIES, ONE_DIM, EntityType, ObjectModel


class Axis(Enum):
    HORIZONTAL = "::-"
    VERTICAL = "::|"
    ONEDIM = "::"

    @property
    def dim(self) -> int:
        return 1 if self is Axis.ONEDIM else 2


@dataclass(frozen=True)
class ConceptMatch:
    type_name: str
    vars: tuple[str, ...] = ()


@dataclass(frozen=True)
class ContainsMatch:
    outer: ConceptMatch
    inner: ConceptMatch


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class Assign:
    var: str
    source: Union[VarRef, str]  # a plain str is a string literal


@dataclass(frozen=True)
class InitList:
    var: str


@dataclass(frozen=True)
class Append:
    var: str
    source: str


Statement = Union[Assign, InitList, Append]


@dataclass(frozen=True)
class Action:
    statements: tuple[Statement, ...]


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Group:
    elements: tuple["BodyElement", ...]


@dataclass(frozen=True)
class Recurrence:
    elements: tuple["BodyElement", ...]


BodyElement = Union[ConceptMatch, ContainsMatch, Action, Skip, Group, Recurrence]
Consuming = (ConceptMatch, ContainsMatch)


@dataclass(frozen=True)
class Descriptor:
    head_name: str
    head_params: tuple[str, ...]
    axis: Axis
    body: tuple[BodyElement, ...]

    def __str__(self) -> str:
        return pretty_print(self)


# ---------------------------------------------------------------------------
# lexer

_TOKEN_SPEC = [
    ("WS", r"[ \t\r\n]+"),
    ("COMMENT", r"#[^\n]*"),
    ("AXIS", r"::-|::\||::"),
    ("ASSIGN", r":="),
    ("APPEND", r"&="),
    ("SKIP", r"\.\.\."),
    ("EMPTY", r"\[\s*\]"),
    ("STRING", r"'(?:[^'\\\n]|\\.)*'|\"(?:[^\"\\\n]|\\.)*\""),
    ("IDENT", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("PUNCT", r"[<>(){};,+]"),
]
_LEX_RE = re.compile("|".join(f"(?P<{n}>{p})" for n, p in _TOKEN_SPEC))


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _lex(text: str, line0: int = 1) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, line0, 0
    while pos < len(text):
        m = _LEX_RE.match(text, pos)
        if not m:
            raise DescriptorSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind, value = m.lastgroup, m.group()
        if kind not in ("WS", "COMMENT"):
            toks.append(_Tok(kind, value, line, pos - line_start + 1))
        nl = value.count("\n")
        if nl:
            line += nl
            line_start = pos + value.rindex("\n") + 1
        pos = m.end()
    toks.append(_Tok("EOF", "", line, pos - line_start + 1))
    return toks


def _unquote(lit: str) -> str:
    return re.sub(r"\\(.)", r"\1", lit[1:-1], flags=re.S)


def _quote(value: str) -> str:
    return "'" + value.replace("\\", "\\\\").replace("'", "\\'") + "'"


def _is_var(name: str) -> bool:
    return name[0].isupper() or name[0] == "_"


# ---------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, text: str, line0: int = 1):
        self.toks = _lex(text, line0)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None) -> DescriptorSyntaxError:
        tok = tok or self.tok
        found = tok.text or "end of input"
        return DescriptorSyntaxError(f"{msg}, found {found!r}", tok.line, tok.col)

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind in ("PUNCT", "IDENT", "SKIP"):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        tok = self.tok
        if not self.accept(text):
            raise self.error(f"expected {text!r}")
        return tok

    def ident(self, what: str) -> str:
        tok = self.tok
        if tok.kind != "IDENT" or tok.text == "CONTAINS":
            raise self.error(f"expected {what}")
        self.i += 1
        return tok.text

    def var(self) -> str:
        tok = self.tok
        name = self.ident("variable")
        if not _is_var(name):
            raise DescriptorSyntaxError(f"variable names start with an uppercase letter: {name!r}",
                                        tok.line, tok.col)
        return name

    def var_list(self) -> tuple[str, ...]:
        out: list[str] = []
        if self.accept("("):
            if not self.accept(")"):
                out.append(self.var())
                while self.accept(","):
                    out.append(self.var())
                self.expect(")")
        return tuple(out)

    def descriptor(self) -> Descriptor:
        self.expect("<")
        name = self.ident("descriptor name")
        params = self.var_list()
        self.expect(">")
        if self.tok.kind != "AXIS":
            raise self.error("expected '::-', '::|' or '::'")
        axis = Axis(self.tok.text)
        self.i += 1
        body = self.elements(stop=("EOF",))
        if self.tok.kind != "EOF":
            raise self.error("unexpected input after descriptor body")
        if not body:
            raise self.error("descriptor body is empty")
        return Descriptor(name, params, axis, tuple(body))

    def elements(self, stop: tuple[str, ...]) -> list[BodyElement]:
        out: list[BodyElement] = []
        while self.tok.kind not in stop and self.tok.text != ")":
            out.append(self.element())
        return out

    def element(self) -> BodyElement:
        tok = self.tok
        if tok.text == "<":
            outer = self.concept()
            if self.tok.text == "CONTAINS":
                self.i += 1
                return ContainsMatch(outer, self.concept())
            return outer
        if tok.text == "(":
            self.i += 1
            inner = self.elements(stop=("EOF",))
            if not inner:
                raise self.error("empty parentheses")
            self.expect(")")
            if self.accept("+"):
                return Recurrence(tuple(inner))
            return Group(tuple(inner))
        if tok.kind == "SKIP":
            self.i += 1
            return Skip()
        if tok.text == "{":
            return self.action()
        raise self.error("expected '<', '(', '...' or '{'")

    def concept(self) -> ConceptMatch:
        self.expect("<")
        name = self.ident("concept name")
        vars_ = self.var_list()
        self.expect(">")
        return ConceptMatch(name, vars_)

    def action(self) -> Action:
        self.expect("{")
        stmts: list[Statement] = []
        while not self.accept("}"):
            var = self.var()
            op = self.tok
            if op.kind == "ASSIGN":
                self.i += 1
                src = self.tok
                if src.kind == "EMPTY":
                    self.i += 1
                    stmts.append(InitList(var))
                elif src.kind == "STRING":
                    self.i += 1
                    stmts.append(Assign(var, _unquote(src.text)))
                else:
                    stmts.append(Assign(var, VarRef(self.var())))
            elif op.kind == "APPEND":
                self.i += 1
                stmts.append(Append(var, self.var()))
            else:
                raise self.error("expected ':=' or '&='")
            if not self.accept(";") and self.tok.text != "}":
                raise self.error("expected ';'")
        if not stmts:
            raise self.error("empty action")
        return Action(tuple(stmts))


def parse_descriptor(text: str, line0: int = 1) -> Descriptor:
    """Parse and statically check one descriptor."""
    d = _Parser(text, line0).descriptor()
    check_descriptor(d)
    return d


def parse_descriptor_file(text: str) -> list[Descriptor]:
    """Descriptors separated by blank lines; ``#`` starts a comment."""
    out = []
    block: list[str] = []
    start = 1
    for lineno, line in enumerate(text.splitlines() + [""], start=1):
        if line.strip():
            if not block:
                start = lineno
            block.append(line)
        elif block:
            chunk = "\n".join(block)
            if any(ln.strip() and not ln.lstrip().startswith("#") for ln in block):
                out.append(parse_descriptor(chunk, start))
            block = []
    return out


# ---------------------------------------------------------------------------
# static checks

def walk(elements: Iterable[BodyElement]) -> Iterator[BodyElement]:
    """Pre-order traversal of body elements."""
    for el in elements:
        yield el
        if isinstance(el, (Group, Recurrence)):
            yield from walk(el.elements)


def concepts(d: Descriptor) -> list[ConceptMatch]:
    out = []
    for el in walk(d.body):
        if isinstance(el, ConceptMatch):
            out.append(el)
        elif isinstance(el, ContainsMatch):
            out.extend((el.outer, el.inner))
    return out


def statements(d: Descriptor) -> list[Statement]:
    return [s for el in walk(d.body) if isinstance(el, Action) for s in el.statements]


def _has_consuming(elements: Iterable[BodyElement]) -> bool:
    return any(isinstance(el, Consuming) for el in walk(elements))


def check_descriptor(d: Descriptor) -> None:
    if len(set(d.head_params)) != len(d.head_params):
        raise DescriptorError(f"{d.head_name}: duplicate head parameter")
    if not _has_consuming(d.body):
        raise DescriptorError(f"{d.head_name}: body matches no object")
    bound: set[str] = set()
    lists: set[str] = set()
    for el in walk(d.body):
        if isinstance(el, ContainsMatch) and d.axis is Axis.ONEDIM:
            raise DescriptorError(f"{d.head_name}: CONTAINS is not allowed under the '::' axis")
        if isinstance(el, Recurrence) and not _has_consuming(el.elements):
            raise DescriptorError(f"{d.head_name}: recurrence must match at least one object")
        matches = [el] if isinstance(el, ConceptMatch) else (
            [el.outer, el.inner] if isinstance(el, ContainsMatch) else [])
        for cm in matches:
            if len(set(cm.vars)) != len(cm.vars):
                raise DescriptorError(f"{d.head_name}: variable repeated in <{cm.type_name}>")
            bound.update(cm.vars)
        if isinstance(el, Action):
            for st in el.statements:
                if isinstance(st, Assign):
                    if isinstance(st.source, VarRef) and st.source.name not in bound:
                        raise DescriptorError(f"{d.head_name}: variable {st.source.name} used before it is bound")
                    bound.add(st.var)
                elif isinstance(st, InitList):
                    bound.add(st.var)
                    lists.add(st.var)
                else:
                    if st.var not in lists:
                        raise DescriptorError(f"{d.head_name}: {st.var}&= before {st.var}:=[]")
                    if st.source not in bound:
                        raise DescriptorError(f"{d.head_name}: variable {st.source} used before it is bound")
    assigned = {st.var for st in statements(d)}
    for p in d.head_params:
        if p not in assigned:
            raise DescriptorError(f"{d.head_name}: head variable {p} is never assigned")


# ---------------------------------------------------------------------------
# printer

def _print_concept(cm: ConceptMatch) -> str:
    return f"<{cm.type_name}({', '.join(cm.vars)})>"


def _print_stmt(st: Statement) -> str:
    if isinstance(st, InitList):
        return f"{st.var}:=[];"
    if isinstance(st, Append):
        return f"{st.var}&={st.source};"
    src = st.source.name if isinstance(st.source, VarRef) else _quote(st.source)
    return f"{st.var}:={src};"


def _print_element(el: BodyElement) -> str:
    if isinstance(el, ConceptMatch):
        return _print_concept(el)
    if isinstance(el, ContainsMatch):
        return f"{_print_concept(el.outer)} CONTAINS {_print_concept(el.inner)}"
    if isinstance(el, Action):
        return "{" + " ".join(_print_stmt(s) for s in el.statements) + "}"
    if isinstance(el, Skip):
        return "..."
    inner = " ".join(_print_element(e) for e in el.elements)
    return f"({inner})+" if isinstance(el, Recurrence) else f"({inner})"


def pretty_print(d: Descriptor) -> str:
    head = f"<{d.head_name}({', '.join(d.head_params)})>"
    return f"{head} {d.axis.value} " + " ".join(_print_element(e) for e in d.body)


# ---------------------------------------------------------------------------
# linking

@dataclass(frozen=True)
class Plan:
    """Descriptors in dependency order plus the model extended with their heads."""
    descriptors: tuple[Descriptor, ...]
    model: ObjectModel

    def __iter__(self) -> Iterator[Descriptor]:
        return iter(self.descriptors)

    def __len__(self) -> int:
        return len(self.descriptors)


def _infer_head_types(d: Descriptor, model: ObjectModel) -> list[tuple[str, str]]:
    types: dict[str, str] = {}
    for el in walk(d.body):
        cms = [el] if isinstance(el, ConceptMatch) else (
            [el.outer, el.inner] if isinstance(el, ContainsMatch) else [])
        for cm in cms:
            for var, (_, atype) in zip(cm.vars, model.attributes(cm.type_name)):
                types[var] = atype
        if isinstance(el, Action):
            for st in el.statements:
                if isinstance(st, Assign):
                    types[st.var] = types.get(st.source.name, "string") if isinstance(st.source, VarRef) else "string"
                else:
                    types[st.var] = "list"
    return [(p, types.get(p, "string")) for p in d.head_params]


def _find_cycle(deps: dict[str, set[str]]) -> list[str]:
    state: dict[str, int] = {}
    stack: list[str] = []

    def visit(n: str) -> list[str] | None:
        state[n] = 1
        stack.append(n)
        for m in sorted(deps[n]):
            if state.get(m) == 1:
                return stack[stack.index(m):] + [m]
            if m not in state:
                found = visit(m)
                if found:
                    return found
        stack.pop()
        state[n] = 2
        return None

    for n in sorted(deps):
        if n not in state:
            found = visit(n)
            if found:
                return found
    return []


def link_descriptors(ds: Iterable[Descriptor], model: ObjectModel) -> Plan:
    """Order descriptors by dependency and register their heads as entity types."""
    ds = list(ds)
    by_name: dict[str, Descriptor] = {}
    builtin_names = {n for n, _, _ in BUILTIN_ENTITIES}
    for d in ds:
        if d.head_name in by_name:
            raise LinkError(f"descriptor {d.head_name!r} defined twice")
        if d.head_name in builtin_names:
            raise LinkError(f"descriptor head {d.head_name!r} shadows a built-in type")
        by_name[d.head_name] = d

    deps: dict[str, set[str]] = {}
    for d in ds:
        deps[d.head_name] = set()
        for cm in concepts(d):
            if cm.type_name in by_name:
                deps[d.head_name].add(cm.type_name)
            elif cm.type_name not in model:
                raise LinkError(f"{d.head_name}: unknown concept {cm.type_name!r}")
    cycle = _find_cycle(deps)
    if cycle:
        raise LinkError("cyclic descriptor dependency: " + " -> ".join(cycle))

    users: dict[str, set[str]] = {n: set() for n in deps}
    for n, ms in deps.items():
        for m in ms:
            users[m].add(n)
    indeg = {n: len(ms) for n, ms in deps.items()}
    ready = [n for n, k in indeg.items() if k == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for u in users[n]:
            indeg[u] -= 1
            if indeg[u] == 0:
                heapq.heappush(ready, u)

    # heads already declared in the object model keep their declaration
    dims = {d.head_name: d.axis.dim for d in ds}
    for name in model.entities:
        if name in dims or model.dim(name) is not None:
            continue
        below = {dims[h] for h in dims if h in model and model.subtype_of(h, name)}
        if len(below) > 1:
            raise LinkError(f"type {name!r} has both one- and two-dimensional descriptor heads below it")
        dims[name] = below.pop() if below else 1

    current = model.extended(dims={k: v for k, v in dims.items() if k in model})
    for name in order:
        d = by_name[name]
        if name in current:
            declared = current.attributes(name)
            if len(declared) != len(d.head_params):
                raise LinkError(f"{name}: {len(d.head_params)} head parameters but the declared type has "
                                f"{len(declared)} attributes")
            if current.dim(name) != d.axis.dim:
                raise LinkError(f"{name}: declared dimensionality conflicts with axis {d.axis.value}")
        else:
            parent = ONE_DIM if d.axis is Axis.ONEDIM else BI_DIM
            _check_concepts(d, current)
            ent = EntityType(name, parent, tuple(_infer_head_types(d, current)))
            current = current.extended([ent], {name: d.axis.dim})
            continue
        _check_concepts(d, current)
    return Plan(tuple(by_name[n] for n in order), current)


def _check_concepts(d: Descriptor, model: ObjectModel) -> None:
    for el in walk(d.body):
        if isinstance(el, ConceptMatch):
            _check_concept(d, el, model, d.axis.dim)
        elif isinstance(el, ContainsMatch):
            _check_concept(d, el.outer, model, 2)
            _check_concept(d, el.inner, model, 1)


def _check_concept(d: Descriptor, cm: ConceptMatch, model: ObjectModel, dim: int) -> None:
    if cm.type_name not in model:
        raise LinkError(f"{d.head_name}: unknown concept {cm.type_name!r}")
    n_attrs = len(model.attributes(cm.type_name))
    if len(cm.vars) > n_attrs:
        raise LinkError(f"{d.head_name}: <{cm.type_name}> has {n_attrs} attribute(s), "
                        f"{len(cm.vars)} variable(s) given")
    actual = model.dim(cm.type_name)
    if actual != dim:
        kind = "one" if dim == 1 else "two"
        raise LinkError(f"{d.head_name}: <{cm.type_name}> must be {kind}-dimensional here")
