"""Positive Datalog with a few builtins, evaluated bottom-up.

Constants are plain Python values: ``str``, ``int`` and ``tuple`` (a list of
strings). Variables are :class:`Var` instances whose names start with an
uppercase letter or ``_``.

Text syntax::

    path(X, Y) :- edge(X, Y).
    path(X, Z) :- path(X, Y), edge(Y, Z).
    aux_d(Id, V) :- conf_d(2, V), Id=#newID.
    Id:d(V) :- aux_d(Id, V).          % typed atom, same as d(Id, V)
    conf(2, L2) :- conf(1, L), item(X), L2=#append(L, X).
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Union

from .errors import DatalogError

Const = Union[str, int, tuple]
Facts = Mapping[str, "set[tuple]"]


@dataclass(frozen=True)
class Var:
    name: str

    def __post_init__(self) -> None:
        if not (self.name[:1].isupper() or self.name[:1] == "_"):
            raise DatalogError(f"variable names start with an uppercase letter: {self.name!r}")

    def __str__(self) -> str:
        return self.name


Term = Union[Var, str, int, tuple]


@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple[Term, ...] = ()
    typed: bool = field(default=False, compare=False)

    def vars(self) -> set[str]:
        return {a.name for a in self.args if isinstance(a, Var)}

    def __str__(self) -> str:
        if self.typed and self.args:
            rest = ", ".join(format_term(a) for a in self.args[1:])
            return f"{format_term(self.args[0])}:{self.pred}({rest})"
        return f"{self.pred}({', '.join(format_term(a) for a in self.args)})"


COMPARISONS = ("=", "==", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Compare:
    op: str
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"{format_term(self.left)}{self.op}{format_term(self.right)}" if self.op == "=" \
            else f"{format_term(self.left)} {self.op} {format_term(self.right)}"


@dataclass(frozen=True)
class NewId:
    out: Var

    def __str__(self) -> str:
        return f"{self.out}=#newID"


@dataclass(frozen=True)
class AppendList:
    out: Var
    lst: Term
    elem: Term

    def __str__(self) -> str:
        return f"{self.out}=#append({format_term(self.lst)}, {format_term(self.elem)})"


Builtin = Union[Compare, NewId, AppendList]
Literal = Union[Atom, Builtin]


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple[Literal, ...] = ()

    @property
    def atoms(self) -> list[Atom]:
        return [b for b in self.body if isinstance(b, Atom)]

    @property
    def builtins(self) -> list[Builtin]:
        return [b for b in self.body if not isinstance(b, Atom)]

    @property
    def is_fact(self) -> bool:
        return not self.body

    def __str__(self) -> str:
        if not self.body:
            return f"{self.head}."
        return f"{self.head} :- " + ", ".join(str(b) for b in self.body) + "."


def format_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, bool):
        raise DatalogError("booleans are not Datalog constants")
    if isinstance(t, int):
        return str(t)
    if isinstance(t, tuple):
        return "[" + ", ".join(format_term(v) for v in t) + "]"
    return "'" + t.replace("\\", "\\\\").replace("'", "\\'") + "'"


# ---------------------------------------------------------------------------
# builtins

def new_id(name: str, key: Iterable[Const]) -> str:
    """Deterministic object id for a derivation ``key`` of descriptor ``name``."""
    def enc(v: object) -> object:
        if isinstance(v, tuple):
            return [enc(x) for x in v]
        if isinstance(v, (str, int)) and not isinstance(v, bool):
            return v
        raise DatalogError(f"#newID key value is unbound or not a constant: {v!r}")

    payload = json.dumps([name, [enc(v) for v in key]], ensure_ascii=False, separators=(",", ":"))
    return "g_" + hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def append_list(lst: Const, elem: Const) -> tuple:
    if not isinstance(lst, tuple):
        raise DatalogError(f"#append expects a list, got {lst!r}")
    if not isinstance(elem, str):
        raise DatalogError(f"#append expects a string element, got {elem!r}")
    return lst + (elem,)


def _newid_name(head: Atom) -> str:
    return head.pred[4:] if head.pred.startswith("aux_") else head.pred


# ---------------------------------------------------------------------------
# programs

def _term_vars(t: Term) -> set[str]:
    return {t.name} if isinstance(t, Var) else set()


def _builtin_inputs(b: Builtin, bound: set[str]) -> bool:
    if isinstance(b, Compare):
        lv, rv = _term_vars(b.left), _term_vars(b.right)
        if b.op == "=":
            return lv <= bound or rv <= bound
        return (lv | rv) <= bound
    if isinstance(b, AppendList):
        return (_term_vars(b.lst) | _term_vars(b.elem)) <= bound
    return True


def _builtin_outputs(b: Builtin) -> set[str]:
    if isinstance(b, Compare):
        return (_term_vars(b.left) | _term_vars(b.right)) if b.op == "=" else set()
    return {b.out.name}


@dataclass(frozen=True)
class _Step:
    atom: Atom | None = None
    builtin: Builtin | None = None
    delta: bool = False
    key_pos: tuple[int, ...] = ()
    key_src: tuple[Term, ...] = ()
    binds: tuple[tuple[int, str], ...] = ()
    checks: tuple[tuple[int, int], ...] = ()


def _atom_step(atom: Atom, bound: set[str], delta: bool) -> _Step:
    key_pos, key_src, binds, checks = [], [], [], []
    first: dict[str, int] = {}
    for i, a in enumerate(atom.args):
        if isinstance(a, Var):
            if a.name in bound:
                key_pos.append(i)
                key_src.append(a)
            elif a.name in first:
                checks.append((i, first[a.name]))
            else:
                first[a.name] = i
                binds.append((i, a.name))
        else:
            key_pos.append(i)
            key_src.append(a)
    return _Step(atom=atom, delta=delta, key_pos=tuple(key_pos), key_src=tuple(key_src),
                 binds=tuple(binds), checks=tuple(checks))


def _plan(rule: Rule, delta_idx: int | None) -> list[_Step]:
    """Join order: delta atom first, then greedily the most-bound atom."""
    atoms = [(i, b) for i, b in enumerate(rule.body) if isinstance(b, Atom)]
    pending = [b for b in rule.body if not isinstance(b, Atom) and not isinstance(b, NewId)]
    newids = [b for b in rule.body if isinstance(b, NewId)]
    bound: set[str] = set()
    steps: list[_Step] = []

    def flush() -> None:
        progress = True
        while progress:
            progress = False
            for b in list(pending):
                if _builtin_inputs(b, bound):
                    steps.append(_Step(builtin=b))
                    bound.update(_builtin_outputs(b))
                    pending.remove(b)
                    progress = True

    if delta_idx is not None:
        atom = rule.body[delta_idx]
        steps.append(_atom_step(atom, bound, True))
        bound.update(atom.vars())
        atoms = [(i, a) for i, a in atoms if i != delta_idx]
    while atoms:
        flush()
        best = max(atoms, key=lambda ia: (sum(1 for x in ia[1].args if not isinstance(x, Var) or x.name in bound),
                                          -ia[0]))
        atoms.remove(best)
        steps.append(_atom_step(best[1], bound, False))
        bound.update(best[1].vars())
    flush()
    if pending:
        raise DatalogError(f"builtin {pending[0]} has an unbound input in rule: {rule}")
    for b in newids:
        missing = rule.head.vars() - {b.out.name} - bound
        if missing:
            raise DatalogError(f"#newID key variable(s) {sorted(missing)} unbound in rule: {rule}")
        steps.append(_Step(builtin=b))
        bound.add(b.out.name)
    unbound = rule.head.vars() - bound
    if unbound:
        raise DatalogError(f"rule is not range-restricted (head variables {sorted(unbound)}): {rule}")
    return steps


class Program:
    """An immutable, validated list of rules."""

    def __init__(self, rules: Iterable[Rule]):
        self.rules: tuple[Rule, ...] = tuple(rules)
        self._plans: dict[tuple[int, int | None], list[_Step]] = {}
        for k, r in enumerate(self.rules):
            if r.is_fact and r.head.vars():
                raise DatalogError(f"fact with variables: {r}")
            for b in r.body:
                if isinstance(b, NewId) and not r.head.pred.startswith("aux_"):
                    raise DatalogError(f"#newID is only allowed in aux_* rules: {r}")
                if isinstance(b, NewId) and b.out not in r.head.args:
                    raise DatalogError(f"#newID output must appear in the head: {r}")
                if isinstance(b, Compare) and b.op not in COMPARISONS:
                    raise DatalogError(f"unknown comparison {b.op!r}")
            self._plans[(k, None)] = _plan(r, None)
            for i, b in enumerate(r.body):
                if isinstance(b, Atom):
                    self._plans[(k, i)] = _plan(r, i)
        self._check_invented_keys()

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)

    def __add__(self, other: "Program") -> "Program":
        return Program(self.rules + other.rules)

    def __str__(self) -> str:
        return "\n".join(str(r) for r in self.rules)

    @property
    def head_predicates(self) -> set[str]:
        return {r.head.pred for r in self.rules}

    def _check_invented_keys(self) -> None:
        """Reject programs where invented ids can flow back into a #newID key."""
        tainted: set[tuple[str, int]] = set()
        for r in self.rules:
            for b in r.builtins:
                if isinstance(b, NewId):
                    tainted.add((r.head.pred, r.head.args.index(b.out)))
        changed = True
        while changed:
            changed = False
            for r in self.rules:
                tvars = self._tainted_vars(r, tainted)
                for i, a in enumerate(r.head.args):
                    if isinstance(a, Var) and a.name in tvars and (r.head.pred, i) not in tainted:
                        tainted.add((r.head.pred, i))
                        changed = True
        for r in self.rules:
            newids = [b for b in r.builtins if isinstance(b, NewId)]
            if not newids:
                continue
            tvars = self._tainted_vars(r, tainted, seed_newid=False)
            key = r.head.vars() - {b.out.name for b in newids}
            if key & tvars:
                raise DatalogError(f"invented ids feed the #newID key of rule: {r}")

    @staticmethod
    def _tainted_vars(r: Rule, tainted: set[tuple[str, int]], seed_newid: bool = True) -> set[str]:
        tv = {a.name for atom in r.atoms for i, a in enumerate(atom.args)
              if isinstance(a, Var) and (atom.pred, i) in tainted}
        if seed_newid:
            tv |= {b.out.name for b in r.builtins if isinstance(b, NewId)}
        changed = True
        while changed:
            changed = False
            for b in r.builtins:
                if isinstance(b, Compare) and b.op == "=":
                    names = _term_vars(b.left) | _term_vars(b.right)
                    if names & tv and not names <= tv:
                        tv |= names
                        changed = True
                elif isinstance(b, AppendList):
                    if (_term_vars(b.lst) | _term_vars(b.elem)) & tv and b.out.name not in tv:
                        tv.add(b.out.name)
                        changed = True
        return tv


# ---------------------------------------------------------------------------
# semi-naive evaluation

class _Store:
    def __init__(self, edb: Facts):
        self.facts: dict[str, set[tuple]] = {p: set(s) for p, s in edb.items()}
        self._idx: dict[tuple[str, tuple[int, ...]], dict[tuple, list[tuple]]] = {}

    def lookup(self, pred: str, positions: tuple[int, ...], key: tuple) -> Iterable[tuple]:
        if not positions:
            return self.facts.get(pred, ())
        idx = self._idx.get((pred, positions))
        if idx is None:
            idx = {}
            for f in self.facts.get(pred, ()):
                if len(f) > positions[-1]:  # shorter facts can never match
                    idx.setdefault(tuple(f[p] for p in positions), []).append(f)
            self._idx[(pred, positions)] = idx
        return idx.get(key, ())

    def add_all(self, new: dict[str, set[tuple]]) -> None:
        for pred, fs in new.items():
            self.facts.setdefault(pred, set()).update(fs)
            for (p, positions), idx in self._idx.items():
                if p == pred:
                    for f in fs:
                        if len(f) > positions[-1]:
                            idx.setdefault(tuple(f[i] for i in positions), []).append(f)


def _value(t: Term, env: dict[str, Const]) -> Const:
    return env[t.name] if isinstance(t, Var) else t


def _compare(op: str, a: Const, b: Const) -> bool:
    if op in ("=", "=="):
        return a == b
    if op == "!=":
        return a != b
    if type(a) is not type(b) or isinstance(a, tuple):
        return False
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


def _run_builtin(b: Builtin, env: dict[str, Const], head: Atom) -> dict[str, Const] | None:
    if isinstance(b, Compare):
        if b.op == "=":
            if isinstance(b.left, Var) and b.left.name not in env:
                return {**env, b.left.name: _value(b.right, env)}
            if isinstance(b.right, Var) and b.right.name not in env:
                return {**env, b.right.name: _value(b.left, env)}
        return env if _compare(b.op, _value(b.left, env), _value(b.right, env)) else None
    if isinstance(b, AppendList):
        out = append_list(_value(b.lst, env), _value(b.elem, env))
    else:
        out = new_id(_newid_name(head), [_value(a, env) for a in head.args if a != b.out])
    if b.out.name in env:
        return env if env[b.out.name] == out else None
    return {**env, b.out.name: out}


def _fire(rule: Rule, steps: list[_Step], store: _Store, delta: set[tuple] | None) -> Iterator[tuple]:
    envs: list[dict[str, Const]] = [{}]
    for st in steps:
        nxt: list[dict[str, Const]] = []
        if st.builtin is not None:
            for env in envs:
                out = _run_builtin(st.builtin, env, rule.head)
                if out is not None:
                    nxt.append(out)
        else:
            pred = st.atom.pred
            for env in envs:
                key = tuple(_value(t, env) for t in st.key_src)
                if st.delta:
                    cands = [f for f in delta if len(f) == len(st.atom.args)
                             and all(f[p] == k for p, k in zip(st.key_pos, key))]
                else:
                    cands = store.lookup(pred, st.key_pos, key)
                for f in cands:
                    if len(f) != len(st.atom.args):
                        continue
                    if any(f[i] != f[j] for i, j in st.checks):
                        continue
                    if st.binds:
                        e = dict(env)
                        for i, name in st.binds:
                            e[name] = f[i]
                        nxt.append(e)
                    else:
                        nxt.append(env)
        envs = nxt
        if not envs:
            return
    for env in envs:
        yield tuple(_value(a, env) for a in rule.head.args)


def evaluate(program: Program, edb: Facts) -> dict[str, set[tuple]]:
    """Least fixpoint of ``program`` over ``edb`` by semi-naive iteration.

    The input facts are not modified; the result contains them.
    """
    store = _Store(edb)
    new: dict[str, set[tuple]] = {}

    def emit(pred: str, fact: tuple) -> None:
        if fact not in store.facts.get(pred, ()):
            new.setdefault(pred, set()).add(fact)

    for k, r in enumerate(program.rules):
        for fact in _fire(r, program._plans[(k, None)], store, None):
            emit(r.head.pred, fact)
    while new:
        store.add_all(new)
        delta, new = new, {}
        for k, r in enumerate(program.rules):
            for i, b in enumerate(r.body):
                if isinstance(b, Atom) and b.pred in delta:
                    for fact in _fire(r, program._plans[(k, i)], store, delta[b.pred]):
                        emit(r.head.pred, fact)
    return store.facts


def evaluate_naive(program: Program, edb: Facts) -> dict[str, set[tuple]]:
    """Plain naive iteration with nested-loop joins in textual body order.

    Slow; kept as an independent reference for :func:`evaluate`.
    """
    facts: dict[str, set[tuple]] = {p: set(s) for p, s in edb.items()}

    def match(atom: Atom, fact: tuple, env: dict[str, Const]) -> dict[str, Const] | None:
        if len(fact) != len(atom.args):
            return None
        env = dict(env)
        for a, v in zip(atom.args, fact):
            if isinstance(a, Var):
                if a.name in env and env[a.name] != v:
                    return None
                env[a.name] = v
            elif a != v:
                return None
        return env

    def solutions(rule: Rule) -> list[dict[str, Const]]:
        envs: list[dict[str, Const]] = [{}]
        for atom in rule.atoms:
            envs = [e2 for e in envs for f in list(facts.get(atom.pred, ())) if (e2 := match(atom, f, e)) is not None]
        rest = [b for b in rule.builtins if not isinstance(b, NewId)] + \
               [b for b in rule.builtins if isinstance(b, NewId)]
        out = []
        for env in envs:
            todo = list(rest)
            ok = True
            while todo and ok:
                for b in todo:
                    if isinstance(b, NewId) and len(todo) > 1:
                        continue
                    if _builtin_inputs(b, set(env)):
                        res = _run_builtin(b, env, rule.head)
                        if res is None:
                            ok = False
                        else:
                            env = res
                        todo.remove(b)
                        break
                else:
                    raise DatalogError(f"cannot evaluate builtins of rule: {rule}")
            if ok:
                out.append(env)
        return out

    changed = True
    while changed:
        changed = False
        for r in program.rules:
            for env in solutions(r):
                fact = tuple(_value(a, env) for a in r.head.args)
                bucket = facts.setdefault(r.head.pred, set())
                if fact not in bucket:
                    bucket.add(fact)
                    changed = True
    return facts


# ---------------------------------------------------------------------------
# text syntax

_DL_SPEC = [
    ("WS", r"\s+"),
    ("COMMENT", r"%[^\n]*|#(?![A-Za-z])[^\n]*"),
    ("IMPLIES", r":-"),
    ("BUILTIN", r"#newID|#append"),
    ("OP", r"==|!=|<=|>=|<|>|="),
    ("STRING", r"'(?:[^'\\\n]|\\.)*'|\"(?:[^\"\\\n]|\\.)*\""),
    ("INT", r"-?\d+"),
    ("IDENT", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("PUNCT", r"[(),.:\[\]]"),
]
_DL_RE = re.compile("|".join(f"(?P<{n}>{p})" for n, p in _DL_SPEC))


def _dl_lex(text: str) -> list[tuple[str, str, int]]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _DL_RE.match(text, pos)
        if not m:
            line = text.count("\n", 0, pos) + 1
            raise DatalogError(f"line {line}: unexpected character {text[pos]!r}")
        if m.lastgroup not in ("WS", "COMMENT"):
            toks.append((m.lastgroup, m.group(), text.count("\n", 0, pos) + 1))
        pos = m.end()
    toks.append(("EOF", "", text.count("\n") + 1))
    return toks


class _DlParser:
    def __init__(self, text: str):
        self.toks = _dl_lex(text)
        self.i = 0

    def peek(self, k: int = 0) -> tuple[str, str, int]:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str) -> DatalogError:
        kind, text, line = self.peek()
        return DatalogError(f"line {line}: {msg}, found {text or 'end of input'!r}")

    def take(self, text: str) -> bool:
        if self.peek()[1] == text and self.peek()[0] in ("PUNCT", "OP", "IMPLIES"):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> None:
        if not self.take(text):
            raise self.error(f"expected {text!r}")

    def program(self) -> list[Rule]:
        rules = []
        while self.peek()[0] != "EOF":
            rules.append(self.clause())
        return rules

    def clause(self) -> Rule:
        head = self.atom()
        body: list[Literal] = []
        if self.take(":-"):
            body.append(self.literal())
            while self.take(","):
                body.append(self.literal())
        self.expect(".")
        return Rule(head, tuple(body))

    def term(self) -> Term:
        kind, text, _ = self.peek()
        if kind == "IDENT":
            self.i += 1
            return Var(text) if (text[0].isupper() or text[0] == "_") else text
        if kind == "STRING":
            self.i += 1
            return re.sub(r"\\(.)", r"\1", text[1:-1], flags=re.S)
        if kind == "INT":
            self.i += 1
            return int(text)
        if text == "[":
            self.i += 1
            items: list[Const] = []
            if not self.take("]"):
                items.append(self.term())
                while self.take(","):
                    items.append(self.term())
                self.expect("]")
            if not all(isinstance(x, str) for x in items):
                raise self.error("list constants hold strings only")
            return tuple(items)
        raise self.error("expected a term")

    def atom(self) -> Atom:
        kind, text, _ = self.peek()
        if self.peek(1)[1] == ":" and self.peek(1)[0] == "PUNCT":
            oid = self.term()
            self.expect(":")
            inner = self.atom()
            return Atom(inner.pred, (oid, *inner.args), typed=True)
        # an uppercase name is a predicate only when arguments follow
        if kind != "IDENT" or (text[0].isupper() or text[0] == "_") and self.peek(1)[1] != "(":
            raise self.error("expected a predicate name")
        self.i += 1
        args: list[Term] = []
        if self.take("("):
            if not self.take(")"):
                args.append(self.term())
                while self.take(","):
                    args.append(self.term())
                self.expect(")")
        return Atom(text, tuple(args))

    def literal(self) -> Literal:
        kind, text, _ = self.peek()
        nxt = self.peek(1)
        if kind == "IDENT" and nxt[0] == "PUNCT" and (
                nxt[1] == "(" or not (text[0].isupper() or text[0] == "_") and nxt[1] in (",", ".")):
            return self.atom()
        if nxt[1] == ":" and nxt[0] == "PUNCT":
            return self.atom()
        left = self.term()
        kind, op, _ = self.peek()
        if kind != "OP":
            raise self.error("expected a comparison")
        self.i += 1
        if op == "=" and self.peek()[0] == "BUILTIN":
            name = self.peek()[1]
            self.i += 1
            if not isinstance(left, Var):
                raise self.error(f"{name} must be assigned to a variable")
            if name == "#newID":
                return NewId(left)
            self.expect("(")
            lst = self.term()
            self.expect(",")
            elem = self.term()
            self.expect(")")
            return AppendList(left, lst, elem)
        return Compare(op, left, self.term())


def parse_program(text: str) -> Program:
    return Program(_DlParser(text).program())


def parse_rules(text: str) -> list[Rule]:
    return _DlParser(text).program()


def facts_from_rules(rules: Iterable[Rule]) -> dict[str, set[tuple]]:
    out: dict[str, set[tuple]] = {}
    for r in rules:
        if not r.is_fact:
            raise DatalogError(f"not a fact: {r}")
        out.setdefault(r.head.pred, set()).add(r.head.args)
    return out
