"""Descriptor execution: compilation to Datalog and a direct matcher.

Each descriptor is turned into an automaton whose states are the consuming
elements of its body (a ``CONTAINS`` element takes two states: the outer cell
and the object found inside it). Every transition becomes one ``conf_<name>``
rule; the final state feeds ``aux_<name>``, which invents the object id, and
two or three closing rules assert the new object and its position.

:func:`match_direct` walks the descriptor body by backtracking instead and
serves as an independent check of the compiled rules.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

from . import datalog as dl
from .dscript import (Action, Append, Assign, Axis, ConceptMatch, ContainsMatch, Descriptor, Group,
                      InitList, Plan, Recurrence, Skip, Statement, VarRef, walk)
from .ontology import BiPosition, FactBase, ObjectInstance, ObjectModel, OnePosition, Value

Actions = tuple[Statement, ...]


class Match(NamedTuple):
    attrs: tuple
    extent: tuple  # (xs, ys, xe, ye) or (cell, start, end)


# ---------------------------------------------------------------------------
# automaton

@dataclass
class _Frag:
    nullable: bool
    eps: tuple[Actions, bool] = ((), False)
    first: list[tuple[int, Actions, bool]] = field(default_factory=list)
    last: list[tuple[int, Actions, bool]] = field(default_factory=list)
    follow: list[tuple[int, int, Actions, bool]] = field(default_factory=list)


def _concat(f1: _Frag, f2: _Frag) -> _Frag:
    a1, g1 = f1.eps
    a2, g2 = f2.eps
    first = list(f1.first)
    if f1.nullable:
        first += [(p, a1 + a, g1 or g) for p, a, g in f2.first]
    last = list(f2.last)
    if f2.nullable:
        last += [(p, a + a2, g or g2) for p, a, g in f1.last]
    follow = f1.follow + f2.follow + [(i, j, x + y, gx or gy)
                                      for i, x, gx in f1.last for j, y, gy in f2.first]
    return _Frag(f1.nullable and f2.nullable, (a1 + a2, g1 or g2), first, last, follow)


@dataclass(frozen=True)
class Transition:
    source: int
    target: int
    element: ConceptMatch | ContainsMatch
    inner: bool = False        # the inside half of a CONTAINS element
    gap: bool = False
    pre: Actions = ()
    post: Actions = ()


@dataclass(frozen=True)
class Automaton:
    states: int
    init_actions: Actions
    transitions: tuple[Transition, ...]
    final_actions: Actions
    outer_states: frozenset[int]


def build_automaton(d: Descriptor) -> Automaton:
    positions: list[ConceptMatch | ContainsMatch] = []

    def frag(elements: Sequence) -> _Frag:
        acc = _Frag(True)
        for el in elements:
            acc = _concat(acc, element(el))
        return acc

    def element(el) -> _Frag:
        if isinstance(el, (ConceptMatch, ContainsMatch)):
            positions.append(el)
            p = len(positions) - 1
            return _Frag(False, first=[(p, (), False)], last=[(p, (), False)])
        if isinstance(el, Action):
            return _Frag(True, (el.statements, False))
        if isinstance(el, Skip):
            return _Frag(True, ((), True))
        body = frag(el.elements)
        if isinstance(el, Group):
            return body
        body.follow += [(i, j, x + y, gx or gy) for i, x, gx in body.last for j, y, gy in body.first]
        return body

    whole = frag(d.body)
    first_state, last_state = [], []
    n = 0
    for el in positions:
        first_state.append(n + 1)
        n += 2 if isinstance(el, ContainsMatch) else 1
        last_state.append(n)
    follow = list(dict.fromkeys(whole.follow))
    assert len(whole.first) == 1 and len(whole.last) == 1
    p0, init_actions, _ = whole.first[0]
    pk, final_actions, _ = whole.last[0]

    # actions every path out of a position starts with run right after it
    outgoing: dict[int, list[Actions]] = {p: [] for p in range(len(positions))}
    for i, _, acts, _ in follow:
        outgoing[i].append(acts)
    outgoing[pk].append(final_actions)
    post: dict[int, Actions] = {}
    for p, paths in outgoing.items():
        k = 0
        while all(len(a) > k for a in paths) and len({a[k] for a in paths}) == 1:
            k += 1
        post[p] = paths[0][:k]
    follow = [(i, j, acts[len(post[i]):], g) for i, j, acts, g in follow]
    final_actions = final_actions[len(post[pk]):]

    def entering(src: int, p: int, pre: Actions, gap: bool) -> list[Transition]:
        el = positions[p]
        if isinstance(el, ContainsMatch):
            return [Transition(src, first_state[p], el, False, gap, pre, ())]
        return [Transition(src, first_state[p], el, False, gap, pre, post[p])]

    trans = entering(0, p0, (), False)
    for i, j, acts, g in follow:
        trans += entering(last_state[i], j, acts, g)
    outer = set()
    for p, el in enumerate(positions):
        if isinstance(el, ContainsMatch):
            outer.add(first_state[p])
            trans.append(Transition(first_state[p], last_state[p], el, True, False, (), post[p]))
    trans.sort(key=lambda t: (t.target, t.source, t.gap))
    return Automaton(n, init_actions, tuple(dict.fromkeys(trans)), final_actions, frozenset(outer))


def _events(stmts: Actions) -> list[tuple[str, str]]:
    ev = []
    for st in stmts:
        if isinstance(st, Assign):
            if isinstance(st.source, VarRef):
                ev.append(("r", st.source.name))
            ev.append(("w", st.var))
        elif isinstance(st, InitList):
            ev.append(("w", st.var))
        else:
            ev += [("r", st.var), ("r", st.source), ("w", st.var)]
    return ev


def _use_def(events: list[tuple[str, str]]) -> tuple[set[str], set[str]]:
    use: set[str] = set()
    defs: set[str] = set()
    for kind, v in events:
        if kind == "r" and v not in defs:
            use.add(v)
        elif kind == "w":
            defs.add(v)
    return use, defs


def _transition_events(t: Transition) -> list[tuple[str, str]]:
    cm = t.element.inner if t.inner else (t.element.outer if isinstance(t.element, ContainsMatch) else t.element)
    return _events(t.pre) + [("w", v) for v in cm.vars] + _events(t.post)


def liveness(d: Descriptor, aut: Automaton) -> dict[int, set[str]]:
    """Variables whose value at each state can still reach the new object."""
    fin_use, fin_def = _use_def(_events(aut.final_actions))
    fin_use |= set(d.head_params) - fin_def
    live: dict[int, set[str]] = {s: set() for s in range(aut.states + 1)}
    live[aut.states] = set(fin_use)
    eff = [(t, *_use_def(_transition_events(t))) for t in aut.transitions]
    changed = True
    while changed:
        changed = False
        for t, use, defs in eff:
            add = use | (live[t.target] - defs)
            if not add <= live[t.source]:
                live[t.source] |= add
                changed = True
    return live


# ---------------------------------------------------------------------------
# compilation

class _Names:
    def __init__(self) -> None:
        self.used: set[str] = set()

    def __call__(self, base: str) -> dl.Var:
        name, k = base, 0
        while name in self.used:
            k += 1
            name = f"{base}_{k}"
        self.used.add(name)
        return dl.Var(name)


@dataclass(frozen=True)
class CompiledDescriptor:
    name: str
    dim: int
    states: int
    carried: tuple[str, ...]
    has_contains: bool
    program: dl.Program

    @property
    def rules(self) -> tuple[dl.Rule, ...]:
        return self.program.rules

    def conf_rules(self) -> list[dl.Rule]:
        return [r for r in self.rules if r.head.pred == f"conf_{self.name}"]

    def __str__(self) -> str:
        return str(self.program)


def _static_actions(stmts: Actions, env: dict[str, Value]) -> dict[str, Value]:
    env = dict(env)
    for st in stmts:
        if isinstance(st, Assign):
            env[st.var] = env.get(st.source.name, "") if isinstance(st.source, VarRef) else st.source
        elif isinstance(st, InitList):
            env[st.var] = ()
        else:
            env[st.var] = dl.append_list(env[st.var], env[st.source])
    return env


def _symbolic(stmts: Actions, env: dict[str, dl.Term], names: _Names, out: list[dl.Literal]) -> None:
    for st in stmts:
        if isinstance(st, Assign):
            env[st.var] = env[st.source.name] if isinstance(st.source, VarRef) else st.source
        elif isinstance(st, InitList):
            env[st.var] = ()
        else:
            new = names(st.var)
            out.append(dl.AppendList(new, env[st.var], env[st.source]))
            env[st.var] = new


def _type_atom(cm: ConceptMatch, oid: dl.Var, env: dict[str, dl.Term], names: _Names,
               model: ObjectModel) -> dl.Atom:
    args: list[dl.Term] = [oid]
    for k, _ in enumerate(model.attributes(cm.type_name)):
        if k < len(cm.vars):
            v = names(cm.vars[k])
            env[cm.vars[k]] = v
        else:
            v = names("_A")
        args.append(v)
    return dl.Atom(cm.type_name, tuple(args))


def compile_descriptor(d: Descriptor, model: ObjectModel) -> CompiledDescriptor:
    """Translate a linked descriptor into conf/aux/creation/position rules."""
    aut = build_automaton(d)
    live = liveness(d, aut)
    order = list(d.head_params)
    for el in walk(d.body):
        if isinstance(el, Action):
            for v in (w for _, w in _events(el.statements)):
                if v not in order:
                    order.append(v)
    carried = tuple(v for v in order if any(v in s for s in live.values()))
    has_contains = any(isinstance(el, ContainsMatch) for el in walk(d.body))
    dim = d.axis.dim
    conf, init, aux = f"conf_{d.head_name}", f"init_conf_{d.head_name}", f"aux_{d.head_name}"
    rules: list[dl.Rule] = []

    init_env = _static_actions(aut.init_actions, {})
    rules.append(dl.Rule(dl.Atom(init, (0, *(init_env.get(v, "") if v in live[0] else "" for v in carried)))))

    def ext_names(names: _Names) -> list[dl.Var]:
        return [names(n) for n in (("Cell", "Start", "End") if dim == 1 else ("Xs", "Ys", "Xe", "Ye"))]

    def source_atom(state: int, names: _Names, env: dict[str, dl.Term]) -> tuple[dl.Atom, dl.Var | None, list[dl.Var]]:
        regs = []
        for v in carried:
            var = names(v)
            env[v] = var
            regs.append(var)
        cur = names("Cur") if has_contains else None
        ext = ext_names(names)
        if state == 0:
            return dl.Atom(init, (0, *regs)), cur, ext
        return dl.Atom(conf, (state, *regs, *([cur] if cur else []), *ext)), cur, ext

    def target_head(state: int, env: dict[str, dl.Term], cur: dl.Term, ext: Sequence[dl.Term]) -> dl.Atom:
        regs = [env[v] if v in live[state] else "" for v in carried]
        cur_arg = [cur if state in aut.outer_states else ""] if has_contains else []
        return dl.Atom(conf, (state, *regs, *cur_arg, *ext))

    for t in aut.transitions:
        names = _Names()
        env: dict[str, dl.Term] = {}
        src, cur, ext = source_atom(t.source, names, env)
        body: list[dl.Literal] = [src]
        _symbolic(t.pre, env, names, body)
        if t.inner:
            inner = names("In")
            body.append(_type_atom(t.element.inner, inner, env, names, model))
            body.append(dl.Atom("belongs_to", (inner, cur)))
            new_ext: list[dl.Term] = list(ext)
            new_cur: dl.Term = cur
        else:
            cm = t.element.outer if isinstance(t.element, ContainsMatch) else t.element
            oid = names("Id")
            body.append(_type_atom(cm, oid, env, names, model))
            new_ext, pos_atoms = _placement(d.axis, t.source == 0, t.gap, oid, ext, names)
            body += pos_atoms
            new_cur = oid
        _symbolic(t.post, env, names, body)
        rules.append(dl.Rule(target_head(t.target, env, new_cur, new_ext), tuple(body)))

    names = _Names()
    env = {}
    src, _, ext = source_atom(aut.states, names, env)
    body = [src]
    _symbolic(aut.final_actions, env, names, body)
    auto = names("AutoGen")
    body.append(dl.NewId(auto))
    attrs = [env[h] for h in d.head_params]
    rules.append(dl.Rule(dl.Atom(aux, (auto, *attrs, *ext)), tuple(body)))

    names = _Names()
    auto = names("AutoGen")
    attrs_v = [names(h) for h in d.head_params]
    ext_v = ext_names(names)
    aux_atom = dl.Atom(aux, (auto, *attrs_v, *ext_v))
    rules.append(dl.Rule(dl.Atom(d.head_name, (auto, *attrs_v), typed=True), (aux_atom,)))
    if dim == 2:
        rules.append(dl.Rule(dl.Atom("bi_position", (auto, *ext_v)), (aux_atom,)))
    else:
        rules.append(dl.Rule(dl.Atom("one_position", (auto, ext_v[1], ext_v[2])), (aux_atom,)))
        rules.append(dl.Rule(dl.Atom("belongs_to", (auto, ext_v[0])), (aux_atom,)))
    return CompiledDescriptor(d.head_name, dim, aut.states, carried, has_contains, dl.Program(rules))


def _placement(axis: Axis, initial: bool, gap: bool, oid: dl.Var, ext: list[dl.Var],
               names: _Names) -> tuple[list[dl.Term], list[dl.Literal]]:
    """Position atoms for the next matched object and the grown extent."""
    if axis is Axis.ONEDIM:
        cell, s, e = ext
        if initial:
            return [cell, s, e], [dl.Atom("one_position", (oid, s, e)), dl.Atom("belongs_to", (oid, cell))]
        ne = names("End")
        if gap:
            ns = names("Start")
            return [cell, s, ne], [dl.Atom("one_position", (oid, ns, ne)), dl.Atom("belongs_to", (oid, cell)),
                                   dl.Compare(">=", ns, e)]
        return [cell, s, ne], [dl.Atom("one_position", (oid, e, ne)), dl.Atom("belongs_to", (oid, cell))]
    xs, ys, xe, ye = ext
    if initial:
        return [xs, ys, xe, ye], [dl.Atom("bi_position", (oid, xs, ys, xe, ye))]
    if axis is Axis.HORIZONTAL:
        nxe = names("Xe")
        if gap:
            nxs = names("Xs")
            return [xs, ys, nxe, ye], [dl.Atom("bi_position", (oid, nxs, ys, nxe, ye)), dl.Compare(">=", nxs, xe)]
        return [xs, ys, nxe, ye], [dl.Atom("bi_position", (oid, xe, ys, nxe, ye))]
    nye = names("Ye")
    if gap:
        nys = names("Ys")
        return [xs, ys, xe, nye], [dl.Atom("bi_position", (oid, xs, nys, xe, nye)), dl.Compare(">=", nys, ye)]
    return [xs, ys, xe, nye], [dl.Atom("bi_position", (oid, xs, ye, xe, nye))]


def compiled_matches(cd: CompiledDescriptor, facts: dl.Facts) -> dict[Match, str]:
    """Evaluate ``cd`` over ``facts``; complete matches mapped to their invented ids."""
    needed = {a.pred for r in cd.rules for a in r.atoms}
    edb = {p: facts[p] for p in needed if p in facts}
    result = dl.evaluate(cd.program, edb)
    ext_len = 4 if cd.dim == 2 else 3
    out: dict[Match, str] = {}
    for f in result.get(f"aux_{cd.name}", ()):
        out[Match(tuple(f[1:len(f) - ext_len]), tuple(f[len(f) - ext_len:]))] = f[0]
    return out


# ---------------------------------------------------------------------------
# direct matcher

@dataclass(frozen=True)
class _Conf:
    env: tuple[tuple[str, Value], ...]
    extent: tuple | None
    cur: str | None
    gap: bool

    def get(self, var: str) -> Value:
        return dict(self.env).get(var, "")

    def bind(self, pairs: Iterable[tuple[str, Value]]) -> dict[str, Value]:
        env = dict(self.env)
        env.update(pairs)
        return env


def _exec(stmts: Actions, env: dict[str, Value]) -> dict[str, Value]:
    for st in stmts:
        if isinstance(st, Assign):
            env[st.var] = env.get(st.source.name, "") if isinstance(st.source, VarRef) else st.source
        elif isinstance(st, InitList):
            env[st.var] = ()
        else:
            lst, item = env[st.var], env[st.source]
            if not isinstance(lst, tuple) or not isinstance(item, str):
                raise TypeError(f"cannot append {item!r} to {lst!r}")
            env[st.var] = lst + (item,)
    return env


def match_direct(d: Descriptor, fb: FactBase) -> set[Match]:
    """All complete matches of ``d`` over ``fb`` found by backtracking search."""
    found: set[Match] = set()
    axis = d.axis

    def freeze(env: dict[str, Value], extent, cur, gap) -> _Conf:
        return _Conf(tuple(sorted(env.items())), extent, cur, gap)

    def place(oid: str, conf: _Conf) -> tuple | None:
        if axis is Axis.ONEDIM:
            if oid not in fb.one_positions:
                return None
            s, e = fb.one_positions[oid]
            cell = fb.belongs_to[oid]
            if conf.extent is None:
                return (cell, s, e)
            c0, s0, e0 = conf.extent
            if cell != c0 or not (s >= e0 if conf.gap else s == e0):
                return None
            return (c0, s0, e)
        if oid not in fb.bi_positions:
            return None
        xs, ys, xe, ye = fb.bi_positions[oid].as_tuple()
        if conf.extent is None:
            return (xs, ys, xe, ye)
        x0, y0, x1, y1 = conf.extent
        if axis is Axis.HORIZONTAL:
            if ys != y0 or ye != y1 or not (xs >= x1 if conf.gap else xs == x1):
                return None
            return (x0, y0, xe, y1)
        if xs != x0 or xe != x1 or not (ys >= y1 if conf.gap else ys == y1):
            return None
        return (x0, y0, x1, ye)

    def bindings(cm: ConceptMatch, oid: str) -> list[tuple[str, Value]]:
        return list(zip(cm.vars, fb.values(oid, cm.type_name)))

    def seq(elements: Sequence, i: int, conf: _Conf, k: Callable[[_Conf], None]) -> None:
        if i == len(elements):
            k(conf)
            return
        el = elements[i]

        def nxt(c: _Conf) -> None:
            seq(elements, i + 1, c, k)

        if isinstance(el, Action):
            nxt(freeze(_exec(el.statements, dict(conf.env)), conf.extent, conf.cur, conf.gap))
        elif isinstance(el, Skip):
            nxt(freeze(dict(conf.env), conf.extent, conf.cur, True))
        elif isinstance(el, Group):
            seq(el.elements, 0, conf, nxt)
        elif isinstance(el, Recurrence):
            def again(c: _Conf) -> None:
                nxt(c)
                seq(el.elements, 0, c, again)
            seq(el.elements, 0, conf, again)
        elif isinstance(el, ConceptMatch):
            for oid in fb.instances_of(el.type_name):
                ext = place(oid, conf)
                if ext is not None:
                    nxt(freeze(conf.bind(bindings(el, oid)), ext, oid, False))
        else:
            for oid in fb.instances_of(el.outer.type_name):
                ext = place(oid, conf)
                if ext is None:
                    continue
                outer_env = conf.bind(bindings(el.outer, oid))
                for inner in fb.members(oid):
                    if fb.model.subtype_of(fb.objects[inner].type_name, el.inner.type_name):
                        env = dict(outer_env)
                        env.update(bindings(el.inner, inner))
                        nxt(freeze(env, ext, oid, False))

    def done(conf: _Conf) -> None:
        found.add(Match(tuple(conf.get(h) for h in d.head_params), conf.extent))

    seq(d.body, 0, _Conf((), None, None, False), done)
    return found


# ---------------------------------------------------------------------------
# canonical selection and execution

def _sort_key(v: Value) -> tuple:
    if isinstance(v, tuple):
        return (2, tuple(_sort_key(x) for x in v))
    if isinstance(v, int):
        return (0, v, "")
    return (1, 0, v)


def match_sort_key(m: Match) -> tuple:
    return (tuple(_sort_key(v) for v in m.extent), tuple(_sort_key(v) for v in m.attrs))


def canonicalize(matches: Iterable[Match]) -> list[Match]:
    """Keep, per start point, the longest extent and then the longest lists.

    The start point is the top-left corner for cell chains and (cell, start)
    inside a cell; distinct attribute tuples that survive are all kept.
    """
    groups: dict[tuple, list[Match]] = {}
    for m in set(matches):
        groups.setdefault(tuple(m.extent[:2]), []).append(m)
    out: list[Match] = []
    for ms in groups.values():
        far = max(m.extent[2:] for m in ms)
        ms = [m for m in ms if m.extent[2:] == far]
        size = max(sum(len(v) for v in m.attrs if isinstance(v, tuple)) for m in ms)
        out += [m for m in ms if sum(len(v) for v in m.attrs if isinstance(v, tuple)) == size]
    return sorted(out, key=match_sort_key)


def head_object(name: str, m: Match, obj_id: str, model: ObjectModel) -> tuple[ObjectInstance, BiPosition | OnePosition]:
    names = [a for a, _ in model.attributes(name)]
    inst = ObjectInstance(obj_id, name, dict(zip(names, m.attrs)))
    if len(m.extent) == 4:
        return inst, BiPosition(*m.extent)
    cell, s, e = m.extent
    return inst, OnePosition(s, e, cell)


def match_id(name: str, m: Match) -> str:
    return dl.new_id(name, (*m.attrs, *m.extent))


@dataclass
class Engine:
    """A linked plan with its descriptors compiled once."""
    plan: Plan
    compiled: dict[str, CompiledDescriptor] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for d in self.plan:
            if d.head_name not in self.compiled:
                self.compiled[d.head_name] = compile_descriptor(d, self.plan.model)

    @property
    def rule_count(self) -> int:
        return sum(len(cd.rules) for cd in self.compiled.values())

    def rules_text(self) -> str:
        parts = []
        for d in self.plan:
            parts.append(f"% {d.head_name}\n{self.compiled[d.head_name]}")
        return "\n\n".join(parts) + "\n"

    def run(self, fb: FactBase) -> FactBase:
        for d in self.plan:
            cd = self.compiled[d.head_name]
            found = compiled_matches(cd, fb.facts())
            for m in canonicalize(found):
                oid = found[m]
                if oid not in fb:
                    fb.assert_object(*head_object(d.head_name, m, oid, fb.model))
        return fb


def run_descriptors(plan: Plan | Engine, fb: FactBase) -> FactBase:
    engine = plan if isinstance(plan, Engine) else Engine(plan)
    return engine.run(fb)
