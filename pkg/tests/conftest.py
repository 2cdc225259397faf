"""Shared fixtures: the five descriptor examples, random fact bases and grids."""
from __future__ import annotations

import random
from contextlib import contextmanager
from pathlib import Path

import pytest

from gridex.dscript import Plan, link_descriptors, parse_descriptor_file
from gridex.griddoc import GridDocument, make_cell, tokenize
from gridex.ontology import BiPosition, FactBase, OnePosition, load_object_model

ROOT = Path(__file__).resolve().parent.parent
PROJECT = ROOT / "projects" / "europass"
PROJECT_FILE = PROJECT / "project.yaml"

EXAMPLE_MODEL = """
entity email isa semanticCategory.
entity IndustryTerm isa semanticCategory.
entity eucv_email_label isa semanticCategory.
entity eucv_work_act_resp_label isa semanticCategory.
entity candidateName isa biDimObject(value:string).
entity candidateSurname isa biDimObject(value:string).
entity candidateAddress isa biDimObject(value:string).
entity candidatePhone isa biDimObject(value:string).
entity candidateNationality isa biDimObject(value:string).
entity candidateBirthDate isa biDimObject(value:string).
entity candidateGender isa biDimObject(value:string).
entity eucv_work_act_resp_label_box isa biDimObject.
"""

EMAIL_LABEL_BOX = "<eucv_email_label_box()> ::- <filledCell()> CONTAINS <eucv_email_label()>"
CANDIDATE_EMAIL = """<candidateEmail(E)> ::- <eucv_email_label_box()>
                        (<filledCell(X)> CONTAINS <email(X)> {E:=X;})"""
PERSONAL_INFORMATION = """<personalInformation(N, S, A, P, E, Nt, D, G)> ::|
                <candidateName(X)> {N:=X;} <candidateSurname(X)> {S:=X;}
                <candidateAddress(X)> {A:=X;} <candidatePhone(X)> {P:=X;}
                <candidateEmail(X)> {E:=X;} <candidateNationality(X)> {Nt:=X;}
                <candidateBirthDate(X)> {D:=X;} <candidateGender(X)> {G:=X;}"""
LIST_OF_SKILLS = """<list_of_skills(S)> :: {S:=[];} <startOfLine> ...
                       (<IndustryTerm(S1)> {S&=S1;} ...)+ <endOfLine>"""
PRACTICAL_SKILLS = """<list_of_practical_skills(S)> ::- <eucv_work_act_resp_label_box()>
                   (<filledCell(X)> CONTAINS <list_of_skills(X)> {S:=X;})"""

EXAMPLE_DESCRIPTORS = [EMAIL_LABEL_BOX, CANDIDATE_EMAIL, PERSONAL_INFORMATION, LIST_OF_SKILLS, PRACTICAL_SKILLS]

WORDS = ["java", "SQL", "and", "of", "anna@w3.org", "E-mail", "Python", "x", "data", "mining"]
ONE_DIM_TYPES = ["email", "IndustryTerm", "eucv_email_label", "eucv_work_act_resp_label", "list_of_skills"]
TWO_DIM_TYPES = ["eucv_email_label_box", "eucv_work_act_resp_label_box", "candidateEmail", "candidateName",
                 "candidateSurname", "candidateAddress", "candidatePhone", "candidateNationality",
                 "candidateBirthDate", "candidateGender"]


# criterion number -> (passed, title, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


@contextmanager
def criterion(number: int, title: str):
    """Record whether the enclosed block finished without an exception."""
    detail: dict[str, str] = {}
    ok = False
    try:
        yield detail
        ok = True
    finally:
        ACCEPTANCE[number] = (ok, title, detail.get("msg", ""))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, title, msg = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n}. {title}" + (f" ({msg})" if msg else ""))


def example_plan() -> Plan:
    model = load_object_model(EXAMPLE_MODEL)
    return link_descriptors(parse_descriptor_file("\n\n".join(EXAMPLE_DESCRIPTORS)), model)


@pytest.fixture(scope="session")
def plan() -> Plan:
    return example_plan()


def random_cells(rng: random.Random, width: int, height: int, fill: float = 0.8,
                 words: list[str] = WORDS) -> list:
    """Non-overlapping rectangles tiling part of a ``width`` x ``height`` grid."""
    taken: set[tuple[int, int]] = set()
    cells = []
    for y in range(height):
        for x in range(width):
            if (x, y) in taken or rng.random() < 0.1:
                continue
            w = 2 if x + 1 < width and (x + 1, y) not in taken and rng.random() < 0.25 else 1
            h = 2 if y + 1 < height and rng.random() < 0.15 else 1
            for dx in range(w):
                for dy in range(h):
                    taken.add((x + dx, y + dy))
            text = " ".join(rng.choice(words) for _ in range(rng.randint(1, 4))) if rng.random() < fill else None
            cells.append(make_cell(x, y, x + w, y + h, text))
    return cells


PI_ORDER = ["candidateName", "candidateSurname", "candidateAddress", "candidatePhone", "candidateEmail",
            "candidateNationality", "candidateBirthDate", "candidateGender"]


def _token_spans(fb: FactBase, cell_id: str) -> list[tuple[int, int, str]]:
    return sorted((*fb.one_positions[o], fb.objects[o].attrs["value"])
                  for o in fb.members(cell_id) if fb.objects[o].type_name == "token")


def _annotate(rng: random.Random, fb: FactBase, oid: str, t: str, cell_id: str) -> None:
    toks = _token_spans(fb, cell_id)
    i = rng.randrange(len(toks))
    j = rng.randrange(i, min(len(toks), i + 2))
    text = " ".join(v for _, _, v in toks[i:j + 1])
    value = tuple(rng.sample(["java", "sql", "python"], rng.randint(1, 2))) if t == "list_of_skills" else text
    attrs = {n: value for n, _ in fb.model.attributes(t)}
    fb.add(oid, t, OnePosition(toks[i][0], toks[j][1], cell_id), **attrs)


def random_fact_base(rng: random.Random, plan: Plan, max_side: int = 6, max_ann: int = 12,
                     max_2d: int = 10, height: int | None = None) -> FactBase:
    """A tokenized grid plus random 1D annotations and 2D objects of the example types.

    Besides uniformly random objects, label/value pairs and vertical stacks of
    personal-detail boxes are planted so that context-dependent descriptors
    have something to find.
    """
    h = height or rng.randint(1, max_side)
    doc = GridDocument("r", tuple(random_cells(rng, rng.randint(1, max_side), h)))
    fb = FactBase(plan.model, "r")
    tokenize(doc, fb)
    cells = list(doc.cells)
    filled = [c for c in cells if c.filled]
    n_ann = 0

    def right_of(a):
        return [c for c in cells if c.xstart == a.xend and c.ystart == a.ystart and c.yend == a.yend]

    pairs = [(a, b) for a in filled for b in right_of(a) if b.filled]
    for label, inner in (("eucv_email_label_box", "email"), ("eucv_work_act_resp_label_box", "list_of_skills")):
        if pairs and rng.random() < 0.6 and n_ann < max_ann:
            a, b = rng.choice(pairs)
            fb.add(f"p_{label}", label, BiPosition(*a.box))
            _annotate(rng, fb, f"p_{inner}", inner, b.id)
            n_ann += 1
    if cells and rng.random() < 0.6:
        a = rng.choice(cells)
        first = 0 if rng.random() < 0.5 else rng.randrange(len(PI_ORDER))
        stack = PI_ORDER[first:first + h - a.ystart]
        if len(stack) > 1 and rng.random() < 0.3:
            k = rng.randrange(len(stack) - 1)
            stack[k], stack[k + 1] = stack[k + 1], stack[k]
        for k, t in enumerate(stack):
            box = (a.xstart, a.ystart + k, a.xend, a.ystart + k + 1)
            attrs = {n: rng.choice(["anna", "rossi", "anna@w3.org"]) for n, _ in fb.model.attributes(t)}
            fb.add(f"s{k}", t, BiPosition(*box), **attrs)
    if filled:
        for k in range(rng.randint(0, max_ann - n_ann)):
            _annotate(rng, fb, f"r{k}", rng.choice(ONE_DIM_TYPES), rng.choice(filled).id)
    for k in range(rng.randint(0, max_2d) if cells else 0):
        a = rng.choice(cells)
        box = a.box
        right = right_of(a)
        if right and rng.random() < 0.5:
            box = (a.xstart, a.ystart, right[0].xend, a.yend)
        t = rng.choice(TWO_DIM_TYPES)
        attrs = {n: rng.choice(["anna", "rossi", "anna@w3.org"]) for n, _ in fb.model.attributes(t)}
        fb.add(f"q{k}", t, BiPosition(*box), **attrs)
    return fb


# ---------------------------------------------------------------------------
# random descriptors

ONE_DIM_CONCEPTS = {"token": 1, "IndustryTerm": 1, "email": 1, "startOfLine": 0, "endOfLine": 0}
TWO_DIM_CONCEPTS = {"filledCell": 1, "cell": 0, "candidateName": 1, "eucv_email_label_box": 0}
POOL = ["X", "Y", "Z"]
LITERALS = ["", "n/a", "it's", 'say "hi"']


def random_descriptor(rng: random.Random, axis=None, name: str = "gen", max_depth: int = 2):
    """A well-formed descriptor over the example model's types."""
    from gridex.dscript import (Action, Append, Assign, Axis, ConceptMatch, ContainsMatch, Descriptor,
                                Group, InitList, Recurrence, Skip, VarRef)

    axis = axis or rng.choice(list(Axis))
    concepts = ONE_DIM_CONCEPTS if axis is Axis.ONEDIM else TWO_DIM_CONCEPTS
    bound: set[str] = set()
    lists: set[str] = set()

    def concept(table) -> ConceptMatch:
        t = rng.choice(sorted(table))
        vs = tuple(rng.sample(POOL, 1)) if table[t] and rng.random() < 0.7 else ()
        return ConceptMatch(t, vs)

    def action() -> Action:
        stmts = []
        for _ in range(rng.randint(1, 2)):
            strings = sorted(bound - lists)
            r = rng.random()
            if lists and r < 0.4:
                src = [v for v in strings if v in POOL]
                if src:
                    stmts.append(Append(rng.choice(sorted(lists)), rng.choice(src)))
                    continue
            target = rng.choice(["V", "W"])
            if strings and r < 0.8:
                stmts.append(Assign(target, VarRef(rng.choice(strings))))
            else:
                stmts.append(Assign(target, rng.choice(LITERALS)))
            bound.add(target)
        return Action(tuple(stmts))

    def consuming():
        if axis is not Axis.ONEDIM and rng.random() < 0.3:
            el = ContainsMatch(concept(TWO_DIM_CONCEPTS), concept(ONE_DIM_CONCEPTS))
            if set(el.outer.vars) & set(el.inner.vars):
                el = ContainsMatch(ConceptMatch(el.outer.type_name), el.inner)
            bound.update(el.outer.vars + el.inner.vars)
            return el
        el = concept(concepts)
        bound.update(el.vars)
        return el

    def seq(depth: int, need: bool) -> list:
        out = []
        for _ in range(rng.randint(1, 3)):
            r = rng.random()
            if r < 0.45:
                out.append(consuming())
            elif r < 0.6:
                out.append(Skip())
            elif r < 0.75 and bound:
                out.append(action())
            elif depth < max_depth and r < 0.88:
                out.append(Recurrence(tuple(seq(depth + 1, True))))
            elif depth < max_depth:
                out.append(Group(tuple(seq(depth + 1, False))))
        if not out or need and not any(isinstance(e, (ConceptMatch, ContainsMatch, Recurrence)) for e in out):
            out.append(consuming())
        return out

    body = []
    if rng.random() < 0.3:
        body.append(Action((InitList("L"),)))
        bound.add("L")
        lists.add("L")
    body += seq(0, True)
    heads = []
    if "L" in lists and rng.random() < 0.8:
        heads.append("L")
    closing = []
    for h in ("H1", "H2")[:rng.randint(0, 2)]:
        strings = sorted(bound - lists)
        closing.append(Assign(h, VarRef(rng.choice(strings)) if strings and rng.random() < 0.8
                              else rng.choice(LITERALS)))
        heads.append(h)
    if closing:
        body.append(Action(tuple(closing)))
    return Descriptor(name, tuple(heads), axis, tuple(body))


# ---------------------------------------------------------------------------
# random positive Datalog programs

def random_program(rng: random.Random, n_preds: int = 5, max_rules: int = 8, max_facts: int = 50):
    """A range-restricted program without builtins, plus an edb over a small domain."""
    from gridex.datalog import Atom, Program, Rule, Var

    arity = {f"p{i}": rng.randint(1, 3) for i in range(n_preds)}
    preds = sorted(arity)
    domain = ["a", "b", "c", 1, 2]
    names = ["X", "Y", "Z", "W"]

    def atom(p: str, allowed: list[str]) -> Atom:
        args = tuple(Var(rng.choice(allowed)) if rng.random() < 0.85 else rng.choice(domain)
                     for _ in range(arity[p]))
        return Atom(p, args)

    rules = []
    for _ in range(rng.randint(1, max_rules)):
        body = [atom(rng.choice(preds), names) for _ in range(rng.randint(1, 3))]
        bound = sorted(set().union(*(b.vars() for b in body)))
        head_pred = rng.choice(preds)
        if bound:
            head = Atom(head_pred, tuple(Var(rng.choice(bound)) if rng.random() < 0.9 else rng.choice(domain)
                                         for _ in range(arity[head_pred])))
        else:
            head = Atom(head_pred, tuple(rng.choice(domain) for _ in range(arity[head_pred])))
        rules.append(Rule(head, tuple(body)))
    edb: dict[str, set[tuple]] = {}
    for _ in range(rng.randint(0, max_facts)):
        p = rng.choice(preds)
        edb.setdefault(p, set()).add(tuple(rng.choice(domain) for _ in range(arity[p])))
    return Program(rules), edb
