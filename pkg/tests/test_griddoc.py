import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_cells
from gridex.errors import DocumentError
from gridex.griddoc import (GridDocument, cell_tokens, grid_document_to_json, make_cell, parse_grid_document,
                            parse_two_column_text, refine_grid, tokenize)
from gridex.ontology import FactBase, builtin_model


def _spans(fb, cell_id):
    out = []
    for oid in fb.members(cell_id):
        s, e = fb.one_positions[oid]
        inst = fb.objects[oid]
        out.append((s, e, inst.type_name, inst.attrs.get("value")))
    return sorted(out)


def test_parse_single_cell():
    doc = parse_grid_document(b'{"doc_id": "d", "cells": [{"x":1,"y":8,"x2":2,"y2":9,"text":"anna@w3.org"}]}')
    assert len(doc.cells) == 1
    c = doc.cells[0]
    assert c.filled and c.text == "anna@w3.org" and c.box == (1, 8, 2, 9)


def test_parse_zero_cells_and_default_id():
    doc = parse_grid_document('{"cells": []}', "fallback")
    assert doc.cells == () and doc.doc_id == "fallback"


@pytest.mark.parametrize("data, msg", [
    ('{"cells": [{"x":0,"y":0,"x2":1,"y2":1}, {"x":0,"y":0,"x2":1,"y2":1,"text":"a"}]}', "overlap"),
    ('{"cells": [{"x":0,"y":0,"x2":3,"y2":3}, {"x":2,"y":2,"x2":4,"y2":4}]}', "overlap"),
    ('{"cells": [{"x":1,"y":0,"x2":1,"y2":1}]}', "degenerate"),
    ('{"cells": [{"x":-1,"y":0,"x2":1,"y2":1}]}', "negative"),
    ('{"cells": [{"x":0,"y":0,"x2":1}]}', "lacks"),
    ('{"cells": [{"x":0,"y":0,"x2":1,"y2":"2"}]}', "non-integer"),
    ('{"cells": [{"x":0,"y":0,"x2":1,"y2":1,"text":5}]}', "string"),
    ('{"cells": 3}', "cells"),
    ('[1, 2]', "cells"),
    ('{"cells": [', "malformed"),
    (b'\xff\xfe', "UTF-8"),
    ('{"cells": [{"x":0,"y":0,"x2":1,"y2":1,"text":"a\\u0000b"}]}', "NUL"),
])
def test_parse_errors(data, msg):
    with pytest.raises(DocumentError, match=msg):
        parse_grid_document(data)


def test_blank_text_is_an_empty_cell():
    doc = parse_grid_document('{"cells": [{"x":0,"y":0,"x2":1,"y2":1,"text":"   "}]}')
    assert not doc.cells[0].filled


def test_grid_json_round_trip():
    doc = GridDocument("d", tuple(random_cells(random.Random(3), 5, 5)))
    assert parse_grid_document(grid_document_to_json(doc)) == doc


def test_two_column_line():
    doc = parse_two_column_text("E-mail        anna@w3.org", 14)
    assert [(c.text, c.box) for c in doc.cells] == [("E-mail", (0, 0, 1, 1)), ("anna@w3.org", (1, 0, 2, 1))]


def test_two_column_edge_cases():
    assert parse_two_column_text("", 10).cells == ()
    doc = parse_two_column_text(" " * 20, 10)
    assert [c.filled for c in doc.cells] == [False, False]
    doc = parse_two_column_text("short", 10)
    assert [(c.text, c.box) for c in doc.cells] == [("short", (0, 0, 1, 1))]
    with pytest.raises(ValueError):
        parse_two_column_text("x", 0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.text(alphabet="ab :-\t", max_size=30), max_size=8), st.integers(1, 20))
def test_two_column_round_trip(lines, split):
    lines = [ln.replace("\t", " ") for ln in lines]
    doc = parse_two_column_text("\n".join(lines), split)
    for row, line in enumerate(lines):
        parts = sorted((c for c in doc.cells if c.ystart == row), key=lambda c: c.xstart)
        assert [p.text or "" for p in parts] == [seg.strip() for seg in (line[:split], line[split:])][:len(parts)]
        if len(line) > split:
            assert len(parts) == 2


def test_refine_merges_split_label():
    doc = GridDocument("d", (make_cell(1, 2, 2, 3, "Work"), make_cell(1, 3, 2, 4, "Experience")))
    out = refine_grid(doc, {"Work Experience"})
    assert [(c.text, c.box) for c in out.cells] == [("Work Experience", (1, 2, 2, 4))]
    assert refine_grid(doc, set()) == doc


def test_refine_leaves_complete_labels_alone():
    doc = GridDocument("d", (make_cell(0, 0, 1, 1, "Dates"), make_cell(1, 0, 2, 1, "2001")))
    assert refine_grid(doc, {"Dates", "Dates 2001"}) == doc


def test_refine_horizontal_and_chained_merges():
    cells = (make_cell(0, 0, 1, 1, "Name"), make_cell(1, 0, 2, 1, "and"), make_cell(2, 0, 3, 1, "address"))
    out = refine_grid(GridDocument("d", cells), {"Name and", "Name and address"})
    # "Name and" is itself a label, so it may not absorb "address"
    assert [c.text for c in out.cells] == ["Name and", "address"]
    out = refine_grid(GridDocument("d", cells), {"Name and address", "and address"})
    assert [c.text for c in out.cells] == ["Name", "and address"]


LABEL_WORDS = ["Work", "Experience", "Date", "of", "birth", "x"]
LEXICON = {"Work Experience", "Date of", "Date of birth", "of birth", "x x"}


@pytest.mark.parametrize("seed", range(500))
def test_refine_is_idempotent_and_preserves_area(seed):
    rng = random.Random(seed)
    doc = GridDocument("d", tuple(random_cells(rng, rng.randint(1, 6), rng.randint(1, 6), 0.9, LABEL_WORDS)))
    once = refine_grid(doc, LEXICON)
    assert refine_grid(once, LEXICON) == once
    assert sum(c.area for c in once.cells) == sum(c.area for c in doc.cells)
    assert len(once.cells) <= len(doc.cells)


def test_tokenize_manager_of():
    doc = GridDocument("d", (make_cell(0, 0, 1, 1, "manager of"),))
    fb = tokenize(doc, FactBase(builtin_model(), "d"))
    assert _spans(fb, "c0_0") == [(0, 1, "startOfLine", None), (1, 8, "token", "manager"),
                                  (8, 10, "token", "of"), (10, 11, "endOfLine", None)]


def test_tokenize_single_word_and_empty_cell():
    doc = GridDocument("d", (make_cell(0, 0, 1, 1, "anna@w3.org"), make_cell(1, 0, 2, 1)))
    fb = tokenize(doc, FactBase(builtin_model(), "d"))
    assert _spans(fb, "c0_0")[1] == (1, 12, "token", "anna@w3.org")
    assert fb.objects["c1_0"].type_name == "emptyCell"
    assert fb.members("c1_0") == []


@pytest.mark.parametrize("seed", range(1000))
def test_tokenizer_contiguity_and_reconstruction(seed):
    rng = random.Random(seed)
    alphabet = "ab@.-'é \t\n"
    text = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 40)))
    if not text.strip():
        text += "z"
    doc = GridDocument("d", (make_cell(0, 0, 1, 1, text),))
    fb = tokenize(doc, FactBase(builtin_model(), "d"))
    spans = _spans(fb, "c0_0")
    assert spans[0][:3] == (0, 1, "startOfLine") and spans[-1][2] == "endOfLine"
    assert all(a[1] == b[0] for a, b in zip(spans, spans[1:]))
    assert [t.text for t in cell_tokens(fb, "c0_0")] == text.split()
