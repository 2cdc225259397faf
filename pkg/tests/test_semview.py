import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import PROJECT, PROJECT_FILE
from gridex.datalog import new_id, parse_program
from gridex.errors import SchemaError
from gridex.ontology import BiPosition, FactBase
from gridex.project import load_project
from gridex.semview import (SemanticView, TargetRelation, ViewFragment, apply_mapping, candidate_id_fact,
                            check_mapping, emit_view, load_target_schema, read_view)


@pytest.fixture(scope="module")
def project():
    return load_project(PROJECT_FILE)


def test_work_experience_relation():
    schema = load_target_schema("workExperience(!Id, Company, BusinessSector, StartDate, EndDate)")
    rel = schema["workExperience"]
    assert rel.arity == 5 and rel.keys == ("Id",)
    assert rel.column_names == ["Id", "Company", "BusinessSector", "StartDate", "EndDate"]


def test_empty_schema():
    assert load_target_schema("") == {}
    assert load_target_schema("# nothing here\n\n") == {}


@pytest.mark.parametrize("text, msg", [
    ("r(A, B)", "no key"),
    ("r(!A, A)", "duplicate column"),
    ("r(!A)\nr(!B)", "declared twice"),
    ("r(!A, 3x)", "bad column"),
    ("r(!A:float)", "unknown column type"),
    ("r !A", "cannot parse"),
])
def test_schema_errors(text, msg):
    with pytest.raises(SchemaError, match=msg):
        load_target_schema(text)


def test_shipped_schema(project):
    assert {n: r.arity for n, r in project.schema.items()} == {"candidate": 10, "workExperience": 5, "candWE": 2}
    assert project.schema["candWE"].keys == ("IdCandidate", "IdWorkExperience")


def test_mapping_heads_are_checked(project):
    with pytest.raises(SchemaError, match="not a target relation"):
        check_mapping(parse_program("other(X) :- a(X)."), project.schema)
    with pytest.raises(SchemaError, match="does not match"):
        check_mapping(parse_program("candWE(X) :- a(X)."), project.schema)


PI = ("Anna", "Rossi", "Via Roma 12", "+39 02 1234", "anna@w3.org", "Italian", "01/02/1980", "Female")


def _fb(project, licence=True, jobs=0):
    fb = FactBase(project.plan.model, "cv1")
    fb.add("pi", "personalInformation", BiPosition(0, 0, 2, 8),
           **dict(zip([a for a, _ in project.plan.model.attributes("personalInformation")], PI)))
    if licence:
        fb.add("dl", "candidateDrivingLicence", BiPosition(0, 9, 2, 10), L="B")
    names = [a for a, _ in project.plan.model.attributes("workExperienceEntry")]
    for k in range(jobs):
        vals = (f"0{k + 1}/2001", f"0{k + 1}/2004", "Developer", f"Company {k}", "Retail")
        fb.add(f"we{k}", "workExperienceEntry", BiPosition(0, 12 + 6 * k, 2, 17 + 6 * k), **dict(zip(names, vals)))
    return fb


def test_candidate_rule(project):
    frag = apply_mapping(project.mapping, _fb(project), "cv1", project.schema)
    assert frag.rows["candidate"] == {("cv1", "Anna", "Rossi", "+39 02 1234", "anna@w3.org", "Via Roma 12",
                                       "Female", "Italian", "01/02/1980", "B")}
    assert frag.rows["workExperience"] == set() and frag.rows["candWE"] == set()


def test_missing_licence_means_no_candidate(project):
    frag = apply_mapping(project.mapping, _fb(project, licence=False), "cv1", project.schema)
    assert frag.rows["candidate"] == set()


def test_two_work_experiences_are_linked(project):
    fb = _fb(project, jobs=2)
    frag = apply_mapping(project.mapping, fb, "cv1", project.schema)
    assert frag.rows["workExperience"] == {("cv1/we0", "Company 0", "Retail", "01/2001", "01/2004"),
                                           ("cv1/we1", "Company 1", "Retail", "02/2001", "02/2004")}
    assert frag.rows["candWE"] == {("cv1", "cv1/we0"), ("cv1", "cv1/we1")}


def test_mapping_leaves_the_fact_base_alone(project):
    fb = _fb(project, jobs=1)
    before = {p: set(s) for p, s in fb.facts().items()}
    apply_mapping(project.mapping, fb, "cv1", project.schema)
    assert fb.facts() == before


def test_candidate_id_fact_is_keyed_by_document():
    assert candidate_id_fact("cv1") == (new_id("cv_candidate_id", ("cv1",)), "cv1")


# ---------------------------------------------------------------------------
# emitting

REL = TargetRelation("r", (("Id", "string"), ("Name", "string"), ("N", "int")), ("Id",))


def _view(rows):
    view = SemanticView({"r": REL})
    view.merge(ViewFragment("d", {"r": set(rows)}))
    return view


def test_single_row_csv(tmp_path):
    emit_view(_view([("a", "Anna", 3)]), tmp_path)
    assert (tmp_path / "r.csv").read_bytes() == b"Id,Name,N\r\na,Anna,3\r\n"
    assert (tmp_path / "violations.txt").read_text() == ""


def test_empty_relation_is_header_only(tmp_path):
    emit_view(_view([]), tmp_path)
    assert (tmp_path / "r.csv").read_bytes() == b"Id,Name,N\r\n"


def test_commas_and_quotes_are_quoted(tmp_path):
    emit_view(_view([("a", 'Acme, "Inc"', 1)]), tmp_path)
    assert (tmp_path / "r.csv").read_bytes() == b'Id,Name,N\r\na,"Acme, ""Inc""",1\r\n'


def test_key_conflicts_are_reported(tmp_path):
    view = SemanticView({"r": REL})
    view.merge(ViewFragment("d1", {"r": {("a", "x", 1)}}))
    view.merge(ViewFragment("d2", {"r": {("a", "y", 1)}}))
    emit_view(view, tmp_path)
    assert len(view.rows["r"]) == 2
    assert (tmp_path / "violations.txt").read_text() == "r key ['a']: ['a', 'x', 1] from d1; ['a', 'y', 1] from d2\n"


def test_rows_are_type_checked():
    with pytest.raises(SchemaError):
        _view([("a", "x", "not an int")])
    with pytest.raises(SchemaError):
        _view([("a", "x")])


# NUL never reaches the view: documents containing it are rejected on parse
_text = st.text(alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\x00"), max_size=12)


@settings(max_examples=100, deadline=None)
@given(st.sets(st.tuples(_text, _text, st.integers(-5, 10**6)), max_size=10), st.sampled_from(["csv", "json"]))
def test_emit_read_round_trip(tmp_path_factory, rows, fmt):
    out = tmp_path_factory.mktemp("view")
    emit_view(_view(rows), out, fmt)
    assert read_view(out, {"r": REL}, fmt) == {"r": rows}


def test_emitting_is_deterministic(tmp_path):
    rng = random.Random(5)
    rows = [(str(rng.randint(0, 50)), rng.choice(["x", "y,z"]), rng.randint(0, 9)) for _ in range(30)]
    emit_view(_view(rows), tmp_path / "a")
    emit_view(_view(reversed(rows)), tmp_path / "b")
    for name in ("r.csv", "violations.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_goldens_are_referentially_intact():
    schema = load_target_schema((PROJECT / "schema.txt").read_text())
    view = read_view(PROJECT / "goldens", schema)
    cands = {r[0] for r in view["candidate"]}
    jobs = {r[0] for r in view["workExperience"]}
    assert view["candWE"] and all(c in cands and w in jobs for c, w in view["candWE"])
