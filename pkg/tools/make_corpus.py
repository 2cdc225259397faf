"""Generate the synthetic Europass fixture corpus and its golden outputs.

Each CV is written twice: as a grid file (with the ground truth embedded
under "truth") and as two-column plain text. Golden CSVs are derived from
the truth and the known row layout, never from running the pipeline.

    python3 tools/make_corpus.py [project_dir]
"""
from __future__ import annotations

import csv
import io
import json
import random
import sys
from pathlib import Path

from gridex.datalog import new_id

SPLIT_COL = 40
N_DOCS = 10
SEED = 20240501

FIRST = ["Anna", "Marco", "Giulia", "Pierre", "Sofia", "Jan", "Elena", "Tomas", "Ines", "Lukas", "Maria", "Oscar"]
LAST = ["Rossi", "Dubois", "Novak", "Schmidt", "Garcia", "Kowalski", "Jansen", "Silva", "Bauer", "Moreau"]
STREETS = ["Via Roma 12, 20121 Milano", "Rue de Rivoli 5, 75001 Paris", "Hauptstrasse 8, 10115 Berlin",
           "Calle Mayor 3, 28013 Madrid", "Dam 1, 1012 Amsterdam", "Rua Augusta 40, 1100 Lisboa"]
NATIONALITIES = ["Italian", "French", "German", "Spanish", "Dutch", "Portuguese", "Polish", "Czech"]
GENDERS = ["Female", "Male"]
LICENCES = ["B", "A, B", "B, C", "none"]
COMPANIES = ["Acme Corp", "Globex", "Initech", "Umbrella Systems", "Stark Industries", "Wayne Enterprises",
             "Hooli", "Vandelay Industries", "Soylent Foods", "Cyberdyne", "Tyrell Corporation", "Wonka Industries"]
CITIES = ["Milan", "Paris", "Berlin", "Madrid", "Amsterdam", "Lisbon", "Prague", "Vienna"]
SECTORS = ["Information technology", "Manufacturing", "Retail", "Finance", "Food industry", "Consulting"]
OCCUPATIONS = ["Software developer", "Accountant", "Sales assistant", "System administrator",
               "Quality engineer", "Logistics coordinator", "Team leader"]
ACTIVITIES = ["Development of Java and SQL applications", "Budgeting and accounting for regional offices",
              "Customer service and order handling", "Network administration on Linux servers",
              "Data analysis with Python and Excel", "Quality control of production lines",
              "Planning and logistics of deliveries", "Project management of SAP rollouts"]


def _date(rng: random.Random, year: int, full: bool) -> str:
    month = rng.randint(1, 12)
    return f"{rng.randint(1, 28):02d}/{month:02d}/{year}" if full else f"{month:02d}/{year}"


def make_truth(rng: random.Random, k: int) -> dict:
    first, last = FIRST[k % len(FIRST)], LAST[(3 * k) % len(LAST)]
    cand = {
        "Name": first,
        "Surname": last,
        "Phone": f"+{rng.randint(30, 49)} {rng.randint(10, 99)} {rng.randint(1000, 9999)} {rng.randint(1000, 9999)}",
        "Email": f"{first.lower()}.{last.lower()}@example{k}.org",
        "Address": rng.choice(STREETS),
        "Gender": rng.choice(GENDERS),
        "Nationality": rng.choice(NATIONALITIES),
        "DateOfBirth": _date(rng, rng.randint(1960, 1995), True),
        "License": rng.choice(LICENCES),
    }
    jobs = []
    year = rng.randint(1995, 2005)
    for _ in range(1 + k % 3):
        end = year + rng.randint(1, 5)
        full = rng.random() < 0.3
        jobs.append({
            "StartDate": _date(rng, year, full),
            "EndDate": _date(rng, end, full),
            "Occupation": rng.choice(OCCUPATIONS),
            "Activities": rng.choice(ACTIVITIES),
            "Company": rng.choice(COMPANIES),
            "City": rng.choice(CITIES),
            "BusinessSector": rng.choice(SECTORS),
        })
        year = end
    jobs.reverse()  # most recent first
    return {"candidate": cand, "jobs": jobs, "decoy": k % 3 == 0}


def layout(truth: dict) -> list[tuple[str | None, str | None]]:
    """(label, value) rows; a None label with None value is a blank line."""
    c = truth["candidate"]
    rows: list[tuple[str | None, str | None]] = [
        ("Personal information", None),
        ("First name", c["Name"]),
        ("Surname", c["Surname"]),
        ("Address", c["Address"]),
        ("Telephone", c["Phone"]),
        ("E-mail", c["Email"]),
        ("Nationality", c["Nationality"]),
        ("Date of birth", c["DateOfBirth"]),
        ("Gender", c["Gender"]),
        (None, None),
        ("Work experience", None),
    ]
    for j in truth["jobs"]:
        rows += [
            ("Dates", f"{j['StartDate']} - {j['EndDate']}"),
            ("Occupation or position held", j["Occupation"]),
            ("Main activities and responsibilities", j["Activities"]),
            ("Name and address of employer", f"{j['Company']}, {j['City']}"),
            ("Type of business or sector", j["BusinessSector"]),
            (None, None),
        ]
    if truth["decoy"]:
        rows.append(("Additional information", "References from hr@globex-mail.com on request"))
    rows.append(("Driving licence", c["License"]))
    return rows


def job_rows(rows: list) -> list[int]:
    return [y for y, (label, _) in enumerate(rows) if label == "Dates"]


def text_variant(rows: list) -> str:
    lines = []
    for label, value in rows:
        line = (label or "").ljust(SPLIT_COL) + (value or "") if value else (label or "")
        lines.append(line.rstrip())
    return "\n".join(lines) + "\n"


def grid_variant(doc_id: str, rows: list, truth: dict) -> str:
    cells = []
    last = len(rows) - 1
    for y, (label, value) in enumerate(rows):
        if label is None:
            continue  # empty cells are simply absent
        if value is None:
            cells.append({"x": 0, "y": y, "x2": 2, "y2": y + 1, "text": label})
        elif y == last:
            # the final label is broken over two rows next to a tall value cell
            first, _, rest = label.partition(" ")
            cells.append({"x": 0, "y": y, "x2": 1, "y2": y + 1, "text": first})
            cells.append({"x": 0, "y": y + 1, "x2": 1, "y2": y + 2, "text": rest})
            cells.append({"x": 1, "y": y, "x2": 2, "y2": y + 2, "text": value})
        else:
            cells.append({"x": 0, "y": y, "x2": 1, "y2": y + 1, "text": label})
            cells.append({"x": 1, "y": y, "x2": 2, "y2": y + 1, "text": value})
    c = truth["candidate"]
    embedded = {
        "candidate": c,
        "workExperience": [{k: j[k] for k in ("Company", "BusinessSector", "StartDate", "EndDate")}
                           for j in truth["jobs"]],
    }
    return json.dumps({"doc_id": doc_id, "cells": cells, "truth": embedded}, indent=1, ensure_ascii=False) + "\n"


def golden_rows(doc_id: str, rows: list, truth: dict) -> dict[str, list[tuple]]:
    c = truth["candidate"]
    cand = (doc_id, c["Name"], c["Surname"], c["Phone"], c["Email"], c["Address"], c["Gender"],
            c["Nationality"], c["DateOfBirth"], c["License"])
    we, links = [], []
    for y, j in zip(job_rows(rows), truth["jobs"]):
        attrs = (j["StartDate"], j["EndDate"], j["Occupation"], j["Company"], j["BusinessSector"])
        wid = f"{doc_id}/" + new_id("workExperienceEntry", (*attrs, 0, y, 2, y + 5))
        we.append((wid, j["Company"], j["BusinessSector"], j["StartDate"], j["EndDate"]))
        links.append((doc_id, wid))
    return {"candidate": [cand], "workExperience": we, "candWE": links}


HEADERS = {
    "candidate": ["Id", "Name", "Surname", "Phone", "Email", "Address", "Gender", "Nationality", "DateOfBirth",
                  "License"],
    "workExperience": ["Id", "Company", "BusinessSector", "StartDate", "EndDate"],
    "candWE": ["IdCandidate", "IdWorkExperience"],
}
KEY_LEN = {"candidate": 1, "workExperience": 1, "candWE": 2}


def write_csv(path: Path, header: list[str], rows: list[tuple], key_len: int) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in sorted(rows, key=lambda r: (r[:key_len], r)):
        w.writerow(r)
    path.write_bytes(buf.getvalue().encode("utf-8"))


def main(project_dir: str = "projects/europass") -> None:
    root = Path(project_dir)
    grid_dir, text_dir, gold_dir = root / "corpus" / "grid", root / "corpus" / "text", root / "goldens"
    for d in (grid_dir, text_dir, gold_dir):
        d.mkdir(parents=True, exist_ok=True)
    rng = random.Random(SEED)
    golden: dict[str, list[tuple]] = {name: [] for name in HEADERS}
    for k in range(1, N_DOCS + 1):
        doc_id = f"cv{k:02d}"
        truth = make_truth(rng, k)
        rows = layout(truth)
        (grid_dir / f"{doc_id}.json").write_text(grid_variant(doc_id, rows, truth), encoding="utf-8")
        (text_dir / f"{doc_id}.txt").write_text(text_variant(rows), encoding="utf-8")
        for name, rs in golden_rows(doc_id, rows, truth).items():
            golden[name] += rs
    for name, rs in golden.items():
        write_csv(gold_dir / f"{name}.csv", HEADERS[name], rs, KEY_LEN[name])


if __name__ == "__main__":
    main(*sys.argv[1:])
