"""Command line: ``gridex run`` over a document folder and ``gridex validate``.

Exit codes: 0 success, 1 configuration error, 2 some documents failed.
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .annotate import annotate_document
from .errors import GridexError, ProjectError
from .griddoc import GridDocument, parse_grid_document, parse_two_column_text, refine_grid, tokenize
from .ontology import FactBase
from .project import Project, ProjectConfig, load_project, read_project_config
from .semview import SemanticView, ViewFragment, apply_mapping, emit_view

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2
GRID_SUFFIX, TEXT_SUFFIX = ".json", ".txt"

FactHook = Callable[[FactBase], None]


@dataclass
class DocResult:
    source: str
    doc_id: str = ""
    fragment: ViewFragment | None = None
    facts: str | None = None
    error: str | None = None


@dataclass
class RunResult:
    status: int
    view: SemanticView | None = None
    results: list[DocResult] = field(default_factory=list)

    @property
    def failures(self) -> list[DocResult]:
        return [r for r in self.results if r.error]


def input_files(input_dir: Path) -> list[Path]:
    return sorted(p for p in input_dir.iterdir()
                  if p.is_file() and p.suffix in (GRID_SUFFIX, TEXT_SUFFIX))


def read_document(path: Path, split_col: int | None) -> GridDocument:
    if path.suffix == GRID_SUFFIX:
        return parse_grid_document(path.read_bytes(), path.stem)
    if split_col is None:
        raise ProjectError("two-column text input needs a split column")
    return parse_two_column_text(path.read_text(encoding="utf-8"), split_col, path.stem)


def extract(project: Project, doc: GridDocument, hook: FactHook | None = None) -> FactBase:
    """Refine, tokenize, annotate and run the descriptors over one document."""
    doc = refine_grid(doc, project.lexicon)
    fb = FactBase(project.plan.model, doc.doc_id)
    tokenize(doc, fb)
    annotate_document(project.annotators, doc, fb)
    if hook is not None:
        hook(fb)
    return project.engine.run(fb)


def process_file(project: Project, path: Path, split_col: int | None, emit_facts: bool = False,
                 hook: FactHook | None = None) -> DocResult:
    res = DocResult(path.name)
    try:
        doc = read_document(path, split_col)
        res.doc_id = doc.doc_id
        fb = extract(project, doc, hook)
        res.fragment = apply_mapping(project.mapping, fb, doc.doc_id, project.schema)
        if emit_facts:
            res.facts = "".join(line + "\n" for line in fb.iter_lines())
    except (GridexError, OSError, UnicodeDecodeError) as exc:
        res.error = f"{type(exc).__name__}: {exc}"
    return res


_worker: dict[str, Project] = {}


def _init_worker(cfg: ProjectConfig) -> None:
    _worker["project"] = load_project(cfg)


def _work(args: tuple[Path, int | None, bool]) -> DocResult:
    return process_file(_worker["project"], *args)


def run_pipeline(project: Project, input_dir: str | Path, out_dir: str | Path, *,
                 split_col: int | None = None, emit_facts: bool = False, emit_rules: bool = False,
                 jobs: int = 1, fmt: str = "csv", hook: FactHook | None = None) -> RunResult:
    input_dir, out_dir = Path(input_dir), Path(out_dir)
    if not input_dir.is_dir():
        raise ProjectError(f"input directory not found: {input_dir}")
    split_col = split_col if split_col is not None else project.config.split_col
    files = input_files(input_dir)
    if jobs > 1 and len(files) > 1:
        if hook is not None:
            raise ValueError("fact hooks only run in-process")
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(project.config,)) as pool:
            results = list(pool.map(_work, [(p, split_col, emit_facts) for p in files]))
    else:
        results = [process_file(project, p, split_col, emit_facts, hook) for p in files]

    view = SemanticView(project.schema)
    seen: dict[str, str] = {}
    for r in results:
        if r.error is None and r.doc_id in seen:
            r.error = f"DocumentError: document id {r.doc_id!r} already used by {seen[r.doc_id]}"
        if r.error is not None:
            continue
        seen[r.doc_id] = r.source
        view.merge(r.fragment)

    out_dir.mkdir(parents=True, exist_ok=True)
    emit_view(view, out_dir, fmt)
    (out_dir / "errors.txt").write_text("".join(f"{r.source}: {r.error}\n" for r in results if r.error),
                                        encoding="utf-8")
    if emit_facts:
        facts_dir = out_dir / "facts"
        facts_dir.mkdir(exist_ok=True)
        for r in results:
            if r.error is None:
                (facts_dir / f"{r.doc_id}.facts").write_text(r.facts, encoding="utf-8")
    if emit_rules:
        (out_dir / "rules.dl").write_text(project.engine.rules_text(), encoding="utf-8")
    status = EXIT_PARTIAL if any(r.error for r in results) else EXIT_OK
    return RunResult(status, view, results)


def validate_project(path: str | Path) -> tuple[list[str], list[str]]:
    """Report lines and errors; never raises for project problems."""
    try:
        project = load_project(read_project_config(path))
    except GridexError as exc:
        return [], [str(exc)]
    return [f"{k}: {v}" for k, v in project.counts.items()], []


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gridex", description="Extract a tabular view from grid documents.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="process a folder of documents")
    run.add_argument("--project", required=True, type=Path)
    run.add_argument("--input", required=True, type=Path)
    run.add_argument("--out", required=True, type=Path)
    run.add_argument("--split-col", type=int, default=None)
    run.add_argument("--emit-facts", action="store_true", help="write per-document fact dumps")
    run.add_argument("--emit-rules", action="store_true", help="write the compiled descriptor rules")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    val = sub.add_parser("validate", help="load and compile a project without running it")
    val.add_argument("--project", required=True, type=Path)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        lines, errors = validate_project(args.project)
        for line in lines:
            print(line)
        print(f"errors: {len(errors)}")
        for e in errors:
            print(f"  {e}")
        return EXIT_CONFIG if errors else EXIT_OK
    if args.split_col is not None and args.split_col <= 0:
        print("gridex: --split-col must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        project = load_project(args.project)
        result = run_pipeline(project, args.input, args.out, split_col=args.split_col,
                              emit_facts=args.emit_facts, emit_rules=args.emit_rules,
                              jobs=max(1, args.jobs), fmt=args.format)
    except GridexError as exc:
        print(f"gridex: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    ok = len(result.results) - len(result.failures)
    print(f"{ok} document(s) processed, {len(result.failures)} failed")
    for r in result.failures:
        print(f"  {r.source}: {r.error}", file=sys.stderr)
    return result.status


if __name__ == "__main__":
    sys.exit(main())
