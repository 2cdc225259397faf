"""Project files: the design-time artifacts an extraction run needs.

A project is a YAML file whose paths are relative to its own directory::

    object_model: object_model.onto
    labels: labels.lex
    descriptors: descriptors.dsc
    mapping: mapping.dl
    schema: schema.txt
    annotators:
      - {kind: regex, target: email, pattern: '...'}
      - {kind: gazetteer, target: company, dictionary: dict/companies.txt}
      - {kind: label}
    input: {split_col: 40}

The label lexicon holds one ``targetType = label text`` pair per line.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import datalog as dl
from .annotate import AnnotatorConfig, config_from_dict
from .dengine import Engine
from .dscript import Plan, link_descriptors, parse_descriptor_file
from .errors import GridexError, ProjectError
from .ontology import ObjectModel, load_object_model
from .semview import Schema, check_mapping, load_target_schema

REQUIRED = ("object_model", "descriptors", "mapping", "schema")


@dataclass(frozen=True)
class ProjectConfig:
    root: Path
    object_model: Path
    descriptors: Path
    mapping: Path
    schema: Path
    labels: Path | None = None
    annotators: tuple[dict, ...] = ()
    split_col: int | None = None


@dataclass
class Project:
    """Loaded, linked and compiled artifacts; never modified after loading."""
    config: ProjectConfig
    model: ObjectModel
    labels: tuple[tuple[str, str], ...]
    annotators: tuple[AnnotatorConfig, ...]
    plan: Plan
    engine: Engine
    mapping: dl.Program
    schema: Schema
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def lexicon(self) -> list[str]:
        return [text for text, _ in self.labels]


def read_project_config(path: str | Path) -> ProjectConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ProjectError(f"cannot read project file {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ProjectError(f"malformed project file {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ProjectError(f"project file {path} must be a mapping")
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ProjectError(f"project file lacks {', '.join(missing)}")
    root = path.parent
    annotators = raw.get("annotators") or []
    if not isinstance(annotators, list) or not all(isinstance(a, dict) for a in annotators):
        raise ProjectError("annotators must be a list of mappings")
    split_col = (raw.get("input") or {}).get("split_col")
    if split_col is not None and (not isinstance(split_col, int) or split_col <= 0):
        raise ProjectError("input.split_col must be a positive integer")
    return ProjectConfig(
        root=root,
        object_model=root / raw["object_model"],
        descriptors=root / raw["descriptors"],
        mapping=root / raw["mapping"],
        schema=root / raw["schema"],
        labels=root / raw["labels"] if raw.get("labels") else None,
        annotators=tuple(annotators),
        split_col=split_col,
    )


def read_lexicon(text: str) -> tuple[tuple[str, str], ...]:
    """``target = text`` lines into (text, target) pairs."""
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        target, sep, label = line.partition("=")
        if not sep or not target.strip() or not label.strip():
            raise ProjectError(f"label lexicon line {lineno}: expected 'type = text'")
        pairs.append((" ".join(label.split()), target.strip()))
    return tuple(pairs)


def _read(path: Path, what: str) -> str:
    if not path.is_file():
        raise ProjectError(f"{what} file not found: {path}")
    return path.read_text(encoding="utf-8")


def load_project(source: str | Path | ProjectConfig) -> Project:
    """Load everything and fail on the first problem."""
    cfg = source if isinstance(source, ProjectConfig) else read_project_config(source)
    try:
        model = load_object_model(_read(cfg.object_model, "object model"))
        labels = read_lexicon(_read(cfg.labels, "label lexicon")) if cfg.labels else ()
        annotators = []
        for raw in cfg.annotators:
            if raw.get("kind") == "label" and "labels" not in raw:
                if not labels:
                    raise ProjectError("label annotator needs a label lexicon")
                raw = {**raw, "labels": [list(p) for p in labels]}
            annotators.append(config_from_dict(raw, cfg.root))
        plan = link_descriptors(parse_descriptor_file(_read(cfg.descriptors, "descriptor")), model)
        for a in annotators:
            a.validate(plan.model)
        engine = Engine(plan)
        mapping = dl.parse_program(_read(cfg.mapping, "mapping"))
        schema = load_target_schema(_read(cfg.schema, "schema"))
        check_mapping(mapping, schema)
    except ProjectError:
        raise
    except GridexError as exc:
        raise ProjectError(f"{type(exc).__name__}: {exc}") from None
    counts = {
        "entity types": len(plan.model.entities),
        "descriptors": len(plan),
        "compiled rules": engine.rule_count,
        "mapping rules": len(mapping),
        "relations": len(schema),
    }
    return Project(cfg, model, labels, tuple(annotators), plan, engine, mapping, schema, counts)
