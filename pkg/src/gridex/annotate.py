"""Annotators that label cell text with semantic categories and labels.

Every annotation is a one-dimensional object snapped to token boundaries of
the cell it was found in. Annotation ids are derived from content, so the
same finding reported by two annotators collapses to a single object.
"""
from __future__ import annotations

import hashlib
import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import AnnotatorError
from .griddoc import Cell, GridDocument, TokenSpan, cell_tokens
from .ontology import FactBase, ObjectModel, OnePosition

KINDS = ("regex", "gazetteer", "label")
_PUNCT = string.punctuation


@dataclass(frozen=True)
class Annotation:
    target: str
    value: str
    start: int
    end: int
    cell: str

    @property
    def id(self) -> str:
        key = "\x1f".join([self.target, self.cell, str(self.start), str(self.end), self.value])
        return "a_" + hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


@dataclass
class AnnotatorConfig:
    kind: str
    target: str | None = None
    pattern: str | None = None
    entries: tuple[str, ...] = ()
    labels: tuple[tuple[str, str], ...] = ()
    _regex: re.Pattern | None = field(default=None, repr=False, compare=False)
    _index: dict[tuple[str, ...], str] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise AnnotatorError(f"unknown annotator kind {self.kind!r}")
        if self.kind == "regex":
            if not self.pattern:
                raise AnnotatorError("regex annotator needs a pattern")
            try:
                self._regex = re.compile(self.pattern)
            except re.error as exc:
                raise AnnotatorError(f"bad regex {self.pattern!r}: {exc}") from None
        elif self.kind == "gazetteer":
            for entry in self.entries:
                key = tuple(_word_key(w) for w in entry.split())
                if key and all(key):
                    self._index.setdefault(key, entry)
            if not self._index:
                raise AnnotatorError(f"gazetteer for {self.target!r} has an empty dictionary")
        else:
            seen: dict[str, str] = {}
            for text, _ in self.labels:
                norm = _label_key(text)
                if not norm:
                    raise AnnotatorError("empty label text")
                if norm in seen:
                    raise AnnotatorError(f"duplicate label {text!r}")
                seen[norm] = text
        if self.kind != "label" and not self.target:
            raise AnnotatorError(f"{self.kind} annotator needs a target type")

    @property
    def targets(self) -> list[str]:
        if self.kind == "label":
            return [t for _, t in self.labels]
        return [self.target]

    @property
    def max_words(self) -> int:
        return max(len(k) for k in self._index)

    def validate(self, model: ObjectModel) -> None:
        for t in self.targets:
            if t not in model:
                raise AnnotatorError(f"annotator target {t!r} is not in the object model")
            if model.dim(t) == 2:
                raise AnnotatorError(f"annotator target {t!r} is two-dimensional")


def read_dictionary(path: str | Path) -> tuple[str, ...]:
    """One entry per line; blank lines and ``#`` comments are skipped."""
    entries = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = " ".join(line.split())
        if line and not line.startswith("#"):
            entries.append(line)
    return tuple(entries)


def config_from_dict(raw: dict, base_dir: str | Path = ".") -> AnnotatorConfig:
    kind = raw.get("kind")
    if kind == "regex":
        return AnnotatorConfig("regex", raw.get("target"), pattern=raw.get("pattern"))
    if kind == "gazetteer":
        if "dictionary" in raw:
            path = Path(base_dir) / raw["dictionary"]
            if not path.is_file():
                raise AnnotatorError(f"dictionary file not found: {path}")
            entries = read_dictionary(path)
        else:
            entries = tuple(raw.get("entries", ()))
        return AnnotatorConfig("gazetteer", raw.get("target"), entries=entries)
    if kind == "label":
        labels = raw.get("labels") or []
        pairs = []
        for item in labels:
            if isinstance(item, dict):
                pairs.append((item["text"], item["target"]))
            else:
                text, target = item
                pairs.append((text, target))
        return AnnotatorConfig("label", labels=tuple(pairs))
    raise AnnotatorError(f"unknown annotator kind {kind!r}")


def _word_key(word: str) -> str:
    return word.strip(_PUNCT).casefold()


def _label_key(text: str) -> str:
    return " ".join(text.split()).rstrip(":").strip().casefold()


def _snap(tokens: Sequence[TokenSpan], offsets: Sequence[int], lo: int, hi: int) -> tuple[int, int] | None:
    """Normalized span of every token intersecting chars ``[lo, hi)`` of the joined text."""
    hit = [t for t, off in zip(tokens, offsets) if off < hi and lo < off + len(t.text)]
    if not hit:
        return None
    return hit[0].start, hit[-1].end


def find_regex(cfg: AnnotatorConfig, cell: Cell, tokens: Sequence[TokenSpan]) -> list[Annotation]:
    """Leftmost-longest, non-overlapping matches over the space-joined words."""
    text = " ".join(t.text for t in tokens)
    offsets, pos = [], 0
    for t in tokens:
        offsets.append(pos)
        pos += len(t.text) + 1
    rx = cfg._regex
    out = []
    i = 0
    while i < len(text):
        m = rx.search(text, i)
        if m is None:
            break
        lo = m.start()
        hi = next((j for j in range(len(text), max(m.end(), lo + 1) - 1, -1)
                   if rx.fullmatch(text, lo, j)), m.end())
        if hi == lo:
            i = lo + 1
            continue
        span = _snap(tokens, offsets, lo, hi)
        if span is not None:
            out.append(Annotation(cfg.target, text[lo:hi], span[0], span[1], cell.id))
        i = hi
    return out


def find_gazetteer(cfg: AnnotatorConfig, cell: Cell, tokens: Sequence[TokenSpan]) -> list[Annotation]:
    """Case-insensitive dictionary lookup aligned on whole tokens.

    Surrounding punctuation of a token is ignored for comparison; the
    reported value is the dictionary's own spelling.
    """
    keys = [_word_key(t.text) for t in tokens]
    out = []
    i = 0
    while i < len(tokens):
        for n in range(min(cfg.max_words, len(tokens) - i), 0, -1):
            entry = cfg._index.get(tuple(keys[i:i + n]))
            if entry is not None:
                out.append(Annotation(cfg.target, entry, tokens[i].start, tokens[i + n - 1].end, cell.id))
                i += n
                break
        else:
            i += 1
    return out


def find_label(cfg: AnnotatorConfig, cell: Cell, tokens: Sequence[TokenSpan]) -> list[Annotation]:
    if not tokens:
        return []
    text = " ".join(t.text for t in tokens)
    key = _label_key(text)
    for label, target in cfg.labels:
        if _label_key(label) == key:
            return [Annotation(target, text, tokens[0].start, tokens[-1].end, cell.id)]
    return []


_FINDERS = {"regex": find_regex, "gazetteer": find_gazetteer, "label": find_label}


def find_annotations(cfg: AnnotatorConfig, cell: Cell, fb: FactBase) -> list[Annotation]:
    if not cell.filled:
        return []
    return _FINDERS[cfg.kind](cfg, cell, cell_tokens(fb, cell.id))


def assert_annotation(fb: FactBase, ann: Annotation) -> bool:
    """Add ``ann`` unless an identical annotation exists; True if added."""
    if ann.id in fb:
        return False
    attrs = {"value": ann.value} if any(a == "value" for a, _ in fb.model.attributes(ann.target)) else {}
    fb.add(ann.id, ann.target, OnePosition(ann.start, ann.end, ann.cell), **attrs)
    return True


def _run(cfg: AnnotatorConfig, cell: Cell, fb: FactBase) -> FactBase:
    for ann in find_annotations(cfg, cell, fb):
        assert_annotation(fb, ann)
    return fb


def run_regex_annotator(cfg: AnnotatorConfig, cell: Cell, fb: FactBase) -> FactBase:
    return _run(cfg, cell, fb)


def run_gazetteer_annotator(cfg: AnnotatorConfig, cell: Cell, fb: FactBase) -> FactBase:
    return _run(cfg, cell, fb)


def run_label_annotator(cfg: AnnotatorConfig, cell: Cell, fb: FactBase) -> FactBase:
    return _run(cfg, cell, fb)


def annotate_document(configs: Iterable[AnnotatorConfig], doc: GridDocument, fb: FactBase) -> FactBase:
    """Run every annotator over every filled cell; duplicates collapse."""
    configs = list(configs)
    found: set[Annotation] = set()
    for cell in doc.cells:
        if cell.filled:
            for cfg in configs:
                found.update(find_annotations(cfg, cell, fb))
    for ann in sorted(found, key=lambda a: (a.cell, a.start, a.end, a.target, a.value)):
        assert_annotation(fb, ann)
    return fb
