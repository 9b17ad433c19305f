"""Label corpus and target set ingestion.

Both files are JSON Lines: one JSON object per line. Label records carry
``label_id``, ``name``, ``description`` and optionally ``class``; target
records carry ``target_id``, ``description``, ``gold_label_id`` and
optionally ``mislabel_flag``.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .exceptions import DataError, MissingIdError

_REG_NUMBER = re.compile(r"(?<!\d)\d{3,4}\.\d{2,4}(?!\d)")
_TOKEN = re.compile(r"[^\W_]+")

LABEL_FIELDS = ("label_id", "name", "description")
TARGET_FIELDS = ("target_id", "description", "gold_label_id")


@dataclass(frozen=True)
class TokenizedDoc:
    doc_id: str
    tokens: tuple[str, ...]

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class LabelEntry:
    label_id: str
    name: str
    description: str
    raw_description: str
    device_class: str | None = None


@dataclass(frozen=True)
class TargetRecord:
    target_id: str
    description: str
    gold_label_id: str
    mislabel_flag: bool | None = None
    word_count: int = field(default=0)
    raw_description: str = ""

    @property
    def is_mislabeled(self):
        return bool(self.mislabel_flag)


def _is_reference(content):
    return "§" in content or _REG_NUMBER.search(content) is not None


def strip_regulation_refs(text: str) -> str:
    """Delete parenthetical groups that cite a regulation number.

    A balanced ``( ... )`` group is removed, parentheses included, when its
    contents hold a section sign or a ``ddd.dddd``-shaped code. Only the
    outermost matching group is cut; unmatched parentheses stay put.

    >>> strip_regulation_refs("reservoir bags (§ 868.5320), oxygen cannulas (§ 868.5340)")
    'reservoir bags , oxygen cannulas '
    """
    stack = []
    spans = []
    for i, ch in enumerate(text):
        if ch == "(":
            stack.append(i)
        elif ch == ")" and stack:
            start = stack.pop()
            if _is_reference(text[start + 1:i]):
                # an enclosing group also matches, so inner spans get absorbed
                while spans and spans[-1][0] > start:
                    spans.pop()
                spans.append((start, i + 1))
    if not spans:
        return text
    out = []
    pos = 0
    for start, end in spans:
        out.append(text[pos:start])
        pos = end
    out.append(text[pos:])
    return "".join(out)


def tokenize(text: str, doc_id: str = "") -> TokenizedDoc:
    """Lowercase and split on whitespace, punctuation and hyphens."""
    text = unicodedata.normalize("NFC", text).lower()
    return TokenizedDoc(doc_id, tuple(_TOKEN.findall(text)))


def _read_records(path, required):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed record ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise DataError(f"{path}:{lineno}: record is not an object")
            missing = [k for k in required if not isinstance(rec.get(k), str)]
            if missing:
                raise DataError(f"{path}:{lineno}: missing or non-string field(s) {', '.join(missing)}")
            records.append((lineno, rec))
    return records


def parse_label_corpus(path) -> list[LabelEntry]:
    records = _read_records(path, LABEL_FIELDS)
    if not records:
        raise DataError(f"{path}: empty corpus")
    seen = {}
    entries = []
    for lineno, rec in records:
        label_id = rec["label_id"]
        if label_id in seen:
            raise DataError(
                f"{path}:{lineno}: duplicate label_id {label_id!r} (first seen on line {seen[label_id]})"
            )
        seen[label_id] = lineno
        raw = rec["description"]
        cleaned = strip_regulation_refs(raw)
        if not tokenize(cleaned).tokens:
            raise DataError(f"{path}:{lineno}: label {label_id!r} has an empty description after cleaning")
        cls = rec.get("class")
        entries.append(LabelEntry(label_id, rec["name"], cleaned, raw, None if cls is None else str(cls)))
    return entries


def parse_target_set(path, corpus: Sequence[LabelEntry]) -> list[TargetRecord]:
    known = {entry.label_id for entry in corpus}
    targets = []
    seen = set()
    for lineno, rec in _read_records(path, TARGET_FIELDS):
        target_id = rec["target_id"]
        if target_id in seen:
            raise DataError(f"{path}:{lineno}: duplicate target_id {target_id!r}")
        seen.add(target_id)
        gold = rec["gold_label_id"]
        if gold not in known:
            raise MissingIdError(f"{path}:{lineno}: target {target_id!r} names unknown gold_label_id {gold!r}")
        flag = rec.get("mislabel_flag")
        if flag is not None and not isinstance(flag, bool):
            raise DataError(f"{path}:{lineno}: mislabel_flag must be true, false or absent")
        raw = rec["description"]
        cleaned = strip_regulation_refs(raw)
        targets.append(
            TargetRecord(
                target_id=target_id,
                description=cleaned,
                gold_label_id=gold,
                mislabel_flag=flag,
                word_count=len(tokenize(cleaned)),
                raw_description=raw,
            )
        )
    return targets


def write_label_corpus(entries: Iterable[LabelEntry], path) -> None:
    """Write entries back out; the raw text is stored so reloading is lossless."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            rec = {"label_id": e.label_id, "name": e.name, "description": e.raw_description}
            if e.device_class is not None:
                rec["class"] = e.device_class
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def write_target_set(targets: Iterable[TargetRecord], path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for t in targets:
            rec = {
                "target_id": t.target_id,
                "description": t.raw_description or t.description,
                "gold_label_id": t.gold_label_id,
            }
            if t.mislabel_flag is not None:
                rec["mislabel_flag"] = t.mislabel_flag
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def label_docs(entries: Iterable[LabelEntry]) -> list[TokenizedDoc]:
    return [tokenize(e.description, e.label_id) for e in entries]
