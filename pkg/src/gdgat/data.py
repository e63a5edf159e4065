"""Corpus representation: documents, events, labeled pairs, label sets.

Corpus files are UTF-8 JSON Lines.  Each line is either a document's event
list or one labeled pair:

    {"doc": "d1", "events": [{"idx": 0, "type": "move", "surface": "toured"}, ...]}
    {"pair": {"doc": "d1", "i": 0, "j": 2, "gold": "BEFORE"}}

Event lines must precede the pair lines of their document.  Events may
carry an optional "extra" list of floats (externally computed features);
pairs may carry an optional "distance" which is cross-checked against the
order indices, never trusted.
"""

from __future__ import annotations

import difflib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import FormatError


@dataclass(frozen=True)
class LabelSet:
    """Ordered relation label inventory; one label may be excluded from micro-F1."""

    name: str
    labels: tuple[str, ...]
    excluded_for_micro: str | None = None

    def __post_init__(self):
        if len(self.labels) < 2:
            raise ValueError(f"label set {self.name!r} needs at least 2 labels")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"label set {self.name!r} has duplicate labels")
        if any(not lbl for lbl in self.labels):
            raise ValueError(f"label set {self.name!r} has an empty label")
        if self.excluded_for_micro is not None and self.excluded_for_micro not in self.labels:
            raise ValueError(
                f"excluded label {self.excluded_for_micro!r} not in label set {self.name!r}"
            )

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "labels": list(self.labels),
            "excluded_for_micro": self.excluded_for_micro,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "LabelSet":
        return LabelSet(d["name"], tuple(d["labels"]), d.get("excluded_for_micro"))


TB_DENSE = LabelSet(
    "tb_dense",
    ("BEFORE", "AFTER", "INCLUDES", "IS_INCLUDED", "SIMULTANEOUS", "VAGUE"),
    excluded_for_micro="VAGUE",
)
MATRES = LabelSet("matres", ("BEFORE", "AFTER", "EQUAL", "VAGUE"), excluded_for_micro="VAGUE")

BUILTIN_LABEL_SETS = {"tb_dense": TB_DENSE, "matres": MATRES}


@dataclass(frozen=True)
class Event:
    doc_id: str
    order_index: int
    event_type: str
    surface: str
    extra: tuple[float, ...] = ()


@dataclass(frozen=True)
class EventPairInstance:
    doc_id: str
    i: int
    j: int
    gold: str
    distance: int


@dataclass
class Dataset:
    label_set: LabelSet
    documents: dict[str, list[Event]]
    pairs: list[EventPairInstance]
    split: str = "train"

    def doc_events(self, doc_id: str) -> list[Event]:
        return self.documents[doc_id]

    def pairs_by_doc(self) -> dict[str, list[EventPairInstance]]:
        out: dict[str, list[EventPairInstance]] = {}
        for p in self.pairs:
            out.setdefault(p.doc_id, []).append(p)
        return out

    def serialize(self) -> str:
        """Render back to the corpus JSONL format (event lines, then pairs)."""
        lines = []
        for doc_id, events in self.documents.items():
            ev = []
            for e in events:
                d = {"idx": e.order_index, "type": e.event_type, "surface": e.surface}
                if e.extra:
                    d["extra"] = list(e.extra)
                ev.append(d)
            lines.append(json.dumps({"doc": doc_id, "events": ev}, sort_keys=False))
        for p in self.pairs:
            lines.append(
                json.dumps({"pair": {"doc": p.doc_id, "i": p.i, "j": p.j, "gold": p.gold}})
            )
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.serialize(), encoding="utf-8")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.label_set == other.label_set
            and self.documents == other.documents
            and self.pairs == other.pairs
            and self.split == other.split
        )


def pair_distance(doc_events: list[Event], i: int, j: int) -> int:
    """Number of events occurring between the pair: |i - j| - 1."""
    if i == j:
        raise ValueError(f"pair distance undefined for identical indices ({i}, {j})")
    n = len(doc_events)
    for idx in (i, j):
        if not 0 <= idx < n:
            raise ValueError(f"event index {idx} out of range for document of {n} events")
    return abs(i - j) - 1


def _nearest_label(bad: str, labels: Iterable[str]) -> str:
    close = difflib.get_close_matches(bad, list(labels), n=1, cutoff=0.0)
    return close[0] if close else ""


def _parse_event_line(obj, doc_id, line_no, path) -> list[Event]:
    raw = obj["events"]
    if not isinstance(raw, list) or not raw:
        raise FormatError(f"document {doc_id!r} has no events", path, line_no)
    events = []
    extra_len = None
    for e in raw:
        try:
            idx = int(e["idx"])
            etype = str(e["type"])
            surface = str(e.get("surface", ""))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed event in document {doc_id!r}: {exc}", path, line_no)
        extra = tuple(float(x) for x in e.get("extra", ()))
        if extra_len is None:
            extra_len = len(extra)
        elif len(extra) != extra_len:
            raise FormatError(
                f"inconsistent extra-feature width in document {doc_id!r}", path, line_no
            )
        events.append(Event(doc_id, idx, etype, surface, extra))
    indices = sorted(e.order_index for e in events)
    if indices != list(range(len(events))):
        dupes = {i for i in indices if indices.count(i) > 1}
        if dupes:
            raise FormatError(
                f"duplicate order index {sorted(dupes)} in document {doc_id!r}", path, line_no
            )
        raise FormatError(
            f"order indices of document {doc_id!r} must be contiguous from 0, got {indices}",
            path,
            line_no,
        )
    events.sort(key=lambda e: e.order_index)
    return events


def parse_corpus(path_or_text, label_set: LabelSet, split: str = "train") -> Dataset:
    """Parse and fully validate a corpus file (or literal JSONL text)."""
    if isinstance(path_or_text, (str, Path)) and "\n" not in str(path_or_text):
        path = Path(path_or_text)
        text = path.read_text(encoding="utf-8")
        src = str(path)
    else:
        text = str(path_or_text)
        src = "<text>"

    documents: dict[str, list[Event]] = {}
    pairs: list[EventPairInstance] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc.msg}", src, line_no)
        if not isinstance(obj, dict):
            raise FormatError("each line must be a JSON object", src, line_no)

        if "events" in obj:
            doc_id = str(obj.get("doc", ""))
            if not doc_id:
                raise FormatError("event line missing 'doc' id", src, line_no)
            if doc_id in documents:
                raise FormatError(f"duplicate document {doc_id!r}", src, line_no)
            documents[doc_id] = _parse_event_line(obj, doc_id, line_no, src)
        elif "pair" in obj:
            p = obj["pair"]
            try:
                doc_id, i, j, gold = str(p["doc"]), int(p["i"]), int(p["j"]), str(p["gold"])
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"malformed pair: {exc}", src, line_no)
            if doc_id not in documents:
                raise FormatError(
                    f"pair references document {doc_id!r} before its event line", src, line_no
                )
            if gold not in label_set.labels:
                hint = _nearest_label(gold, label_set.labels)
                raise FormatError(
                    f"unknown label {gold!r} (closest valid label: {hint!r})", src, line_no
                )
            events = documents[doc_id]
            if i == j:
                raise FormatError(f"pair ({i}, {i}) in {doc_id!r} has identical events", src, line_no)
            for idx in (i, j):
                if not 0 <= idx < len(events):
                    raise FormatError(
                        f"pair references missing event {idx} of document {doc_id!r}", src, line_no
                    )
            dist = pair_distance(events, i, j)
            if "distance" in p and int(p["distance"]) != dist:
                raise FormatError(
                    f"stored distance {p['distance']} contradicts order indices "
                    f"(|{i} - {j}| - 1 = {dist})",
                    src,
                    line_no,
                )
            pairs.append(EventPairInstance(doc_id, i, j, gold, dist))
        else:
            raise FormatError("line is neither an event line nor a pair line", src, line_no)

    return Dataset(label_set=label_set, documents=documents, pairs=pairs, split=split)


def class_histogram(dataset: Dataset) -> dict[str, tuple[int, float]]:
    """Per-label (count, fraction) over the dataset's pairs."""
    if not dataset.pairs:
        raise ValueError("class_histogram needs a nonempty pair list")
    counts = {lbl: 0 for lbl in dataset.label_set.labels}
    for p in dataset.pairs:
        counts[p.gold] += 1
    total = len(dataset.pairs)
    return {lbl: (c, c / total) for lbl, c in counts.items()}
