"""Citation corpus construction.

Parses paper bodies into sentences, detects explicit citation markers,
groups consecutive citation sentences, rewrites targets with <Bn>
placeholders, and assembles/splits the dataset.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .errors import MaxRefsExceeded, SplitTooSmall
from .seeding import substream
from .tokenizer import MAX_REFS, REF

logger = logging.getLogger(__name__)


class IntentLabel(str, Enum):
    BACKGROUND = "background"
    METHOD = "method"
    SUPPORTIVE = "supportive"
    NOT_SUPPORTIVE = "not_supportive"

    @property
    def token(self) -> str:
        return f"<I:{self.value}>"


INTENT_ORDER = tuple(IntentLabel)


@dataclass(frozen=True)
class Document:
    """One paper: citing or cited."""

    id: str
    title: str
    abstract: str


@dataclass(frozen=True)
class Marker:
    """A citation marker occurrence inside a sentence.

    ``doc_id`` is None when the surface marker matched the grammar but its
    lookup key is absent from the corpus key table.
    """

    start: int
    end: int
    text: str
    key: str
    doc_id: str | None


@dataclass(frozen=True)
class SentenceSpan:
    text: str
    index: int
    cite_keys: tuple[str, ...] = ()
    is_explicit: bool = False
    markers: tuple[Marker, ...] = ()


@dataclass
class CitationInstance:
    instance_id: str
    citing: Document
    cited: list[Document]
    intents: list[IntentLabel]
    target: str
    split: str | None = None


@dataclass(frozen=True)
class Corpus:
    """Document collection plus the marker-string -> doc-id key table."""

    documents: dict[str, Document]
    key_table: dict[str, str]


@dataclass
class BuildResult:
    instances: list[CitationInstance]
    skipped: int = 0


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


# ---------------------------------------------------------------------------
# Sentence splitting

# Words (lowercased, leading bracketing stripped) that never end a sentence.
_ABBREVIATIONS = frozenset(
    "al et e.g i.e cf etc vs fig figs eq eqs sec secs no nos vol vols "
    "dr mr mrs ms prof resp ca approx".split()
)
_TERMINALS = ".!?"


def _is_boundary(text: str, i: int) -> bool:
    ch = text[i]
    if ch == ".":
        j = i - 1
        while j >= 0 and not text[j].isspace():
            j -= 1
        word = text[j + 1 : i].lstrip("([\"'")
        if word.lower() in _ABBREVIATIONS:
            return False
        if len(word) == 1 and word.isupper():  # personal initial, "J. Smith"
            return False
    k = i + 1
    if k >= len(text):
        return True
    if not text[k].isspace():
        return False
    while k < len(text) and text[k].isspace():
        k += 1
    return k >= len(text) or text[k].isupper()


def split_sentences(body: str) -> list[SentenceSpan]:
    """Split a body into sentence spans (text + position only).

    Boundaries are ``.``/``!``/``?`` followed by whitespace and an uppercase
    letter (or end of text), guarded against abbreviations and never taken
    inside parentheses. Whitespace runs are collapsed to single spaces.
    """
    text = _normalize_ws(body)
    if not text:
        return []
    sentences: list[str] = []
    depth = 0
    start = 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(0, depth - 1)
        elif ch in _TERMINALS and depth == 0 and _is_boundary(text, i):
            piece = text[start : i + 1].strip()
            if piece:
                sentences.append(piece)
            start = i + 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return [SentenceSpan(text=s, index=k) for k, s in enumerate(sentences)]


# ---------------------------------------------------------------------------
# Citation marker grammar
#
# Four surface patterns, resolved against an explicit key table:
#   (a) Name et al. (YYYY)          key: "name yyyy"
#   (b) Name (YYYY)                 key: "name yyyy"
#   (c) (Name et al., YYYY; ...)    key per ;-segment: "name yyyy"
#   (d) [n] / [n, m]                key per number: "[n]"

_NAME = r"[A-Z][A-Za-z'\-]*"
_ETAL = r"et\s+al\.?"
_SEGMENT = rf"{_NAME}(?:\s+{_ETAL})?,\s*\d{{4}}"
_MARKER_RE = re.compile(
    rf"(?P<aname>{_NAME})\s+{_ETAL}\s*\((?P<ayear>\d{{4}})\)"
    rf"|(?P<bname>{_NAME})\s*\((?P<byear>\d{{4}})\)"
    rf"|\((?P<group>{_SEGMENT}(?:\s*;\s*{_SEGMENT})*)\)"
    rf"|\[(?P<nums>\d+(?:\s*,\s*\d+)*)\]"
)
_SEGMENT_RE = re.compile(rf"(?P<name>{_NAME})(?:\s+{_ETAL})?,\s*(?P<year>\d{{4}})")
_NUM_RE = re.compile(r"\d+")


def author_year_key(name: str, year: str | int) -> str:
    return f"{name.lower()} {year}"


def bracket_key(num: str | int) -> str:
    return f"[{num}]"


def find_markers(sentence: str, known_keys: Mapping[str, str]) -> list[Marker]:
    """All grammar matches in surface order, resolved where possible."""
    markers: list[Marker] = []
    for m in _MARKER_RE.finditer(sentence):
        if m.group("aname"):
            key = author_year_key(m.group("aname"), m.group("ayear"))
            markers.append(Marker(m.start(), m.end(), m.group(0), key, known_keys.get(key)))
        elif m.group("bname"):
            key = author_year_key(m.group("bname"), m.group("byear"))
            markers.append(Marker(m.start(), m.end(), m.group(0), key, known_keys.get(key)))
        elif m.group("group"):
            base = m.start("group")
            for seg in _SEGMENT_RE.finditer(m.group("group")):
                key = author_year_key(seg.group("name"), seg.group("year"))
                markers.append(
                    Marker(base + seg.start(), base + seg.end(), seg.group(0), key, known_keys.get(key))
                )
        else:
            base = m.start("nums")
            for num in _NUM_RE.finditer(m.group("nums")):
                key = bracket_key(num.group(0))
                markers.append(
                    Marker(base + num.start(), base + num.end(), num.group(0), key, known_keys.get(key))
                )
    return markers


def detect_citations(sentence: str, known_keys: Mapping[str, str], index: int = 0) -> SentenceSpan:
    """Fill cite_keys/is_explicit for one sentence. Pure and idempotent."""
    text = _normalize_ws(sentence)
    markers = tuple(find_markers(text, known_keys))
    keys = tuple(m.doc_id for m in markers if m.doc_id is not None)
    return SentenceSpan(
        text=text, index=index, cite_keys=keys, is_explicit=bool(keys), markers=markers
    )


def annotate(spans: Sequence[SentenceSpan], known_keys: Mapping[str, str]) -> list[SentenceSpan]:
    return [detect_citations(s.text, known_keys, s.index) for s in spans]


# ---------------------------------------------------------------------------
# Grouping and target rewriting

def group_consecutive(spans: Sequence[SentenceSpan]) -> list[list[SentenceSpan]]:
    """Maximal runs of explicit spans separated by at most one other sentence.

    Only explicit spans are members; a single bridging non-explicit sentence
    (index gap of 2) keeps a run alive.
    """
    groups: list[list[SentenceSpan]] = []
    current: list[SentenceSpan] = []
    for span in spans:
        if not span.is_explicit:
            continue
        if current and span.index - current[-1].index <= 2:
            current.append(span)
        else:
            if current:
                groups.append(current)
            current = [span]
    if current:
        groups.append(current)
    return groups


def rewrite_target(
    group: Sequence[SentenceSpan],
    context: Sequence[SentenceSpan] | None = None,
) -> tuple[str, list[str]]:
    """Rewrite a group's sentences with <Bn> placeholders.

    Returns the target text plus cited doc ids in first-appearance order.
    Markers resolving to the n-th cited id become ``<Bn>``; markers with no
    resolvable in-group document become ``<REF>``. ``context`` is the full
    sentence list the group came from; it supplies the at-most-one bridging
    non-explicit sentence kept inside the target.
    """
    by_index = {s.index: s for s in context} if context else {}
    sentences: list[SentenceSpan] = []
    for a, b in zip(group, group[1:]):
        sentences.append(a)
        for j in range(a.index + 1, b.index):
            bridge = by_index.get(j)
            if bridge is not None:
                sentences.append(bridge)
    sentences.append(group[-1])

    cited: list[str] = []
    for s in sentences:
        for m in s.markers:
            if m.doc_id is not None and m.doc_id not in cited:
                cited.append(m.doc_id)
    if len(cited) > MAX_REFS:
        raise MaxRefsExceeded(f"group cites {len(cited)} documents (max {MAX_REFS})")

    placeholder = {doc_id: f"<B{n}>" for n, doc_id in enumerate(cited, 1)}
    parts: list[str] = []
    for s in sentences:
        text = s.text
        for m in sorted(s.markers, key=lambda m: -m.start):
            text = text[: m.start] + placeholder.get(m.doc_id, REF) + text[m.end :]
        parts.append(_normalize_ws(text))
    return " ".join(parts), cited


# ---------------------------------------------------------------------------
# Dataset assembly and splitting

IntentFn = Callable[[str], list[IntentLabel]]


def build_dataset(corpus: Corpus, bodies: Mapping[str, str], intent_fn: IntentFn) -> BuildResult:
    """Run the full extraction pipeline over every body.

    Groups whose cited ids do not all resolve to known documents are skipped
    with a logged warning; the skip count is returned alongside the instances.
    """
    instances: list[CitationInstance] = []
    skipped = 0
    for citing_id, body in bodies.items():
        citing = corpus.documents.get(citing_id)
        if citing is None:
            n = len(group_consecutive(annotate(split_sentences(body), corpus.key_table)))
            logger.warning("citing document %r unknown; dropping %d group(s)", citing_id, n)
            skipped += n
            continue
        spans = annotate(split_sentences(body), corpus.key_table)
        ordinal = 0
        for group in group_consecutive(spans):
            try:
                target, cited_ids = rewrite_target(group, spans)
            except MaxRefsExceeded as exc:
                logger.warning("%s: %s; skipping group", citing_id, exc)
                skipped += 1
                continue
            docs = [corpus.documents.get(d) for d in cited_ids]
            if any(d is None for d in docs):
                missing = [d for d, doc in zip(cited_ids, docs) if doc is None]
                logger.warning("%s: unresolvable cited id(s) %s; skipping group", citing_id, missing)
                skipped += 1
                continue
            intents = intent_fn(target)
            if len(intents) != len(cited_ids):
                raise ValueError(
                    f"intent_fn returned {len(intents)} labels for {len(cited_ids)} cited docs"
                )
            instances.append(
                CitationInstance(
                    instance_id=f"{citing_id}#{ordinal}",
                    citing=citing,
                    cited=docs,  # type: ignore[arg-type]
                    intents=intents,
                    target=target,
                )
            )
            ordinal += 1
    return BuildResult(instances, skipped)


SPLITS = ("train", "valid", "test")


def split_dataset(instances: Sequence[CitationInstance], seed: int) -> list[CitationInstance]:
    """Assign 80/10/10 splits in place, deterministically.

    The assignment is a function of (instance ids, seed) only: instances are
    ordered by id before the seeded shuffle, so input permutation cannot
    change the outcome.
    """
    n = len(instances)
    if n < 10:
        raise SplitTooSmall(f"need at least 10 instances to split, got {n}")
    ordered = sorted(instances, key=lambda inst: inst.instance_id)
    perm = substream(seed, "split").permutation(n)
    n_train = int(0.8 * n)
    n_valid = int(0.1 * n)
    for rank, idx in enumerate(perm):
        if rank < n_train:
            ordered[idx].split = "train"
        elif rank < n_train + n_valid:
            ordered[idx].split = "valid"
        else:
            ordered[idx].split = "test"
    return list(instances)


# ---------------------------------------------------------------------------
# File formats (all UTF-8, line-delimited)

def save_documents(documents: Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for d in documents:
            f.write(json.dumps({"id": d.id, "title": d.title, "abstract": d.abstract}) + "\n")


def load_documents(path: str | Path) -> dict[str, Document]:
    docs: dict[str, Document] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            doc = Document(id=rec["id"], title=rec["title"], abstract=rec["abstract"])
            if not doc.id or doc.id in docs:
                raise ValueError(f"missing or duplicate document id {doc.id!r} in {path}")
            if not _normalize_ws(doc.abstract):
                raise ValueError(f"document {doc.id!r} has an empty abstract")
            docs[doc.id] = doc
    return docs


def save_bodies(bodies: Mapping[str, str], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc_id, body in bodies.items():
            f.write(json.dumps({"id": doc_id, "body": body}) + "\n")


def load_bodies(path: str | Path) -> dict[str, str]:
    bodies: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            bodies[rec["id"]] = rec["body"]
    return bodies


def save_key_table(key_table: Mapping[str, str], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for marker, doc_id in key_table.items():
            f.write(f"{marker}\t{doc_id}\n")


def load_key_table(path: str | Path) -> dict[str, str]:
    table: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            marker, _, doc_id = line.partition("\t")
            table[marker] = doc_id
    return table


def save_dataset(instances: Iterable[CitationInstance], path: str | Path) -> None:
    """Write dataset records: {citing_id, cited_ids, intents, target, split}."""
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            rec = {
                "citing_id": inst.citing.id,
                "cited_ids": [d.id for d in inst.cited],
                "intents": [i.value for i in inst.intents],
                "target": inst.target,
                "split": inst.split,
            }
            f.write(json.dumps(rec) + "\n")


def load_dataset_records(path: str | Path) -> list[dict]:
    """Raw dataset records with a derived ``instance_id`` field."""
    records: list[dict] = []
    ordinal: dict[str, int] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            k = ordinal.get(rec["citing_id"], 0)
            ordinal[rec["citing_id"]] = k + 1
            rec["instance_id"] = f"{rec['citing_id']}#{k}"
            records.append(rec)
    return records


def load_dataset(path: str | Path, documents: Mapping[str, Document]) -> list[CitationInstance]:
    instances: list[CitationInstance] = []
    for rec in load_dataset_records(path):
        citing = documents[rec["citing_id"]]
        cited = [documents[d] for d in rec["cited_ids"]]
        intents = [IntentLabel(v) for v in rec["intents"]]
        instances.append(
            CitationInstance(
                instance_id=rec["instance_id"],
                citing=citing,
                cited=cited,
                intents=intents,
                target=rec["target"],
                split=rec.get("split"),
            )
        )
    return instances
