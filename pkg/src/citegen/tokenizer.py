"""Word-level tokenizer and vocabulary with reserved control tokens.

All models and metrics in this package share this tokenization, so the
surface a model generates and the surface a metric scores are identical.
Control tokens (placeholders, intent codes, ...) are matched verbatim and
never lowercased or split.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import VocabTooSmall

MAX_REFS = 8

PAD, UNK, BOS, EOS, REF = "<PAD>", "<UNK>", "<BOS>", "<EOS>", "<REF>"
B_TOKENS = tuple(f"<B{n}>" for n in range(1, MAX_REFS + 1))
INTENT_TOKENS = (
    "<I:background>",
    "<I:method>",
    "<I:supportive>",
    "<I:not_supportive>",
)

# Fixed id prefix shared by every vocabulary, regardless of corpus.
RESERVED = (PAD, UNK, BOS, EOS, REF) + B_TOKENS + INTENT_TOKENS
PAD_ID, UNK_ID, BOS_ID, EOS_ID, REF_ID = 0, 1, 2, 3, 4

_RESERVED_SET = frozenset(RESERVED)
_CONTROL_ALT = "|".join(re.escape(t) for t in RESERVED)
_TOKEN_RE = re.compile(rf"({_CONTROL_ALT})|([A-Za-z0-9_]+)|([^\sA-Za-z0-9_])")


def tokenize(text: str) -> list[str]:
    """Split into lowercased word/punctuation tokens; control tokens kept verbatim."""
    out: list[str] = []
    for ctrl, word, punct in _TOKEN_RE.findall(text):
        if ctrl:
            out.append(ctrl)
        elif word:
            out.append(word.lower())
        else:
            # non-ASCII letters land here; lowercase so normalize() is canonical
            out.append(punct.lower())
    return out


def normalize(text: str) -> str:
    """Canonical surface form used for round-trip comparisons."""
    return " ".join(tokenize(text))


@dataclass(frozen=True)
class Vocabulary:
    """Bijective token<->id map whose first ids are the RESERVED prefix."""

    token_to_id: dict[str, int]
    id_to_token: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.id_to_token)

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)


def build_vocab(texts: Iterable[str], min_freq: int = 1, max_size: int = 50000) -> Vocabulary:
    """Build a vocabulary from raw texts.

    Corpus tokens are ordered by descending frequency, ties broken
    lexicographically, and appended after the reserved prefix.
    """
    if max_size < len(RESERVED):
        raise VocabTooSmall(
            f"max_size={max_size} cannot hold the {len(RESERVED)} reserved tokens"
        )
    counts: Counter[str] = Counter()
    for text in texts:
        for token in tokenize(text):
            if token not in _RESERVED_SET:
                counts[token] += 1
    eligible = sorted(
        ((t, c) for t, c in counts.items() if c >= min_freq),
        key=lambda tc: (-tc[1], tc[0]),
    )
    room = max_size - len(RESERVED)
    tokens = tuple(RESERVED) + tuple(t for t, _ in eligible[:room])
    return Vocabulary({t: i for i, t in enumerate(tokens)}, tokens)


def encode(text: str, vocab: Vocabulary, max_len: int, add_eos: bool = True) -> list[int]:
    """Encode to exactly ``max_len`` ids, truncating or right-padding with <PAD>.

    With ``add_eos`` (the target convention) an <EOS> id is placed after the
    last kept token, before any padding.
    """
    ids = [vocab.id(t) for t in tokenize(text)]
    if add_eos:
        ids = ids[: max_len - 1] + [EOS_ID]
    else:
        ids = ids[:max_len]
    ids.extend([PAD_ID] * (max_len - len(ids)))
    return ids


def decode(ids: Iterable[int], vocab: Vocabulary) -> str:
    """Inverse of ``encode``: stop at <EOS>, drop <BOS>/<PAD>, join with spaces."""
    tokens: list[str] = []
    for i in ids:
        i = int(i)
        if i == EOS_ID:
            break
        if i in (PAD_ID, BOS_ID):
            continue
        tokens.append(vocab.id_to_token[i])
    return " ".join(tokens)


def save_vocab(vocab: Vocabulary, path: str | Path) -> None:
    """Write line-delimited ``token<TAB>id`` rows, reserved prefix first."""
    with open(path, "w", encoding="utf-8") as f:
        for i, token in enumerate(vocab.id_to_token):
            f.write(f"{token}\t{i}\n")


def load_vocab(path: str | Path) -> Vocabulary:
    tokens: list[str] = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            token, _, idx = line.rpartition("\t")
            if int(idx) != len(tokens):
                raise ValueError(f"non-contiguous id {idx} in {path}")
            tokens.append(token)
    if tuple(tokens[: len(RESERVED)]) != RESERVED:
        raise ValueError(f"{path} does not start with the reserved token prefix")
    return Vocabulary({t: i for i, t in enumerate(tokens)}, tuple(tokens))
