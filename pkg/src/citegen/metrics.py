"""Overlap metrics: corpus BLEU-4, ROUGE-1/2/L, simplified METEOR.

All metrics tokenize with the shared word-level tokenizer, so placeholder
tokens count like ordinary words and every system is scored identically.
"""

from __future__ import annotations

import ast
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import IntentLabel
from .errors import AlignmentError, EmptyEvalSet
from .intent import IntentModel, placeholder_windows, round_trip_accuracy
from .tokenizer import tokenize

logger = logging.getLogger(__name__)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates: Sequence[str], references: Sequence[str]) -> float:
    """Corpus BLEU-4 in [0, 100], add-one smoothed for n ≥ 2, with brevity penalty."""
    if not candidates:
        raise EmptyEvalSet("bleu needs at least one candidate")
    if len(candidates) != len(references):
        raise AlignmentError(f"{len(candidates)} candidates vs {len(references)} references")
    cand_toks = [tokenize(c) for c in candidates]
    ref_toks = [tokenize(r) for r in references]
    cand_len = sum(len(t) for t in cand_toks)
    ref_len = sum(len(t) for t in ref_toks)
    log_p = 0.0
    for n in range(1, 5):
        matched = 0
        total = 0
        for c, r in zip(cand_toks, ref_toks):
            cn = _ngrams(c, n)
            rn = _ngrams(r, n)
            matched += sum(min(v, rn[k]) for k, v in cn.items())
            total += sum(cn.values())
        if n >= 2:
            matched += 1
            total += 1
        if matched == 0 or total == 0:
            return 0.0
        log_p += math.log(matched / total) / 4.0
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / max(cand_len, 1))
    return 100.0 * bp * math.exp(log_p)


def rouge_n(candidate: str, reference: str, n: int) -> tuple[float, float, float]:
    """Clipped n-gram overlap precision/recall/F1 for n in {1, 2}."""
    if n not in (1, 2):
        raise ValueError(f"rouge_n supports n in {{1, 2}}, got {n}")
    cn = _ngrams(tokenize(candidate), n)
    rn = _ngrams(tokenize(reference), n)
    overlap = sum(min(v, rn[k]) for k, v in cn.items())
    p = overlap / max(sum(cn.values()), 1) if cn else 0.0
    r = overlap / max(sum(rn.values()), 1) if rn else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def _lcs_len(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> tuple[float, float, float]:
    """Longest-common-subsequence precision/recall/F1."""
    c = tokenize(candidate)
    r = tokenize(reference)
    lcs = _lcs_len(c, r)
    p = lcs / len(c) if c else 0.0
    rec = lcs / len(r) if r else 0.0
    f = 2 * p * rec / (p + rec) if p + rec > 0 else 0.0
    return p, rec, f


def corpus_rouge(candidates: Sequence[str], references: Sequence[str], kind: str) -> float:
    """Mean per-example F in [0, 1]; empty references are skipped with a warning."""
    if not candidates:
        raise EmptyEvalSet("corpus_rouge needs at least one candidate")
    if len(candidates) != len(references):
        raise AlignmentError(f"{len(candidates)} candidates vs {len(references)} references")
    scores: list[float] = []
    skipped = 0
    for c, r in zip(candidates, references):
        if not tokenize(r):
            skipped += 1
            continue
        if kind == "l":
            scores.append(rouge_l(c, r)[2])
        else:
            scores.append(rouge_n(c, r, int(kind))[2])
    if skipped:
        logger.warning("corpus_rouge: skipped %d pair(s) with empty references", skipped)
    if not scores:
        raise EmptyEvalSet("all references were empty")
    return sum(scores) / len(scores)


def meteor_simplified(candidate: str, reference: str) -> float:
    """Exact-match METEOR core in [0, 1].

    Leftmost-greedy unigram alignment, F_mean with recall weighted 0.9,
    fragmentation penalty 0.5 * (chunks / matches)^3.
    """
    c = tokenize(candidate)
    r = tokenize(reference)
    used: set[int] = set()
    align: list[tuple[int, int]] = []
    for i, tok in enumerate(c):
        for j, ref_tok in enumerate(r):
            if j not in used and ref_tok == tok:
                used.add(j)
                align.append((i, j))
                break
    m = len(align)
    if m == 0:
        return 0.0
    p = m / len(c)
    rec = m / len(r)
    f_mean = p * rec / (0.9 * p + 0.1 * rec)
    chunks = 1
    for (i0, j0), (i1, j1) in zip(align, align[1:]):
        if i1 != i0 + 1 or j1 != j0 + 1:
            chunks += 1
    penalty = 0.5 * (chunks / m) ** 3
    return f_mean * (1.0 - penalty)


def corpus_meteor(candidates: Sequence[str], references: Sequence[str]) -> float:
    if not candidates:
        raise EmptyEvalSet("corpus_meteor needs at least one candidate")
    return sum(meteor_simplified(c, r) for c, r in zip(candidates, references)) / len(candidates)


# ---------------------------------------------------------------------------
# Aggregate report

@dataclass
class EvalReport:
    bleu: float
    rouge1_f: float
    rouge2_f: float
    rougeL_f: float
    meteor: float
    round_trip_acc_with_intent: float
    round_trip_acc_without_intent: float | None
    n_examples: int


def _round_trip_pairs(
    predictions: Mapping[str, str], intended: Mapping[str, list[IntentLabel]]
) -> list[tuple[IntentLabel, str]]:
    pairs: list[tuple[IntentLabel, str]] = []
    for iid in sorted(predictions):
        text = predictions[iid]
        labels = intended[iid]
        for label, window in zip(labels, placeholder_windows(text, len(labels))):
            pairs.append((label, window))
    return pairs


def evaluate(
    predictions: Mapping[str, str],
    references: Mapping[str, str],
    intent_model: IntentModel,
    intended: Mapping[str, list[IntentLabel]],
    predictions_without_intent: Mapping[str, str] | None = None,
) -> EvalReport:
    """Score a prediction set against references, plus round-trip intent accuracy.

    All maps are keyed by instance id and must agree exactly. The second
    prediction set, when given, only feeds the without-intent round-trip
    accuracy (its overlap metrics belong to its own evaluate call).
    """
    if not predictions:
        raise EmptyEvalSet("no predictions to evaluate")
    for name, other in (
        ("references", references),
        ("intended intents", intended),
        ("predictions_without_intent", predictions_without_intent),
    ):
        if other is not None and set(other) != set(predictions):
            missing = sorted(set(predictions) ^ set(other))[:5]
            raise AlignmentError(f"instance ids disagree with {name} (e.g. {missing})")
    ids = sorted(predictions)
    cands = [predictions[i] for i in ids]
    refs = [references[i] for i in ids]
    rt_with = round_trip_accuracy(intent_model, _round_trip_pairs(predictions, intended))
    rt_without = None
    if predictions_without_intent is not None:
        rt_without = round_trip_accuracy(
            intent_model, _round_trip_pairs(predictions_without_intent, intended)
        )
    return EvalReport(
        bleu=bleu(cands, refs),
        rouge1_f=100.0 * corpus_rouge(cands, refs, "1"),
        rouge2_f=100.0 * corpus_rouge(cands, refs, "2"),
        rougeL_f=100.0 * corpus_rouge(cands, refs, "l"),
        meteor=100.0 * corpus_meteor(cands, refs),
        round_trip_acc_with_intent=rt_with,
        round_trip_acc_without_intent=rt_without,
        n_examples=len(ids),
    )


REPORT_FIELDS = (
    "bleu", "rouge1_f", "rouge2_f", "rougeL_f", "meteor",
    "round_trip_acc_with_intent", "round_trip_acc_without_intent", "n_examples",
)


def save_report(report: EvalReport, path: str | Path) -> None:
    """Plain `key = value` lines; a missing optional field is omitted."""
    with open(path, "w", encoding="utf-8") as f:
        for name in REPORT_FIELDS:
            value = getattr(report, name)
            if value is None:
                continue
            f.write(f"{name} = {value!r}\n")


def load_report(path: str | Path) -> EvalReport:
    values: dict[str, float | int] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, _, raw = line.partition("=")
            values[name.strip()] = ast.literal_eval(raw.strip())
    values.setdefault("round_trip_acc_without_intent", None)
    return EvalReport(**values)  # type: ignore[arg-type]


def format_report(report: EvalReport) -> str:
    lines = ["metric                            value", "-" * 40]
    for name in REPORT_FIELDS:
        value = getattr(report, name)
        if value is None:
            continue
        shown = f"{value:.4f}" if isinstance(value, float) else str(value)
        lines.append(f"{name:<32}  {shown}")
    return "\n".join(lines)
