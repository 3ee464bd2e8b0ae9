"""Four-way citation intent classifier.

Hashed bag-of-words features (unigrams + bigrams) into multinomial logistic
regression. Used to label corpora when gold intents are absent and to score
round-trip intent accuracy of generated citation text.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .corpus import INTENT_ORDER, IntentLabel
from .errors import ClassMissing, EmptyEvalSet
from .seeding import substream
from .tokenizer import B_TOKENS, tokenize

DEFAULT_DIM = 2 ** 15
N_CLASSES = len(INTENT_ORDER)

_B_SHARED = "<B>"
_B_SET = frozenset(B_TOKENS)


@dataclass(frozen=True)
class IntentModel:
    weights: np.ndarray  # (4, feature_dim)
    bias: np.ndarray  # (4,)
    feature_dim: int


def _hash(s: str, dim: int) -> int:
    return zlib.crc32(s.encode("utf-8")) % dim


def _feature_tokens(text: str) -> list[str]:
    return [_B_SHARED if t in _B_SET else t for t in tokenize(text)]


def featurize(text: str, dim: int = DEFAULT_DIM) -> sp.csr_matrix:
    """Hashed unigram+bigram counts, L2-normalized. Empty text → zero row."""
    toks = _feature_tokens(text)
    cols: dict[int, float] = {}
    for t in toks:
        cols[_hash("1:" + t, dim)] = cols.get(_hash("1:" + t, dim), 0.0) + 1.0
    for a, b in zip(toks, toks[1:]):
        h = _hash(f"2:{a} {b}", dim)
        cols[h] = cols.get(h, 0.0) + 1.0
    if not cols:
        return sp.csr_matrix((1, dim), dtype=np.float64)
    idx = sorted(cols)
    data = np.array([cols[i] for i in idx], dtype=np.float64)
    data /= np.linalg.norm(data)
    return sp.csr_matrix((data, (np.zeros(len(idx), dtype=np.int64), idx)), shape=(1, dim))


def featurize_batch(texts: list[str], dim: int = DEFAULT_DIM) -> sp.csr_matrix:
    if not texts:
        return sp.csr_matrix((0, dim), dtype=np.float64)
    return sp.vstack([featurize(t, dim) for t in texts], format="csr")


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _loss_and_grad(
    w: np.ndarray, b: np.ndarray, x: sp.csr_matrix, y: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy over the batch plus analytic gradients."""
    n = x.shape[0]
    logits = x @ w.T + b
    logz = logits.max(axis=1)
    logz = logz + np.log(np.exp(logits - logz[:, None]).sum(axis=1))
    loss = float((logz - logits[np.arange(n), y]).mean())
    p = _softmax(logits)
    p[np.arange(n), y] -= 1.0
    p /= n
    grad_w = (x.T @ p).T
    grad_b = p.sum(axis=0)
    return loss, np.asarray(grad_w), grad_b


def train_intent(
    pairs: list[tuple[str, IntentLabel]],
    epochs: int = 40,
    lr: float = 1.0,
    seed: int = 0,
    batch_size: int = 32,
    feature_dim: int = DEFAULT_DIM,
) -> IntentModel:
    """Mini-batch gradient descent on cross-entropy. Deterministic by seed."""
    labels = {label for _, label in pairs}
    missing = [lab.value for lab in INTENT_ORDER if lab not in labels]
    if missing:
        raise ClassMissing(f"no training examples for class(es): {missing}")
    x = featurize_batch([text for text, _ in pairs], feature_dim)
    y = np.array([INTENT_ORDER.index(label) for _, label in pairs], dtype=np.int64)
    w = np.zeros((N_CLASSES, feature_dim))
    b = np.zeros(N_CLASSES)
    rng = substream(seed, "intent-train")
    n = len(pairs)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            take = order[start : start + batch_size]
            _, gw, gb = _loss_and_grad(w, b, x[take], y[take])
            w -= lr * gw
            b -= lr * gb
    return IntentModel(weights=w, bias=b, feature_dim=feature_dim)


def predict_intent(model: IntentModel, text: str) -> tuple[IntentLabel, np.ndarray]:
    """Argmax class and its softmax probabilities; ties go to label order."""
    x = featurize(text, model.feature_dim)
    logits = np.asarray(x @ model.weights.T).ravel() + model.bias
    probs = _softmax(logits)
    return INTENT_ORDER[int(np.argmax(probs))], probs


def round_trip_accuracy(model: IntentModel, generations: list[tuple[IntentLabel, str]]) -> float:
    """Fraction of (intended label, text) pairs the classifier recovers."""
    if not generations:
        raise EmptyEvalSet("round_trip_accuracy needs at least one generation")
    hits = sum(1 for label, text in generations if predict_intent(model, text)[0] == label)
    return hits / len(generations)


# ---------------------------------------------------------------------------
# Per-placeholder windows: the minimal sentence window holding each <Bn>.
# Sentences here may start with a placeholder or bracket, so the boundary
# rule admits '<' and '[' as sentence openers alongside uppercase.

_TERMINALS = ".!?"


def _window_sentences(text: str) -> list[str]:
    out: list[str] = []
    start = 0
    depth = 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(0, depth - 1)
        elif ch in _TERMINALS and depth == 0:
            k = i + 1
            if k < len(text) and not text[k].isspace():
                continue
            while k < len(text) and text[k].isspace():
                k += 1
            if k < len(text) and not (text[k].isupper() or text[k] in "<["):
                continue
            piece = text[start : i + 1].strip()
            if piece:
                out.append(piece)
            start = i + 1
    tail = text[start:].strip()
    if tail:
        out.append(tail)
    return out


def placeholder_windows(text: str, n_refs: int) -> list[str]:
    """Window text for <B1>..<Bn_refs>; falls back to the whole text."""
    sents = _window_sentences(text)
    windows: list[str] = []
    for n in range(1, n_refs + 1):
        tag = f"<B{n}>"
        hit = [s for s in sents if tag in s]
        windows.append(" ".join(hit) if hit else text)
    return windows


def make_intent_fn(model: IntentModel):
    """Adapter for corpus building: target text → one label per placeholder."""

    def intent_fn(target: str) -> list[IntentLabel]:
        n_refs = 0
        while f"<B{n_refs + 1}>" in target:
            n_refs += 1
        return [predict_intent(model, w)[0] for w in placeholder_windows(target, max(n_refs, 1))]

    return intent_fn


# ---------------------------------------------------------------------------
# Checkpoint: little-endian header (feature_dim, n_classes), then the weight
# matrix row-major as float64, then the bias vector.

def save_intent_model(model: IntentModel, path: str | Path) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack("<qq", model.feature_dim, N_CLASSES))
        f.write(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(model.bias, dtype="<f8").tobytes())


def load_intent_model(path: str | Path) -> IntentModel:
    with open(path, "rb") as f:
        dim, k = struct.unpack("<qq", f.read(16))
        if k != N_CLASSES:
            raise ValueError(f"checkpoint has {k} classes, expected {N_CLASSES}")
        w = np.frombuffer(f.read(8 * k * dim), dtype="<f8").reshape(k, dim).astype(np.float64)
        b = np.frombuffer(f.read(8 * k), dtype="<f8").astype(np.float64)
    return IntentModel(weights=w, bias=b, feature_dim=dim)
