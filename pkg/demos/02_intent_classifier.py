"""Train the citation intent classifier and inspect what it learned.

Features are hashed unigrams and bigrams of the sentence around each
placeholder; the model is plain multinomial logistic regression. On the
synthetic corpus the four intents use disjoint cue words, so accuracy
should be near perfect.
"""

from citegen.corpus import split_dataset
from citegen.intent import (
    placeholder_windows,
    predict_intent,
    round_trip_accuracy,
    train_intent,
)
from citegen.synthetic import SynthSpec, generate_synthetic_corpus

_, _, gold = generate_synthetic_corpus(SynthSpec(n_single=160, n_multi=20, seed=2))
split_dataset(gold, seed=2)
train_set = [g for g in gold if g.split == "train"]
test_set = [g for g in gold if g.split == "test"]

# one training example per placeholder: (window text, gold intent)
pairs = []
for inst in train_set:
    for label, window in zip(inst.intents, placeholder_windows(inst.target, len(inst.intents))):
        pairs.append((window, label))

model = train_intent(pairs, epochs=40, lr=1.0, seed=0)
print(f"trained on {len(pairs)} windows from {len(train_set)} instances\n")

print("=== sample windows and predictions ===")
for inst in test_set[:4]:
    windows = placeholder_windows(inst.target, len(inst.intents))
    for label, window in zip(inst.intents, windows):
        pred, probs = predict_intent(model, window)
        mark = "ok " if pred == label else "MISS"
        print(f"  [{mark}] gold={label.value:<15} pred={pred.value:<15} "
              f"p={probs.max():.2f}  {window[:52]}")

held_out = []
for inst in test_set:
    for label, window in zip(inst.intents, placeholder_windows(inst.target, len(inst.intents))):
        held_out.append((label, window))
acc = round_trip_accuracy(model, held_out)
print(f"\nheld-out accuracy on {len(held_out)} windows: {acc:.3f}")
